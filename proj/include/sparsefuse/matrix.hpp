#ifndef SPARSEFUSE_MATRIX_HPP
#define SPARSEFUSE_MATRIX_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <utility>
#include <vector>

#include "types.hpp"

namespace sparsefuse {

// Compressed sparse column storage, 0-based indices, rows sorted and unique
// within each column. Immutable after construction by convention; nothing
// here mutates a matrix in place.
struct CscMatrix {
  Index nrows = 0;
  Index ncols = 0;
  std::vector<Index> colptr;  // size ncols+1
  std::vector<Index> rowidx;  // size nnz
  std::vector<double> values; // size nnz

  Index nnz() const { return colptr.empty() ? 0 : colptr.back(); }
};

// Compressed sparse row mirror of CscMatrix.
struct CsrMatrix {
  Index nrows = 0;
  Index ncols = 0;
  std::vector<Index> rowptr;
  std::vector<Index> colidx;
  std::vector<double> values;

  Index nnz() const { return rowptr.empty() ? 0 : rowptr.back(); }
};

inline void validate(const CscMatrix& A) {
  if (A.nrows < 0 || A.ncols < 0)
    throw InvalidMatrixError("negative dimension");
  if (static_cast<Index>(A.colptr.size()) != A.ncols + 1)
    throw InvalidMatrixError("colptr size mismatch");
  if (A.colptr.front() != 0)
    throw InvalidMatrixError("colptr[0] != 0");
  for (Index j = 0; j < A.ncols; ++j) {
    if (A.colptr[j] > A.colptr[j + 1])
      throw InvalidMatrixError("colptr not non-decreasing");
    for (Index p = A.colptr[j]; p < A.colptr[j + 1]; ++p) {
      if (A.rowidx[p] < 0 || A.rowidx[p] >= A.nrows)
        throw InvalidMatrixError("row index out of range");
      if (p > A.colptr[j] && A.rowidx[p - 1] >= A.rowidx[p])
        throw InvalidMatrixError("row indices not strictly increasing");
    }
  }
  if (A.rowidx.size() != A.values.size() ||
      static_cast<Index>(A.rowidx.size()) != A.colptr.back())
    throw InvalidMatrixError("nnz array size mismatch");
}

inline void validate(const CsrMatrix& A) {
  CscMatrix t{A.ncols, A.nrows, A.rowptr, A.colidx, A.values};
  validate(t);
}

inline CsrMatrix to_csr(const CscMatrix& A) {
  CsrMatrix R;
  R.nrows = A.nrows;
  R.ncols = A.ncols;
  const Index nnz = A.nnz();
  R.rowptr.assign(static_cast<std::size_t>(A.nrows) + 1, 0);
  R.colidx.resize(nnz);
  R.values.resize(nnz);
  for (Index p = 0; p < nnz; ++p)
    ++R.rowptr[A.rowidx[p] + 1];
  for (Index i = 0; i < A.nrows; ++i)
    R.rowptr[i + 1] += R.rowptr[i];
  std::vector<Index> next(R.rowptr.begin(), R.rowptr.end() - 1);
  for (Index j = 0; j < A.ncols; ++j) {
    for (Index p = A.colptr[j]; p < A.colptr[j + 1]; ++p) {
      const Index q = next[A.rowidx[p]]++;
      R.colidx[q] = j; // column order ascending since j ascends
      R.values[q] = A.values[p];
    }
  }
  return R;
}

inline CscMatrix to_csc(const CsrMatrix& A) {
  CscMatrix t{A.ncols, A.nrows, A.rowptr, A.colidx, A.values};
  CsrMatrix r = to_csr(t);
  return CscMatrix{A.nrows, A.ncols, std::move(r.rowptr), std::move(r.colidx),
                   std::move(r.values)};
}

// Keeps entries with row >= col. Every diagonal entry must be present and
// nonzero; triangular solves and incomplete factorizations depend on it.
inline CscMatrix lower_triangle(const CscMatrix& A) {
  if (A.nrows != A.ncols)
    throw InvalidMatrixError("lower_triangle requires a square matrix");
  CscMatrix L;
  L.nrows = A.nrows;
  L.ncols = A.ncols;
  L.colptr.assign(static_cast<std::size_t>(A.ncols) + 1, 0);
  for (Index j = 0; j < A.ncols; ++j) {
    bool diag = false;
    for (Index p = A.colptr[j]; p < A.colptr[j + 1]; ++p) {
      const Index i = A.rowidx[p];
      if (i < j)
        continue;
      if (i == j) {
        if (A.values[p] == 0.0)
          throw InvalidMatrixError("zero diagonal entry at column " +
                                   std::to_string(j));
        diag = true;
      }
      L.rowidx.push_back(i);
      L.values.push_back(A.values[p]);
      ++L.colptr[j + 1];
    }
    if (!diag)
      throw InvalidMatrixError("missing diagonal entry at column " +
                               std::to_string(j));
  }
  for (Index j = 0; j < A.ncols; ++j)
    L.colptr[j + 1] += L.colptr[j];
  return L;
}

inline CscMatrix transpose(const CscMatrix& A) {
  CsrMatrix r = to_csr(A);
  return CscMatrix{A.ncols, A.nrows, std::move(r.rowptr), std::move(r.colidx),
                   std::move(r.values)};
}

// Symmetric permutation B = P A P^T where row/col i of A becomes perm[i] of B.
inline CscMatrix permute_symmetric(const CscMatrix& A,
                                   const std::vector<Index>& perm) {
  if (A.nrows != A.ncols || static_cast<Index>(perm.size()) != A.ncols)
    throw InvalidMatrixError("permutation length mismatch");
  std::vector<char> seen(perm.size(), 0);
  for (Index p : perm) {
    if (p < 0 || p >= A.ncols || seen[p])
      throw InvalidMatrixError("not a permutation");
    seen[p] = 1;
  }
  struct Entry {
    Index i, j;
    double v;
  };
  std::vector<Entry> entries;
  entries.reserve(A.nnz());
  for (Index j = 0; j < A.ncols; ++j)
    for (Index p = A.colptr[j]; p < A.colptr[j + 1]; ++p)
      entries.push_back({perm[A.rowidx[p]], perm[j], A.values[p]});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.j != b.j ? a.j < b.j : a.i < b.i;
  });
  CscMatrix B;
  B.nrows = A.nrows;
  B.ncols = A.ncols;
  B.colptr.assign(static_cast<std::size_t>(A.ncols) + 1, 0);
  B.rowidx.reserve(entries.size());
  B.values.reserve(entries.size());
  for (const Entry& e : entries) {
    ++B.colptr[e.j + 1];
    B.rowidx.push_back(e.i);
    B.values.push_back(e.v);
  }
  for (Index j = 0; j < A.ncols; ++j)
    B.colptr[j + 1] += B.colptr[j];
  return B;
}

} // namespace sparsefuse

#endif
