#ifndef SPARSEFUSE_MATRIX_MARKET_HPP
#define SPARSEFUSE_MATRIX_MARKET_HPP

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "matrix.hpp"
#include "types.hpp"

namespace sparsefuse {

namespace detail {

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

struct Triplet {
  Index i, j;
  double v;
};

// Sorts column-major, sums duplicates (Matrix Market convention).
inline CscMatrix triplets_to_csc(Index nrows, Index ncols,
                                 std::vector<Triplet>& t) {
  std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
    return a.j != b.j ? a.j < b.j : a.i < b.i;
  });
  CscMatrix A;
  A.nrows = nrows;
  A.ncols = ncols;
  A.colptr.assign(static_cast<std::size_t>(ncols) + 1, 0);
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (k > 0 && t[k].i == t[k - 1].i && t[k].j == t[k - 1].j) {
      A.values.back() += t[k].v;
      continue;
    }
    ++A.colptr[t[k].j + 1];
    A.rowidx.push_back(t[k].i);
    A.values.push_back(t[k].v);
  }
  for (Index j = 0; j < ncols; ++j)
    A.colptr[j + 1] += A.colptr[j];
  return A;
}

} // namespace detail

// Reads a Matrix Market file, coordinate real/integer, general or symmetric.
// Symmetric inputs are expanded to full storage; indices converted to 0-based;
// duplicate entries summed. Pattern and complex fields are rejected.
inline CscMatrix read_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw ParseError(path + ": empty file");
  std::istringstream hdr(line);
  std::string banner, object, format, field, symmetry;
  hdr >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%MatrixMarket")
    throw ParseError(path + ": missing MatrixMarket banner");
  object = detail::lowercase(object);
  format = detail::lowercase(format);
  field = detail::lowercase(field);
  symmetry = detail::lowercase(symmetry);
  if (object != "matrix" || format != "coordinate")
    throw ParseError(path + ": only coordinate matrices are supported");
  if (field != "real")
    throw ParseError(path + ": field '" + field + "' not supported");
  if (symmetry != "general" && symmetry != "symmetric")
    throw ParseError(path + ": symmetry '" + symmetry + "' not supported");

  // skip comments and blank lines
  do {
    if (!std::getline(in, line))
      throw ParseError(path + ": missing size line");
  } while (line.empty() || line[0] == '%');

  long long nrows = 0, ncols = 0, nnz = 0;
  {
    std::istringstream sz(line);
    if (!(sz >> nrows >> ncols >> nnz) || nrows < 0 || ncols < 0 || nnz < 0)
      throw ParseError(path + ": malformed size line");
  }
  std::vector<detail::Triplet> t;
  t.reserve(static_cast<std::size_t>(symmetry == "symmetric" ? 2 * nnz : nnz));
  for (long long k = 0; k < nnz; ++k) {
    do {
      if (!std::getline(in, line))
        throw ParseError(path + ": unexpected end of file at entry " +
                         std::to_string(k + 1));
    } while (line.empty() || line[0] == '%');
    std::istringstream es(line);
    long long i = 0, j = 0;
    double v = 0.0;
    if (!(es >> i >> j >> v))
      throw ParseError(path + ": malformed entry at line for entry " +
                       std::to_string(k + 1));
    if (i < 1 || i > nrows || j < 1 || j > ncols)
      throw ParseError(path + ": index out of bounds in entry " +
                       std::to_string(k + 1));
    t.push_back({static_cast<Index>(i - 1), static_cast<Index>(j - 1), v});
    if (symmetry == "symmetric" && i != j)
      t.push_back({static_cast<Index>(j - 1), static_cast<Index>(i - 1), v});
  }
  CscMatrix A = detail::triplets_to_csc(static_cast<Index>(nrows),
                                        static_cast<Index>(ncols), t);
  validate(A);
  return A;
}

// Writes coordinate real general with full double precision, so a
// read-write-read round trip is bit-identical.
inline void write_matrix_market(const CscMatrix& A, const std::string& path) {
  std::ofstream out(path);
  if (!out)
    throw ParseError("cannot open " + path + " for writing");
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << A.nrows << ' ' << A.ncols << ' ' << A.nnz() << '\n';
  out << std::setprecision(17);
  for (Index j = 0; j < A.ncols; ++j)
    for (Index p = A.colptr[j]; p < A.colptr[j + 1]; ++p)
      out << A.rowidx[p] + 1 << ' ' << j + 1 << ' ' << A.values[p] << '\n';
  if (!out)
    throw ParseError("write failed for " + path);
}

// Permutation file: one 0-based integer per line, length n.
inline std::vector<Index> read_permutation(const std::string& path, Index n) {
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open " + path);
  std::vector<Index> perm;
  perm.reserve(n);
  long long v;
  while (in >> v)
    perm.push_back(static_cast<Index>(v));
  if (static_cast<Index>(perm.size()) != n)
    throw ParseError(path + ": expected " + std::to_string(n) +
                     " permutation entries, got " +
                     std::to_string(perm.size()));
  return perm;
}

} // namespace sparsefuse

#endif
