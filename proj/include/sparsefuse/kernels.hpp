#ifndef SPARSEFUSE_KERNELS_HPP
#define SPARSEFUSE_KERNELS_HPP

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fixtures.hpp"
#include "matrix.hpp"
#include "types.hpp"

namespace sparsefuse {

enum class KernelKind {
  SpMV_CSR,
  SpMV_CSC,
  SpTRSV_CSR,
  SpTRSV_CSC,
  SpIC0_CSC,
  SpILU0_CSR,
  DSCAL_CSR,
  DSCAL_CSC,
};

inline bool has_loop_carried_deps(KernelKind k) {
  switch (k) {
  case KernelKind::SpTRSV_CSR:
  case KernelKind::SpTRSV_CSC:
  case KernelKind::SpIC0_CSC:
  case KernelKind::SpILU0_CSR:
    return true;
  default:
    return false;
  }
}

// One row of the kernel-combination table. `shared` names the array written
// by the first kernel and read by the second.
struct ComboSpec {
  int id;
  KernelKind first;
  KernelKind second;
  const char* alias;
  const char* operations;
  const char* shared;
};

inline constexpr std::array<ComboSpec, 7> kCombos{{
    {1, KernelKind::SpTRSV_CSR, KernelKind::SpTRSV_CSR, "sptrsv-sptrsv",
     "x = inv(L)*y; z = inv(L)*x", "x"},
    {2, KernelKind::SpMV_CSR, KernelKind::SpTRSV_CSR, "spmv-sptrsv",
     "y = A*x; z = inv(L)*y", "y"},
    {3, KernelKind::DSCAL_CSR, KernelKind::SpILU0_CSR, "dscal-spilu0",
     "LU ~= D*A*D'", "scaled matrix values"},
    {4, KernelKind::SpTRSV_CSR, KernelKind::SpMV_CSC, "sptrsv-spmv",
     "y = inv(L)*x; z = A*y", "y"},
    {5, KernelKind::SpIC0_CSC, KernelKind::SpTRSV_CSC, "spic0-sptrsv",
     "L*L' ~= A; y = inv(L)*x", "factor values"},
    {6, KernelKind::SpILU0_CSR, KernelKind::SpTRSV_CSR, "spilu0-sptrsv",
     "LU ~= A; y = inv(L)*x", "factor values"},
    {7, KernelKind::DSCAL_CSC, KernelKind::SpIC0_CSC, "dscal-spic0",
     "L*L' ~= D*A*D'", "scaled matrix values"},
}};

inline const ComboSpec& combo_by_id(int id) {
  if (id < 1 || id > 7)
    throw std::invalid_argument("combo id must be in 1..7");
  return kCombos[static_cast<std::size_t>(id - 1)];
}

inline const ComboSpec* combo_by_alias(const std::string& alias) {
  for (const ComboSpec& c : kCombos)
    if (alias == c.alias)
      return &c;
  return nullptr;
}

// Row-wise view of a lower-triangular CSC matrix: for each row i, the
// strictly-lower entries (i, j) as (column j, position in the value array).
// Columns must be sorted, diagonal first in each column.
struct LowerRowView {
  std::vector<Index> ptr; // n+1
  std::vector<Index> col;
  std::vector<Index> pos;
};

inline LowerRowView build_lower_rows(const CscMatrix& L) {
  LowerRowView rv;
  const Index n = L.ncols;
  rv.ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index j = 0; j < n; ++j) {
    if (L.colptr[j] == L.colptr[j + 1] || L.rowidx[L.colptr[j]] != j)
      throw InvalidMatrixError("lower matrix missing diagonal at column " +
                               std::to_string(j));
    for (Index p = L.colptr[j] + 1; p < L.colptr[j + 1]; ++p)
      ++rv.ptr[L.rowidx[p] + 1];
  }
  for (Index i = 0; i < n; ++i)
    rv.ptr[i + 1] += rv.ptr[i];
  rv.col.resize(rv.ptr[n]);
  rv.pos.resize(rv.ptr[n]);
  std::vector<Index> next(rv.ptr.begin(), rv.ptr.end() - 1);
  for (Index j = 0; j < n; ++j)
    for (Index p = L.colptr[j] + 1; p < L.colptr[j + 1]; ++p) {
      const Index q = next[L.rowidx[p]]++;
      rv.col[q] = j; // ascending j per row since j ascends
      rv.pos[q] = p;
    }
  return rv;
}

// Per-thread scratch for the factorization bodies.
struct IterScratch {
  std::vector<double> acc;
  std::vector<Index> mark;
  std::vector<Index> slot;
  Index stamp = 0;

  void ensure(Index n) {
    if (static_cast<Index>(acc.size()) < n) {
      acc.resize(n);
      mark.assign(n, 0);
      slot.resize(n);
      stamp = 0;
    }
  }
  Index next_stamp() {
    if (++stamp == 0) {
      std::fill(mark.begin(), mark.end(), 0);
      stamp = 1;
    }
    return stamp;
  }
};

namespace detail {

// Duplicated schedule entries may store the same value concurrently from
// several threads; route those stores through single-word atomics.
inline void store_value(double& slotref, double v, bool atomic_store) {
  if (atomic_store)
    std::atomic_ref<double>(slotref).store(v, std::memory_order_relaxed);
  else
    slotref = v;
}

inline void spmv_csr_row(Index i, const CsrMatrix& A, const double* x,
                         double* y, bool dup) {
  double acc = 0.0;
  for (Index p = A.rowptr[i]; p < A.rowptr[i + 1]; ++p)
    acc += A.values[p] * x[A.colidx[p]];
  store_value(y[i], acc, dup);
}

// Column scatter; concurrent iterations may hit the same output row, so the
// accumulation is atomic.
inline void spmv_csc_col(Index j, const CscMatrix& A, const double* x,
                         double* y) {
  const double xj = x[j];
  for (Index p = A.colptr[j]; p < A.colptr[j + 1]; ++p)
    std::atomic_ref<double>(y[A.rowidx[p]])
        .fetch_add(A.values[p] * xj, std::memory_order_relaxed);
}

// Lower-triangular row with the diagonal stored last.
inline void trsv_csr_row(Index i, const CsrMatrix& L, const double* vals,
                         const double* rhs, double* x, bool dup) {
  const Index end = L.rowptr[i + 1] - 1;
  double acc = rhs[i];
  for (Index p = L.rowptr[i]; p < end; ++p)
    acc -= vals[p] * x[L.colidx[p]];
  const double d = vals[end];
  if (d == 0.0)
    throw FactorizationError("zero diagonal in triangular solve", i);
  store_value(x[i], acc / d, dup);
}

// Unit-diagonal solve over the strictly-lower part of a full-pattern factor.
inline void trsv_csr_unit_row(Index i, const CsrMatrix& A,
                              const std::vector<Index>& diag_pos,
                              const double* fac, const double* rhs, double* x,
                              bool dup) {
  double acc = rhs[i];
  const Index end = diag_pos[i] >= 0 ? diag_pos[i] : A.rowptr[i + 1];
  for (Index p = A.rowptr[i]; p < end; ++p) {
    if (A.colidx[p] >= i)
      break;
    acc -= fac[p] * x[A.colidx[p]];
  }
  store_value(x[i], acc, dup);
}

// Row gather on CSC storage through the row view: reads L(i, j) for j <= i
// across columns, writes only x[i].
inline void trsv_csc_row(Index i, const CscMatrix& L, const LowerRowView& rv,
                         const double* fac, const double* rhs, double* x,
                         bool dup) {
  double acc = rhs[i];
  for (Index q = rv.ptr[i]; q < rv.ptr[i + 1]; ++q)
    acc -= fac[rv.pos[q]] * x[rv.col[q]];
  const double d = fac[L.colptr[i]];
  if (d == 0.0)
    throw FactorizationError("zero diagonal in triangular solve", i);
  store_value(x[i], acc / d, dup);
}

// Left-looking IC0 column: reads finalized columns j with L(k,j) != 0,
// writes only column k of the factor.
inline void ic0_column(Index k, const CscMatrix& L, const LowerRowView& rv,
                       double* fac, IterScratch& s, bool dup) {
  const Index stamp = s.next_stamp();
  for (Index p = L.colptr[k]; p < L.colptr[k + 1]; ++p) {
    const Index i = L.rowidx[p];
    s.mark[i] = stamp;
    s.acc[i] = fac[p];
  }
  for (Index q = rv.ptr[k]; q < rv.ptr[k + 1]; ++q) {
    const Index j = rv.col[q];
    const double lkj = fac[rv.pos[q]];
    const Index* first = L.rowidx.data() + L.colptr[j];
    const Index* last = L.rowidx.data() + L.colptr[j + 1];
    const Index* it = std::lower_bound(first, last, k);
    for (Index p = static_cast<Index>(it - L.rowidx.data());
         p < L.colptr[j + 1]; ++p) {
      const Index i = L.rowidx[p];
      if (s.mark[i] == stamp)
        s.acc[i] -= lkj * fac[p];
    }
  }
  const double d = s.acc[k];
  if (d <= 0.0)
    throw FactorizationError("non-positive pivot", k);
  const double lkk = std::sqrt(d);
  store_value(fac[L.colptr[k]], lkk, dup);
  for (Index p = L.colptr[k] + 1; p < L.colptr[k + 1]; ++p)
    store_value(fac[p], s.acc[L.rowidx[p]] / lkk, dup);
}

// IKJ ILU0 row: reads finalized pivot rows k with A(i,k) != 0, writes only
// row i. L is unit lower, stored with U in the input pattern.
inline void ilu0_row(Index i, const CsrMatrix& A,
                     const std::vector<Index>& diag_pos, double* fac,
                     IterScratch& s, bool dup) {
  const Index stamp = s.next_stamp();
  for (Index p = A.rowptr[i]; p < A.rowptr[i + 1]; ++p) {
    const Index j = A.colidx[p];
    s.mark[j] = stamp;
    s.slot[j] = p;
    s.acc[j] = fac[p];
  }
  for (Index p = A.rowptr[i]; p < A.rowptr[i + 1]; ++p) {
    const Index k = A.colidx[p];
    if (k >= i)
      break;
    if (diag_pos[k] < 0 || fac[diag_pos[k]] == 0.0)
      throw FactorizationError("zero pivot", k);
    const double lik = s.acc[k] / fac[diag_pos[k]];
    s.acc[k] = lik;
    for (Index q = diag_pos[k] + 1; q < A.rowptr[k + 1]; ++q) {
      const Index j = A.colidx[q];
      if (s.mark[j] == stamp)
        s.acc[j] -= lik * fac[q];
    }
  }
  for (Index p = A.rowptr[i]; p < A.rowptr[i + 1]; ++p)
    store_value(fac[p], s.acc[A.colidx[p]], dup);
}

inline void dscal_csr_row(Index i, const CsrMatrix& A, const double* d,
                          double* fac, bool dup) {
  const double di = d[i];
  for (Index p = A.rowptr[i]; p < A.rowptr[i + 1]; ++p)
    store_value(fac[p], di * fac[p] * d[A.colidx[p]], dup);
}

inline void dscal_csc_col(Index j, const CscMatrix& A, const double* d,
                          double* fac, bool dup) {
  const double dj = d[j];
  for (Index p = A.colptr[j]; p < A.colptr[j + 1]; ++p)
    store_value(fac[p], d[A.rowidx[p]] * fac[p] * dj, dup);
}

inline std::vector<Index> find_diag_positions(const CsrMatrix& A) {
  std::vector<Index> diag(A.nrows, -1);
  for (Index i = 0; i < A.nrows; ++i)
    for (Index p = A.rowptr[i]; p < A.rowptr[i + 1]; ++p)
      if (A.colidx[p] == i) {
        diag[i] = p;
        break;
      }
  return diag;
}

inline DenseVector scaling_vector(Index n, const std::vector<Index>& diag_pos,
                                  const double* values) {
  DenseVector d(n);
  for (Index i = 0; i < n; ++i) {
    const double a = diag_pos[i] >= 0 ? values[diag_pos[i]] : 0.0;
    if (a == 0.0)
      throw FactorizationError("zero diagonal", i);
    d[i] = 1.0 / std::sqrt(std::abs(a));
  }
  return d;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Whole-kernel reference operations.
// ---------------------------------------------------------------------------

inline DenseVector spmv(const CsrMatrix& A, const DenseVector& x) {
  if (static_cast<Index>(x.size()) != A.ncols)
    throw InvalidMatrixError("spmv dimension mismatch");
  DenseVector y(A.nrows, 0.0);
  for (Index i = 0; i < A.nrows; ++i)
    detail::spmv_csr_row(i, A, x.data(), y.data(), false);
  return y;
}

inline DenseVector spmv(const CscMatrix& A, const DenseVector& x) {
  if (static_cast<Index>(x.size()) != A.ncols)
    throw InvalidMatrixError("spmv dimension mismatch");
  DenseVector y(A.nrows, 0.0);
  for (Index j = 0; j < A.ncols; ++j)
    detail::spmv_csc_col(j, A, x.data(), y.data());
  return y;
}

inline DenseVector sptrsv(const CsrMatrix& L, const DenseVector& b) {
  if (L.nrows != L.ncols || static_cast<Index>(b.size()) != L.nrows)
    throw InvalidMatrixError("sptrsv dimension mismatch");
  DenseVector x(L.nrows, 0.0);
  for (Index i = 0; i < L.nrows; ++i)
    detail::trsv_csr_row(i, L, L.values.data(), b.data(), x.data(), false);
  return x;
}

inline DenseVector sptrsv(const CscMatrix& L, const DenseVector& b) {
  if (L.nrows != L.ncols || static_cast<Index>(b.size()) != L.nrows)
    throw InvalidMatrixError("sptrsv dimension mismatch");
  const LowerRowView rv = build_lower_rows(L);
  DenseVector x(L.nrows, 0.0);
  for (Index i = 0; i < L.nrows; ++i)
    detail::trsv_csc_row(i, L, rv, L.values.data(), b.data(), x.data(), false);
  return x;
}

// IC0: factor with the pattern of A_lower such that (L*L')_ij = A_ij on that
// pattern. Throws FactorizationError on a non-positive pivot.
inline CscMatrix spic0(const CscMatrix& A_lower) {
  if (A_lower.nrows != A_lower.ncols)
    throw InvalidMatrixError("spic0 requires a square lower matrix");
  CscMatrix L = A_lower;
  const LowerRowView rv = build_lower_rows(L);
  IterScratch s;
  s.ensure(L.ncols);
  for (Index k = 0; k < L.ncols; ++k)
    detail::ic0_column(k, L, rv, L.values.data(), s, false);
  return L;
}

// ILU0: combined LU factor in A's pattern, L unit-diagonal (implicit).
inline CsrMatrix spilu0(const CsrMatrix& A) {
  if (A.nrows != A.ncols)
    throw InvalidMatrixError("spilu0 requires a square matrix");
  CsrMatrix F = A;
  const std::vector<Index> diag = detail::find_diag_positions(F);
  IterScratch s;
  s.ensure(F.nrows);
  for (Index i = 0; i < F.nrows; ++i)
    detail::ilu0_row(i, F, diag, F.values.data(), s, false);
  return F;
}

inline std::pair<CsrMatrix, DenseVector> dscal(const CsrMatrix& A) {
  CsrMatrix S = A;
  std::vector<Index> diag = detail::find_diag_positions(S);
  DenseVector d = detail::scaling_vector(S.nrows, diag, S.values.data());
  for (Index i = 0; i < S.nrows; ++i)
    detail::dscal_csr_row(i, S, d.data(), S.values.data(), false);
  return {std::move(S), std::move(d)};
}

inline std::pair<CscMatrix, DenseVector> dscal(const CscMatrix& A) {
  CscMatrix S = A;
  std::vector<Index> diag(S.ncols, -1);
  for (Index j = 0; j < S.ncols; ++j)
    for (Index p = S.colptr[j]; p < S.colptr[j + 1]; ++p)
      if (S.rowidx[p] == j) {
        diag[j] = p;
        break;
      }
  DenseVector d = detail::scaling_vector(S.ncols, diag, S.values.data());
  for (Index j = 0; j < S.ncols; ++j)
    detail::dscal_csc_col(j, S, d.data(), S.values.data(), false);
  return {std::move(S), std::move(d)};
}

// ---------------------------------------------------------------------------
// Combination state: operands, workspaces and the per-iteration dispatcher.
// ---------------------------------------------------------------------------

struct KernelState {
  ComboSpec combo{};
  Index n = 0;

  CsrMatrix L_csr; // TRSV operand, combos 1, 2, 4
  CsrMatrix A_csr; // combos 2 (SpMV), 3 and 6 (full-pattern factor input)
  CscMatrix A_csc; // combo 4 SpMV operand
  CscMatrix L_csc; // combos 5, 7 (lower incl. diagonal)

  LowerRowView lower_rows;     // row view over L_csc
  std::vector<Index> diag_pos; // diagonal positions for A_csr

  std::vector<double> fac0; // pristine factor values
  std::vector<double> fac;  // factor workspace, combos 3, 5, 6, 7
  DenseVector vin;          // combo input vector
  DenseVector vmid;         // flows from kernel 1 to kernel 2 (combos 1, 2, 4)
  DenseVector vout;
  DenseVector dvec; // DSCAL scaling vector, precomputed
};

inline KernelState make_state(int combo_id, const CscMatrix& M,
                              std::uint64_t seed = 7) {
  if (M.nrows != M.ncols)
    throw InvalidMatrixError("combination input must be square");
  KernelState st;
  st.combo = combo_by_id(combo_id);
  st.n = M.nrows;
  const Index n = st.n;
  switch (combo_id) {
  case 1:
    st.L_csr = to_csr(lower_triangle(M));
    st.vin = gen_vector(n, seed);
    st.vmid.assign(n, 0.0);
    st.vout.assign(n, 0.0);
    break;
  case 2:
    st.A_csr = to_csr(M);
    st.L_csr = to_csr(lower_triangle(M));
    st.vin = gen_vector(n, seed);
    st.vmid.assign(n, 0.0);
    st.vout.assign(n, 0.0);
    break;
  case 3:
    st.A_csr = to_csr(M);
    st.diag_pos = detail::find_diag_positions(st.A_csr);
    st.dvec =
        detail::scaling_vector(n, st.diag_pos, st.A_csr.values.data());
    st.fac0 = st.A_csr.values;
    st.fac = st.fac0;
    break;
  case 4:
    st.L_csr = to_csr(lower_triangle(M));
    st.A_csc = M;
    st.vin = gen_vector(n, seed);
    st.vmid.assign(n, 0.0);
    st.vout.assign(n, 0.0);
    break;
  case 5:
    st.L_csc = lower_triangle(M);
    st.lower_rows = build_lower_rows(st.L_csc);
    st.fac0 = st.L_csc.values;
    st.fac = st.fac0;
    st.vin = gen_vector(n, seed);
    st.vout.assign(n, 0.0);
    break;
  case 6:
    st.A_csr = to_csr(M);
    st.diag_pos = detail::find_diag_positions(st.A_csr);
    st.fac0 = st.A_csr.values;
    st.fac = st.fac0;
    st.vin = gen_vector(n, seed);
    st.vout.assign(n, 0.0);
    break;
  case 7:
    st.L_csc = lower_triangle(M);
    st.lower_rows = build_lower_rows(st.L_csc);
    st.dvec.assign(n, 0.0);
    for (Index j = 0; j < n; ++j)
      st.dvec[j] = 1.0 / std::sqrt(std::abs(st.L_csc.values[st.L_csc.colptr[j]]));
    st.fac0 = st.L_csc.values;
    st.fac = st.fac0;
    break;
  default:
    throw std::invalid_argument("bad combo id");
  }
  return st;
}

// Restores the state so the combination can be executed again.
inline void reset(KernelState& st) {
  st.fac = st.fac0;
  std::fill(st.vmid.begin(), st.vmid.end(), 0.0);
  std::fill(st.vout.begin(), st.vout.end(), 0.0);
}

// Executes outer-loop iteration i of the first or second kernel of the
// combination. All predecessors of the iteration (intra-kernel and, for the
// second kernel, inter-kernel) must already have executed. `duplicate` marks
// replicated schedule entries whose writes go through atomic stores.
inline void run_iteration(int which, Index i, KernelState& st,
                          IterScratch& scratch, bool duplicate = false) {
  switch (st.combo.id) {
  case 1:
    if (which == 1)
      detail::trsv_csr_row(i, st.L_csr, st.L_csr.values.data(), st.vin.data(),
                           st.vmid.data(), duplicate);
    else
      detail::trsv_csr_row(i, st.L_csr, st.L_csr.values.data(), st.vmid.data(),
                           st.vout.data(), duplicate);
    return;
  case 2:
    if (which == 1)
      detail::spmv_csr_row(i, st.A_csr, st.vin.data(), st.vmid.data(),
                           duplicate);
    else
      detail::trsv_csr_row(i, st.L_csr, st.L_csr.values.data(), st.vmid.data(),
                           st.vout.data(), duplicate);
    return;
  case 3:
    if (which == 1)
      detail::dscal_csr_row(i, st.A_csr, st.dvec.data(), st.fac.data(),
                            duplicate);
    else
      detail::ilu0_row(i, st.A_csr, st.diag_pos, st.fac.data(), scratch,
                       duplicate);
    return;
  case 4:
    if (which == 1)
      detail::trsv_csr_row(i, st.L_csr, st.L_csr.values.data(), st.vin.data(),
                           st.vmid.data(), duplicate);
    else
      detail::spmv_csc_col(i, st.A_csc, st.vmid.data(), st.vout.data());
    return;
  case 5:
    if (which == 1)
      detail::ic0_column(i, st.L_csc, st.lower_rows, st.fac.data(), scratch,
                         duplicate);
    else
      detail::trsv_csc_row(i, st.L_csc, st.lower_rows, st.fac.data(),
                           st.vin.data(), st.vout.data(), duplicate);
    return;
  case 6:
    if (which == 1)
      detail::ilu0_row(i, st.A_csr, st.diag_pos, st.fac.data(), scratch,
                       duplicate);
    else
      detail::trsv_csr_unit_row(i, st.A_csr, st.diag_pos, st.fac.data(),
                                st.vin.data(), st.vout.data(), duplicate);
    return;
  case 7:
    if (which == 1)
      detail::dscal_csc_col(i, st.L_csc, st.dvec.data(), st.fac.data(),
                            duplicate);
    else
      detail::ic0_column(i, st.L_csc, st.lower_rows, st.fac.data(), scratch,
                         duplicate);
    return;
  default:
    break;
  }
  throw std::invalid_argument("bad combo");
}

// Runs kernel 1 then kernel 2 with the reference iteration order; this is the
// sequential composed result every parallel schedule is checked against.
inline void run_sequential_reference(KernelState& st) {
  reset(st);
  IterScratch scratch;
  scratch.ensure(st.n);
  for (Index i = 0; i < st.n; ++i)
    run_iteration(1, i, st, scratch);
  for (Index i = 0; i < st.n; ++i)
    run_iteration(2, i, st, scratch);
}

// Concatenated snapshot of the arrays that constitute the combination result.
inline std::vector<double> collect_outputs(const KernelState& st) {
  std::vector<double> out;
  switch (st.combo.id) {
  case 1:
  case 2:
  case 4:
    out.insert(out.end(), st.vmid.begin(), st.vmid.end());
    out.insert(out.end(), st.vout.begin(), st.vout.end());
    break;
  case 3:
  case 7:
    out.insert(out.end(), st.fac.begin(), st.fac.end());
    out.insert(out.end(), st.dvec.begin(), st.dvec.end());
    break;
  case 5:
  case 6:
    out.insert(out.end(), st.fac.begin(), st.fac.end());
    out.insert(out.end(), st.vout.begin(), st.vout.end());
    break;
  default:
    break;
  }
  return out;
}

// Current values of the slots written by iteration i of kernel 1; used by the
// replay checker to confirm replicated entries store identical values.
inline void append_kernel1_outputs(const KernelState& st, Index i,
                                   std::vector<double>& out) {
  switch (st.combo.id) {
  case 1:
  case 2:
  case 4:
    out.push_back(st.vmid[i]);
    break;
  case 3:
  case 6:
    for (Index p = st.A_csr.rowptr[i]; p < st.A_csr.rowptr[i + 1]; ++p)
      out.push_back(st.fac[p]);
    break;
  case 5:
  case 7:
    for (Index p = st.L_csc.colptr[i]; p < st.L_csc.colptr[i + 1]; ++p)
      out.push_back(st.fac[p]);
    break;
  default:
    break;
  }
}

} // namespace sparsefuse

#endif
