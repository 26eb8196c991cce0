#ifndef SPARSEFUSE_DAG_HPP
#define SPARSEFUSE_DAG_HPP

#include <algorithm>
#include <ostream>
#include <vector>

#include "kernels.hpp"
#include "matrix.hpp"
#include "types.hpp"

namespace sparsefuse {

// Iteration dependence DAG of one kernel. Edge u -> v means iteration v
// depends on iteration u; all supported kernels only produce edges with
// u < v, so ascending iteration order is a topological order.
struct DepDag {
  Index nvert = 0;
  std::vector<Index> succptr; // size nvert+1
  std::vector<Index> succ;    // sorted, no duplicates
  std::vector<Cost> cost;     // c(v) >= 0

  Index nedges() const { return succptr.empty() ? 0 : succptr.back(); }
  Cost total_cost() const {
    Cost t = 0;
    for (Cost c : cost)
      t += c;
    return t;
  }
};

// Inter-kernel dependence matrix F in CSR layout: row i lists the
// first-kernel iterations that second-kernel iteration i depends on.
struct InterDep {
  Index nrows = 0; // |V2|
  Index ncols = 0; // |V1|
  std::vector<Index> rowptr;
  std::vector<Index> colidx; // sorted per row

  Index nnz() const { return rowptr.empty() ? 0 : rowptr.back(); }
};

struct LevelInfo {
  std::vector<Index> level;  // 1-based wavefront number l(v)
  std::vector<Index> height; // longest path to a sink, in edges
  Index critical_path = 0;   // P = max level
  std::vector<Index> slack;  // SN(v) = P - l(v) - height(v)
};

namespace detail {

inline DepDag make_dag(Index nvert, std::vector<std::pair<Index, Index>> edges,
                       std::vector<Cost> cost) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  DepDag g;
  g.nvert = nvert;
  g.succptr.assign(static_cast<std::size_t>(nvert) + 1, 0);
  g.succ.resize(edges.size());
  for (const auto& [u, v] : edges)
    ++g.succptr[u + 1];
  for (Index u = 0; u < nvert; ++u)
    g.succptr[u + 1] += g.succptr[u];
  std::vector<Index> next(g.succptr.begin(), g.succptr.end() - 1);
  for (const auto& [u, v] : edges)
    g.succ[next[u]++] = v;
  g.cost = std::move(cost);
  return g;
}

inline DepDag edgeless_dag(Index nvert, std::vector<Cost> cost) {
  DepDag g;
  g.nvert = nvert;
  g.succptr.assign(static_cast<std::size_t>(nvert) + 1, 0);
  g.cost = std::move(cost);
  return g;
}

} // namespace detail

// Per-iteration computational load: number of nonzeros the iteration touches.
inline std::vector<Cost> vertex_costs(KernelKind kind, const CsrMatrix& A) {
  const Index n = A.nrows;
  std::vector<Cost> c(n, 0);
  switch (kind) {
  case KernelKind::SpMV_CSR:
  case KernelKind::SpTRSV_CSR:
  case KernelKind::DSCAL_CSR:
    for (Index i = 0; i < n; ++i)
      c[i] = std::max<Cost>(1, A.rowptr[i + 1] - A.rowptr[i]);
    return c;
  case KernelKind::SpILU0_CSR: {
    const std::vector<Index> diag = detail::find_diag_positions(A);
    for (Index i = 0; i < n; ++i) {
      Cost t = A.rowptr[i + 1] - A.rowptr[i];
      for (Index p = A.rowptr[i]; p < A.rowptr[i + 1]; ++p) {
        const Index k = A.colidx[p];
        if (k >= i)
          break;
        if (diag[k] >= 0)
          t += A.rowptr[k + 1] - diag[k] - 1;
      }
      c[i] = std::max<Cost>(1, t);
    }
    return c;
  }
  default:
    throw std::invalid_argument("kernel kind does not use CSR storage");
  }
}

inline std::vector<Cost> vertex_costs(KernelKind kind, const CscMatrix& A) {
  const Index n = A.ncols;
  std::vector<Cost> c(n, 0);
  switch (kind) {
  case KernelKind::SpMV_CSC:
  case KernelKind::DSCAL_CSC:
    for (Index j = 0; j < n; ++j)
      c[j] = std::max<Cost>(1, A.colptr[j + 1] - A.colptr[j]);
    return c;
  case KernelKind::SpTRSV_CSC: {
    // row-gather body: iteration i touches row i of the lower matrix
    const LowerRowView rv = build_lower_rows(A);
    for (Index i = 0; i < n; ++i)
      c[i] = 1 + rv.ptr[i + 1] - rv.ptr[i];
    return c;
  }
  case KernelKind::SpIC0_CSC: {
    const LowerRowView rv = build_lower_rows(A);
    for (Index k = 0; k < n; ++k) {
      Cost t = A.colptr[k + 1] - A.colptr[k];
      for (Index q = rv.ptr[k]; q < rv.ptr[k + 1]; ++q) {
        const Index j = rv.col[q];
        const Index* first = A.rowidx.data() + A.colptr[j];
        const Index* last = A.rowidx.data() + A.colptr[j + 1];
        t += static_cast<Cost>(last - std::lower_bound(first, last, k));
      }
      c[k] = std::max<Cost>(1, t);
    }
    return c;
  }
  default:
    throw std::invalid_argument("kernel kind does not use CSC storage");
  }
}

// Dependence DAG of a kernel: one vertex per outer-loop iteration. For the
// solve/factorization kernels every strictly-sub-diagonal nonzero (i, j)
// contributes edge j -> i; SpMV and DSCAL iterations are independent.
inline DepDag intra_dag(KernelKind kind, const CsrMatrix& A) {
  switch (kind) {
  case KernelKind::SpMV_CSR:
  case KernelKind::DSCAL_CSR:
    return detail::edgeless_dag(A.nrows, vertex_costs(kind, A));
  case KernelKind::SpTRSV_CSR:
  case KernelKind::SpILU0_CSR: {
    std::vector<std::pair<Index, Index>> edges;
    for (Index i = 0; i < A.nrows; ++i)
      for (Index p = A.rowptr[i]; p < A.rowptr[i + 1]; ++p) {
        const Index j = A.colidx[p];
        if (j < i)
          edges.push_back({j, i});
        else
          break;
      }
    return detail::make_dag(A.nrows, std::move(edges), vertex_costs(kind, A));
  }
  default:
    throw std::invalid_argument("kernel kind does not use CSR storage");
  }
}

inline DepDag intra_dag(KernelKind kind, const CscMatrix& A) {
  switch (kind) {
  case KernelKind::SpMV_CSC:
  case KernelKind::DSCAL_CSC:
    return detail::edgeless_dag(A.ncols, vertex_costs(kind, A));
  case KernelKind::SpTRSV_CSC:
  case KernelKind::SpIC0_CSC: {
    std::vector<std::pair<Index, Index>> edges;
    for (Index j = 0; j < A.ncols; ++j)
      for (Index p = A.colptr[j]; p < A.colptr[j + 1]; ++p) {
        const Index i = A.rowidx[p];
        if (i > j)
          edges.push_back({j, i});
      }
    return detail::make_dag(A.ncols, std::move(edges), vertex_costs(kind, A));
  }
  default:
    throw std::invalid_argument("kernel kind does not use CSC storage");
  }
}

// Wavefront numbers, heights and slack numbers. Vertices are numbered so
// that every edge goes from a lower to a higher index; violations mean the
// input is not one of the supported iteration DAGs.
inline LevelInfo level_info(const DepDag& g) {
  LevelInfo li;
  li.level.assign(g.nvert, 1);
  li.height.assign(g.nvert, 0);
  for (Index u = 0; u < g.nvert; ++u)
    for (Index p = g.succptr[u]; p < g.succptr[u + 1]; ++p) {
      const Index v = g.succ[p];
      if (v <= u)
        throw std::invalid_argument("dependence cycle: edge does not ascend");
      li.level[v] = std::max(li.level[v], li.level[u] + 1);
    }
  li.critical_path = 0;
  for (Index v = 0; v < g.nvert; ++v)
    li.critical_path = std::max(li.critical_path, li.level[v]);
  for (Index u = g.nvert; u-- > 0;)
    for (Index p = g.succptr[u]; p < g.succptr[u + 1]; ++p)
      li.height[u] = std::max(li.height[u], li.height[g.succ[p]] + 1);
  li.slack.resize(g.nvert);
  for (Index v = 0; v < g.nvert; ++v)
    li.slack[v] = li.critical_path - li.level[v] - li.height[v];
  return li;
}

// Joint DAG: G2 vertices are offset by |V1|; edges E1, E2 and the cross
// edges (j, |V1|+i) for every F_ij.
inline DepDag joint_dag(const DepDag& g1, const DepDag& g2, const InterDep& f) {
  std::vector<std::pair<Index, Index>> edges;
  edges.reserve(static_cast<std::size_t>(g1.nedges()) + g2.nedges() + f.nnz());
  for (Index u = 0; u < g1.nvert; ++u)
    for (Index p = g1.succptr[u]; p < g1.succptr[u + 1]; ++p)
      edges.push_back({u, g1.succ[p]});
  for (Index u = 0; u < g2.nvert; ++u)
    for (Index p = g2.succptr[u]; p < g2.succptr[u + 1]; ++p)
      edges.push_back({g1.nvert + u, g1.nvert + g2.succ[p]});
  for (Index i = 0; i < f.nrows; ++i)
    for (Index p = f.rowptr[i]; p < f.rowptr[i + 1]; ++p)
      edges.push_back({f.colidx[p], g1.nvert + i});
  std::vector<Cost> cost(g1.cost);
  cost.insert(cost.end(), g2.cost.begin(), g2.cost.end());
  return detail::make_dag(g1.nvert + g2.nvert, std::move(edges),
                          std::move(cost));
}

namespace detail {

inline InterDep rows_to_interdep(Index nrows, Index ncols,
                                 std::vector<std::vector<Index>>& rows) {
  InterDep f;
  f.nrows = nrows;
  f.ncols = ncols;
  f.rowptr.assign(static_cast<std::size_t>(nrows) + 1, 0);
  for (Index i = 0; i < nrows; ++i) {
    std::sort(rows[i].begin(), rows[i].end());
    rows[i].erase(std::unique(rows[i].begin(), rows[i].end()), rows[i].end());
    f.rowptr[i + 1] = f.rowptr[i] + static_cast<Index>(rows[i].size());
    f.colidx.insert(f.colidx.end(), rows[i].begin(), rows[i].end());
  }
  return f;
}

inline InterDep identity_interdep(Index n) {
  InterDep f;
  f.nrows = f.ncols = n;
  f.rowptr.resize(static_cast<std::size_t>(n) + 1);
  f.colidx.resize(n);
  for (Index i = 0; i <= n; ++i)
    f.rowptr[i] = i;
  for (Index i = 0; i < n; ++i)
    f.colidx[i] = i;
  return f;
}

} // namespace detail

// Inter-kernel dependence matrix for a combination: F_ij is set iff
// iteration i of the second kernel reads a value written by iteration j of
// the first. Derived from each combination's data flow:
//  - chained vector combos (1, 2, 6): iteration i reads shared[i] only
//  - combo 4: SpMV column i reads y[i] when column i is nonempty
//  - combo 3: ILU0 row i reads scaled rows {k <= i : A_ik != 0}
//  - combos 5, 7: the CSC consumer's iteration i reads factor entries across
//    columns {j <= i : L_ij != 0}
inline InterDep inter_dag(const KernelState& st) {
  const Index n = st.n;
  switch (st.combo.id) {
  case 1:
  case 2:
  case 6:
    return detail::identity_interdep(n);
  case 4: {
    std::vector<std::vector<Index>> rows(n);
    for (Index i = 0; i < n; ++i)
      if (st.A_csc.colptr[i] < st.A_csc.colptr[i + 1])
        rows[i].push_back(i);
    return detail::rows_to_interdep(n, n, rows);
  }
  case 3: {
    std::vector<std::vector<Index>> rows(n);
    for (Index i = 0; i < n; ++i)
      for (Index p = st.A_csr.rowptr[i]; p < st.A_csr.rowptr[i + 1]; ++p) {
        const Index k = st.A_csr.colidx[p];
        if (k > i)
          break;
        rows[i].push_back(k);
      }
    return detail::rows_to_interdep(n, n, rows);
  }
  case 5:
  case 7: {
    std::vector<std::vector<Index>> rows(n);
    for (Index i = 0; i < n; ++i) {
      for (Index q = st.lower_rows.ptr[i]; q < st.lower_rows.ptr[i + 1]; ++q)
        rows[i].push_back(st.lower_rows.col[q]);
      rows[i].push_back(i);
    }
    return detail::rows_to_interdep(n, n, rows);
  }
  default:
    throw std::invalid_argument("unsupported combo");
  }
}

inline DepDag build_g1(const KernelState& st) {
  switch (st.combo.id) {
  case 1:
  case 4:
    return intra_dag(KernelKind::SpTRSV_CSR, st.L_csr);
  case 2:
    return intra_dag(KernelKind::SpMV_CSR, st.A_csr);
  case 3:
    return intra_dag(KernelKind::DSCAL_CSR, st.A_csr);
  case 5:
    return intra_dag(KernelKind::SpIC0_CSC, st.L_csc);
  case 6:
    return intra_dag(KernelKind::SpILU0_CSR, st.A_csr);
  case 7:
    return intra_dag(KernelKind::DSCAL_CSC, st.L_csc);
  default:
    throw std::invalid_argument("unsupported combo");
  }
}

inline DepDag build_g2(const KernelState& st) {
  switch (st.combo.id) {
  case 1:
  case 2:
    return intra_dag(KernelKind::SpTRSV_CSR, st.L_csr);
  case 3:
    return intra_dag(KernelKind::SpILU0_CSR, st.A_csr);
  case 4:
    return intra_dag(KernelKind::SpMV_CSC, st.A_csc);
  case 5:
    return intra_dag(KernelKind::SpTRSV_CSC, st.L_csc);
  case 6: {
    // unit solve over the factor's strictly-lower pattern: same edges as the
    // factorization, cost = strictly-lower row nnz plus the unit diagonal
    std::vector<std::pair<Index, Index>> edges;
    std::vector<Cost> cost(st.n, 1);
    for (Index i = 0; i < st.n; ++i)
      for (Index p = st.A_csr.rowptr[i]; p < st.A_csr.rowptr[i + 1]; ++p) {
        const Index j = st.A_csr.colidx[p];
        if (j >= i)
          break;
        edges.push_back({j, i});
        ++cost[i];
      }
    return detail::make_dag(st.n, std::move(edges), std::move(cost));
  }
  case 7:
    return intra_dag(KernelKind::SpIC0_CSC, st.L_csc);
  default:
    throw std::invalid_argument("unsupported combo");
  }
}

// Reuse ratio of a combination per its access-pattern formula; >= 1 selects
// interleaved packing, < 1 separated packing.
inline double compute_reuse(int combo_id, Index n, Cost size_L, Cost size_A) {
  const double dn = static_cast<double>(n);
  const double L = static_cast<double>(size_L);
  const double A = static_cast<double>(size_A);
  switch (combo_id) {
  case 1:
    return (2 * dn + 2 * L) / std::max(2 * dn + L, L + 2 * dn);
  case 2:
    return 2 * dn / std::max(2 * dn + L, A + 2 * dn);
  case 3:
    return 2 * A / std::max(A, A + 2 * dn);
  case 4:
    return 2 * dn / std::max(2 * dn + L, A + 2 * dn);
  case 5:
    return 2 * L / std::max(L, L + 2 * dn);
  case 6:
    return 2 * A / std::max(A, L + 2 * dn);
  case 7:
    return 2 * L / std::max(L, L + 2 * dn);
  default:
    throw std::invalid_argument("bad combo id");
  }
}

inline double compute_reuse(const KernelState& st) {
  Cost size_L = 0, size_A = 0;
  switch (st.combo.id) {
  case 1:
    size_L = st.L_csr.nnz();
    break;
  case 2:
    size_L = st.L_csr.nnz();
    size_A = st.A_csr.nnz();
    break;
  case 3:
    size_A = st.A_csr.nnz();
    break;
  case 4:
    size_L = st.L_csr.nnz();
    size_A = st.A_csc.nnz();
    break;
  case 5:
  case 7:
    size_L = st.L_csc.nnz();
    break;
  case 6:
    size_A = st.A_csr.nnz();
    size_L = 0;
    for (Index i = 0; i < st.n; ++i)
      for (Index p = st.A_csr.rowptr[i]; p < st.A_csr.rowptr[i + 1]; ++p)
        if (st.A_csr.colidx[p] <= i)
          ++size_L;
    break;
  default:
    throw std::invalid_argument("unsupported combo");
  }
  return compute_reuse(st.combo.id, st.n, size_L, size_A);
}

// JSON dump for debugging: {"nvert":N, "edges":[[u,v],...], "cost":[...]}.
inline void dump_dag_json(const DepDag& g, std::ostream& os) {
  os << "{\"nvert\":" << g.nvert << ",\"edges\":[";
  bool first = true;
  for (Index u = 0; u < g.nvert; ++u)
    for (Index p = g.succptr[u]; p < g.succptr[u + 1]; ++p) {
      if (!first)
        os << ',';
      first = false;
      os << '[' << u << ',' << g.succ[p] << ']';
    }
  os << "],\"cost\":[";
  for (Index v = 0; v < g.nvert; ++v)
    os << (v ? "," : "") << g.cost[v];
  os << "]}";
}

} // namespace sparsefuse

#endif
