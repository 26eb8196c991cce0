#ifndef SPARSEFUSE_LBC_HPP
#define SPARSEFUSE_LBC_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "dag.hpp"
#include "types.hpp"

namespace sparsefuse {

// Load-balanced level coarsening output: H[i][j] is the sorted vertex list of
// w-partition j inside s-partition i. S-partitions run sequentially;
// w-partitions of one s-partition are mutually independent.
struct HPartitioning {
  std::vector<std::vector<std::vector<Index>>> H;
  Index k = 0;           // max w-partitions over all s-partitions
  std::vector<Index> lb; // wavefront window [lb_i, ub_i), 1-based levels
  std::vector<Index> ub;
};

namespace detail {

struct UnionFind {
  std::vector<Index> parent;
  explicit UnionFind(Index n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  Index find(Index x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  bool unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a == b)
      return false;
    if (b < a)
      std::swap(a, b); // smallest index wins: deterministic component roots
    parent[b] = a;
    return true;
  }
};

// Cost-weighted parallelism of the subgraph induced by the vertices with
// level in [lo, hi]: total cost divided by the largest connected-component
// cost. `local` maps vertex -> local id, stamped.
inline double window_parallelism(const DepDag& g,
                                 const std::vector<std::vector<Index>>& levels,
                                 Index lo, Index hi, std::vector<Index>& local,
                                 std::vector<Index>& stampv, Index stamp) {
  Index count = 0;
  std::vector<Index> verts;
  for (Index l = lo; l <= hi; ++l)
    for (Index v : levels[l]) {
      local[v] = count++;
      stampv[v] = stamp;
      verts.push_back(v);
    }
  if (count == 0)
    return 0.0;
  UnionFind uf(count);
  for (Index v : verts)
    for (Index p = g.succptr[v]; p < g.succptr[v + 1]; ++p) {
      const Index w = g.succ[p];
      if (stampv[w] == stamp)
        uf.unite(local[v], local[w]);
    }
  std::vector<Cost> comp_cost(count, 0);
  Cost total = 0, maxcomp = 0;
  for (Index v : verts) {
    const Index root = uf.find(local[v]);
    comp_cost[root] += g.cost[v];
    total += g.cost[v];
    maxcomp = std::max(maxcomp, comp_cost[root]);
  }
  return static_cast<double>(total) / static_cast<double>(maxcomp);
}

} // namespace detail

// Partitions a DAG into cost-coarsened wavefront windows (s-partitions), each
// split into at most r independent, cost-balanced w-partitions.
//
// Window growth is greedy toward a per-window cost target of
// total_cost / ceil(P*r/nvert), with a minimum of one wavefront. A window is
// never grown past the point where coarsening would collapse the available
// parallelism: growth is rejected when the grown window's cost-weighted
// parallelism (total cost over largest component cost) drops below
// kParallelismSlack times the parallelism available without the growth,
// capped at r. On DAGs whose consecutive wavefronts are connected this
// degenerates to single-wavefront windows, the finest valid choice; on DAGs
// with separator structure it produces a few hierarchical windows.
inline constexpr double kParallelismSlack = 0.75;

inline HPartitioning lbc_partition(const DepDag& g, Index r) {
  if (r < 1)
    throw std::invalid_argument("partition count must be >= 1");
  HPartitioning out;
  if (g.nvert == 0)
    return out;
  const LevelInfo li = level_info(g);
  const Index P = li.critical_path;
  std::vector<std::vector<Index>> levels(P + 1);
  for (Index v = 0; v < g.nvert; ++v)
    levels[li.level[v]].push_back(v); // ascending per level
  std::vector<Cost> level_cost(P + 1, 0);
  std::vector<Cost> level_maxvert(P + 1, 1);
  for (Index v = 0; v < g.nvert; ++v) {
    level_cost[li.level[v]] += g.cost[v];
    level_maxvert[li.level[v]] =
        std::max(level_maxvert[li.level[v]], g.cost[v]);
  }

  const Index nwin = std::max<Index>(
      1, static_cast<Index>((static_cast<Cost>(P) * r + g.nvert - 1) /
                            std::max<Index>(1, g.nvert)));
  Cost remaining = g.total_cost();
  Index windows_left = nwin;

  std::vector<Index> local(g.nvert, 0), stampv(g.nvert, -1);
  Index stamp = 0;

  Index lev = 1;
  while (lev <= P) {
    const double target =
        static_cast<double>(remaining) / std::max<Index>(1, windows_left);
    Index lo = lev, hi = lev;
    Cost wcost = level_cost[lev];
    double par_cur = detail::window_parallelism(g, levels, lo, hi, local,
                                                stampv, ++stamp);
    while (hi + 1 <= P) {
      if (static_cast<double>(wcost) >= target)
        break;
      if (r >= 2) {
        const double par_next = static_cast<double>(level_cost[hi + 1]) /
                                static_cast<double>(level_maxvert[hi + 1]);
        const double par_grown = detail::window_parallelism(
            g, levels, lo, hi + 1, local, stampv, ++stamp);
        const double floor =
            kParallelismSlack *
            std::min<double>(static_cast<double>(r),
                             std::max(par_cur, par_next));
        if (par_grown < floor)
          break;
        par_cur = par_grown;
      }
      ++hi;
      wcost += level_cost[hi];
    }
    // materialize components of the final window
    Index nv = 0;
    std::vector<Index> verts;
    ++stamp;
    for (Index l = lo; l <= hi; ++l)
      for (Index v : levels[l]) {
        local[v] = nv++;
        stampv[v] = stamp;
        verts.push_back(v);
      }
    detail::UnionFind uf(nv);
    for (Index v : verts)
      for (Index p = g.succptr[v]; p < g.succptr[v + 1]; ++p) {
        const Index w = g.succ[p];
        if (stampv[w] == stamp)
          uf.unite(local[v], local[w]);
      }
    // group by root; roots keyed by smallest member index for determinism
    std::vector<std::vector<Index>> comp_of_root(nv);
    for (Index v : verts)
      comp_of_root[uf.find(local[v])].push_back(v);
    struct Comp {
      std::vector<Index> verts;
      Cost cost;
    };
    std::vector<Comp> comps;
    for (auto& cv : comp_of_root)
      if (!cv.empty()) {
        Cost c = 0;
        for (Index v : cv)
          c += g.cost[v];
        std::sort(cv.begin(), cv.end());
        comps.push_back({std::move(cv), c});
      }
    std::sort(comps.begin(), comps.end(), [](const Comp& a, const Comp& b) {
      if (a.cost != b.cost)
        return a.cost > b.cost;
      return a.verts.front() < b.verts.front();
    });
    const Index nbins = std::min<Index>(r, static_cast<Index>(comps.size()));
    std::vector<std::vector<Index>> bins(nbins);
    std::vector<Cost> bin_cost(nbins, 0);
    for (const Comp& c : comps) {
      Index best = 0;
      for (Index b = 1; b < nbins; ++b)
        if (bin_cost[b] < bin_cost[best])
          best = b;
      bins[best].insert(bins[best].end(), c.verts.begin(), c.verts.end());
      bin_cost[best] += c.cost;
    }
    for (auto& b : bins)
      std::sort(b.begin(), b.end());
    std::sort(bins.begin(), bins.end(),
              [](const std::vector<Index>& a, const std::vector<Index>& b) {
                return a.front() < b.front();
              });
    out.H.push_back(std::move(bins));
    out.lb.push_back(lo);
    out.ub.push_back(hi + 1);
    out.k = std::max<Index>(out.k, static_cast<Index>(out.H.back().size()));
    remaining -= wcost;
    if (windows_left > 1)
      --windows_left;
    lev = hi + 1;
  }
  return out;
}

// Checks the structural invariants of an HPartitioning against its DAG;
// returns a list of human-readable violations (empty when valid).
inline std::vector<std::string> check_hpartitioning(const HPartitioning& h,
                                                    const DepDag& g) {
  std::vector<std::string> bad;
  std::vector<Index> spart(g.nvert, -1), wpart(g.nvert, -1);
  for (Index i = 0; i < static_cast<Index>(h.H.size()); ++i)
    for (Index j = 0; j < static_cast<Index>(h.H[i].size()); ++j)
      for (Index v : h.H[i][j]) {
        if (v < 0 || v >= g.nvert || spart[v] != -1) {
          bad.push_back("vertex " + std::to_string(v) +
                        " missing or duplicated");
          continue;
        }
        spart[v] = i;
        wpart[v] = j;
      }
  for (Index v = 0; v < g.nvert; ++v)
    if (spart[v] == -1)
      bad.push_back("vertex " + std::to_string(v) + " not covered");
  for (Index u = 0; u < g.nvert; ++u)
    for (Index p = g.succptr[u]; p < g.succptr[u + 1]; ++p) {
      const Index v = g.succ[p];
      if (spart[u] == -1 || spart[v] == -1)
        continue;
      const bool same_w = spart[u] == spart[v] && wpart[u] == wpart[v];
      if (!same_w && !(spart[u] < spart[v]))
        bad.push_back("edge " + std::to_string(u) + "->" + std::to_string(v) +
                      " violates partition order");
    }
  return bad;
}

} // namespace sparsefuse

#endif
