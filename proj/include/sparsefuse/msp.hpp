#ifndef SPARSEFUSE_MSP_HPP
#define SPARSEFUSE_MSP_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "dag.hpp"
#include "lbc.hpp"
#include "types.hpp"

namespace sparsefuse {

// One scheduled iteration: tag 1 = first kernel, tag 2 = second kernel.
// `dup` marks replicated first-kernel entries; they recompute the same value
// in several w-partitions and store results through single-word atomics.
struct FusedEntry {
  std::uint8_t tag = 1;
  Index iter = 0;
  bool dup = false;
};

inline bool operator==(const FusedEntry& a, const FusedEntry& b) {
  return a.tag == b.tag && a.iter == b.iter;
}

struct SlackRecord {
  std::uint8_t tag = 0;
  Index iter = 0;
  Index level = 0; // pre-merge 1-based s-index of the home partition
  Index sn = 0;    // partition slack number
  Index group = 0;
  Cost cost = 0;
  Index placed_s = -1;
  Index placed_w = -1;
};

// MSP output: b s-partitions executed sequentially, each holding independent
// w-partitions of ordered (kernel, iteration) entries.
struct FusedPartitioning {
  bool fusion = true;
  bool interleaved = false;
  double reuse_ratio = 0.0;
  double eps = 0.0;
  Index n1 = 0, n2 = 0;
  std::vector<std::vector<std::vector<FusedEntry>>> spartitions;
  std::vector<Index> s_level; // pre-merge 1-based level per s-partition
  std::vector<std::array<Index, 4>> pairs; // surviving pairs (s,w,s',w')
  std::vector<SlackRecord> slack;

  Index b() const { return static_cast<Index>(spartitions.size()); }
  Cost entry_count() const {
    Cost t = 0;
    for (const auto& s : spartitions)
      for (const auto& w : s)
        t += static_cast<Cost>(w.size());
    return t;
  }
};

inline int choose_head(const DepDag& g1, const DepDag& g2) {
  return g2.nedges() > 0 ? 2 : 1;
}

namespace detail {

inline void invert_dag(const DepDag& g, std::vector<Index>& ptr,
                       std::vector<Index>& lst) {
  ptr.assign(static_cast<std::size_t>(g.nvert) + 1, 0);
  lst.resize(g.nedges());
  for (Index u = 0; u < g.nvert; ++u)
    for (Index p = g.succptr[u]; p < g.succptr[u + 1]; ++p)
      ++ptr[g.succ[p] + 1];
  for (Index v = 0; v < g.nvert; ++v)
    ptr[v + 1] += ptr[v];
  std::vector<Index> next(ptr.begin(), ptr.end() - 1);
  for (Index u = 0; u < g.nvert; ++u)
    for (Index p = g.succptr[u]; p < g.succptr[u + 1]; ++p)
      lst[next[g.succ[p]]++] = u;
}

inline InterDep transpose(const InterDep& f) {
  InterDep t;
  t.nrows = f.ncols;
  t.ncols = f.nrows;
  t.rowptr.assign(static_cast<std::size_t>(f.ncols) + 1, 0);
  t.colidx.resize(f.nnz());
  for (Index i = 0; i < f.nrows; ++i)
    for (Index p = f.rowptr[i]; p < f.rowptr[i + 1]; ++p)
      ++t.rowptr[f.colidx[p] + 1];
  for (Index j = 0; j < f.ncols; ++j)
    t.rowptr[j + 1] += t.rowptr[j];
  std::vector<Index> next(t.rowptr.begin(), t.rowptr.end() - 1);
  for (Index i = 0; i < f.nrows; ++i)
    for (Index p = f.rowptr[i]; p < f.rowptr[i + 1]; ++p)
      t.colidx[next[f.colidx[p]]++] = i;
  return t;
}

struct MspPart {
  std::vector<Index> k1, k2; // sorted
  Index s = -1;              // pre-merge s-index, 0-based
  int pair = -1;
  bool alive = true;
};

struct MspBuilder;
inline void place_leftover_components(MspBuilder& b,
                                      const std::vector<Index>& leftovers,
                                      const std::vector<Index>& placed_at,
                                      Index r);

struct MspBuilder {
  const DepDag* g1 = nullptr;
  const DepDag* g2 = nullptr;
  const InterDep* f = nullptr;
  InterDep ft;
  std::vector<Index> g1_predptr, g1_pred, g2_predptr, g2_pred;

  std::vector<MspPart> parts;
  std::vector<std::vector<int>> slots; // pre-merge s-index -> part ids
  std::vector<std::vector<int>> hosts1;
  std::vector<int> host2;
  std::vector<Index> level, height, sn; // per part
  std::vector<Cost> cost;               // per part, maintained incrementally

  int new_part(Index s) {
    parts.push_back({});
    parts.back().s = s;
    while (static_cast<Index>(slots.size()) <= s)
      slots.emplace_back();
    const int id = static_cast<int>(parts.size()) - 1;
    slots[s].push_back(id);
    return id;
  }

  void index_hosts() {
    hosts1.assign(g1->nvert, {});
    host2.assign(g2->nvert, -1);
    for (int id = 0; id < static_cast<int>(parts.size()); ++id) {
      for (Index v : parts[id].k1)
        hosts1[v].push_back(id);
      for (Index v : parts[id].k2)
        host2[v] = id;
    }
  }

  void compute_costs() {
    cost.assign(parts.size(), 0);
    for (std::size_t id = 0; id < parts.size(); ++id) {
      for (Index v : parts[id].k1)
        cost[id] += g1->cost[v];
      for (Index v : parts[id].k2)
        cost[id] += g2->cost[v];
    }
  }
};

// Places unneeded kernel-1 vertices: connected components of the leftover
// set go one slot after their latest placed dependency, bin-packed into at
// most r partitions per slot.
inline void place_leftover_components(MspBuilder& b,
                                      const std::vector<Index>& leftovers,
                                      const std::vector<Index>& placed_at,
                                      Index r) {
  std::vector<Index> lid(b.g1->nvert, -1);
  for (std::size_t i = 0; i < leftovers.size(); ++i)
    lid[leftovers[i]] = static_cast<Index>(i);
  std::vector<Index> uf(leftovers.size());
  for (std::size_t i = 0; i < leftovers.size(); ++i)
    uf[i] = static_cast<Index>(i);
  std::function<Index(Index)> find = [&](Index x) {
    while (uf[x] != x) {
      uf[x] = uf[uf[x]];
      x = uf[x];
    }
    return x;
  };
  for (Index v : leftovers)
    for (Index p = b.g1->succptr[v]; p < b.g1->succptr[v + 1]; ++p) {
      const Index w = b.g1->succ[p];
      if (lid[w] >= 0) {
        const Index a = find(lid[v]), c = find(lid[w]);
        if (a != c)
          uf[std::max(a, c)] = std::min(a, c);
      }
    }
  struct Comp {
    std::vector<Index> verts;
    Cost cost = 0;
    Index slot = 0;
  };
  std::vector<Comp> comps;
  std::vector<Index> comp_id(leftovers.size(), -1);
  for (std::size_t i = 0; i < leftovers.size(); ++i) {
    const Index root = find(static_cast<Index>(i));
    if (comp_id[root] < 0) {
      comp_id[root] = static_cast<Index>(comps.size());
      comps.emplace_back();
    }
    Comp& c = comps[comp_id[root]];
    c.verts.push_back(leftovers[i]);
    c.cost += b.g1->cost[leftovers[i]];
  }
  for (Comp& c : comps)
    for (Index v : c.verts)
      for (Index p = b.g1_predptr[v]; p < b.g1_predptr[v + 1]; ++p) {
        const Index u = b.g1_pred[p];
        if (lid[u] < 0)
          c.slot = std::max(c.slot, placed_at[u] + 1);
      }
  // group components by slot, bin-pack each slot's components into <= r bins
  std::vector<Index> comp_order(comps.size());
  for (std::size_t i = 0; i < comps.size(); ++i)
    comp_order[i] = static_cast<Index>(i);
  std::sort(comp_order.begin(), comp_order.end(), [&](Index a, Index c) {
    if (comps[a].slot != comps[c].slot)
      return comps[a].slot < comps[c].slot;
    if (comps[a].cost != comps[c].cost)
      return comps[a].cost > comps[c].cost;
    return comps[a].verts.front() < comps[c].verts.front();
  });
  Index cur_slot = -1;
  std::vector<int> bins;
  std::vector<Cost> bin_cost;
  for (Index ci : comp_order) {
    Comp& c = comps[ci];
    if (c.slot != cur_slot) {
      cur_slot = c.slot;
      bins.clear();
      bin_cost.clear();
    }
    int best = -1;
    if (static_cast<Index>(bins.size()) < r) {
      bins.push_back(b.new_part(cur_slot));
      bin_cost.push_back(0);
      best = static_cast<int>(bins.size()) - 1;
    } else {
      best = 0;
      for (int k = 1; k < static_cast<int>(bins.size()); ++k)
        if (bin_cost[k] < bin_cost[best])
          best = k;
    }
    auto& vec = b.parts[bins[best]].k1;
    for (Index v : c.verts)
      vec.insert(std::upper_bound(vec.begin(), vec.end(), v), v);
    bin_cost[best] += c.cost;
  }
}

// Backward pairing (head = G2): T_ij is the predecessor closure in G1 of the
// F-dependencies of head partition H_ij, pruned at vertices that already have
// a copy in a strictly earlier s-partition. Vertices needed by several head
// partitions of the same window are replicated.
inline void backward_pairing(MspBuilder& b, const HPartitioning& h, Index r) {
  const Index nwin = static_cast<Index>(h.H.size());
  std::vector<Index> placed_at(b.g1->nvert, -1);
  std::vector<char> mark(b.g1->nvert, 0);
  std::vector<std::vector<int>> head_ids(nwin);
  for (Index i = 0; i < nwin; ++i)
    for (const auto& hw : h.H[i]) {
      const int id = b.new_part(i + 1);
      b.parts[id].k2 = hw;
      head_ids[i].push_back(id);
    }
  for (Index i = 0; i < nwin; ++i) {
    std::vector<int> made;
    for (int hid : head_ids[i]) {
      std::vector<Index> closure, stack;
      for (Index v : b.parts[hid].k2)
        for (Index p = b.f->rowptr[v]; p < b.f->rowptr[v + 1]; ++p)
          stack.push_back(b.f->colidx[p]);
      while (!stack.empty()) {
        const Index u = stack.back();
        stack.pop_back();
        if (mark[u])
          continue;
        if (placed_at[u] >= 0 && placed_at[u] < i)
          continue;
        mark[u] = 1;
        closure.push_back(u);
        for (Index p = b.g1_predptr[u]; p < b.g1_predptr[u + 1]; ++p)
          stack.push_back(b.g1_pred[p]);
      }
      for (Index u : closure)
        mark[u] = 0;
      if (closure.empty())
        continue;
      std::sort(closure.begin(), closure.end());
      const int tid = b.new_part(i);
      b.parts[tid].k1 = std::move(closure);
      b.parts[tid].pair = hid;
      b.parts[hid].pair = tid;
      made.push_back(tid);
    }
    for (int tid : made)
      for (Index u : b.parts[tid].k1)
        if (placed_at[u] < 0)
          placed_at[u] = i;
  }
  // Coverage: kernel-1 vertices nothing in kernel 2 needs. Their successors
  // are also unneeded, so whole components can run after everything placed
  // that they depend on.
  std::vector<Index> leftovers;
  for (Index v = 0; v < b.g1->nvert; ++v)
    if (placed_at[v] < 0)
      leftovers.push_back(v);
  if (!leftovers.empty())
    place_leftover_components(b, leftovers, placed_at, r);
}

// Forward pairing (head = G1; G2 has no edges in this branch). T_ij holds the
// second-kernel iterations whose F-dependencies all lie in H_ij; iterations
// depending on several head partitions are uncontained and go to a U
// partition placed after their latest dependency. F-free iterations run in
// the first s-partition.
inline void forward_pairing(MspBuilder& b, const HPartitioning& h, Index r) {
  const Index nwin = static_cast<Index>(h.H.size());
  std::vector<int> part_of_k1(b.g1->nvert, -1);
  std::vector<std::vector<int>> head_ids(nwin);
  for (Index i = 0; i < nwin; ++i)
    for (const auto& hw : h.H[i]) {
      const int id = b.new_part(i);
      b.parts[id].k1 = hw;
      for (Index v : hw)
        part_of_k1[v] = id;
      head_ids[i].push_back(id);
    }
  const int nheads = static_cast<int>(b.parts.size());
  std::vector<std::vector<Index>> t_of(nheads);
  std::vector<std::vector<Index>> u_of(nwin);
  std::vector<Index> free_iters;
  for (Index v = 0; v < b.g2->nvert; ++v) {
    if (b.f->rowptr[v] == b.f->rowptr[v + 1]) {
      free_iters.push_back(v);
      continue;
    }
    const int first = part_of_k1[b.f->colidx[b.f->rowptr[v]]];
    bool contained = true;
    Index latest = 0;
    for (Index p = b.f->rowptr[v]; p < b.f->rowptr[v + 1]; ++p) {
      const int hp = part_of_k1[b.f->colidx[p]];
      if (hp != first)
        contained = false;
      latest = std::max(latest, b.parts[hp].s);
    }
    if (contained)
      t_of[first].push_back(v);
    else
      u_of[latest].push_back(v);
  }
  for (Index i = 0; i < nwin; ++i)
    for (int hid : head_ids[i]) {
      auto& tv = t_of[hid];
      if (tv.empty())
        continue;
      const int tid = b.new_part(i + 1);
      b.parts[tid].k2 = std::move(tv);
      b.parts[tid].pair = hid;
      b.parts[hid].pair = tid;
    }
  for (Index i = 0; i < nwin; ++i)
    if (!u_of[i].empty()) {
      const int uid = b.new_part(i + 1);
      b.parts[uid].k2 = std::move(u_of[i]);
    }
  // F-free iterations have no dependencies at all (G2 is edgeless here);
  // they run in the first s-partition, split into balanced chunks
  if (!free_iters.empty()) {
    Cost total = 0;
    for (Index v : free_iters)
      total += b.g2->cost[v];
    const Index chunks =
        std::min<Index>(r, static_cast<Index>(free_iters.size()));
    Cost cum = 0, acc = 0;
    Index made = 0;
    std::vector<Index> chunk;
    for (Index v : free_iters) {
      cum += b.g2->cost[v];
      acc += b.g2->cost[v];
      chunk.push_back(v);
      if (made < chunks - 1 && cum * chunks >= total * (made + 1)) {
        const int id = b.new_part(0);
        b.parts[id].k2 = std::move(chunk);
        chunk.clear();
        acc = 0;
        ++made;
      }
    }
    if (!chunk.empty()) {
      const int id = b.new_part(0);
      b.parts[id].k2 = std::move(chunk);
    }
  }
}

// Quotient slack numbers. A partition's level is its pre-merge s-index
// (1-based); heights follow the quotient edges P -> Q drawn whenever Q holds
// an entry depending on a vertex it has no own copy of. All placements put
// dependencies at or before their consumers, so quotient edges ascend in s
// and SN = b_pre - level - height is non-negative.
inline void compute_slack_numbers(MspBuilder& b) {
  const int np = static_cast<int>(b.parts.size());
  std::vector<std::vector<int>> qsucc(np);
  for (int q = 0; q < np; ++q) {
    const MspPart& part = b.parts[q];
    auto own1 = [&](Index u) {
      return std::binary_search(part.k1.begin(), part.k1.end(), u);
    };
    auto own2 = [&](Index u) {
      return std::binary_search(part.k2.begin(), part.k2.end(), u);
    };
    for (Index v : part.k1)
      for (Index p = b.g1_predptr[v]; p < b.g1_predptr[v + 1]; ++p) {
        const Index u = b.g1_pred[p];
        if (!own1(u))
          for (int host : b.hosts1[u])
            if (host != q)
              qsucc[host].push_back(q);
      }
    for (Index v : part.k2) {
      for (Index p = b.g2_predptr[v]; p < b.g2_predptr[v + 1]; ++p) {
        const Index u = b.g2_pred[p];
        if (!own2(u) && b.host2[u] != q)
          qsucc[b.host2[u]].push_back(q);
      }
      for (Index p = b.f->rowptr[v]; p < b.f->rowptr[v + 1]; ++p) {
        const Index u = b.f->colidx[p];
        if (!own1(u))
          for (int host : b.hosts1[u])
            if (host != q)
              qsucc[host].push_back(q);
      }
    }
  }
  const Index bpre = static_cast<Index>(b.slots.size());
  b.level.assign(np, 0);
  b.height.assign(np, 0);
  b.sn.assign(np, 0);
  for (int q = 0; q < np; ++q)
    b.level[q] = b.parts[q].s + 1;
  std::vector<int> order(np);
  for (int q = 0; q < np; ++q)
    order[q] = q;
  std::sort(order.begin(), order.end(),
            [&](int a, int c) { return b.parts[a].s > b.parts[c].s; });
  for (int q : order)
    for (int succ : qsucc[q])
      b.height[q] = std::max(b.height[q], b.height[succ] + 1);
  for (int q = 0; q < np; ++q)
    b.sn[q] = bpre - b.level[q] - b.height[q];
}

// Merge every recorded pair whose partitions both have slack number zero
// into the w-partition with the smaller s-partition number.
inline void merge_pairs(MspBuilder& b) {
  const int np = static_cast<int>(b.parts.size());
  for (int id = 0; id < np; ++id) {
    const int other = b.parts[id].pair;
    if (other < 0 || other < id)
      continue;
    if (b.sn[id] != 0 || b.sn[other] != 0)
      continue;
    int keep = id, drop = other;
    if (b.parts[drop].s < b.parts[keep].s)
      std::swap(keep, drop);
    auto merge_sorted = [](std::vector<Index>& dst, std::vector<Index>& src) {
      std::vector<Index> out;
      out.reserve(dst.size() + src.size());
      std::merge(dst.begin(), dst.end(), src.begin(), src.end(),
                 std::back_inserter(out));
      dst = std::move(out);
      src.clear();
    };
    merge_sorted(b.parts[keep].k1, b.parts[drop].k1);
    merge_sorted(b.parts[keep].k2, b.parts[drop].k2);
    b.cost[keep] += b.cost[drop];
    b.cost[drop] = 0;
    b.parts[drop].alive = false;
    b.parts[keep].pair = -1;
    b.parts[drop].pair = -1;
  }
  // re-index hosts after moving vertices between partitions
  b.index_hosts();
}

struct SlackSet {
  struct Member {
    std::uint8_t tag;
    Index iter;
    int home;
    Cost cost;
  };
  std::vector<Member> members;
  std::vector<int> group_of;
  std::vector<std::vector<int>> groups; // group -> member ids
  std::vector<Cost> gcost;
  std::vector<Index> glo;       // max home level over members
  std::vector<Index> ghi;       // min (level + sn), exclusive bound
  std::vector<char> gplaced;
};

// Collect slack vertices (positive partition slack number), excluding
// replicated kernel-1 vertices, remove them from their partitions, and group
// members that depend on each other so groups move as units.
inline SlackSet collect_slack(MspBuilder& b) {
  SlackSet s;
  std::vector<int> m1(b.g1->nvert, -1), m2(b.g2->nvert, -1);
  for (int id = 0; id < static_cast<int>(b.parts.size()); ++id) {
    if (!b.parts[id].alive || b.sn[id] <= 0)
      continue;
    MspPart& part = b.parts[id];
    std::vector<Index> keep1;
    for (Index v : part.k1) {
      if (b.hosts1[v].size() > 1) {
        keep1.push_back(v); // replicated copies are pair glue; do not move
        continue;
      }
      m1[v] = static_cast<int>(s.members.size());
      s.members.push_back({1, v, id, b.g1->cost[v]});
      b.cost[id] -= b.g1->cost[v];
    }
    part.k1 = std::move(keep1);
    std::vector<Index> keep2;
    for (Index v : part.k2) {
      m2[v] = static_cast<int>(s.members.size());
      s.members.push_back({2, v, id, b.g2->cost[v]});
      b.cost[id] -= b.g2->cost[v];
    }
    part.k2 = std::move(keep2);
  }
  b.index_hosts();
  // union-find over dependence edges internal to the slack set
  const int nm = static_cast<int>(s.members.size());
  std::vector<int> uf(nm);
  for (int i = 0; i < nm; ++i)
    uf[i] = i;
  std::function<int(int)> find = [&](int x) {
    while (uf[x] != x) {
      uf[x] = uf[uf[x]];
      x = uf[x];
    }
    return x;
  };
  auto unite = [&](int a, int c) {
    a = find(a);
    c = find(c);
    if (a != c)
      uf[std::max(a, c)] = std::min(a, c);
  };
  for (int i = 0; i < nm; ++i) {
    const auto& m = s.members[i];
    if (m.tag == 1) {
      for (Index p = b.g1->succptr[m.iter]; p < b.g1->succptr[m.iter + 1]; ++p)
        if (m1[b.g1->succ[p]] >= 0)
          unite(i, m1[b.g1->succ[p]]);
      for (Index p = b.ft.rowptr[m.iter]; p < b.ft.rowptr[m.iter + 1]; ++p)
        if (m2[b.ft.colidx[p]] >= 0)
          unite(i, m2[b.ft.colidx[p]]);
    } else {
      for (Index p = b.g2->succptr[m.iter]; p < b.g2->succptr[m.iter + 1]; ++p)
        if (m2[b.g2->succ[p]] >= 0)
          unite(i, m2[b.g2->succ[p]]);
    }
  }
  std::vector<int> group_id(nm, -1);
  s.group_of.assign(nm, -1);
  for (int i = 0; i < nm; ++i) {
    const int root = find(i);
    if (group_id[root] < 0) {
      group_id[root] = static_cast<int>(s.groups.size());
      s.groups.emplace_back();
      s.gcost.push_back(0);
      s.glo.push_back(0);
      s.ghi.push_back(1 << 28);
    }
    const int g = group_id[root];
    s.group_of[i] = g;
    s.groups[g].push_back(i);
    s.gcost[g] += s.members[i].cost;
    s.glo[g] = std::max(s.glo[g], b.level[s.members[i].home]);
    s.ghi[g] = std::min(s.ghi[g], b.level[s.members[i].home] +
                                      b.sn[s.members[i].home]);
  }
  s.gplaced.assign(s.groups.size(), 0);
  return s;
}

// Can the group legally execute in partition `target`? Every dependence of a
// member must resolve inside the group, inside the target partition, or in a
// strictly earlier s-partition; every dependent must run strictly later, in
// the group, or in the target partition.
inline bool can_place(const MspBuilder& b, const SlackSet& s,
                      const std::vector<int>& member_ids, int target) {
  const Index ts = b.parts[target].s;
  auto in_group = [&](std::uint8_t tag, Index iter) {
    for (int mi : member_ids) {
      const auto& m = s.members[mi];
      if (m.tag == tag && m.iter == iter)
        return true;
    }
    return false;
  };
  auto in_target1 = [&](Index u) {
    return std::binary_search(b.parts[target].k1.begin(),
                              b.parts[target].k1.end(), u);
  };
  auto in_target2 = [&](Index u) {
    return std::binary_search(b.parts[target].k2.begin(),
                              b.parts[target].k2.end(), u);
  };
  auto copy_before = [&](Index u) {
    for (int host : b.hosts1[u])
      if (b.parts[host].s < ts)
        return true;
    return false;
  };
  for (int mi : member_ids) {
    const auto& m = s.members[mi];
    if (m.tag == 1) {
      if (in_target1(m.iter))
        return false; // collision
      for (Index p = b.g1_predptr[m.iter]; p < b.g1_predptr[m.iter + 1]; ++p) {
        const Index u = b.g1_pred[p];
        if (in_group(1, u) || in_target1(u) || copy_before(u))
          continue;
        return false;
      }
      for (Index p = b.g1->succptr[m.iter]; p < b.g1->succptr[m.iter + 1];
           ++p) {
        const Index w = b.g1->succ[p];
        if (in_group(1, w) || in_target1(w))
          continue;
        for (int host : b.hosts1[w])
          if (b.parts[host].s <= ts)
            return false;
      }
      for (Index p = b.ft.rowptr[m.iter]; p < b.ft.rowptr[m.iter + 1]; ++p) {
        const Index w = b.ft.colidx[p];
        if (in_group(2, w) || in_target2(w))
          continue;
        if (b.host2[w] >= 0 && b.parts[b.host2[w]].s <= ts)
          return false;
      }
    } else {
      if (in_target2(m.iter))
        return false;
      for (Index p = b.g2_predptr[m.iter]; p < b.g2_predptr[m.iter + 1]; ++p) {
        const Index u = b.g2_pred[p];
        if (in_group(2, u) || in_target2(u))
          continue;
        if (b.host2[u] >= 0 && b.parts[b.host2[u]].s < ts)
          continue;
        return false;
      }
      for (Index p = b.f->rowptr[m.iter]; p < b.f->rowptr[m.iter + 1]; ++p) {
        const Index u = b.f->colidx[p];
        if (in_group(1, u) || in_target1(u) || copy_before(u))
          continue;
        return false;
      }
      for (Index p = b.g2->succptr[m.iter]; p < b.g2->succptr[m.iter + 1];
           ++p) {
        const Index w = b.g2->succ[p];
        if (in_group(2, w) || in_target2(w))
          continue;
        if (b.host2[w] >= 0 && b.parts[b.host2[w]].s <= ts)
          return false;
      }
    }
  }
  return true;
}

inline void place_group(MspBuilder& b, SlackSet& s, int g, int target,
                        std::vector<SlackRecord>& records) {
  for (int mi : s.groups[g]) {
    const auto& m = s.members[mi];
    SlackRecord rec;
    rec.tag = m.tag;
    rec.iter = m.iter;
    rec.level = b.level[m.home];
    rec.sn = b.sn[m.home];
    rec.group = g;
    rec.cost = m.cost;
    rec.placed_s = b.parts[target].s; // pre-merge slot; final coords later
    rec.placed_w = target;            // part id; translated in finalize
    records.push_back(rec);
    if (m.tag == 1) {
      auto& vec = b.parts[target].k1;
      vec.insert(std::upper_bound(vec.begin(), vec.end(), m.iter), m.iter);
      b.hosts1[m.iter].push_back(target);
    } else {
      auto& vec = b.parts[target].k2;
      vec.insert(std::upper_bound(vec.begin(), vec.end(), m.iter), m.iter);
      b.host2[m.iter] = target;
    }
    b.cost[target] += m.cost;
  }
  s.gplaced[g] = 1;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Packing
// ---------------------------------------------------------------------------

namespace detail {

// Separated order: first-kernel entries in ascending iteration order, then
// second-kernel entries in ascending order.
inline std::vector<FusedEntry> separated_pack(const MspPart& part) {
  std::vector<FusedEntry> out;
  out.reserve(part.k1.size() + part.k2.size());
  for (Index v : part.k1)
    out.push_back({1, v, false});
  for (Index v : part.k2)
    out.push_back({2, v, false});
  return out;
}

// Interleaved order: a linear extension of the partition-restricted joint
// relation that emits each second-kernel entry as soon as its in-partition
// dependencies are done, i.e. immediately after its last F-dependency.
inline std::vector<FusedEntry> interleaved_pack(const MspBuilder& b,
                                                const MspPart& part) {
  const Index n1 = static_cast<Index>(part.k1.size());
  const Index n2 = static_cast<Index>(part.k2.size());
  std::vector<FusedEntry> out;
  out.reserve(n1 + n2);
  // local ids: 0..n1-1 kernel 1, n1..n1+n2-1 kernel 2
  auto local1 = [&](Index v) {
    const auto it = std::lower_bound(part.k1.begin(), part.k1.end(), v);
    return it != part.k1.end() && *it == v
               ? static_cast<Index>(it - part.k1.begin())
               : Index{-1};
  };
  auto local2 = [&](Index v) {
    const auto it = std::lower_bound(part.k2.begin(), part.k2.end(), v);
    return it != part.k2.end() && *it == v
               ? static_cast<Index>(n1 + (it - part.k2.begin()))
               : Index{-1};
  };
  std::vector<std::vector<Index>> succ(n1 + n2);
  std::vector<Index> indeg(n1 + n2, 0);
  for (Index li = 0; li < n1; ++li) {
    const Index v = part.k1[li];
    for (Index p = b.g1->succptr[v]; p < b.g1->succptr[v + 1]; ++p) {
      const Index w = local1(b.g1->succ[p]);
      if (w >= 0) {
        succ[li].push_back(w);
        ++indeg[w];
      }
    }
    for (Index p = b.ft.rowptr[v]; p < b.ft.rowptr[v + 1]; ++p) {
      const Index w = local2(b.ft.colidx[p]);
      if (w >= 0) {
        succ[li].push_back(w);
        ++indeg[w];
      }
    }
  }
  for (Index li = 0; li < n2; ++li) {
    const Index v = part.k2[li];
    for (Index p = b.g2->succptr[v]; p < b.g2->succptr[v + 1]; ++p) {
      const Index w = local2(b.g2->succ[p]);
      if (w >= 0) {
        succ[n1 + li].push_back(w);
        ++indeg[w];
      }
    }
  }
  // two ready pools ordered by iteration index; second kernel preferred
  std::vector<Index> ready1, ready2; // min-heaps over local ids
  auto push_ready = [&](Index lid) {
    if (lid < n1) {
      ready1.push_back(lid);
      std::push_heap(ready1.begin(), ready1.end(), std::greater<>());
    } else {
      ready2.push_back(lid);
      std::push_heap(ready2.begin(), ready2.end(), std::greater<>());
    }
  };
  for (Index lid = 0; lid < n1 + n2; ++lid)
    if (indeg[lid] == 0)
      push_ready(lid);
  while (!ready1.empty() || !ready2.empty()) {
    Index lid;
    if (!ready2.empty()) {
      std::pop_heap(ready2.begin(), ready2.end(), std::greater<>());
      lid = ready2.back();
      ready2.pop_back();
    } else {
      std::pop_heap(ready1.begin(), ready1.end(), std::greater<>());
      lid = ready1.back();
      ready1.pop_back();
    }
    if (lid < n1)
      out.push_back({1, part.k1[lid], false});
    else
      out.push_back({2, part.k2[lid - n1], false});
    for (Index w : succ[lid])
      if (--indeg[w] == 0)
        push_ready(w);
  }
  return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// MSP driver
// ---------------------------------------------------------------------------

// The fused partitioning algorithm: (i) vertex partitioning of the head DAG
// and partition pairing, (ii) merging and slack vertex assignment,
// (iii) packing. `r` is the requested partition count (threads);
// `reuse_ratio` selects the packing mode. Fusion is abandoned when pairing
// replication exceeds redundancy_factor * (|V1| + |V2|) entries.
inline FusedPartitioning msp(const DepDag& g1, const DepDag& g2,
                             const InterDep& f, Index r, double reuse_ratio,
                             double redundancy_factor = 2.0) {
  if (r < 1)
    throw std::invalid_argument("partition count must be >= 1");
  FusedPartitioning V;
  V.n1 = g1.nvert;
  V.n2 = g2.nvert;
  V.reuse_ratio = reuse_ratio;
  V.interleaved = reuse_ratio >= 1.0;

  detail::MspBuilder b;
  b.g1 = &g1;
  b.g2 = &g2;
  b.f = &f;
  detail::invert_dag(g1, b.g1_predptr, b.g1_pred);
  detail::invert_dag(g2, b.g2_predptr, b.g2_pred);
  b.ft = detail::transpose(f);

  // (i) vertex partitioning and partition pairing
  const int head = choose_head(g1, g2);
  if (head == 2) {
    const HPartitioning h = lbc_partition(g2, r);
    detail::backward_pairing(b, h, r);
    Cost entries = 0;
    for (const auto& part : b.parts)
      entries += static_cast<Cost>(part.k1.size() + part.k2.size());
    if (static_cast<double>(entries) >
        redundancy_factor * (static_cast<double>(g1.nvert) + g2.nvert)) {
      V.fusion = false;
      return V;
    }
  } else {
    const HPartitioning h = lbc_partition(g1, r);
    detail::forward_pairing(b, h, r);
  }
  b.index_hosts();
  b.compute_costs();

  // (ii) merging and slack vertex assignment
  detail::compute_slack_numbers(b);
  detail::merge_pairs(b);

  Cost total_cost = 0;
  for (Cost c : b.cost)
    total_cost += c;
  V.eps = 0.001 * static_cast<double>(total_cost);

  detail::SlackSet S = detail::collect_slack(b);
  // groups whose members admit no common placement return home unmoved
  std::vector<SlackRecord> records;
  for (std::size_t g = 0; g < S.groups.size(); ++g)
    if (S.glo[g] >= S.ghi[g]) {
      for (int mi : S.groups[g]) {
        const auto& m = S.members[mi];
        SlackRecord rec;
        rec.tag = m.tag;
        rec.iter = m.iter;
        rec.level = b.level[m.home];
        rec.sn = b.sn[m.home];
        rec.group = static_cast<Index>(g);
        rec.cost = m.cost;
        rec.placed_w = m.home;
        records.push_back(rec);
        if (m.tag == 1) {
          auto& vec = b.parts[m.home].k1;
          vec.insert(std::upper_bound(vec.begin(), vec.end(), m.iter), m.iter);
          b.hosts1[m.iter].push_back(m.home);
        } else {
          auto& vec = b.parts[m.home].k2;
          vec.insert(std::upper_bound(vec.begin(), vec.end(), m.iter), m.iter);
          b.host2[m.iter] = m.home;
        }
        b.cost[m.home] += m.cost;
      }
      S.gplaced[g] = 1;
    }

  // surviving s-partitions in pre-merge order (shells kept for placement)
  std::vector<Index> live_slots;
  for (Index sidx = 0; sidx < static_cast<Index>(b.slots.size()); ++sidx) {
    bool any_alive = false;
    for (int id : b.slots[sidx])
      if (b.parts[id].alive)
        any_alive = true;
    if (any_alive)
      live_slots.push_back(sidx);
  }

  auto slot_level = [&](Index sidx) { return sidx + 1; };
  auto group_allows = [&](std::size_t g, Index level, bool strict) {
    if (level < S.glo[g] || level >= S.ghi[g])
      return false;
    if (strict && level <= S.glo[g])
      return false;
    return true;
  };
  auto has_later_placement = [&](std::size_t g, std::size_t cur_pos) {
    for (std::size_t sp = cur_pos + 1; sp < live_slots.size(); ++sp)
      if (group_allows(g, slot_level(live_slots[sp]), false))
        return true;
    return false;
  };

  for (std::size_t pos = 0; pos < live_slots.size(); ++pos) {
    const Index sidx = live_slots[pos];
    auto alive_parts = [&]() {
      std::vector<int> ids;
      for (int id : b.slots[sidx])
        if (b.parts[id].alive)
          ids.push_back(id);
      return ids;
    };
    auto max_cost = [&]() {
      Cost m = 0;
      for (int id : alive_parts())
        m = std::max(m, b.cost[id]);
      return m;
    };
    for (int id : alive_parts()) {
      auto max_diff = [&]() { return max_cost() - b.cost[id]; };
      // balance_with_pair: pull groups homed in the pair partition
      if (static_cast<double>(max_diff()) > V.eps) {
        const int partner = b.parts[id].pair;
        if (partner >= 0) {
          // candidate groups fully homed in the partner, highest iteration
          // first (deterministic, keeps leading entries in the partner)
          std::vector<std::size_t> cand;
          for (std::size_t g = 0; g < S.groups.size(); ++g) {
            if (S.gplaced[g])
              continue;
            bool homed = true;
            for (int mi : S.groups[g])
              if (S.members[mi].home != partner)
                homed = false;
            if (homed)
              cand.push_back(g);
          }
          std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t c) {
            Index ma = 0, mc = 0;
            for (int mi : S.groups[a])
              ma = std::max(ma, S.members[mi].iter);
            for (int mi : S.groups[c])
              mc = std::max(mc, S.members[mi].iter);
            return ma > mc;
          });
          for (std::size_t g : cand) {
            if (static_cast<double>(max_diff()) <= V.eps)
              break;
            if (S.gcost[g] > max_diff())
              continue;
            if (!detail::can_place(b, S, S.groups[g], id))
              continue;
            detail::place_group(b, S, static_cast<int>(g), id, records);
          }
        }
      }
      // balance_with_slacks: strictly postponed groups in range
      if (static_cast<double>(max_diff()) > V.eps) {
        while (true) {
          if (static_cast<double>(max_diff()) <= V.eps)
            break;
          // largest fitting eligible group; tie -> smallest iteration
          std::ptrdiff_t best = -1;
          for (std::size_t g = 0; g < S.groups.size(); ++g) {
            if (S.gplaced[g] || S.gcost[g] > max_diff())
              continue;
            if (!group_allows(g, slot_level(sidx), true))
              continue;
            if (!detail::can_place(b, S, S.groups[g], id))
              continue;
            if (best < 0 || S.gcost[g] > S.gcost[static_cast<std::size_t>(best)])
              best = static_cast<std::ptrdiff_t>(g);
          }
          if (best < 0)
            break;
          detail::place_group(b, S, static_cast<int>(best), id, records);
        }
      }
    }
    // assign_even: groups with no later legal placement are spread over the
    // current s-partition, cheapest w-partition first
    std::vector<std::size_t> stuck;
    for (std::size_t g = 0; g < S.groups.size(); ++g)
      if (!S.gplaced[g] && group_allows(g, slot_level(sidx), false) &&
          !has_later_placement(g, pos))
        stuck.push_back(g);
    std::sort(stuck.begin(), stuck.end(), [&](std::size_t a, std::size_t c) {
      Index ma = 1 << 30, mc = 1 << 30;
      for (int mi : S.groups[a])
        ma = std::min(ma, S.members[mi].iter);
      for (int mi : S.groups[c])
        mc = std::min(mc, S.members[mi].iter);
      return ma < mc;
    });
    for (std::size_t g : stuck) {
      std::vector<int> ids = alive_parts();
      std::sort(ids.begin(), ids.end(),
                [&](int a, int c) { return b.cost[a] != b.cost[c]
                                        ? b.cost[a] < b.cost[c]
                                        : a < c; });
      bool placed = false;
      for (int id : ids)
        if (detail::can_place(b, S, S.groups[g], id)) {
          detail::place_group(b, S, static_cast<int>(g), id, records);
          placed = true;
          break;
        }
      if (!placed) {
        // always legal: a fresh w-partition in this s-partition
        const int nid = b.new_part(sidx);
        b.cost.push_back(0);
        detail::place_group(b, S, static_cast<int>(g), nid, records);
      }
    }
  }

  // (iii) packing and final layout
  std::vector<std::pair<Index, Index>> final_coord(b.parts.size(), {-1, -1});
  for (Index sidx = 0; sidx < static_cast<Index>(b.slots.size()); ++sidx) {
    std::vector<std::vector<FusedEntry>> ws;
    for (int id : b.slots[sidx]) {
      const auto& part = b.parts[id];
      if (!part.alive || (part.k1.empty() && part.k2.empty()))
        continue;
      std::vector<FusedEntry> entries =
          V.interleaved ? detail::interleaved_pack(b, part)
                        : detail::separated_pack(part);
      for (FusedEntry& e : entries)
        if (e.tag == 1 && b.hosts1[e.iter].size() > 1)
          e.dup = true;
      final_coord[id] = {static_cast<Index>(V.spartitions.size()),
                         static_cast<Index>(ws.size())};
      ws.push_back(std::move(entries));
    }
    if (!ws.empty()) {
      V.spartitions.push_back(std::move(ws));
      V.s_level.push_back(sidx + 1);
    }
  }
  for (int id = 0; id < static_cast<int>(b.parts.size()); ++id) {
    const int other = b.parts[id].pair;
    if (other < id)
      continue;
    const auto [s1c, w1c] = final_coord[id];
    const auto [s2c, w2c] = final_coord[other];
    if (s1c < 0 || s2c < 0)
      continue;
    V.pairs.push_back({s1c, w1c, s2c, w2c});
  }
  for (SlackRecord& rec : records) {
    const auto [sc, wc] = final_coord[static_cast<std::size_t>(rec.placed_w)];
    rec.placed_s = sc;
    rec.placed_w = wc;
  }
  V.slack = std::move(records);
  return V;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

// True iff every cross-kernel dependence of P u Q resolves inside P u Q.
inline bool self_contained_check(const std::vector<FusedEntry>& P,
                                 const std::vector<FusedEntry>& Q,
                                 const DepDag& g1, const DepDag& g2,
                                 const InterDep& f) {
  (void)g2;
  std::vector<char> in1(g1.nvert, 0);
  std::vector<Index> k2;
  for (const auto* part : {&P, &Q})
    for (const FusedEntry& e : *part) {
      if (e.tag == 1)
        in1[e.iter] = 1;
      else
        k2.push_back(e.iter);
    }
  for (Index v : k2)
    for (Index p = f.rowptr[v]; p < f.rowptr[v + 1]; ++p)
      if (!in1[f.colidx[p]])
        return false;
  return true;
}

// Structural checks of a fused partitioning: coverage, duplicate provenance,
// within-partition linear extension, the cross-partition ordering invariant,
// and self-containedness of recorded pairs (up to earlier s-partitions).
// Returns human-readable violations; empty means valid.
inline std::vector<std::string>
validate_fused_partitioning(const FusedPartitioning& V, const DepDag& g1,
                            const DepDag& g2, const InterDep& f) {
  std::vector<std::string> bad;
  if (!V.fusion) {
    if (V.b() != 0)
      bad.push_back("fusion disabled but schedule non-empty");
    return bad;
  }
  auto complain = [&](Index s, Index w, Index e, const std::string& what) {
    bad.push_back("(s=" + std::to_string(s) + ",w=" + std::to_string(w) +
                  ",entry=" + std::to_string(e) + "): " + what);
  };
  struct Pos {
    Index s, w, idx;
  };
  std::vector<std::vector<Pos>> pos1(g1.nvert);
  std::vector<Pos> pos2(g2.nvert, Pos{-1, -1, -1});
  std::vector<Index> count2(g2.nvert, 0);
  for (Index s = 0; s < V.b(); ++s)
    for (Index w = 0; w < static_cast<Index>(V.spartitions[s].size()); ++w) {
      const auto& entries = V.spartitions[s][w];
      for (Index e = 0; e < static_cast<Index>(entries.size()); ++e) {
        const FusedEntry& fe = entries[e];
        if (fe.tag == 1) {
          if (fe.iter < 0 || fe.iter >= g1.nvert)
            complain(s, w, e, "kernel-1 iteration out of range");
          else
            pos1[fe.iter].push_back({s, w, e});
        } else {
          if (fe.iter < 0 || fe.iter >= g2.nvert)
            complain(s, w, e, "kernel-2 iteration out of range");
          else {
            if (++count2[fe.iter] > 1)
              complain(s, w, e, "kernel-2 iteration duplicated");
            pos2[fe.iter] = {s, w, e};
          }
        }
      }
    }
  for (Index v = 0; v < g1.nvert; ++v)
    if (pos1[v].empty())
      bad.push_back("kernel-1 iteration " + std::to_string(v) + " missing");
  for (Index v = 0; v < g2.nvert; ++v)
    if (count2[v] == 0)
      bad.push_back("kernel-2 iteration " + std::to_string(v) + " missing");
  if (!bad.empty())
    return bad;
  for (Index v = 0; v < g1.nvert; ++v)
    if (pos1[v].size() > 1)
      for (const Pos& p : pos1[v])
        if (!V.spartitions[p.s][p.w][p.idx].dup)
          complain(p.s, p.w, p.idx, "replicated entry not flagged dup");
  std::vector<Index> g1_predptr, g1_pred, g2_predptr, g2_pred;
  detail::invert_dag(g1, g1_predptr, g1_pred);
  detail::invert_dag(g2, g2_predptr, g2_pred);
  auto earliest1 = [&](Index u) {
    Index s = V.b();
    for (const Pos& p : pos1[u])
      s = std::min(s, p.s);
    return s;
  };
  auto in_partition_before = [&](const Pos& at, Index u, std::uint8_t tag) {
    const auto& entries = V.spartitions[at.s][at.w];
    for (Index e = 0; e < at.idx; ++e)
      if (entries[e].tag == tag && entries[e].iter == u)
        return true;
    return false;
  };
  for (Index v = 0; v < g1.nvert; ++v)
    for (const Pos& pv : pos1[v])
      for (Index p = g1_predptr[v]; p < g1_predptr[v + 1]; ++p) {
        const Index u = g1_pred[p];
        if (!in_partition_before(pv, u, 1) && earliest1(u) >= pv.s)
          complain(pv.s, pv.w, pv.idx,
                   "kernel-1 dependence on " + std::to_string(u) +
                       " unsatisfied");
      }
  for (Index v = 0; v < g2.nvert; ++v) {
    const Pos& pv = pos2[v];
    for (Index p = g2_predptr[v]; p < g2_predptr[v + 1]; ++p) {
      const Index u = g2_pred[p];
      const Pos& pu = pos2[u];
      const bool ok =
          pu.s < pv.s || (pu.s == pv.s && pu.w == pv.w && pu.idx < pv.idx);
      if (!ok)
        complain(pv.s, pv.w, pv.idx,
                 "kernel-2 dependence on " + std::to_string(u) +
                     " unsatisfied");
    }
    for (Index p = f.rowptr[v]; p < f.rowptr[v + 1]; ++p) {
      const Index u = f.colidx[p];
      if (!in_partition_before(pv, u, 1) && earliest1(u) >= pv.s)
        complain(pv.s, pv.w, pv.idx,
                 "cross-kernel dependence on " + std::to_string(u) +
                     " unsatisfied");
    }
  }
  // Surviving pairs: cross-kernel dependencies of pair members must resolve
  // inside the pair or strictly before the consuming member's s-partition.
  for (const auto& pr : V.pairs) {
    std::vector<char> in1(g1.nvert, 0);
    for (int side = 0; side < 2; ++side)
      for (const FusedEntry& e : V.spartitions[pr[2 * side]][pr[2 * side + 1]])
        if (e.tag == 1)
          in1[e.iter] = 1;
    for (int side = 0; side < 2; ++side) {
      const Index ps = pr[2 * side];
      for (const FusedEntry& e : V.spartitions[ps][pr[2 * side + 1]]) {
        if (e.tag != 2)
          continue;
        for (Index p = f.rowptr[e.iter]; p < f.rowptr[e.iter + 1]; ++p) {
          const Index u = f.colidx[p];
          if (!in1[u] && earliest1(u) >= ps)
            bad.push_back("pair (" + std::to_string(pr[0]) + "," +
                          std::to_string(pr[1]) + ")-(" + std::to_string(pr[2]) +
                          "," + std::to_string(pr[3]) +
                          ") not self-contained: needs " + std::to_string(u));
        }
      }
    }
  }
  return bad;
}

} // namespace sparsefuse

#endif
