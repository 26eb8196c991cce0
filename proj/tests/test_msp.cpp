#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include <sparsefuse/executor.hpp>
#include <sparsefuse/fixtures.hpp>
#include <sparsefuse/msp.hpp>
#include <sparsefuse/schedule_json.hpp>

#include "fixture11.hpp"
#include "oracles.hpp"

using namespace sparsefuse;

namespace {

std::vector<std::pair<int, Index>> tags(const std::vector<FusedEntry>& w) {
  std::vector<std::pair<int, Index>> out;
  for (const FusedEntry& e : w)
    out.push_back({e.tag, e.iter});
  return out;
}

DepDag chain(Index n) {
  std::vector<std::pair<Index, Index>> edges;
  for (Index v = 0; v + 1 < n; ++v)
    edges.push_back({v, v + 1});
  return detail::make_dag(n, std::move(edges), std::vector<Cost>(n, 1));
}

InterDep identity_f(Index n) {
  InterDep f;
  f.nrows = f.ncols = n;
  f.rowptr.resize(n + 1);
  f.colidx.resize(n);
  for (Index i = 0; i <= n; ++i)
    f.rowptr[i] = i;
  for (Index i = 0; i < n; ++i)
    f.colidx[i] = i;
  return f;
}

} // namespace

TEST_CASE("choose_head") {
  DepDag with_edges = chain(3);
  DepDag edgeless = detail::edgeless_dag(3, std::vector<Cost>(3, 1));
  REQUIRE(choose_head(with_edges, with_edges) == 2);
  REQUIRE(choose_head(edgeless, with_edges) == 2);
  REQUIRE(choose_head(with_edges, edgeless) == 1);
  REQUIRE(choose_head(edgeless, edgeless) == 1);
}

TEST_CASE("fused partitioning reproduces the reference example") {
  KernelState st = fixture11::state();
  DepDag g1 = build_g1(st);
  DepDag g2 = build_g2(st);
  InterDep f = inter_dag(st);
  const double reuse = compute_reuse(st);
  REQUIRE(reuse < 1.0);

  FusedPartitioning V = msp(g1, g2, f, 3, reuse);
  REQUIRE(V.fusion);
  REQUIRE_FALSE(V.interleaved);
  REQUIRE(V.b() == 2);

  REQUIRE(V.spartitions[0].size() == 3);
  using E = std::vector<std::pair<int, Index>>;
  REQUIRE(tags(V.spartitions[0][0]) ==
          E{{1, 0}, {1, 1}, {1, 2}, {1, 3}});
  REQUIRE(tags(V.spartitions[0][1]) == E{{1, 4}, {1, 5}, {2, 4}, {2, 5}});
  REQUIRE(tags(V.spartitions[0][2]) == E{{1, 6}, {1, 7}, {1, 8}, {2, 8}});
  REQUIRE(tags(V.spartitions[1][0]) == E{{1, 9}, {1, 10}, {2, 9}, {2, 10}});

  REQUIRE(validate_fused_partitioning(V, g1, g2, f).empty());

  // deterministic across runs
  FusedPartitioning V2 = msp(g1, g2, f, 3, reuse);
  REQUIRE(V2.spartitions.size() == V.spartitions.size());
  for (Index s = 0; s < V.b(); ++s) {
    REQUIRE(V2.spartitions[s].size() == V.spartitions[s].size());
    for (std::size_t w = 0; w < V.spartitions[s].size(); ++w)
      REQUIRE(tags(V2.spartitions[s][w]) == tags(V.spartitions[s][w]));
  }

  // replay equivalence against the sequential composition
  KernelState ref = fixture11::state();
  run_sequential_reference(ref);
  const auto want = collect_outputs(ref);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<std::string> dupbad;
    replay_schedule(V, st, seed, true, &dupbad);
    REQUIRE(dupbad.empty());
    REQUIRE(oracles::rel_l2(collect_outputs(st), want) < 1e-12);
  }
}

TEST_CASE("degenerate inputs") {
  SECTION("both DAGs edgeless with empty F") {
    DepDag g1 = detail::edgeless_dag(8, std::vector<Cost>(8, 1));
    DepDag g2 = detail::edgeless_dag(8, std::vector<Cost>(8, 1));
    InterDep f;
    f.nrows = f.ncols = 8;
    f.rowptr.assign(9, 0);
    FusedPartitioning V = msp(g1, g2, f, 4, 2.0);
    REQUIRE(V.fusion);
    REQUIRE(V.b() == 1);
    REQUIRE(V.pairs.empty());
    REQUIRE(validate_fused_partitioning(V, g1, g2, f).empty());
    // balanced w-partitions: every partition within one unit cost
    Cost mx = 0, mn = 1 << 20;
    for (const auto& w : V.spartitions[0]) {
      Cost c = static_cast<Cost>(w.size());
      mx = std::max(mx, c);
      mn = std::min(mn, c);
    }
    REQUIRE(mx - mn <= 2);
  }
  SECTION("two chains with identity F replay to the composition") {
    DepDag g1 = chain(3), g2 = chain(3);
    InterDep f = identity_f(3);
    FusedPartitioning V = msp(g1, g2, f, 2, 2.0);
    REQUIRE(V.fusion);
    REQUIRE(validate_fused_partitioning(V, g1, g2, f).empty());
  }
  SECTION("empty F with a chain head keeps schedules valid") {
    DepDag g1 = detail::edgeless_dag(6, std::vector<Cost>(6, 1));
    DepDag g2 = chain(6);
    InterDep f;
    f.nrows = f.ncols = 6;
    f.rowptr.assign(7, 0);
    FusedPartitioning V = msp(g1, g2, f, 2, 0.5);
    REQUIRE(V.fusion);
    REQUIRE(validate_fused_partitioning(V, g1, g2, f).empty());
  }
}

TEST_CASE("backward pairing replicates shared dependencies") {
  // two independent head chains both depending on kernel-1 vertex 0
  DepDag g2 = detail::make_dag(
      2, {}, std::vector<Cost>(2, 1)); // two independent head vertices
  // give G2 edges so it becomes the head DAG: 2 chains of 2
  DepDag g2e = detail::make_dag(4, {{0, 1}, {2, 3}}, std::vector<Cost>(4, 1));
  DepDag g1 = detail::edgeless_dag(1, {1});
  InterDep f;
  f.nrows = 4;
  f.ncols = 1;
  f.rowptr = {0, 1, 1, 2, 2};
  f.colidx = {0, 0}; // iterations 0 and 2 read kernel-1 vertex 0
  FusedPartitioning V = msp(g1, g2e, f, 2, 2.0);
  REQUIRE(V.fusion);
  Index copies = 0;
  for (const auto& s : V.spartitions)
    for (const auto& w : s)
      for (const FusedEntry& e : w)
        if (e.tag == 1 && e.iter == 0) {
          ++copies;
          REQUIRE(e.dup);
        }
  REQUIRE(copies == 2);
  REQUIRE(validate_fused_partitioning(V, g1, g2e, f).empty());
  (void)g2;
}

TEST_CASE("redundancy guard disables fusion") {
  // dense F: every second-kernel iteration reads all of kernel 1; the head
  // window has three w-partitions, so pairing would triple kernel 1
  const Index n1 = 12, n2 = 6;
  DepDag g1 = detail::edgeless_dag(n1, std::vector<Cost>(n1, 1));
  DepDag g2 = detail::make_dag(n2, {{0, 1}, {2, 3}, {4, 5}},
                               std::vector<Cost>(n2, 1));
  InterDep f;
  f.nrows = n2;
  f.ncols = n1;
  f.rowptr.resize(n2 + 1);
  for (Index i = 0; i <= n2; ++i)
    f.rowptr[i] = i * n1;
  for (Index i = 0; i < n2; ++i)
    for (Index j = 0; j < n1; ++j)
      f.colidx.push_back(j);
  FusedPartitioning V = msp(g1, g2, f, 3, 2.0);
  // entries = |V2| + 3 * |V1| = 6 + 36 = 42 > 2 * (12 + 6) = 36
  REQUIRE_FALSE(V.fusion);
  REQUIRE(V.b() == 0);
  // a laxer threshold keeps fusion on
  FusedPartitioning V2 = msp(g1, g2, f, 3, 2.0, 3.0);
  REQUIRE(V2.fusion);
  REQUIRE(validate_fused_partitioning(V2, g1, g2, f).empty());
}

TEST_CASE("self contained pairs") {
  // the reference example's first pair
  std::vector<FusedEntry> H{{1, 0}, {1, 1}, {1, 2}, {1, 3}};
  std::vector<FusedEntry> T{{2, 0}, {2, 1}, {2, 2}, {2, 3}};
  KernelState st = fixture11::state();
  DepDag g1 = build_g1(st);
  DepDag g2 = build_g2(st);
  InterDep f = inter_dag(st);
  REQUIRE(self_contained_check(H, T, g1, g2, f));
  // drop one F-predecessor
  std::vector<FusedEntry> H_missing{{1, 0}, {1, 1}, {1, 2}};
  REQUIRE_FALSE(self_contained_check(H_missing, T, g1, g2, f));
  // empty pair
  REQUIRE(self_contained_check({}, {}, g1, g2, f));
}

TEST_CASE("merging reduces s-partitions and keeps entry count") {
  KernelState st = fixture11::state();
  DepDag g1 = build_g1(st);
  DepDag g2 = build_g2(st);
  InterDep f = inter_dag(st);
  FusedPartitioning V = msp(g1, g2, f, 3, 0.5);
  // without merging the tail product copy of {9,10} would need s-partition 3
  REQUIRE(V.b() == 2);
  REQUIRE(V.entry_count() == 22); // no replication on this fixture
}

TEST_CASE("packing") {
  SECTION("separated keeps kernel blocks") {
    KernelState st = fixture11::state();
    DepDag g1 = build_g1(st);
    DepDag g2 = build_g2(st);
    InterDep f = inter_dag(st);
    FusedPartitioning V = msp(g1, g2, f, 3, 0.5);
    for (const auto& s : V.spartitions)
      for (const auto& w : s) {
        bool seen2 = false;
        for (const FusedEntry& e : w) {
          if (e.tag == 2)
            seen2 = true;
          else
            REQUIRE_FALSE(seen2);
        }
      }
  }
  SECTION("interleaved puts consumers right after producers") {
    DepDag g1 = chain(3), g2 = chain(3);
    InterDep f = identity_f(3);
    FusedPartitioning V = msp(g1, g2, f, 1, 2.0);
    REQUIRE(V.fusion);
    REQUIRE(V.interleaved);
    REQUIRE(V.b() == 1);
    REQUIRE(V.spartitions[0].size() == 1);
    using E = std::vector<std::pair<int, Index>>;
    REQUIRE(tags(V.spartitions[0][0]) ==
            E{{1, 0}, {2, 0}, {1, 1}, {2, 1}, {1, 2}, {2, 2}});
    REQUIRE(validate_fused_partitioning(V, g1, g2, f).empty());
  }
  SECTION("kernel-1-only partition identical under both modes") {
    DepDag g1 = chain(4);
    DepDag g2 = detail::edgeless_dag(4, std::vector<Cost>(4, 1));
    InterDep f;
    f.nrows = f.ncols = 4;
    f.rowptr.assign(5, 0);
    FusedPartitioning sep = msp(g1, g2, f, 1, 0.5);
    FusedPartitioning inter = msp(g1, g2, f, 1, 2.0);
    // first kernel chain lands alone in partitions; orders agree
    for (Index s = 0; s < std::min(sep.b(), inter.b()); ++s)
      for (std::size_t w = 0; w < sep.spartitions[s].size(); ++w) {
        const auto& a = sep.spartitions[s][w];
        const auto& c = inter.spartitions[s][w];
        bool k1only = true;
        for (const FusedEntry& e : a)
          k1only &= e.tag == 1;
        if (k1only)
          REQUIRE(tags(a) == tags(c));
      }
  }
}

TEST_CASE("balance property after slack assignment") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    CscMatrix M = gen_banded_spd(24, 3, seed);
    for (int combo = 1; combo <= 7; ++combo) {
      KernelState st = make_state(combo, M, seed);
      DepDag g1 = build_g1(st);
      DepDag g2 = build_g2(st);
      InterDep f = inter_dag(st);
      const double reuse = compute_reuse(st);
      FusedPartitioning V = msp(g1, g2, f, 4, reuse);
      if (!V.fusion)
        continue;
      REQUIRE(validate_fused_partitioning(V, g1, g2, f).empty());
      // every w-partition is within eps of its s-partition's max, or no
      // eligible slack group could have filled the gap
      for (Index s = 0; s < V.b(); ++s) {
        std::vector<Cost> costs;
        for (const auto& w : V.spartitions[s]) {
          Cost c = 0;
          for (const FusedEntry& e : w)
            c += e.tag == 1 ? g1.cost[e.iter] : g2.cost[e.iter];
          costs.push_back(c);
        }
        const Cost mx = *std::max_element(costs.begin(), costs.end());
        for (Cost c : costs) {
          const double gap = static_cast<double>(mx - c);
          if (gap <= V.eps)
            continue;
          // eligible leftover slack for this s-partition: groups placed in a
          // later s-partition whose range strictly admits this level and
          // whose cost fits the gap
          const Index lv = V.s_level[s];
          std::map<Index, Cost> group_cost;
          std::map<Index, Index> group_minlevel, group_maxbound,
              group_placed_s;
          for (const SlackRecord& r : V.slack) {
            group_cost[r.group] += r.cost;
            const auto it = group_minlevel.find(r.group);
            if (it == group_minlevel.end()) {
              group_minlevel[r.group] = r.level;
              group_maxbound[r.group] = r.level + r.sn;
              group_placed_s[r.group] = r.placed_s;
            } else {
              group_minlevel[r.group] = std::max(it->second, r.level);
              group_maxbound[r.group] =
                  std::min(group_maxbound[r.group], r.level + r.sn);
            }
          }
          for (const auto& [gid, gc] : group_cost) {
            const bool strictly_admits = group_minlevel[gid] < lv &&
                                         lv < group_maxbound[gid];
            if (!strictly_admits || gc > mx - c)
              continue;
            // such a group must not have been pushed past this s-partition
            REQUIRE(group_placed_s[gid] <= s);
          }
        }
      }
    }
  }
}

TEST_CASE("schedule json round trip") {
  KernelState st = fixture11::state();
  DepDag g1 = build_g1(st);
  DepDag g2 = build_g2(st);
  InterDep f = inter_dag(st);
  FusedPartitioning V = msp(g1, g2, f, 3, 0.5);
  nlohmann::json j = schedule_to_json(V, g1, g2);
  FusedPartitioning W = schedule_from_json(j);
  REQUIRE(W.b() == V.b());
  REQUIRE(W.entry_count() == V.entry_count());
  REQUIRE(validate_fused_partitioning(W, g1, g2, f).empty());
  // corrupt the order inside a partition: checker reports a violation
  nlohmann::json jbad = j;
  auto& w0 = jbad["spartitions"][0][1];
  std::swap(w0[0], w0[2]); // put a consumer before its producer
  FusedPartitioning Wbad = schedule_from_json(jbad);
  REQUIRE_FALSE(validate_fused_partitioning(Wbad, g1, g2, f).empty());
  // drop an entry: coverage violation
  nlohmann::json jmiss = j;
  jmiss["spartitions"][0][0].erase(0);
  FusedPartitioning Wmiss = schedule_from_json(jmiss);
  REQUIRE_FALSE(validate_fused_partitioning(Wmiss, g1, g2, f).empty());
}

TEST_CASE("master replay property across combinations") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    CscMatrix M = gen_banded_spd(16, 3, seed * 7);
    for (int combo = 1; combo <= 7; ++combo) {
      KernelState ref = make_state(combo, M, seed);
      run_sequential_reference(ref);
      const auto want = collect_outputs(ref);
      KernelState st = make_state(combo, M, seed);
      DepDag g1 = build_g1(st);
      DepDag g2 = build_g2(st);
      InterDep f = inter_dag(st);
      const double reuse = compute_reuse(st);
      for (Index r : {1, 2, 4}) {
        FusedPartitioning V = msp(g1, g2, f, r, reuse);
        REQUIRE(V.fusion);
        REQUIRE(validate_fused_partitioning(V, g1, g2, f).empty());
        for (std::uint64_t rs = 0; rs < 20; ++rs) {
          std::vector<std::string> dupbad;
          replay_schedule(V, st, rs, true, &dupbad);
          REQUIRE(dupbad.empty());
          REQUIRE(oracles::rel_l2(collect_outputs(st), want) < 1e-10);
        }
      }
    }
  }
}
