#ifndef SPARSEFUSE_EXECUTOR_HPP
#define SPARSEFUSE_EXECUTOR_HPP

#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "dag.hpp"
#include "kernels.hpp"
#include "lbc.hpp"
#include "msp.hpp"
#include "types.hpp"

namespace sparsefuse {

namespace detail {

inline void cpu_pause() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_ia32_pause();
#else
  std::this_thread::yield();
#endif
}

// Sense-reversing barrier. Spins while the workers fit the machine; when the
// run is oversubscribed it parks on the generation word almost immediately so
// waiting threads yield their core to the stragglers.
class SpinBarrier {
public:
  explicit SpinBarrier(int n)
      : nthreads_(n), count_(n), generation_(0),
        spin_limit_(
            n <= static_cast<int>(std::thread::hardware_concurrency()) ? 8192
                                                                       : 64) {}

  void arrive_and_wait() {
    const unsigned gen = generation_.load(std::memory_order_acquire);
    if (count_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
      count_.store(nthreads_, std::memory_order_relaxed);
      generation_.fetch_add(1, std::memory_order_release);
      generation_.notify_all();
      return;
    }
    int spins = 0;
    while (generation_.load(std::memory_order_acquire) == gen) {
      if (spins < spin_limit_) {
        ++spins;
        cpu_pause();
      } else {
        generation_.wait(gen, std::memory_order_acquire);
      }
    }
  }

private:
  int nthreads_;
  std::atomic<int> count_;
  std::atomic<unsigned> generation_;
  int spin_limit_;
};

inline std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

} // namespace detail

// Reusable per-thread scratch; passing one across repeated executions avoids
// re-faulting the factorization workspaces on every run.
struct ScratchPool {
  std::vector<IterScratch> per_thread;
};

struct ExecStats {
  std::int64_t wall_ns = 0;
  Index barriers = 0;
  std::vector<std::vector<std::int64_t>> busy_ns; // [s-partition][thread]
  std::vector<Cost> max_wcost, min_wcost;         // per s-partition

  // Portable load-imbalance proxy: per-s-partition (max thread busy - mean
  // thread busy), summed and normalized by wall time.
  double imbalance() const {
    if (wall_ns <= 0)
      return 0.0;
    double acc = 0.0;
    for (const auto& row : busy_ns) {
      if (row.empty())
        continue;
      std::int64_t mx = 0, sum = 0;
      for (std::int64_t v : row) {
        mx = std::max(mx, v);
        sum += v;
      }
      acc += static_cast<double>(mx) -
             static_cast<double>(sum) / static_cast<double>(row.size());
    }
    return acc / static_cast<double>(wall_ns);
  }
};

// One kernel under its own schedule: s-partitions of independent w-partition
// ranges over a flat iteration array.
struct KernelSchedule {
  struct WRange {
    Index begin, end;
    Cost cost;
  };
  std::vector<Index> iters;
  std::vector<std::vector<WRange>> sparts;

  Index nspartitions() const { return static_cast<Index>(sparts.size()); }
};

struct UnfusedSchedule {
  KernelSchedule k1, k2;
};

struct WavefrontSchedule {
  std::vector<FusedEntry> entries;          // flat, level by level
  std::vector<std::pair<Index, Index>> levels; // [begin, end) per level
};

// Fused executor input: flattened fused partitioning. In the separated
// variant each w-partition range is a kernel-1 block followed by a kernel-2
// block and `split` marks the boundary, so no per-entry tag dispatch is
// needed. When fusion was abandoned, `fallback` carries the unfused
// schedules to run instead.
struct FusedSchedule {
  bool fusion = true;
  bool interleaved = false;
  struct WRange {
    Index begin, end, split;
    Cost cost;
  };
  std::vector<FusedEntry> entries;
  std::vector<std::vector<WRange>> sparts;
  std::optional<UnfusedSchedule> fallback;

  Index nspartitions() const { return static_cast<Index>(sparts.size()); }
};

// ---------------------------------------------------------------------------
// Schedule construction
// ---------------------------------------------------------------------------

// LBC schedule for one kernel; edgeless DAGs get a single s-partition of up
// to r cost-balanced contiguous chunks.
inline KernelSchedule build_kernel_schedule(const DepDag& g, Index r) {
  KernelSchedule ks;
  if (g.nvert == 0)
    return ks;
  if (g.nedges() == 0) {
    ks.iters.resize(g.nvert);
    for (Index v = 0; v < g.nvert; ++v)
      ks.iters[v] = v;
    const Cost total = g.total_cost();
    const Index chunks = std::min<Index>(r, g.nvert);
    std::vector<KernelSchedule::WRange> ws;
    Index begin = 0;
    Cost cum = 0, acc = 0;
    Index made = 0;
    for (Index v = 0; v < g.nvert; ++v) {
      cum += g.cost[v];
      acc += g.cost[v];
      if (made < chunks - 1 && cum * chunks >= total * (made + 1)) {
        ws.push_back({begin, v + 1, acc});
        begin = v + 1;
        acc = 0;
        ++made;
      }
    }
    if (begin < g.nvert)
      ws.push_back({begin, g.nvert, acc});
    ks.sparts.push_back(std::move(ws));
    return ks;
  }
  const HPartitioning h = lbc_partition(g, r);
  for (const auto& sp : h.H) {
    std::vector<KernelSchedule::WRange> ws;
    for (const auto& wp : sp) {
      const Index begin = static_cast<Index>(ks.iters.size());
      Cost c = 0;
      for (Index v : wp) {
        ks.iters.push_back(v);
        c += g.cost[v];
      }
      ws.push_back({begin, static_cast<Index>(ks.iters.size()), c});
    }
    ks.sparts.push_back(std::move(ws));
  }
  return ks;
}

inline UnfusedSchedule build_unfused_schedule(const DepDag& g1,
                                              const DepDag& g2, Index r) {
  return {build_kernel_schedule(g1, r), build_kernel_schedule(g2, r)};
}

inline WavefrontSchedule build_wavefront_schedule(const DepDag& g1,
                                                  const DepDag& g2,
                                                  const InterDep& f) {
  const DepDag joint = joint_dag(g1, g2, f);
  const LevelInfo li = level_info(joint);
  WavefrontSchedule ws;
  std::vector<std::vector<Index>> levels(li.critical_path + 1);
  for (Index v = 0; v < joint.nvert; ++v)
    levels[li.level[v]].push_back(v);
  for (Index l = 1; l <= li.critical_path; ++l) {
    const Index begin = static_cast<Index>(ws.entries.size());
    for (Index v : levels[l]) {
      if (v < g1.nvert)
        ws.entries.push_back({1, v, false});
      else
        ws.entries.push_back({2, v - g1.nvert, false});
    }
    ws.levels.push_back({begin, static_cast<Index>(ws.entries.size())});
  }
  return ws;
}

// Flattens a fused partitioning for execution. The variant is separated iff
// the reuse ratio is below one; the fused partitioning must have been packed
// with the same ratio. A fusion=false partitioning compiles to the unfused
// fallback for `r` threads.
inline FusedSchedule compile_schedule(const FusedPartitioning& V,
                                      double reuse_ratio, const DepDag& g1,
                                      const DepDag& g2, Index r) {
  FusedSchedule fs;
  fs.fusion = V.fusion;
  fs.interleaved = reuse_ratio >= 1.0;
  if (!V.fusion) {
    fs.fallback = build_unfused_schedule(g1, g2, r);
    return fs;
  }
  for (const auto& sp : V.spartitions) {
    std::vector<FusedSchedule::WRange> ws;
    for (const auto& wp : sp) {
      const Index begin = static_cast<Index>(fs.entries.size());
      Cost c = 0;
      Index split = begin;
      for (const FusedEntry& e : wp) {
        fs.entries.push_back(e);
        c += e.tag == 1 ? g1.cost[e.iter] : g2.cost[e.iter];
      }
      if (!fs.interleaved) {
        split = begin;
        while (split < static_cast<Index>(fs.entries.size()) &&
               fs.entries[split].tag == 1)
          ++split;
      } else {
        split = static_cast<Index>(fs.entries.size());
      }
      ws.push_back({begin, static_cast<Index>(fs.entries.size()), split, c});
    }
    fs.sparts.push_back(std::move(ws));
  }
  return fs;
}

// ---------------------------------------------------------------------------
// Executors
// ---------------------------------------------------------------------------

namespace detail {

struct ErrorSlot {
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex mu;

  void capture() {
    std::lock_guard<std::mutex> lock(mu);
    if (!first)
      first = std::current_exception();
    failed.store(true, std::memory_order_release);
  }
  void rethrow_if_failed() {
    if (failed.load(std::memory_order_acquire) && first)
      std::rethrow_exception(first);
  }
};

// Runs `body(tid)` on nthreads workers (the caller participates) and returns
// the wall time of the parallel region.
template <typename Body>
inline std::int64_t parallel_region(Index nthreads, Body&& body) {
  const std::int64_t t0 = now_ns();
  if (nthreads <= 1) {
    body(0);
    return now_ns() - t0;
  }
  std::vector<std::thread> pool;
  pool.reserve(nthreads - 1);
  for (Index t = 1; t < nthreads; ++t)
    pool.emplace_back([&body, t] { body(static_cast<int>(t)); });
  body(0);
  for (auto& th : pool)
    th.join();
  return now_ns() - t0;
}

} // namespace detail

// Sequential baseline: kernel 1 then kernel 2 with the reference bodies.
inline ExecStats execute_sequential(KernelState& st) {
  ExecStats stats;
  const std::int64_t t0 = detail::now_ns();
  run_sequential_reference(st);
  stats.wall_ns = detail::now_ns() - t0;
  stats.barriers = 0;
  stats.busy_ns = {{stats.wall_ns}};
  return stats;
}

inline ExecStats execute_unfused(const UnfusedSchedule& us, KernelState& st,
                                 Index nthreads, ScratchPool* pool = nullptr) {
  reset(st);
  ExecStats stats;
  const Index b1 = us.k1.nspartitions();
  const Index b2 = us.k2.nspartitions();
  stats.barriers = std::max<Index>(0, b1 + b2 - 1);
  const Index phases = b1 + b2;
  stats.busy_ns.assign(phases, std::vector<std::int64_t>(nthreads, 0));
  for (const auto* ks : {&us.k1, &us.k2})
    for (const auto& sp : ks->sparts) {
      Cost mx = 0, mn = sp.empty() ? 0 : sp.front().cost;
      for (const auto& w : sp) {
        mx = std::max(mx, w.cost);
        mn = std::min(mn, w.cost);
      }
      stats.max_wcost.push_back(mx);
      stats.min_wcost.push_back(mn);
    }
  std::vector<std::atomic<Index>> claims(phases);
  for (auto& c : claims)
    c.store(0, std::memory_order_relaxed);
  ScratchPool local_pool;
  ScratchPool& sp_pool = pool ? *pool : local_pool;
  if (sp_pool.per_thread.size() < static_cast<std::size_t>(nthreads))
    sp_pool.per_thread.resize(nthreads);
  detail::SpinBarrier bar(static_cast<int>(nthreads));
  detail::ErrorSlot err;
  auto body = [&](int tid) {
    IterScratch& scratch = sp_pool.per_thread[tid];
    scratch.ensure(st.n);
    Index phase = 0;
    for (int which = 1; which <= 2; ++which) {
      const KernelSchedule& ks = which == 1 ? us.k1 : us.k2;
      for (const auto& sp : ks.sparts) {
        if (!err.failed.load(std::memory_order_acquire)) {
          while (true) {
            const Index w = claims[phase].fetch_add(1);
            if (w >= static_cast<Index>(sp.size()))
              break;
            const std::int64_t b0 = detail::now_ns();
            try {
              for (Index p = sp[w].begin; p < sp[w].end; ++p)
                run_iteration(which, ks.iters[p], st, scratch);
            } catch (...) {
              err.capture();
            }
            stats.busy_ns[phase][tid] += detail::now_ns() - b0;
          }
        }
        bar.arrive_and_wait();
        ++phase;
      }
    }
  };
  stats.wall_ns = detail::parallel_region(nthreads, body);
  err.rethrow_if_failed();
  return stats;
}

inline ExecStats execute_unfused(const DepDag& g1, const DepDag& g2,
                                 KernelState& st, Index nthreads) {
  const UnfusedSchedule us = build_unfused_schedule(g1, g2, nthreads);
  return execute_unfused(us, st, nthreads);
}

// Fused executor: sequential loop over s-partitions; w-partitions inside an
// s-partition are claimed from a shared counter and run without further
// synchronization; a barrier separates s-partitions. Falls back to the
// unfused schedules when fusion was abandoned.
inline ExecStats execute_fused(const FusedSchedule& sched, KernelState& st,
                               Index nthreads) {
  if (!sched.fusion) {
    if (!sched.fallback)
      throw std::logic_error("fusion disabled but no fallback compiled");
    return execute_unfused(*sched.fallback, st, nthreads);
  }
  reset(st);
  ExecStats stats;
  const Index nsp = sched.nspartitions();
  stats.barriers = std::max<Index>(0, nsp - 1);
  stats.busy_ns.assign(nsp, std::vector<std::int64_t>(nthreads, 0));
  for (const auto& sp : sched.sparts) {
    Cost mx = 0, mn = sp.empty() ? 0 : sp.front().cost;
    for (const auto& w : sp) {
      mx = std::max(mx, w.cost);
      mn = std::min(mn, w.cost);
    }
    stats.max_wcost.push_back(mx);
    stats.min_wcost.push_back(mn);
  }
  std::vector<std::atomic<Index>> claims(nsp);
  for (auto& c : claims)
    c.store(0, std::memory_order_relaxed);
  detail::SpinBarrier bar(static_cast<int>(nthreads));
  detail::ErrorSlot err;
  auto body = [&](int tid) {
    IterScratch scratch;
    scratch.ensure(st.n);
    for (Index s = 0; s < nsp; ++s) {
      const auto& sp = sched.sparts[s];
      if (!err.failed.load(std::memory_order_acquire)) {
        while (true) {
          const Index w = claims[s].fetch_add(1);
          if (w >= static_cast<Index>(sp.size()))
            break;
          const auto& wr = sp[w];
          const std::int64_t b0 = detail::now_ns();
          try {
            if (sched.interleaved) {
              for (Index p = wr.begin; p < wr.end; ++p) {
                const FusedEntry& e = sched.entries[p];
                run_iteration(e.tag, e.iter, st, scratch, e.dup);
              }
            } else {
              for (Index p = wr.begin; p < wr.split; ++p)
                run_iteration(1, sched.entries[p].iter, st, scratch,
                              sched.entries[p].dup);
              for (Index p = wr.split; p < wr.end; ++p)
                run_iteration(2, sched.entries[p].iter, st, scratch,
                              sched.entries[p].dup);
            }
          } catch (...) {
            err.capture();
          }
          stats.busy_ns[s][tid] += detail::now_ns() - b0;
        }
      }
      bar.arrive_and_wait();
      if (err.failed.load(std::memory_order_acquire))
        break;
    }
  };
  stats.wall_ns = detail::parallel_region(nthreads, body);
  err.rethrow_if_failed();
  return stats;
}

// Joint-DAG wavefront executor: one barrier per wavefront, each level split
// into contiguous per-thread slices.
inline ExecStats execute_joint_wavefront(const WavefrontSchedule& ws,
                                         KernelState& st, Index nthreads) {
  reset(st);
  ExecStats stats;
  const Index nlev = static_cast<Index>(ws.levels.size());
  stats.barriers = std::max<Index>(0, nlev - 1);
  stats.busy_ns.assign(nlev, std::vector<std::int64_t>(nthreads, 0));
  detail::SpinBarrier bar(static_cast<int>(nthreads));
  detail::ErrorSlot err;
  auto body = [&](int tid) {
    IterScratch scratch;
    scratch.ensure(st.n);
    for (Index l = 0; l < nlev; ++l) {
      if (!err.failed.load(std::memory_order_acquire)) {
        const auto [begin, end] = ws.levels[l];
        const Index len = end - begin;
        const Index lo = begin + tid * len / nthreads;
        const Index hi = begin + (tid + 1) * len / nthreads;
        const std::int64_t b0 = detail::now_ns();
        try {
          for (Index p = lo; p < hi; ++p)
            run_iteration(ws.entries[p].tag, ws.entries[p].iter, st, scratch);
        } catch (...) {
          err.capture();
        }
        stats.busy_ns[l][tid] += detail::now_ns() - b0;
      }
      bar.arrive_and_wait();
      if (err.failed.load(std::memory_order_acquire))
        break;
    }
  };
  stats.wall_ns = detail::parallel_region(nthreads, body);
  err.rethrow_if_failed();
  return stats;
}

inline ExecStats execute_joint_wavefront(const DepDag& g1, const DepDag& g2,
                                         const InterDep& f, KernelState& st,
                                         Index nthreads) {
  const WavefrontSchedule ws = build_wavefront_schedule(g1, g2, f);
  return execute_joint_wavefront(ws, st, nthreads);
}

// ---------------------------------------------------------------------------
// Randomized replay
// ---------------------------------------------------------------------------

// Executes a fused partitioning on one thread, interleaving the w-partitions
// of each s-partition in a seeded random order while preserving each
// partition's internal order. With check_duplicates set, verifies that
// replicated kernel-1 entries store bit-identical values; violations are
// appended to *out.
inline void replay_schedule(const FusedPartitioning& V, KernelState& st,
                            std::uint64_t seed, bool check_duplicates = false,
                            std::vector<std::string>* out = nullptr) {
  reset(st);
  IterScratch scratch;
  scratch.ensure(st.n);
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> dup_values(check_duplicates ? V.n1 : 0);
  for (const auto& sp : V.spartitions) {
    std::vector<std::size_t> cursor(sp.size(), 0);
    std::vector<std::size_t> open;
    for (std::size_t w = 0; w < sp.size(); ++w)
      if (!sp[w].empty())
        open.push_back(w);
    while (!open.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
      const std::size_t oi = pick(rng);
      const std::size_t w = open[oi];
      const FusedEntry& e = sp[w][cursor[w]++];
      run_iteration(e.tag, e.iter, st, scratch, e.dup);
      if (check_duplicates && e.tag == 1 && e.dup) {
        std::vector<double> vals;
        append_kernel1_outputs(st, e.iter, vals);
        auto& rec = dup_values[e.iter];
        if (rec.empty())
          rec = vals;
        else if (rec != vals && out)
          out->push_back("duplicate of kernel-1 iteration " +
                         std::to_string(e.iter) +
                         " stored different values");
      }
      if (cursor[w] == sp[w].size())
        open.erase(open.begin() + static_cast<std::ptrdiff_t>(oi));
    }
  }
}

} // namespace sparsefuse

#endif
