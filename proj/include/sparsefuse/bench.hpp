#ifndef SPARSEFUSE_BENCH_HPP
#define SPARSEFUSE_BENCH_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "executor.hpp"
#include "kernels.hpp"
#include "matrix.hpp"
#include "types.hpp"

namespace sparsefuse {

struct NerResult {
  bool amortizable = true;
  double runs = 0.0;
};

// Number of executor runs needed to amortize the inspector:
// inspector / (baseline - executor). Unamortizable when the executor is not
// faster than the baseline.
inline NerResult compute_ner(double inspector_t, double baseline_t,
                             double executor_t) {
  if (inspector_t <= 0.0)
    return {true, 0.0};
  if (executor_t >= baseline_t)
    return {false, 0.0};
  return {true, inspector_t / (baseline_t - executor_t)};
}

struct BenchRecord {
  int combo_id = 0;
  std::string matrix;
  Index n = 0;
  Cost nnz = 0;
  Index nthreads = 1;
  std::string executor; // sequential | fused | unfused | wavefront
  std::string pack;     // separated | interleaved | -
  bool fusion = true;
  double inspector_s = 0.0;
  double executor_s = 0.0;
  double baseline_s = 0.0;
  double speedup = 0.0;
  bool ner_amortizable = true;
  double ner = 0.0;
  Index barriers = 0;
  double imbalance = 0.0;
  bool valid = true;
  std::string note;
};

struct SuiteConfig {
  std::vector<std::pair<std::string, CscMatrix>> matrices;
  std::vector<int> combos{1, 2, 3, 4, 5, 6, 7};
  std::vector<Index> threads{1, 4};
  int warmups = 2;
  int repeats = 5;
  std::uint64_t seed = 7;
  double tolerance = 1e-10;
};

namespace detail {

inline double median_seconds(std::vector<std::int64_t> ns) {
  std::sort(ns.begin(), ns.end());
  const std::size_t k = ns.size();
  double mid;
  if (k % 2 == 1)
    mid = static_cast<double>(ns[k / 2]);
  else
    mid = 0.5 * (static_cast<double>(ns[k / 2 - 1]) +
                 static_cast<double>(ns[k / 2]));
  return mid * 1e-9;
}

inline double rel_l2_diff(const std::vector<double>& a,
                          const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    num += d * d;
    den += b[i] * b[i];
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

} // namespace detail

// Runs the benchmark grid: every (matrix, combo, thread count, executor)
// cell is validated against the sequential composed reference before it is
// timed; cells that fail validation carry no timings.
inline std::vector<BenchRecord> run_suite(const SuiteConfig& cfg) {
  std::vector<BenchRecord> records;
  for (const auto& [name, M] : cfg.matrices) {
    for (int combo : cfg.combos) {
      BenchRecord base_rec;
      base_rec.combo_id = combo;
      base_rec.matrix = name;
      base_rec.n = M.nrows;
      base_rec.nnz = M.nnz();
      KernelState st;
      DepDag g1, g2;
      InterDep f;
      double reuse = 0.0;
      try {
        st = make_state(combo, M, cfg.seed);
        g1 = build_g1(st);
        g2 = build_g2(st);
        f = inter_dag(st);
        reuse = compute_reuse(st);
      } catch (const std::exception& e) {
        base_rec.valid = false;
        base_rec.note = e.what();
        records.push_back(base_rec);
        continue;
      }
      run_sequential_reference(st);
      const std::vector<double> want = collect_outputs(st);
      // baseline: median of sequential runs
      std::vector<std::int64_t> base_ns;
      for (int rep = 0; rep < cfg.warmups + cfg.repeats; ++rep) {
        const ExecStats s = execute_sequential(st);
        if (rep >= cfg.warmups)
          base_ns.push_back(s.wall_ns);
      }
      const double baseline_s = detail::median_seconds(base_ns);

      for (Index threads : cfg.threads) {
        // inspector work per executor
        std::int64_t insp_fused_ns = 0, insp_unfused_ns = 0, insp_wave_ns = 0;
        FusedPartitioning V;
        FusedSchedule fsched;
        {
          const std::int64_t t0 = detail::now_ns();
          V = msp(g1, g2, f, threads, reuse);
          fsched = compile_schedule(V, reuse, g1, g2, threads);
          insp_fused_ns = detail::now_ns() - t0;
        }
        UnfusedSchedule usched;
        {
          const std::int64_t t0 = detail::now_ns();
          usched = build_unfused_schedule(g1, g2, threads);
          insp_unfused_ns = detail::now_ns() - t0;
        }
        WavefrontSchedule wsched;
        {
          const std::int64_t t0 = detail::now_ns();
          wsched = build_wavefront_schedule(g1, g2, f);
          insp_wave_ns = detail::now_ns() - t0;
        }
        struct Cell {
          const char* name;
          double inspector_s;
        };
        const Cell cells[4] = {{"sequential", 0.0},
                               {"fused", insp_fused_ns * 1e-9},
                               {"unfused", insp_unfused_ns * 1e-9},
                               {"wavefront", insp_wave_ns * 1e-9}};
        for (const Cell& cell : cells) {
          BenchRecord rec = base_rec;
          rec.nthreads = threads;
          rec.executor = cell.name;
          rec.inspector_s = cell.inspector_s;
          rec.baseline_s = baseline_s;
          rec.fusion = V.fusion;
          rec.pack = std::string(cell.name) == "fused"
                         ? (V.fusion ? (V.interleaved ? "interleaved"
                                                      : "separated")
                                     : "-")
                         : "-";
          auto run_once = [&]() -> ExecStats {
            if (rec.executor == "sequential")
              return execute_sequential(st);
            if (rec.executor == "fused")
              return execute_fused(fsched, st, threads);
            if (rec.executor == "unfused")
              return execute_unfused(usched, st, threads);
            return execute_joint_wavefront(wsched, st, threads);
          };
          try {
            // validate before timing
            ExecStats first = run_once();
            const double err = detail::rel_l2_diff(collect_outputs(st), want);
            if (err > cfg.tolerance) {
              rec.valid = false;
              rec.note = "validation failed: rel err " + std::to_string(err);
              records.push_back(rec);
              continue;
            }
            rec.barriers = first.barriers;
            std::vector<std::int64_t> ns;
            double imb = 0.0;
            for (int rep = 0; rep < cfg.warmups + cfg.repeats; ++rep) {
              const ExecStats s = run_once();
              if (rep >= cfg.warmups) {
                ns.push_back(s.wall_ns);
                imb += s.imbalance();
              }
            }
            rec.executor_s = detail::median_seconds(ns);
            rec.imbalance = imb / cfg.repeats;
            rec.speedup = rec.executor_s > 0 ? baseline_s / rec.executor_s : 0;
            const NerResult nr =
                compute_ner(rec.inspector_s, baseline_s, rec.executor_s);
            rec.ner_amortizable = nr.amortizable;
            rec.ner = nr.runs;
          } catch (const std::exception& e) {
            rec.valid = false;
            rec.note = e.what();
          }
          records.push_back(rec);
        }
      }
    }
  }
  return records;
}

inline const char* kBenchCsvHeader =
    "combo,matrix,n,nnz,threads,executor,pack,fusion,inspector_s,executor_s,"
    "baseline_s,speedup,ner,barriers,imbalance,valid,note";

inline void emit_report_csv(const std::vector<BenchRecord>& records,
                            std::ostream& os) {
  os << kBenchCsvHeader << '\n';
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  for (const BenchRecord& r : records) {
    os << r.combo_id << ',' << r.matrix << ',' << r.n << ',' << r.nnz << ','
       << r.nthreads << ',' << r.executor << ',' << r.pack << ','
       << (r.fusion ? 1 : 0) << ',' << num(r.inspector_s) << ','
       << num(r.executor_s) << ',' << num(r.baseline_s) << ','
       << num(r.speedup) << ','
       << (r.ner_amortizable ? num(r.ner) : std::string("unamortizable"))
       << ',' << r.barriers << ',' << num(r.imbalance) << ','
       << (r.valid ? 1 : 0) << ',' << r.note << '\n';
  }
}

inline nlohmann::json to_json(const BenchRecord& r) {
  return nlohmann::json{{"combo", r.combo_id},
                        {"matrix", r.matrix},
                        {"n", r.n},
                        {"nnz", r.nnz},
                        {"threads", r.nthreads},
                        {"executor", r.executor},
                        {"pack", r.pack},
                        {"fusion", r.fusion},
                        {"inspector_s", r.inspector_s},
                        {"executor_s", r.executor_s},
                        {"baseline_s", r.baseline_s},
                        {"speedup", r.speedup},
                        {"ner_amortizable", r.ner_amortizable},
                        {"ner", r.ner},
                        {"barriers", r.barriers},
                        {"imbalance", r.imbalance},
                        {"valid", r.valid},
                        {"note", r.note}};
}

inline BenchRecord bench_record_from_json(const nlohmann::json& j) {
  BenchRecord r;
  r.combo_id = j.at("combo").get<int>();
  r.matrix = j.at("matrix").get<std::string>();
  r.n = j.at("n").get<Index>();
  r.nnz = j.at("nnz").get<Cost>();
  r.nthreads = j.at("threads").get<Index>();
  r.executor = j.at("executor").get<std::string>();
  r.pack = j.at("pack").get<std::string>();
  r.fusion = j.at("fusion").get<bool>();
  r.inspector_s = j.at("inspector_s").get<double>();
  r.executor_s = j.at("executor_s").get<double>();
  r.baseline_s = j.at("baseline_s").get<double>();
  r.speedup = j.at("speedup").get<double>();
  r.ner_amortizable = j.at("ner_amortizable").get<bool>();
  r.ner = j.at("ner").get<double>();
  r.barriers = j.at("barriers").get<Index>();
  r.imbalance = j.at("imbalance").get<double>();
  r.valid = j.at("valid").get<bool>();
  r.note = j.at("note").get<std::string>();
  return r;
}

inline void emit_report_json(const std::vector<BenchRecord>& records,
                             std::ostream& os) {
  nlohmann::json arr = nlohmann::json::array();
  for (const BenchRecord& r : records)
    arr.push_back(to_json(r));
  os << arr.dump(2) << '\n';
}

inline void emit_report(const std::vector<BenchRecord>& records,
                        const std::string& format, const std::string& path) {
  if (records.empty())
    throw std::invalid_argument("no records to emit");
  std::ofstream out(path);
  if (!out)
    throw ParseError("cannot open " + path + " for writing");
  if (format == "csv")
    emit_report_csv(records, out);
  else if (format == "json")
    emit_report_json(records, out);
  else
    throw std::invalid_argument("unknown report format: " + format);
}

} // namespace sparsefuse

#endif
