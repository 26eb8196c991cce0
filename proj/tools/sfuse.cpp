// sfuse: inspector-executor front end for fused sparse kernel combinations.
//
// Subcommands:
//   gen       write grid Laplacian / banded SPD fixtures as Matrix Market
//   fuse      build the fused schedule for one combination and time it
//   validate  run the schedule checker, randomized replay and oracle checks
//   bench     run the benchmark grid and emit a CSV/JSON report
//
// Exit codes: 0 success, 1 usage, 2 file/parse error, 3 numeric breakdown,
// 4 validation failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <sparsefuse/sparsefuse.hpp>

namespace {

using namespace sparsefuse;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFile = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitValidation = 4;

int parse_combo(const std::string& text) {
  if (const ComboSpec* c = combo_by_alias(text))
    return c->id;
  try {
    const int id = std::stoi(text);
    if (id >= 1 && id <= 7)
      return id;
  } catch (...) {
  }
  return -1;
}

std::vector<Index> parse_thread_list(const std::string& text) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty())
      out.push_back(static_cast<Index>(std::stoi(tok)));
  return out;
}

Index default_threads() {
  if (const char* env = std::getenv("SPARSEFUSE_THREADS")) {
    const int t = std::atoi(env);
    if (t >= 1)
      return static_cast<Index>(t);
  }
  return 1;
}

CscMatrix load_matrix(const std::string& path, const std::string& perm_path) {
  CscMatrix A = read_matrix_market(path);
  if (!perm_path.empty()) {
    const std::vector<Index> perm = read_permutation(perm_path, A.nrows);
    A = permute_symmetric(A, perm);
  }
  return A;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

double rel_l2(const std::vector<double>& got, const std::vector<double>& want) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += (got[i] - want[i]) * (got[i] - want[i]);
    den += want[i] * want[i];
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

struct FuseOptions {
  std::string matrix_path, perm_path, combo_text, variant = "auto";
  std::string dump_path;
  Index threads = 0;
  int repeats = 5;
  std::uint64_t seed = 7;
  double redundancy = 2.0;
};

int cmd_fuse(const FuseOptions& opt) {
  const int combo = parse_combo(opt.combo_text);
  if (combo < 0) {
    std::cerr << "unknown combination: " << opt.combo_text << "\n";
    return kExitUsage;
  }
  CscMatrix M;
  try {
    M = load_matrix(opt.matrix_path, opt.perm_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFile;
  }
  try {
    const Index threads = opt.threads > 0 ? opt.threads : default_threads();
    KernelState st = make_state(combo, M, opt.seed);
    const auto t0 = detail::now_ns();
    const DepDag g1 = build_g1(st);
    const DepDag g2 = build_g2(st);
    const InterDep f = inter_dag(st);
    const double reuse = compute_reuse(st);
    double effective = reuse;
    if (opt.variant == "separated")
      effective = 0.0;
    else if (opt.variant == "interleaved")
      effective = 1.0;
    FusedPartitioning V = msp(g1, g2, f, threads, effective, opt.redundancy);
    FusedSchedule sched = compile_schedule(V, effective, g1, g2, threads);
    const double inspector_s = (detail::now_ns() - t0) * 1e-9;

    if (V.fusion) {
      const auto violations = validate_fused_partitioning(V, g1, g2, f);
      if (!violations.empty()) {
        std::cerr << "schedule validation failed:\n";
        for (const auto& v : violations)
          std::cerr << "  " << v << "\n";
        return kExitValidation;
      }
    }
    if (!opt.dump_path.empty()) {
      std::ofstream out(opt.dump_path);
      if (!out) {
        std::cerr << "cannot open " << opt.dump_path << "\n";
        return kExitFile;
      }
      out << schedule_to_json(V, g1, g2).dump(2) << "\n";
    }

    // oracle check before timing
    KernelState ref = make_state(combo, M, opt.seed);
    run_sequential_reference(ref);
    const auto want = collect_outputs(ref);
    ExecStats first = execute_fused(sched, st, threads);
    const double err = rel_l2(collect_outputs(st), want);
    if (err > 1e-10) {
      std::cerr << "result validation failed: rel error " << err << "\n";
      return kExitValidation;
    }
    std::vector<double> exec_s, base_s;
    for (int rep = 0; rep < 2 + opt.repeats; ++rep) {
      const ExecStats es = execute_fused(sched, st, threads);
      const ExecStats bs = execute_sequential(st);
      if (rep >= 2) {
        exec_s.push_back(es.wall_ns * 1e-9);
        base_s.push_back(bs.wall_ns * 1e-9);
      }
    }
    const double executor_s = median_of(exec_s);
    const double baseline_s = median_of(base_s);
    const NerResult ner = compute_ner(inspector_s, baseline_s, executor_s);

    const ComboSpec& spec = combo_by_id(combo);
    std::cout << "combo " << combo << " (" << spec.alias
              << "): " << spec.operations << "\n";
    std::cout << "matrix: " << opt.matrix_path << "  n=" << M.nrows
              << "  nnz=" << M.nnz() << "\n";
    std::cout << "threads=" << threads << "  fusion="
              << (V.fusion ? "yes" : "no (fell back to unfused)")
              << "  variant="
              << (V.fusion ? (sched.interleaved ? "interleaved" : "separated")
                           : "unfused");
    if (opt.variant != "auto")
      std::cout << " (forced by --variant, computed reuse=" << reuse << ")";
    std::cout << "\n";
    std::cout << "reuse_ratio=" << reuse << "  s_partitions=" << V.b()
              << "  barriers=" << first.barriers << "\n";
    std::cout << "inspector_s=" << inspector_s << "  executor_s=" << executor_s
              << "  baseline_s=" << baseline_s
              << "  speedup=" << baseline_s / executor_s << "\n";
    if (ner.amortizable)
      std::cout << "ner=" << ner.runs << "\n";
    else
      std::cout << "ner=unamortizable\n";
    return kExitOk;
  } catch (const FactorizationError& e) {
    std::cerr << "numeric breakdown: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFile;
  }
}

struct ValidateOptions {
  std::string matrix_path, perm_path, combo_text = "all", schedule_path;
  Index threads = 0;
  int replays = 20;
  std::uint64_t seed = 7;
};

int cmd_validate(const ValidateOptions& opt) {
  CscMatrix M;
  try {
    M = load_matrix(opt.matrix_path, opt.perm_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFile;
  }
  std::vector<int> combos;
  if (opt.combo_text == "all")
    combos = {1, 2, 3, 4, 5, 6, 7};
  else {
    const int c = parse_combo(opt.combo_text);
    if (c < 0) {
      std::cerr << "unknown combination: " << opt.combo_text << "\n";
      return kExitUsage;
    }
    combos = {c};
  }
  const Index threads = opt.threads > 0 ? opt.threads : default_threads();
  bool all_ok = true;
  auto report = [&](const std::string& what, bool ok) {
    std::cout << (ok ? "PASS" : "FAIL") << "  " << what << "\n";
    all_ok &= ok;
  };
  for (int combo : combos) {
    const std::string tag = "combo " + std::to_string(combo);
    try {
      KernelState st = make_state(combo, M, opt.seed);
      const DepDag g1 = build_g1(st);
      const DepDag g2 = build_g2(st);
      const InterDep f = inter_dag(st);
      const double reuse = compute_reuse(st);
      FusedPartitioning V;
      if (!opt.schedule_path.empty()) {
        std::ifstream in(opt.schedule_path);
        if (!in) {
          std::cerr << "cannot open " << opt.schedule_path << "\n";
          return kExitFile;
        }
        nlohmann::json j;
        in >> j;
        V = schedule_from_json(j);
      } else {
        V = msp(g1, g2, f, threads, reuse);
      }
      if (!V.fusion) {
        report(tag + ": fusion disabled (redundancy guard); unfused fallback",
               true);
        continue;
      }
      const auto violations = validate_fused_partitioning(V, g1, g2, f);
      report(tag + ": schedule checker", violations.empty());
      for (const auto& v : violations)
        std::cout << "      " << v << "\n";
      if (!violations.empty())
        continue;

      KernelState ref = make_state(combo, M, opt.seed);
      run_sequential_reference(ref);
      const auto want = collect_outputs(ref);
      bool replay_ok = true, dup_ok = true, stable = true;
      std::vector<double> first_replay;
      for (int rs = 0; rs < opt.replays; ++rs) {
        std::vector<std::string> dupbad;
        replay_schedule(V, st, opt.seed + rs, true, &dupbad);
        dup_ok &= dupbad.empty();
        const auto got = collect_outputs(st);
        replay_ok &= rel_l2(got, want) <= 1e-10;
        if (rs == 0)
          first_replay = got;
        else
          stable &= rel_l2(got, first_replay) <= 1e-12;
      }
      report(tag + ": randomized replay vs sequential oracle", replay_ok);
      report(tag + ": replay interleaving stability", stable);
      report(tag + ": duplicate copies store identical values", dup_ok);

      FusedSchedule sched = compile_schedule(V, reuse, g1, g2, threads);
      execute_fused(sched, st, threads);
      report(tag + ": parallel fused executor vs oracle",
             rel_l2(collect_outputs(st), want) <= 1e-10);
    } catch (const FactorizationError& e) {
      std::cerr << "numeric breakdown: " << e.what() << "\n";
      return kExitNumeric;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitFile;
    }
  }
  return all_ok ? kExitOk : kExitValidation;
}

struct BenchOptions {
  std::string suite_dir;
  std::vector<std::string> matrices;
  std::string combos_text = "all";
  std::string threads_text = "1,4";
  std::string format = "csv";
  std::string out_path = "bench_report.csv";
  int repeats = 5, warmups = 2;
  std::uint64_t seed = 7;
};

int cmd_bench(const BenchOptions& opt) {
  SuiteConfig cfg;
  cfg.repeats = opt.repeats;
  cfg.warmups = opt.warmups;
  cfg.seed = opt.seed;
  std::vector<std::string> paths = opt.matrices;
  if (!opt.suite_dir.empty()) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(opt.suite_dir)) {
      std::cerr << "not a directory: " << opt.suite_dir << "\n";
      return kExitFile;
    }
    for (const auto& entry : fs::directory_iterator(opt.suite_dir))
      if (entry.path().extension() == ".mtx")
        paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
  }
  if (paths.empty()) {
    std::cerr << "no matrices to benchmark\n";
    return kExitFile;
  }
  try {
    for (const std::string& p : paths)
      cfg.matrices.push_back(
          {std::filesystem::path(p).stem().string(), read_matrix_market(p)});
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFile;
  }
  if (opt.combos_text != "all") {
    cfg.combos.clear();
    std::stringstream ss(opt.combos_text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const int c = parse_combo(tok);
      if (c < 0) {
        std::cerr << "unknown combination: " << tok << "\n";
        return kExitUsage;
      }
      cfg.combos.push_back(c);
    }
  }
  cfg.threads = parse_thread_list(opt.threads_text);
  if (cfg.threads.empty()) {
    std::cerr << "empty thread list\n";
    return kExitUsage;
  }
  try {
    const std::vector<BenchRecord> records = run_suite(cfg);
    emit_report(records, opt.format, opt.out_path);
    std::size_t invalid = 0;
    for (const BenchRecord& r : records)
      invalid += r.valid ? 0 : 1;
    std::cout << records.size() << " records written to " << opt.out_path;
    if (invalid)
      std::cout << " (" << invalid << " failed validation)";
    std::cout << "\n";
    return invalid == 0 ? kExitOk : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFile;
  }
}

struct GenOptions {
  Index laplacian = 0;
  Index banded = 0;
  Index dense = 0;
  Index bandwidth = 3;
  std::uint64_t seed = 7;
  std::string out_path;
};

int cmd_gen(const GenOptions& opt) {
  try {
    CscMatrix A;
    if (opt.laplacian > 0)
      A = gen_grid_laplacian(opt.laplacian);
    else if (opt.banded > 0)
      A = gen_banded_spd(opt.banded, opt.bandwidth, opt.seed);
    else if (opt.dense > 0)
      A = gen_dense_spd(opt.dense, opt.seed);
    else {
      std::cerr << "one of --laplacian, --banded, --dense is required\n";
      return kExitUsage;
    }
    write_matrix_market(A, opt.out_path);
    std::cout << "wrote " << A.nrows << "x" << A.ncols << " matrix with "
              << A.nnz() << " nonzeros to " << opt.out_path << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFile;
  }
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"fused sparse-kernel scheduling toolkit"};
  app.require_subcommand(1);

  FuseOptions fuse_opt;
  CLI::App* fuse = app.add_subcommand("fuse", "fuse one kernel combination");
  fuse->add_option("--matrix", fuse_opt.matrix_path, "Matrix Market file")
      ->required();
  fuse->add_option("--combo", fuse_opt.combo_text, "combination id or alias")
      ->required();
  fuse->add_option("--threads", fuse_opt.threads, "worker threads");
  fuse->add_option("--variant", fuse_opt.variant,
                   "auto | separated | interleaved")
      ->check(CLI::IsMember({"auto", "separated", "interleaved"}));
  fuse->add_option("--dump-schedule", fuse_opt.dump_path,
                   "write the fused schedule as JSON");
  fuse->add_option("--permutation", fuse_opt.perm_path,
                   "0-based permutation file applied as P*A*P'");
  fuse->add_option("--repeats", fuse_opt.repeats, "timed repeats");
  fuse->add_option("--seed", fuse_opt.seed, "rng seed for vectors");
  fuse->add_option("--redundancy-threshold", fuse_opt.redundancy,
                   "fusion is abandoned past this multiple of |V1|+|V2|");

  ValidateOptions val_opt;
  CLI::App* val = app.add_subcommand("validate", "check schedules and results");
  val->add_option("--matrix", val_opt.matrix_path, "Matrix Market file")
      ->required();
  val->add_option("--combo", val_opt.combo_text, "id, alias or 'all'");
  val->add_option("--threads", val_opt.threads, "worker threads");
  val->add_option("--replays", val_opt.replays, "randomized replays");
  val->add_option("--seed", val_opt.seed, "rng seed");
  val->add_option("--schedule", val_opt.schedule_path,
                  "check a dumped schedule JSON instead of a fresh one");
  val->add_option("--permutation", val_opt.perm_path, "permutation file");

  BenchOptions bench_opt;
  CLI::App* bench = app.add_subcommand("bench", "run the benchmark grid");
  bench->add_option("--suite", bench_opt.suite_dir,
                    "directory of .mtx fixtures");
  bench->add_option("--matrix", bench_opt.matrices, "explicit matrix files");
  bench->add_option("--combos", bench_opt.combos_text, "'all' or id list");
  bench->add_option("--threads", bench_opt.threads_text,
                    "comma-separated thread counts");
  bench->add_option("--format", bench_opt.format, "csv | json")
      ->check(CLI::IsMember({"csv", "json"}));
  bench->add_option("--out", bench_opt.out_path, "report path");
  bench->add_option("--repeats", bench_opt.repeats, "timed repeats");
  bench->add_option("--warmups", bench_opt.warmups, "warmup repeats");
  bench->add_option("--seed", bench_opt.seed, "rng seed");

  GenOptions gen_opt;
  CLI::App* gen = app.add_subcommand("gen", "generate fixture matrices");
  gen->add_option("--laplacian", gen_opt.laplacian, "grid side k (k^2 x k^2)");
  gen->add_option("--banded", gen_opt.banded, "banded SPD dimension");
  gen->add_option("--dense", gen_opt.dense, "dense SPD dimension");
  gen->add_option("--bandwidth", gen_opt.bandwidth, "band half-width");
  gen->add_option("--seed", gen_opt.seed, "rng seed");
  gen->add_option("--out", gen_opt.out_path, "output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  if (fuse->parsed())
    return cmd_fuse(fuse_opt);
  if (val->parsed())
    return cmd_validate(val_opt);
  if (bench->parsed())
    return cmd_bench(bench_opt);
  if (gen->parsed())
    return cmd_gen(gen_opt);
  return kExitUsage;
}
