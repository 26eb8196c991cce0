#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include <sparsefuse/bench.hpp>
#include <sparsefuse/fixtures.hpp>

using namespace sparsefuse;

TEST_CASE("compute_ner") {
  SECTION("hand-fed times") {
    NerResult r = compute_ner(10.0, 5.0, 3.0);
    REQUIRE(r.amortizable);
    REQUIRE(r.runs == Catch::Approx(5.0));
  }
  SECTION("executor no faster than baseline is unamortizable") {
    REQUIRE_FALSE(compute_ner(10.0, 5.0, 5.0).amortizable);
    REQUIRE_FALSE(compute_ner(10.0, 5.0, 6.0).amortizable);
  }
  SECTION("zero inspector amortizes immediately") {
    NerResult r = compute_ner(0.0, 5.0, 3.0);
    REQUIRE(r.amortizable);
    REQUIRE(r.runs == 0.0);
  }
}

TEST_CASE("run_suite cardinality and validation") {
  SuiteConfig cfg;
  cfg.matrices.push_back({"lap4", gen_grid_laplacian(4)});
  cfg.combos = {4};
  cfg.threads = {1, 4};
  cfg.warmups = 1;
  cfg.repeats = 3;
  std::vector<BenchRecord> recs = run_suite(cfg);
  REQUIRE(recs.size() == 8); // 1 matrix x 1 combo x 2 threads x 4 executors
  for (const BenchRecord& r : recs) {
    REQUIRE(r.valid);
    REQUIRE(r.baseline_s > 0.0);
    REQUIRE(r.executor_s > 0.0);
    REQUIRE(r.speedup == Catch::Approx(r.baseline_s / r.executor_s));
    if (r.executor == "fused")
      REQUIRE(r.pack == "separated"); // combo 4 has reuse < 1
  }
}

TEST_CASE("report emission") {
  BenchRecord r;
  r.combo_id = 4;
  r.matrix = "lap4";
  r.n = 16;
  r.nnz = 64;
  r.nthreads = 2;
  r.executor = "fused";
  r.pack = "separated";
  r.inspector_s = 0.001;
  r.executor_s = 0.002;
  r.baseline_s = 0.004;
  r.speedup = 2.0;
  r.ner = 0.5;
  r.barriers = 1;
  r.imbalance = 0.25;
  SECTION("csv has a header and one line per record") {
    std::ostringstream os;
    emit_report_csv({r}, os);
    const std::string text = os.str();
    REQUIRE(std::count(text.begin(), text.end(), '\n') == 2);
    REQUIRE(text.find("combo,matrix,n,nnz") == 0);
    std::ostringstream os2;
    emit_report_csv({r}, os2);
    REQUIRE(os.str() == os2.str()); // deterministic bytes
  }
  SECTION("json round trips") {
    std::ostringstream os;
    emit_report_json({r, r}, os);
    nlohmann::json arr = nlohmann::json::parse(os.str());
    REQUIRE(arr.size() == 2);
    BenchRecord back = bench_record_from_json(arr[0]);
    REQUIRE(back.combo_id == r.combo_id);
    REQUIRE(back.matrix == r.matrix);
    REQUIRE(back.executor_s == r.executor_s);
    REQUIRE(back.speedup == r.speedup);
    REQUIRE(back.barriers == r.barriers);
  }
  SECTION("unamortizable marker in csv") {
    BenchRecord u = r;
    u.ner_amortizable = false;
    std::ostringstream os;
    emit_report_csv({u}, os);
    REQUIRE(os.str().find("unamortizable") != std::string::npos);
  }
}

TEST_CASE("median is invariant to repeat order") {
  std::vector<std::int64_t> a{5, 1, 9, 3, 7};
  std::vector<std::int64_t> b{9, 7, 5, 3, 1};
  REQUIRE(detail::median_seconds(a) == detail::median_seconds(b));
}
