#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mcflow/experiments.hpp"

using namespace mcflow;

namespace {

DimensionlessEnv ref() { return to_dimensionless(reference_environment()); }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mcflow_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("log grid") {
  const auto g = log_grid(1e-3, 2.0, 400);
  CHECK(g.size() == 400);
  CHECK(g.front() == 1e-3);
  CHECK(g.back() == 2.0);
  CHECK(g[1] / g[0] == doctest::Approx(g[200] / g[199]));
  CHECK(log_grid(0.5, 4, 1) == std::vector<double>{0.5});
  CHECK_THROWS_AS((void)log_grid(0, 1, 3), ParameterError);
}

TEST_CASE("FNV-1a") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(env_hash(ref()) == env_hash(ref()));
  CHECK(env_hash(ref()) != env_hash(ref().with_peclet(1, 0)));
}

TEST_CASE("deviation study") {
  const auto times = log_grid(0.01, 2.0, 20);
  const auto data = run_deviation_study(ref(), {{0, 2}, {0, -2}, {4, 0}}, times, {}, 1);
  REQUIRE(data.rows.size() == 60);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(*data.rows[i].rel_deviation == doctest::Approx(*data.rows[20 + i].rel_deviation).epsilon(1e-7));
  }
  const auto at = run_deviation_study(ref(), {{4, 0}}, {0.15}, {}, 1);
  CHECK(std::abs(*at.rows[0].rel_deviation) < 0.02);

  std::ostringstream out;
  data.write_csv(out);
  CHECK(out.str().rfind("t_star,pe_par,pe_perp,exact,uca,rel_deviation,status\n", 0) == 0);
  CHECK(default_deviation_flows().size() == 16);
  CHECK(default_deviation_times().size() == 400);
}

TEST_CASE("quadrature failures are flagged per row") {
  QuadratureSpec strict;
  strict.abs_tolerance = 1e-300;
  strict.rel_tolerance = 1e-300;
  strict.max_depth = 0;
  strict.scheme = QuadratureSpec::Scheme::kGaussLegendre8;
  const auto data = run_deviation_study(ref(), {{0, 1}, {1, 0}}, {0.3}, strict, 1);
  REQUIRE(data.rows.size() == 2);
  CHECK(data.rows[0].status.rfind("error:", 0) == 0);
  CHECK_FALSE(data.rows[0].rel_deviation.has_value());
  CHECK(data.rows[1].status == "ok");  // parallel flow uses the closed form
}

TEST_CASE("sweep spec") {
  SweepSpec spec;
  CHECK_THROWS_AS(spec.validate(), ParameterError);
  spec.grid = {1.0};
  CHECK_NOTHROW(spec.validate());
  spec.axis = SweepAxis::kBoth;
  CHECK(spec.flow_at(0).par == 1.0);
  CHECK(spec.flow_at(0).perp == 1.0);
  spec.detectors = {"psychic"};
  CHECK_THROWS_AS(spec.validate(), ParameterError);
  CHECK(parse_sweep_axis("pe_perp") == SweepAxis::kPerpendicular);
  CHECK_THROWS_AS((void)parse_sweep_axis("pe_z"), ParameterError);
  CHECK(default_grid(SweepAxis::kParallel).size() == 14);
  CHECK(default_grid(SweepAxis::kPerpendicular).size() == 8);
}

TEST_CASE("shared profile tabulation equals per-M tabulation") {
  const auto env = ref().with_peclet(1.0, 0);
  const auto shared = build_profiles(env, {2, 5, 10});
  for (std::size_t k = 0; k < 3; ++k) {
    DimensionlessEnv e = env;
    e.samples_per_interval = std::vector<std::uint32_t>{2, 5, 10}[k];
    const auto direct = build_signal_profile(e, SignalMode::kExact, full_isi_depth(e));
    REQUIRE(shared[k]->samples_per_interval() == e.samples_per_interval);
    for (std::size_t lag : {0ul, 1ul, 50ul})
      for (std::size_t m = 0; m < e.samples_per_interval; ++m)
        CHECK(shared[k]->per_emission(lag, m) == doctest::Approx(direct.per_emission(lag, m)).epsilon(1e-12));
  }
}

TEST_CASE("small sweep runs, is reproducible, and records failures") {
  SweepSpec spec;
  spec.grid = {0.0, 1.0};
  spec.m_list = {2, 5};
  spec.n_sequences = 1;
  spec.seed = 9;
  const auto a = run_ber_sweep(spec, ref(), 1);
  const auto b = run_ber_sweep(spec, ref(), 2);
  CHECK(a.rows.size() == 2 * 2 * 3);
  std::ostringstream ca, cb;
  a.write_csv(ca);
  b.write_csv(cb);
  CHECK(ca.str() == cb.str());
  CHECK(ca.str().rfind("pe_par,pe_perp,M,detector,backend,n_seq,ber,ci_lo,ci_hi,seed,env_hash,status\n", 0) == 0);
  for (const auto& r : a.rows) {
    CHECK(r.status == "ok");
    CHECK(r.estimate->bits == 100);
  }

  // the cloud is swept away before the first sample: matched weights cannot
  // be formed, the other detectors still run
  spec.grid = {-200.0};
  const auto c = run_ber_sweep(spec, ref(), 1);
  bool matched_failed = false, optimal_ran = false;
  for (const auto& r : c.rows) {
    if (r.detector == "matched") matched_failed = r.status.rfind("error:", 0) == 0;
    if (r.detector == "optimal") optimal_ran = r.estimate.has_value();
  }
  CHECK(matched_failed);
  CHECK(optimal_ran);
}

TEST_CASE("plot data") {
  const auto dir = scratch_dir("plot");
  const auto dev = run_deviation_study(ref(), {{0, 0}, {1, 0}}, log_grid(0.1, 1.0, 5), {}, 1);
  const auto files = emit_plot_data(dev, dir, "deviation", {env_hash(ref()), 1, "test"});
  REQUIRE(files.size() == 2);
  const auto meta = nlohmann::json::parse(slurp(files[1]));
  CHECK(meta["series"].size() == 2);
  CHECK(meta["x"]["scale"] == "log");
  CHECK(meta.contains("generated_at"));
  CHECK(meta["version"] == "test");

  const auto one = run_deviation_study(ref(), {{2, 0}}, {0.5}, {}, 1);
  const auto single = emit_plot_data(one, dir, "single", {});
  std::istringstream rows(slurp(single[0]));
  std::string line;
  int n = 0;
  while (std::getline(rows, line)) ++n;
  CHECK(n == 2);

  SweepSpec spec;
  spec.grid = {-0.5, 0.0, 1.0};
  spec.m_list = {2, 5};
  spec.detectors = {"matched", "equal"};
  spec.n_sequences = 1;
  const auto ber = run_ber_sweep(spec, ref(), 1);
  const auto ber_files = emit_plot_data(ber, dir, "ber", {});
  const auto ber_meta = nlohmann::json::parse(slurp(ber_files[1]));
  CHECK(ber_meta["series"].size() == 4);
  CHECK(ber_meta["x"]["scale"] == "split_log");
  const std::string csv = slurp(ber_files[0]);
  CHECK(csv.find("negative_log") != std::string::npos);
  CHECK(csv.find(",zero,") != std::string::npos);

  // rerun gives identical CSV; only the sidecar timestamp may differ
  const auto again = emit_plot_data(ber, dir / "again", "ber", {});
  CHECK(slurp(again[0]) == csv);

  CHECK_THROWS_AS(emit_plot_data(DeviationDataset{}, dir, "empty", {}), ParameterError);
  CHECK_THROWS_AS(emit_plot_data(BerSweepDataset{}, dir, "empty", {}), ParameterError);
  std::filesystem::remove_all(dir);
}
