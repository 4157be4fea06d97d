#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "mcflow/acceptance.hpp"
#include "mcflow/config.hpp"
#include "mcflow/experiments.hpp"

using namespace mcflow;

namespace {

// Channel parameters shared by every subcommand: a config file, then flags
// named after the config keys, then generic --set key=value overrides.
struct EnvOptions {
  std::string config;
  std::vector<std::pair<std::string, std::string>> flags;
  std::vector<std::string> sets;

  PhysicalEnv resolve() const {
    PhysicalEnv env = reference_environment();
    if (!config.empty()) apply_config(load_config_file(config), env);
    for (const auto& [key, value] : flags) apply_override(key, value, env);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError(fmt::format("override '{}' is not key=value", s));
      apply_override(s.substr(0, eq), s.substr(eq + 1), env);
    }
    env.validate();
    return env;
  }
};

void add_env_options(CLI::App* app, EnvOptions& opts) {
  app->add_option("-c,--config", opts.config, "parameter file")->check(CLI::ExistingFile);
  app->add_option("--set", opts.sets, "override a config key, e.g. --set t_int_ms=0.4");
  for (std::string_view key : kConfigKeys) {
    std::string flag = "--" + std::string(key);
    std::replace(flag.begin() + 2, flag.end(), '_', '-');
    if (key == "v_mm_s") {
      app->add_option_function<std::vector<double>>(
             flag,
             [&opts](const std::vector<double>& v) {
               opts.flags.emplace_back("v_mm_s", fmt::format("[{}, {}, {}]", v[0], v[1], v[2]));
             },
             "flow velocity vx vy vz in mm/s")
          ->expected(3);
    } else {
      app->add_option_function<std::string>(
          flag, [&opts, key](const std::string& v) { opts.flags.emplace_back(std::string(key), v); },
          fmt::format("config key {}", key));
    }
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Molecular communication under steady flow: signal, deviation and BER studies"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("-j,--threads", threads, "worker threads (0 = all cores)");

  // deviation -----------------------------------------------------------------
  EnvOptions dev_env;
  std::string dev_out = "out";
  std::vector<double> dev_par, dev_perp;
  double dev_tmin = 1e-3, dev_tmax = 2.0;
  std::size_t dev_points = 400;
  auto* dev = app.add_subcommand("deviation", "uniform-concentration deviation curves");
  add_env_options(dev, dev_env);
  dev->add_option("-o,--out-dir", dev_out, "output directory");
  dev->add_option("--pe-par", dev_par, "parallel Peclet values (default -5..5)");
  dev->add_option("--pe-perp", dev_perp, "perpendicular Peclet values (default 1..5)");
  dev->add_option("--t-min", dev_tmin, "smallest t*");
  dev->add_option("--t-max", dev_tmax, "largest t*");
  dev->add_option("--points", dev_points, "log-spaced t* points");

  // ber -------------------------------------------------------------------------
  EnvOptions ber_env;
  SweepSpec sweep;
  std::string axis = "pe_par", backend = "statistical", ber_out = "out";
  bool paper_scale = false;
  auto* ber = app.add_subcommand("ber", "bit error rate versus flow");
  add_env_options(ber, ber_env);
  ber->add_option("--axis", axis, "pe_par | pe_perp | pe_both")->check(CLI::IsMember({"pe_par", "pe_perp", "pe_both"}));
  ber->add_option("--grid", sweep.grid, "Peclet values (default: the axis grid)");
  ber->add_option("--m-list", sweep.m_list, "samples per interval");
  ber->add_option("--detectors", sweep.detectors, "optimal, matched, equal");
  ber->add_option("--backend", backend, "statistical | particle")->check(CLI::IsMember({"statistical", "particle"}));
  ber->add_option("--sequences", sweep.n_sequences, "sequences per point");
  ber->add_flag("--paper-scale", paper_scale, "1000 sequences per point");
  ber->add_option("--training", sweep.training_sequences, "threshold training sequences (>= 100)");
  ber->add_option("--seed", sweep.seed, "base seed");
  ber->add_option("--memory", sweep.memory, "sequence detector memory F");
  ber->add_flag("--expected-tail", sweep.expected_tail, "sequence detector averages ISI older than F");
  ber->add_option("-o,--out-dir", ber_out, "output directory");

  // signal ----------------------------------------------------------------------
  EnvOptions sig_env;
  double t_max_ms = 1.0;
  std::size_t sig_points = 200;
  std::string sig_out;
  auto* sig = app.add_subcommand("signal", "expected molecules in the receiver after one emission");
  add_env_options(sig, sig_env);
  sig->add_option("--t-max-ms", t_max_ms, "last time point in ms");
  sig->add_option("--points", sig_points, "time points");
  sig->add_option("-o,--out", sig_out, "CSV path (default stdout)");

  // observe ---------------------------------------------------------------------
  EnvOptions obs_env;
  std::uint64_t obs_seed = 1;
  std::string obs_backend = "statistical", obs_out;
  auto* observe = app.add_subcommand("observe", "simulate one sequence and dump the observation matrix");
  add_env_options(observe, obs_env);
  observe->add_option("--seed", obs_seed, "seed");
  observe->add_option("--backend", obs_backend, "statistical | particle")
      ->check(CLI::IsMember({"statistical", "particle"}));
  observe->add_option("-o,--out", obs_out, "CSV path (default stdout)");

  // validate --------------------------------------------------------------------
  AcceptanceOptions acc;
  auto* validate = app.add_subcommand("validate", "run the acceptance checks");
  validate->add_option("--only", acc.only, "criterion ids (1 2 3 4 5 6a..6e 7)");
  validate->add_option("--seed", acc.seed, "seed");
  validate->add_option("--particle-trials", acc.particle_trials, "trials for the backend comparison");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*dev) {
      const auto env = to_dimensionless(dev_env.resolve());
      std::vector<PecletPair> flows;
      if (dev_par.empty() && dev_perp.empty()) flows = default_deviation_flows();
      for (double p : dev_par) flows.push_back({p, 0.0});
      for (double p : dev_perp) flows.push_back({0.0, p});
      const auto data = run_deviation_study(env, flows, log_grid(dev_tmin, dev_tmax, dev_points), {}, threads);
      auto out = open_out(std::filesystem::path(dev_out) / "deviation.csv");
      data.write_csv(out);
      emit_plot_data(data, dev_out, "deviation_plot", {data.env_hash, 0});
      std::size_t flagged = 0;
      for (const auto& r : data.rows) flagged += r.status == "ok" ? 0 : 1;
      fmt::print("{} rows ({} flagged) written to {}\n", data.rows.size(), flagged, dev_out);
      return 0;
    }

    if (*ber) {
      const auto env = to_dimensionless(ber_env.resolve());
      sweep.axis = parse_sweep_axis(axis);
      if (sweep.grid.empty()) sweep.grid = default_grid(sweep.axis);
      if (paper_scale) sweep.n_sequences = 1000;
      sweep.backend = backend == "particle" ? Backend::kParticle : Backend::kStatistical;
      const auto data = run_ber_sweep(sweep, env, threads);
      const std::string stem = fmt::format("ber_{}", axis);
      auto out = open_out(std::filesystem::path(ber_out) / (stem + ".csv"));
      data.write_csv(out);
      emit_plot_data(data, ber_out, stem + "_plot", {env_hash(env), sweep.seed});
      std::size_t failed = 0;
      for (const auto& r : data.rows) failed += r.status == "ok" ? 0 : 1;
      fmt::print("{} rows ({} failed) written to {}\n", data.rows.size(), failed, ber_out);
      return failed == 0 ? 0 : 2;
    }

    if (*sig) {
      const auto env = to_dimensionless(sig_env.resolve());
      std::ofstream file;
      if (!sig_out.empty()) file = open_out(sig_out);
      std::ostream& out = sig_out.empty() ? std::cout : file;
      const double n = static_cast<double>(env.molecules_per_emission);
      out << "t_ms,t_star,exact,uca\n";
      for (std::size_t i = 1; i <= sig_points; ++i) {
        const double t_s = t_max_ms * 1e-3 * static_cast<double>(i) / static_cast<double>(sig_points);
        const double t = to_dimensionless_time(t_s, env);
        out << fmt::format("{:.9g},{:.9g},{:.9g},{:.9g}\n", t_s * 1e3, t, n * expected_count_exact(t, env),
                           n * expected_count_uca(t, env));
      }
      return 0;
    }

    if (*observe) {
      const PhysicalEnv phys = obs_env.resolve();
      const auto env = to_dimensionless(phys);
      Rng rng = make_rng(derive_seed(obs_seed, 0));
      const auto bits = draw_sequence(phys.p_one, phys.sequence_length, rng);
      const auto schedule = SamplingSchedule::equally_spaced(phys.bit_interval, phys.samples_per_interval);
      const auto obs = obs_backend == "particle"
                           ? simulate_particle(bits, phys, schedule, derive_seed(obs_seed, 1))
                           : simulate_statistical(bits, build_signal_profile(env, SignalMode::kExact, full_isi_depth(env)),
                                                  schedule, derive_seed(obs_seed, 1));
      std::ofstream file;
      if (!obs_out.empty()) file = open_out(obs_out);
      obs.write_csv(obs_out.empty() ? std::cout : file);
      return 0;
    }

    if (*validate) {
      acc.threads = threads;
      const auto results = run_acceptance(acc, [](const CriterionResult& r) {
        fmt::print("{}\n", format_result(r));
        std::fflush(stdout);
      });
      std::size_t failed = 0;
      for (const auto& r : results) failed += r.passed ? 0 : 1;
      fmt::print("{}/{} criteria passed\n", results.size() - failed, results.size());
      return failed == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
