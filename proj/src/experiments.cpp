#include "mcflow/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "json.hpp"

#ifndef MCFLOW_VERSION
#define MCFLOW_VERSION "0.0.0-unknown"
#endif

namespace mcflow {

namespace {

// Stream of the sweep seed reserved for threshold training; BER runs use
// streams 0 .. 2 n_sequences - 1.
constexpr std::uint64_t kTrainingStream = 0x7fff'ffff'0000'0001ULL;
constexpr std::uint64_t kMaxSharedGrid = 400;

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::string optional_num(const std::optional<double>& v) { return v ? num(*v) : std::string{}; }

}  // namespace

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (!(lo > 0 && hi >= lo)) throw ParameterError("log grid needs 0 < lo <= hi");
  if (n == 0) throw ParameterError("log grid needs at least one point");
  std::vector<double> out(n);
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = n == 1 ? lo : std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  if (n > 1) out.back() = hi;
  return out;
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string env_hash(const DimensionlessEnv& env) {
  return fnv1a_hex(fmt::format("{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}", num(env.reference_length),
                               num(env.diffusion_coefficient), num(env.transmitter_distance),
                               num(env.receiver_radius), num(env.pe_par), num(env.pe_perp), num(env.bit_interval),
                               num(env.sim_step), env.molecules_per_emission, env.sequence_length,
                               env.samples_per_interval, num(env.p_one), num(env.noise_mean)));
}

std::string version_string() { return MCFLOW_VERSION; }

// ---------------------------------------------------------------------------

void DeviationDataset::write_csv(std::ostream& out) const {
  out << "t_star,pe_par,pe_perp,exact,uca,rel_deviation,status\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{}\n", num(r.t_star), num(r.pe.par), num(r.pe.perp), num(r.exact),
                       num(r.uca), optional_num(r.rel_deviation), r.status);
  }
}

std::vector<PecletPair> default_deviation_flows() {
  std::vector<PecletPair> flows;
  for (int p = -5; p <= 5; ++p) flows.push_back({static_cast<double>(p), 0.0});
  for (int p = 1; p <= 5; ++p) flows.push_back({0.0, static_cast<double>(p)});
  return flows;
}

std::vector<double> default_deviation_times() { return log_grid(1e-3, 2.0, 400); }

DeviationDataset run_deviation_study(const DimensionlessEnv& env, const std::vector<PecletPair>& flows,
                                     const std::vector<double>& t_stars, const QuadratureSpec& spec,
                                     unsigned threads) {
  if (flows.empty() || t_stars.empty()) throw ParameterError("deviation study needs flows and times");
  for (double t : t_stars) {
    if (!(t > 0)) throw ParameterError("deviation study times must be positive");
  }
  spec.validate();

  DeviationDataset data;
  data.env_hash = env_hash(env);
  data.rows.resize(flows.size() * t_stars.size());
  parallel_for(data.rows.size(), threads, [&](std::size_t k) {
    const PecletPair pe = flows[k / t_stars.size()];
    DeviationRow& row = data.rows[k];
    row.t_star = t_stars[k % t_stars.size()];
    row.pe = pe;
    const DimensionlessEnv point = env.with_peclet(pe.par, pe.perp);
    try {
      row.exact = expected_count_exact(row.t_star, point, spec);
      row.uca = expected_count_uca(row.t_star, point);
      if (row.exact > 1e-300) {
        row.rel_deviation = (row.uca - row.exact) / row.exact;
      } else {
        row.status = "underflow";
      }
    } catch (const std::exception& e) {
      row.status = fmt::format("error: {}", e.what());
      std::replace(row.status.begin(), row.status.end(), ',', ';');
    }
  });
  return data;
}

// ---------------------------------------------------------------------------

std::string_view to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kParallel: return "pe_par";
    case SweepAxis::kPerpendicular: return "pe_perp";
    case SweepAxis::kBoth: return "pe_both";
  }
  return "pe_par";
}

SweepAxis parse_sweep_axis(std::string_view text) {
  if (text == "pe_par") return SweepAxis::kParallel;
  if (text == "pe_perp") return SweepAxis::kPerpendicular;
  if (text == "pe_both") return SweepAxis::kBoth;
  throw ParameterError(fmt::format("unknown sweep axis '{}'", text));
}

void SweepSpec::validate() const {
  if (grid.empty()) throw ParameterError("sweep grid is empty");
  if (m_list.empty()) throw ParameterError("sweep needs at least one M");
  if (detectors.empty()) throw ParameterError("sweep needs at least one detector");
  for (auto m : m_list) {
    if (m == 0) throw ParameterError("M must be positive");
  }
  for (const auto& d : detectors) {
    if (d != "optimal" && d != "matched" && d != "equal") throw ParameterError(fmt::format("unknown detector '{}'", d));
  }
  if (n_sequences == 0) throw ParameterError("sweep needs at least one sequence");
  for (double v : grid) {
    if (!std::isfinite(v)) throw ParameterError("sweep grid values must be finite");
  }
}

PecletPair SweepSpec::flow_at(std::size_t i) const {
  const double v = grid.at(i);
  switch (axis) {
    case SweepAxis::kParallel: return {v, 0.0};
    case SweepAxis::kPerpendicular: return {0.0, v};
    case SweepAxis::kBoth: return {v, v};
  }
  return {v, 0.0};
}

std::vector<double> default_parallel_grid() { return {-2, -1, -0.5, -0.2, 0, 0.2, 0.5, 1, 2, 5, 10, 20, 50, 100}; }
std::vector<double> default_perpendicular_grid() { return {0, 0.5, 1, 1.5, 2, 3, 5, 10}; }

std::vector<double> default_grid(SweepAxis axis) {
  if (axis == SweepAxis::kPerpendicular) return default_perpendicular_grid();
  if (axis == SweepAxis::kBoth) return {-2, -1, -0.5, -0.2, 0, 0.2, 0.5, 1, 2, 5, 10};
  return default_parallel_grid();
}

void BerSweepDataset::write_csv(std::ostream& out) const {
  out << "pe_par,pe_perp,M,detector,backend,n_seq,ber,ci_lo,ci_hi,seed,env_hash,status\n";
  for (const auto& r : rows) {
    std::string ber, lo, hi;
    if (r.estimate) {
      ber = num(r.estimate->ber);
      lo = num(r.estimate->ci.lo);
      hi = num(r.estimate->ci.hi);
    }
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", num(r.pe.par), num(r.pe.perp),
                       r.samples_per_interval, r.detector, to_string(r.backend), r.n_sequences, ber, lo, hi, r.seed,
                       r.env_hash, r.status);
  }
}

std::vector<std::shared_ptr<const SignalProfile>> build_profiles(const DimensionlessEnv& env,
                                                                 const std::vector<std::uint32_t>& m_list,
                                                                 const QuadratureSpec& spec) {
  std::uint64_t shared = 1;
  for (auto m : m_list) {
    if (m == 0) throw ParameterError("M must be positive");
    shared = std::lcm(shared, static_cast<std::uint64_t>(m));
  }
  const std::size_t depth = full_isi_depth(env);
  std::vector<std::shared_ptr<const SignalProfile>> out;
  if (shared > kMaxSharedGrid) {
    for (auto m : m_list) {
      DimensionlessEnv e = env;
      e.samples_per_interval = m;
      out.push_back(std::make_shared<const SignalProfile>(build_signal_profile(e, SignalMode::kExact, depth, spec)));
    }
    return out;
  }

  DimensionlessEnv fine_env = env;
  fine_env.samples_per_interval = static_cast<std::uint32_t>(shared);
  const SignalProfile fine = build_signal_profile(fine_env, SignalMode::kExact, depth, spec);
  for (auto m : m_list) {
    const std::size_t stride = shared / m;
    DimensionlessEnv e = env;
    e.samples_per_interval = m;
    std::vector<double> offsets(m);
    std::vector<double> table((depth + 1) * m);
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t src = (k + 1) * stride - 1;
      offsets[k] = fine.offsets()[src];
      for (std::size_t lag = 0; lag <= depth; ++lag) table[lag * m + k] = fine.per_emission(lag, src);
    }
    out.push_back(std::make_shared<const SignalProfile>(e, SignalMode::kExact, std::move(offsets), depth,
                                                        std::move(table)));
  }
  return out;
}

std::vector<std::shared_ptr<const Detector>> make_detectors(const std::vector<std::string>& names,
                                                            std::shared_ptr<const SignalProfile> profile,
                                                            const SweepSpec& spec) {
  const std::uint64_t training_seed = derive_seed(spec.seed, kTrainingStream);
  std::vector<std::shared_ptr<const Detector>> out;
  for (const auto& name : names) {
    if (name == "optimal") {
      out.push_back(std::make_shared<SequenceDetector>(
          SequenceDetectorConfig{spec.memory, profile, spec.expected_tail}, name));
    } else if (name == "matched" || name == "equal") {
      const WeightVector w =
          name == "matched" ? matched_weights(*profile) : equal_weights(profile->samples_per_interval());
      const auto trained = optimize_threshold(w, *profile, spec.training_sequences, training_seed);
      out.push_back(std::make_shared<WeightedSumDetector>(name, trained.rule));
    } else {
      throw ParameterError(fmt::format("unknown detector '{}'", name));
    }
  }
  return out;
}

BerSweepDataset run_ber_sweep(const SweepSpec& spec, const DimensionlessEnv& env, unsigned threads) {
  spec.validate();
  const std::size_t per_point = spec.m_list.size() * spec.detectors.size();
  BerSweepDataset data;
  data.axis = spec.axis;
  data.rows.resize(spec.grid.size() * per_point);

  parallel_for(spec.grid.size(), threads, [&](std::size_t i) {
    const PecletPair pe = spec.flow_at(i);
    const DimensionlessEnv point = env.with_peclet(pe.par, pe.perp);
    auto rows = data.rows.begin() + static_cast<std::ptrdiff_t>(i * per_point);
    for (std::size_t k = 0; k < spec.m_list.size(); ++k) {
      for (std::size_t d = 0; d < spec.detectors.size(); ++d) {
        BerSweepRow& row = rows[static_cast<std::ptrdiff_t>(k * spec.detectors.size() + d)];
        row.pe = pe;
        row.samples_per_interval = spec.m_list[k];
        row.detector = spec.detectors[d];
        row.backend = spec.backend;
        row.n_sequences = spec.n_sequences;
        row.seed = spec.seed;
        DimensionlessEnv e = point;
        e.samples_per_interval = spec.m_list[k];
        row.env_hash = env_hash(e);
      }
    }

    auto fail = [&](std::size_t k, std::size_t d, const std::string& what) {
      std::string status = fmt::format("error: {}", what);
      std::replace(status.begin(), status.end(), ',', ';');
      rows[static_cast<std::ptrdiff_t>(k * spec.detectors.size() + d)].status = status;
    };

    std::vector<std::shared_ptr<const SignalProfile>> profiles;
    try {
      profiles = build_profiles(point, spec.m_list);
    } catch (const std::exception& e) {
      for (std::size_t k = 0; k < spec.m_list.size(); ++k) {
        for (std::size_t d = 0; d < spec.detectors.size(); ++d) fail(k, d, e.what());
      }
      return;
    }

    for (std::size_t k = 0; k < spec.m_list.size(); ++k) {
      const auto& profile = profiles[k];
      const auto schedule = SamplingSchedule::equally_spaced(to_dimensional_time(point.bit_interval, point),
                                                             spec.m_list[k]);
      // Detectors that cannot be built (degenerate threshold search) fail
      // alone; the rest still share observations.
      std::vector<std::shared_ptr<const Detector>> detectors;
      std::vector<std::size_t> slots;
      for (std::size_t d = 0; d < spec.detectors.size(); ++d) {
        try {
          auto built = make_detectors({spec.detectors[d]}, profile, spec);
          detectors.push_back(built.front());
          slots.push_back(d);
        } catch (const std::exception& e) {
          fail(k, d, e.what());
        }
      }
      if (detectors.empty()) continue;
      try {
        std::unique_ptr<Channel> channel;
        if (spec.backend == Backend::kStatistical) {
          channel = std::make_unique<StatisticalChannel>(*profile, schedule);
        } else {
          PhysicalEnv phys = to_dimensional(profile->env());
          channel = std::make_unique<ParticleChannel>(phys, schedule, spec.particle);
        }
        const BerReport report =
            estimate_ber(detectors, *channel, point.p_one, point.sequence_length, spec.n_sequences, spec.seed, 1);
        for (std::size_t s = 0; s < slots.size(); ++s) {
          rows[static_cast<std::ptrdiff_t>(k * spec.detectors.size() + slots[s])].estimate = report.estimates[s];
        }
      } catch (const std::exception& e) {
        for (std::size_t d : slots) fail(k, d, e.what());
      }
    }
  });
  return data;
}

// ---------------------------------------------------------------------------

namespace {

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

void write_sidecar(const std::filesystem::path& path, nlohmann::json body, const PlotMetadata& meta) {
  body["env_hash"] = meta.env_hash;
  body["seed"] = meta.seed;
  body["version"] = meta.version;
  body["generated_at"] = timestamp_utc();
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out << body.dump(2) << '\n';
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  return out;
}

std::string flow_label(const PecletPair& pe) { return fmt::format("pe_par={} pe_perp={}", pe.par, pe.perp); }

}  // namespace

std::vector<std::filesystem::path> emit_plot_data(const DeviationDataset& data, const std::filesystem::path& dir,
                                                  const std::string& stem, const PlotMetadata& meta) {
  if (data.rows.empty()) throw ParameterError("nothing to plot: deviation dataset is empty");
  std::filesystem::create_directories(dir);
  const auto csv_path = dir / (stem + ".csv");
  const auto json_path = dir / (stem + ".json");

  std::vector<std::string> series;
  auto out = open_csv(csv_path);
  out << "series,x,y\n";
  for (const auto& r : data.rows) {
    const std::string label = flow_label(r.pe);
    if (series.empty() || series.back() != label) series.push_back(label);
    if (!r.rel_deviation) continue;
    out << fmt::format("{},{},{}\n", label, num(r.t_star), num(*r.rel_deviation));
  }

  nlohmann::json body;
  body["kind"] = "uca_deviation";
  body["series"] = series;
  body["x"] = {{"name", "t_star"}, {"scale", "log"}};
  body["y"] = {{"name", "relative_deviation"}, {"scale", "linear"}};
  write_sidecar(json_path, std::move(body), meta);
  return {csv_path, json_path};
}

std::vector<std::filesystem::path> emit_plot_data(const BerSweepDataset& data, const std::filesystem::path& dir,
                                                  const std::string& stem, const PlotMetadata& meta) {
  if (data.rows.empty()) throw ParameterError("nothing to plot: BER dataset is empty");
  std::filesystem::create_directories(dir);
  const auto csv_path = dir / (stem + ".csv");
  const auto json_path = dir / (stem + ".json");

  auto axis_value = [&](const PecletPair& pe) { return data.axis == SweepAxis::kPerpendicular ? pe.perp : pe.par; };
  auto region = [&](double x) -> std::string {
    if (data.axis != SweepAxis::kParallel) return "linear";
    if (x < 0) return "negative_log";
    if (x == 0) return "zero";
    return "positive_log";
  };

  // Series keyed by (detector, M) in first-seen order.
  std::vector<std::string> order;
  std::map<std::string, std::vector<const BerSweepRow*>> series;
  for (const auto& r : data.rows) {
    const std::string label = fmt::format("{} M={}", r.detector, r.samples_per_interval);
    if (!series.contains(label)) order.push_back(label);
    series[label].push_back(&r);
  }

  auto out = open_csv(csv_path);
  out << "series,region,x,y,ci_lo,ci_hi\n";
  for (const auto& label : order) {
    for (const BerSweepRow* r : series[label]) {
      if (!r->estimate) continue;
      const double x = axis_value(r->pe);
      out << fmt::format("{},{},{},{},{},{}\n", label, region(x), num(x), num(r->estimate->ber),
                         num(r->estimate->ci.lo), num(r->estimate->ci.hi));
    }
  }

  nlohmann::json body;
  body["kind"] = "ber_sweep";
  body["series"] = order;
  body["y"] = {{"name", "ber"}, {"scale", "log"}};
  if (data.axis == SweepAxis::kParallel) {
    body["x"] = {{"name", "pe_par"},
                 {"scale", "split_log"},
                 {"regions",
                  {{{"name", "negative_log"}, {"range", {-2.0, -0.2}}},
                   {{"name", "zero"}, {"range", {0.0, 0.0}}},
                   {{"name", "positive_log"}, {"range", {0.2, 100.0}}}}}};
  } else {
    body["x"] = {{"name", std::string(to_string(data.axis))}, {"scale", "linear"}};
  }
  write_sidecar(json_path, std::move(body), meta);
  return {csv_path, json_path};
}

}  // namespace mcflow
