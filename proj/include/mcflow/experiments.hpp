#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcflow/ber.hpp"
#include "mcflow/environment.hpp"
#include "mcflow/quadrature.hpp"
#include "mcflow/signal_model.hpp"

namespace mcflow {

/// n points from lo to hi, evenly spaced in log10. n == 1 gives {lo}.
[[nodiscard]] std::vector<double> log_grid(double lo, double hi, std::size_t n);

/// 64-bit FNV-1a of `text`, as 16 lowercase hex digits.
[[nodiscard]] std::string fnv1a_hex(std::string_view text);

/// Hash of every field that affects the channel statistics.
[[nodiscard]] std::string env_hash(const DimensionlessEnv& env);

[[nodiscard]] std::string version_string();

// ---------------------------------------------------------------------------
// Uniform-concentration deviation study

struct PecletPair {
  double par = 0.0;
  double perp = 0.0;
};

struct DeviationRow {
  double t_star = 0.0;
  PecletPair pe;
  double exact = 0.0;
  double uca = 0.0;
  std::optional<double> rel_deviation;  // empty when the row failed or underflowed
  std::string status = "ok";
};

struct DeviationDataset {
  std::string env_hash;
  std::vector<DeviationRow> rows;  // grouped by Peclet pair, t* ascending

  /// Columns: t_star,pe_par,pe_perp,exact,uca,rel_deviation,status.
  void write_csv(std::ostream& out) const;
};

/// Parallel flows -5..5 in steps of 1, then perpendicular flows 1..5.
[[nodiscard]] std::vector<PecletPair> default_deviation_flows();

/// 400 log-spaced points on [1e-3, 2].
[[nodiscard]] std::vector<double> default_deviation_times();

/// One row per (flow, t*). A quadrature failure marks its row and the study
/// carries on.
[[nodiscard]] DeviationDataset run_deviation_study(const DimensionlessEnv& env, const std::vector<PecletPair>& flows,
                                                   const std::vector<double>& t_stars, const QuadratureSpec& spec = {},
                                                   unsigned threads = 0);

// ---------------------------------------------------------------------------
// BER sweeps

enum class SweepAxis { kParallel, kPerpendicular, kBoth };

[[nodiscard]] std::string_view to_string(SweepAxis axis);
/// Accepts pe_par, pe_perp, pe_both.
[[nodiscard]] SweepAxis parse_sweep_axis(std::string_view text);

struct SweepSpec {
  SweepAxis axis = SweepAxis::kParallel;
  std::vector<double> grid;
  std::vector<std::uint32_t> m_list{2, 5, 10, 40};
  std::vector<std::string> detectors{"optimal", "matched", "equal"};
  Backend backend = Backend::kStatistical;
  std::size_t n_sequences = 100;
  std::size_t training_sequences = 100;
  std::uint64_t seed = 1;
  std::size_t memory = 2;
  bool expected_tail = false;
  ParticleOptions particle{};

  /// Throws ParameterError on an empty grid, M list or detector list, an
  /// unknown detector name, or zero sequences.
  void validate() const;
  /// Peclet pair of grid point i.
  [[nodiscard]] PecletPair flow_at(std::size_t i) const;
};

[[nodiscard]] std::vector<double> default_parallel_grid();
[[nodiscard]] std::vector<double> default_perpendicular_grid();
[[nodiscard]] std::vector<double> default_grid(SweepAxis axis);

struct BerSweepRow {
  PecletPair pe;
  std::uint32_t samples_per_interval = 0;
  std::string detector;
  Backend backend = Backend::kStatistical;
  std::size_t n_sequences = 0;
  std::optional<BerEstimate> estimate;  // empty when the point failed
  std::uint64_t seed = 0;
  std::string env_hash;
  std::string status = "ok";
};

struct BerSweepDataset {
  SweepAxis axis = SweepAxis::kParallel;
  std::vector<BerSweepRow> rows;  // grid order, then M, then detector

  /// Columns: pe_par,pe_perp,M,detector,backend,n_seq,ber,ci_lo,ci_hi,seed,
  /// env_hash,status.
  void write_csv(std::ostream& out) const;
};

/// Detectors for one environment. Weighted-sum thresholds are trained on
/// `spec.training_sequences` statistical sequences drawn from a stream of
/// `spec.seed` that the BER runs never use.
[[nodiscard]] std::vector<std::shared_ptr<const Detector>> make_detectors(
    const std::vector<std::string>& names, std::shared_ptr<const SignalProfile> profile, const SweepSpec& spec);

/// Runs every (grid point, M, detector) combination. All detectors at one
/// point and M see the same observations. A failure at one point is recorded
/// on its rows and the sweep continues.
[[nodiscard]] BerSweepDataset run_ber_sweep(const SweepSpec& spec, const DimensionlessEnv& env,
                                            unsigned threads = 0);

/// Exact-mode profile for `env` at every M in `m_list`, sharing one
/// tabulation at the least common multiple of the M values where possible.
[[nodiscard]] std::vector<std::shared_ptr<const SignalProfile>> build_profiles(
    const DimensionlessEnv& env, const std::vector<std::uint32_t>& m_list, const QuadratureSpec& spec = {});

// ---------------------------------------------------------------------------
// Plot data

struct PlotMetadata {
  std::string env_hash;
  std::uint64_t seed = 0;
  std::string version = version_string();
};

/// Writes <stem>.csv in long format (series,x,y) with one series per flow,
/// x = t*, y = relative deviation, plus <stem>.json describing the axes.
/// Returns the written paths. Throws ParameterError on an empty dataset.
std::vector<std::filesystem::path> emit_plot_data(const DeviationDataset& data, const std::filesystem::path& dir,
                                                  const std::string& stem, const PlotMetadata& meta);

/// Writes <stem>.csv (series,region,x,y,ci_lo,ci_hi) with one series per
/// (detector, M) pair and <stem>.json. For a parallel axis the region column
/// splits the axis into negative-log, zero and positive-log parts.
std::vector<std::filesystem::path> emit_plot_data(const BerSweepDataset& data, const std::filesystem::path& dir,
                                                  const std::string& stem, const PlotMetadata& meta);

}  // namespace mcflow
