#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mcflow/environment.hpp"
#include "mcflow/quadrature.hpp"

namespace mcflow {

/// Dimensionless position relative to the receiver center.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Expected dimensionless concentration at `position`, `t_star` after a unit
/// emission from {-x0*, 0, 0}: a Gaussian of variance 2 t* per axis whose
/// center has drifted by (Pe_par t*, Pe_perp t*, 0).
/// Throws ParameterError if t_star <= 0.
[[nodiscard]] double point_concentration(const Point3& position, double t_star, const DimensionlessEnv& env);

/// Expected fraction of one emission inside the receiver sphere, obtained by
/// integrating the radially pre-integrated concentration over the polar and
/// azimuthal angles. The value is clamped to [0, 1]; error_estimate is the
/// accumulated refinement residual. Throws QuadratureError on non-convergence.
[[nodiscard]] QuadratureResult expected_count_quadrature(double t_star, const DimensionlessEnv& env,
                                                         const QuadratureSpec& spec = {});

/// Closed-form expected fraction inside the receiver when the flow is
/// parallel to the transmitter-receiver axis. Throws ParameterError if
/// env.pe_perp != 0 or t_star <= 0.
[[nodiscard]] double closed_form_parallel(double t_star, const DimensionlessEnv& env);

/// Receiver volume times the concentration at the receiver center.
[[nodiscard]] double expected_count_uca(double t_star, const DimensionlessEnv& env);

/// Closed form when pe_perp == 0, quadrature otherwise.
[[nodiscard]] double expected_count_exact(double t_star, const DimensionlessEnv& env,
                                          const QuadratureSpec& spec = {});

/// (uca - exact) / exact. Negative means the uniform-concentration value is
/// too low. Empty when the exact value underflows (below 1e-300).
[[nodiscard]] std::optional<double> uca_relative_deviation(double t_star, const DimensionlessEnv& env,
                                                           const QuadratureSpec& spec = {});

enum class SignalMode { kExact, kUca };

/// Expected dimensionless count for either mode; zero for t_star <= 0 (no
/// emission yet, and the receiver never contains the transmitter).
[[nodiscard]] double expected_count(double t_star, const DimensionlessEnv& env, SignalMode mode,
                                    const QuadratureSpec& spec = {});

/// Tabulated single-emission response at the sampling offsets of one bit
/// interval, for the current bit (lag 0) and for each earlier bit up to
/// isi_depth intervals back.
class SignalProfile {
 public:
  SignalProfile(DimensionlessEnv env, SignalMode mode, std::vector<double> offsets, std::size_t isi_depth,
                std::vector<double> table);

  [[nodiscard]] const DimensionlessEnv& env() const { return env_; }
  [[nodiscard]] SignalMode mode() const { return mode_; }
  /// Dimensionless sampling offsets g(m) within an interval.
  [[nodiscard]] std::span<const double> offsets() const { return offsets_; }
  [[nodiscard]] std::size_t samples_per_interval() const { return offsets_.size(); }
  [[nodiscard]] std::size_t isi_depth() const { return isi_depth_; }
  [[nodiscard]] double noise_mean() const { return env_.noise_mean; }

  /// Fraction of an emission `lag` intervals old seen at offset m.
  [[nodiscard]] double per_emission(std::size_t lag, std::size_t m) const {
    return table_[lag * offsets_.size() + m];
  }
  /// Same in molecules (scaled by molecules_per_emission).
  [[nodiscard]] double molecules(std::size_t lag, std::size_t m) const {
    return per_emission(lag, m) * static_cast<double>(env_.molecules_per_emission);
  }

 private:
  DimensionlessEnv env_;
  SignalMode mode_;
  std::vector<double> offsets_;
  std::size_t isi_depth_;
  std::vector<double> table_;
};

/// Memory needed to represent every earlier bit of a length-B sequence.
[[nodiscard]] inline std::size_t full_isi_depth(const DimensionlessEnv& env) {
  return env.sequence_length > 0 ? env.sequence_length - 1 : 0;
}

/// Tabulates the response at offsets (m + 1) t_int* / M for lags
/// 0..isi_depth. Contributions from bits older than isi_depth are dropped.
[[nodiscard]] SignalProfile build_signal_profile(const DimensionlessEnv& env, SignalMode mode, std::size_t isi_depth,
                                                 const QuadratureSpec& spec = {});

/// Same with explicit dimensionless offsets.
[[nodiscard]] SignalProfile build_signal_profile(const DimensionlessEnv& env, SignalMode mode, std::size_t isi_depth,
                                                 std::vector<double> offsets, const QuadratureSpec& spec = {});

/// Mean count of sample m of interval j (both zero-based) for the sequence
/// `bits`: noise plus every tabulated emission of bits[j - lag].
[[nodiscard]] double mean_observed(std::size_t interval, std::size_t sample, std::span<const std::uint8_t> bits,
                                   const SignalProfile& profile);

/// Mean count at an arbitrary time (seconds since the first emission),
/// summing every emission made up to and including time t with no memory
/// truncation.
[[nodiscard]] double mean_observed(double t_seconds, std::span<const std::uint8_t> bits,
                                   const DimensionlessEnv& env, SignalMode mode, const QuadratureSpec& spec = {});

}  // namespace mcflow
