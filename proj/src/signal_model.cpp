#include "mcflow/signal_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include <boost/math/quadrature/gauss.hpp>
#include <fmt/format.h>

namespace mcflow {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSqrtPi = 1.7724538509055160273;
constexpr double kSingularDistance = 1e-6;
constexpr double kUnderflowFloor = 1e-300;
constexpr double kRadialSpan = 8.0;

void require_positive_time(double t_star) {
  if (!(t_star > 0) || !std::isfinite(t_star)) {
    throw ParameterError(fmt::format("time must be positive, got {}", t_star));
  }
}

/// erf(hi) - erf(lo) without cancellation when both arguments share a sign.
double erf_diff(double hi, double lo) {
  if (lo >= 0) return std::erfc(lo) - std::erfc(hi);
  if (hi <= 0) return std::erfc(-hi) - std::erfc(-lo);
  return std::erf(hi) - std::erf(lo);
}

/// Center of the molecule cloud relative to the receiver at time t*.
Point3 cloud_center(double t_star, const DimensionlessEnv& env) {
  return {-env.transmitter_distance + env.pe_par * t_star, env.pe_perp * t_star, 0.0};
}

/// Number of base panels per angular axis needed so that the angular
/// footprint of the cloud, roughly 2 sqrt(t*) / |c| radians wide, spans at
/// least a couple of nodes of the 16-point rule.
std::uint32_t panels_for_peak(double t_star, double center_distance, const DimensionlessEnv& env,
                              const QuadratureSpec& spec) {
  const double width = 2.0 * std::sqrt(t_star) / std::max(center_distance, env.receiver_radius);
  const double needed = std::ceil(kPi / (8.0 * width));
  return static_cast<std::uint32_t>(std::clamp(needed, static_cast<double>(spec.base_panels), 256.0));
}

}  // namespace

double point_concentration(const Point3& position, double t_star, const DimensionlessEnv& env) {
  require_positive_time(t_star);
  const Point3 c = cloud_center(t_star, env);
  const double dx = position.x - c.x;
  const double dy = position.y - c.y;
  const double dz = position.z - c.z;
  const double r2 = dx * dx + dy * dy + dz * dz;
  return std::pow(4.0 * kPi * t_star, -1.5) * std::exp(-r2 / (4.0 * t_star));
}

QuadratureResult expected_count_quadrature(double t_star, const DimensionlessEnv& env, const QuadratureSpec& spec) {
  require_positive_time(t_star);
  spec.validate();

  const Point3 c = cloud_center(t_star, env);
  const double center2 = c.x * c.x + c.y * c.y;
  const double sqrt_t = std::sqrt(t_star);
  const double scaled_radius = env.receiver_radius / (2.0 * sqrt_t);
  const double far_decay = -center2 / (4.0 * t_star);

  // Radial integral of the concentration along the direction u, written in
  // terms of the projection p = u . c of the cloud center onto u. With
  // q = p / (2 sqrt(t*)) and the transverse decay A = -(|c|^2 - p^2) / 4t*,
  // the antiderivative is the bracketed erf/exp expression below. Its terms
  // cancel when the receiver is small next to the cloud, so while the
  // exponent varies by less than kRadialSpan across [0, r_obs] the radial
  // integral is taken directly with a 16-point rule instead.
  const auto& gl_x = boost::math::quadrature::gauss<double, 16>::abscissa();
  const auto& gl_w = boost::math::quadrature::gauss<double, 16>::weights();
  const double half_r = 0.5 * env.receiver_radius;
  const double radial_norm = 1.0 / (4.0 * t_star * sqrt_t);
  auto radial = [&](double projection) {
    const double q = projection / (2.0 * sqrt_t);
    if (scaled_radius * scaled_radius + 2.0 * std::abs(q) * scaled_radius <= kRadialSpan) {
      double sum = 0.0;
      for (std::size_t i = 0; i < gl_x.size(); ++i) {
        for (double r : {half_r - half_r * gl_x[i], half_r + half_r * gl_x[i]}) {
          const double gap2 = std::max(0.0, center2 - 2.0 * r * projection + r * r);
          sum += gl_w[i] * r * r * std::exp(-gap2 / (4.0 * t_star));
        }
      }
      return sum * half_r * radial_norm;
    }
    const double transverse = std::min(0.0, -(center2 - projection * projection) / (4.0 * t_star));
    const double d_erf = erf_diff(scaled_radius - q, -q);
    const double edge = scaled_radius - q;
    return std::exp(transverse) * 0.5 * kSqrtPi * (1.0 + 2.0 * q * q) * d_erf + q * std::exp(far_decay) -
           (q + scaled_radius) * std::exp(transverse - edge * edge);
  };

  QuadratureSpec axis = spec;
  axis.base_panels = panels_for_peak(t_star, std::sqrt(center2), env, spec);
  QuadratureSpec inner = axis;
  inner.abs_tolerance = spec.abs_tolerance * 1e-2;
  inner.rel_tolerance = spec.rel_tolerance * 1e-2;

  std::uint64_t inner_evals = 0;
  double inner_error = 0.0;
  auto polar = [&](double theta) {
    const double s = std::sin(theta);
    auto azimuthal = [&](double phi) { return radial(s * (c.x * std::cos(phi) + c.y * std::sin(phi))); };
    const QuadratureResult r = integrate_adaptive(azimuthal, 0.0, 2.0 * kPi, inner);
    inner_evals += r.evaluations;
    inner_error += r.error_estimate;
    return s * r.value;
  };

  // The integrand is even about theta = pi/2 because the cloud stays in the
  // z = 0 plane, so integrate the upper hemisphere and double it.
  QuadratureResult outer = integrate_adaptive(polar, 0.0, 0.5 * kPi, axis);
  const double scale = 2.0 / (2.0 * std::pow(kPi, 1.5));
  QuadratureResult out;
  out.value = std::clamp(outer.value * scale, 0.0, 1.0);
  out.error_estimate = (outer.error_estimate + inner_error) * scale;
  out.evaluations = outer.evaluations + inner_evals;
  return out;
}

double closed_form_parallel(double t_star, const DimensionlessEnv& env) {
  require_positive_time(t_star);
  if (env.pe_perp != 0.0) {
    throw ParameterError("closed form requires flow parallel to the transmitter-receiver axis (pe_perp == 0)");
  }
  const double R = env.receiver_radius;
  const double sqrt_t = std::sqrt(t_star);
  const double distance = std::abs(env.transmitter_distance - env.pe_par * t_star);
  if (distance < kSingularDistance) {
    const double rho = R / (2.0 * sqrt_t);
    return std::clamp(std::erf(rho) - 2.0 * rho / kSqrtPi * std::exp(-rho * rho), 0.0, 1.0);
  }
  const double inside = 0.5 * erf_diff((R + distance) / (2.0 * sqrt_t), (distance - R) / (2.0 * sqrt_t));
  // exp(-(d+R)^2/4t) - exp(-(d-R)^2/4t) = exp(-(d-R)^2/4t) * expm1(-dR/t)
  const double gap = distance - R;
  const double shell = sqrt_t / (kSqrtPi * distance) * std::exp(-gap * gap / (4.0 * t_star)) *
                       std::expm1(-distance * R / t_star);
  return std::clamp(inside + shell, 0.0, 1.0);
}

double expected_count_uca(double t_star, const DimensionlessEnv& env) {
  require_positive_time(t_star);
  const double along = env.transmitter_distance - env.pe_par * t_star;
  return env.receiver_volume() * std::pow(4.0 * kPi * t_star, -1.5) *
         std::exp(-along * along / (4.0 * t_star) - t_star * env.pe_perp * env.pe_perp / 4.0);
}

double expected_count_exact(double t_star, const DimensionlessEnv& env, const QuadratureSpec& spec) {
  if (env.pe_perp == 0.0) return closed_form_parallel(t_star, env);
  return expected_count_quadrature(t_star, env, spec).value;
}

std::optional<double> uca_relative_deviation(double t_star, const DimensionlessEnv& env, const QuadratureSpec& spec) {
  const double exact = expected_count_exact(t_star, env, spec);
  if (!(exact >= kUnderflowFloor)) return std::nullopt;
  return (expected_count_uca(t_star, env) - exact) / exact;
}

double expected_count(double t_star, const DimensionlessEnv& env, SignalMode mode, const QuadratureSpec& spec) {
  if (t_star <= 0) return 0.0;
  return mode == SignalMode::kExact ? expected_count_exact(t_star, env, spec) : expected_count_uca(t_star, env);
}

SignalProfile::SignalProfile(DimensionlessEnv env, SignalMode mode, std::vector<double> offsets, std::size_t isi_depth,
                             std::vector<double> table)
    : env_(std::move(env)), mode_(mode), offsets_(std::move(offsets)), isi_depth_(isi_depth), table_(std::move(table)) {
  if (offsets_.empty()) throw ParameterError("signal profile needs at least one sampling offset");
  if (table_.size() != (isi_depth_ + 1) * offsets_.size()) {
    throw ParameterError("signal profile table does not match (isi_depth + 1) x M");
  }
  for (double v : table_) {
    if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("signal profile entries must lie in [0, 1]");
  }
}

SignalProfile build_signal_profile(const DimensionlessEnv& env, SignalMode mode, std::size_t isi_depth,
                                   const QuadratureSpec& spec) {
  if (env.samples_per_interval == 0) throw ParameterError("samples per interval must be at least 1");
  std::vector<double> offsets(env.samples_per_interval);
  for (std::size_t m = 0; m < offsets.size(); ++m) {
    offsets[m] = static_cast<double>(m + 1) * env.bit_interval / static_cast<double>(env.samples_per_interval);
  }
  return build_signal_profile(env, mode, isi_depth, std::move(offsets), spec);
}

SignalProfile build_signal_profile(const DimensionlessEnv& env, SignalMode mode, std::size_t isi_depth,
                                   std::vector<double> offsets, const QuadratureSpec& spec) {
  std::vector<double> table;
  table.reserve((isi_depth + 1) * offsets.size());
  for (std::size_t lag = 0; lag <= isi_depth; ++lag) {
    for (double g : offsets) {
      // The uniform-concentration value can exceed one emission when the
      // cloud is tight and centered on the receiver.
      table.push_back(std::min(1.0, expected_count(g + static_cast<double>(lag) * env.bit_interval, env, mode, spec)));
    }
  }
  return SignalProfile(env, mode, std::move(offsets), isi_depth, std::move(table));
}

double mean_observed(std::size_t interval, std::size_t sample, std::span<const std::uint8_t> bits,
                     const SignalProfile& profile) {
  double mean = profile.noise_mean();
  const std::size_t lags = std::min(interval, profile.isi_depth());
  for (std::size_t lag = 0; lag <= lags; ++lag) {
    if (bits[interval - lag] != 0) mean += profile.molecules(lag, sample);
  }
  return mean;
}

double mean_observed(double t_seconds, std::span<const std::uint8_t> bits, const DimensionlessEnv& env,
                     SignalMode mode, const QuadratureSpec& spec) {
  double mean = env.noise_mean;
  if (t_seconds < 0) return mean;
  const double t_star = to_dimensionless_time(t_seconds, env);
  const auto emitted = static_cast<std::size_t>(std::floor(t_star / env.bit_interval)) + 1;
  const std::size_t last = std::min(emitted, bits.size());
  for (std::size_t j = 0; j < last; ++j) {
    if (bits[j] == 0) continue;
    mean += static_cast<double>(env.molecules_per_emission) *
            expected_count(t_star - static_cast<double>(j) * env.bit_interval, env, mode, spec);
  }
  return mean;
}

}  // namespace mcflow
