#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mcflow {

/// Raised when a parameter set violates a physical or sampling invariant.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Steady uniform drift velocity in m/s. The transmitter sits at {-x0, 0, 0},
/// so a positive x component points from transmitter to receiver.
struct FlowVector {
  double vx = 0.0;
  double vy = 0.0;
  double vz = 0.0;
};

/// Channel parameters in SI units.
struct PhysicalEnv {
  double diffusion_coefficient = 1e-9;  // m^2/s
  double transmitter_offset = 0.5e-6;   // m
  double receiver_radius = 50e-9;       // m
  FlowVector flow{};                    // m/s
  std::uint64_t molecules_per_emission = 10000;
  double bit_interval = 0.2e-3;  // s
  double noise_mean = 1.0;       // molecules per sample
  std::uint32_t sequence_length = 100;
  double p_one = 0.5;
  std::uint32_t samples_per_interval = 5;
  double sim_step = 0.5e-6;  // s

  /// Throws ParameterError if any invariant is broken.
  void validate() const;
};

/// Reference-scaled view of a PhysicalEnv. Lengths are divided by the
/// reference length L, times by L^2/D, and drift enters through Peclet
/// numbers. The perpendicular component is always carried along +y.
struct DimensionlessEnv {
  double reference_length = 0.0;       // L in m
  double diffusion_coefficient = 0.0;  // D in m^2/s, kept for time conversion
  double transmitter_distance = 1.0;   // x0* = x0 / L
  double receiver_radius = 0.1;        // r_obs* = r_obs / L
  double pe_par = 0.0;
  double pe_perp = 0.0;
  double bit_interval = 0.8;  // t_int* = D T_int / L^2
  double sim_step = 0.0;      // dt* = D dt / L^2

  std::uint64_t molecules_per_emission = 10000;
  std::uint32_t sequence_length = 100;
  std::uint32_t samples_per_interval = 5;
  double p_one = 0.5;
  double noise_mean = 1.0;

  /// (4/3) pi r_obs*^3
  [[nodiscard]] double receiver_volume() const;

  /// Copy with the Peclet pair replaced. A negative pe_perp is allowed and
  /// mirrors the flow across the x-z plane.
  [[nodiscard]] DimensionlessEnv with_peclet(double par, double perp) const;
};

/// Scales `env` by `reference_length` (defaults to x0 when omitted). v_z is
/// folded into the perpendicular Peclet number by a rotation about the
/// transmitter-receiver axis.
[[nodiscard]] DimensionlessEnv to_dimensionless(const PhysicalEnv& env, double reference_length);
[[nodiscard]] DimensionlessEnv to_dimensionless(const PhysicalEnv& env);

/// Inverse of to_dimensionless for the quantities that survive the scaling.
/// Flow is reconstructed along x and y only.
[[nodiscard]] PhysicalEnv to_dimensional(const DimensionlessEnv& env);

[[nodiscard]] double to_dimensional_time(double t_star, const DimensionlessEnv& env);
[[nodiscard]] double to_dimensionless_time(double t_seconds, const DimensionlessEnv& env);

/// Peclet number v L / D for a single velocity component.
[[nodiscard]] double peclet(double velocity, double reference_length, double diffusion_coefficient);

/// The parameter set used for the detector study (N_EM = 1e4, T_int = 0.2 ms,
/// D = 1e-9 m^2/s, x0 = 0.5 um, r_obs = 50 nm, unit noise mean, dt = 0.5 us).
[[nodiscard]] PhysicalEnv reference_environment();

}  // namespace mcflow
