#include "mcflow/environment.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace mcflow {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ParameterError(what);
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void PhysicalEnv::validate() const {
  require(finite(diffusion_coefficient) && diffusion_coefficient > 0, "diffusion coefficient must be positive");
  require(finite(transmitter_offset) && transmitter_offset > 0, "transmitter offset must be positive");
  require(finite(receiver_radius) && receiver_radius > 0, "receiver radius must be positive");
  require(receiver_radius < transmitter_offset, "receiver must not contain the transmitter (r_obs < x0)");
  require(finite(flow.vx) && finite(flow.vy) && finite(flow.vz), "flow velocity must be finite");
  require(molecules_per_emission >= 1, "molecules per emission must be at least 1");
  require(finite(bit_interval) && bit_interval > 0, "bit interval must be positive");
  require(finite(noise_mean) && noise_mean >= 0, "noise mean must be non-negative");
  require(sequence_length >= 1, "sequence length must be at least 1");
  require(finite(p_one) && p_one >= 0 && p_one <= 1, "p_one must lie in [0, 1]");
  require(samples_per_interval >= 1, "samples per interval must be at least 1");
  require(finite(sim_step) && sim_step > 0, "simulation step must be positive");
}

double DimensionlessEnv::receiver_volume() const {
  return 4.0 / 3.0 * std::numbers::pi * receiver_radius * receiver_radius * receiver_radius;
}

DimensionlessEnv DimensionlessEnv::with_peclet(double par, double perp) const {
  DimensionlessEnv out = *this;
  out.pe_par = par;
  out.pe_perp = perp;
  return out;
}

double peclet(double velocity, double reference_length, double diffusion_coefficient) {
  return velocity * reference_length / diffusion_coefficient;
}

DimensionlessEnv to_dimensionless(const PhysicalEnv& env, double reference_length) {
  if (!(reference_length > 0) || !std::isfinite(reference_length)) {
    throw ParameterError(fmt::format("reference length must be positive, got {}", reference_length));
  }
  env.validate();

  const double L = reference_length;
  const double D = env.diffusion_coefficient;

  DimensionlessEnv out;
  out.reference_length = L;
  out.diffusion_coefficient = D;
  out.transmitter_distance = env.transmitter_offset / L;
  out.receiver_radius = env.receiver_radius / L;
  out.pe_par = peclet(env.flow.vx, L, D);
  // Rotate the y-z plane so the perpendicular drift lies along +y. When v_z
  // is zero the sign of v_y is kept as given.
  if (env.flow.vz == 0.0) {
    out.pe_perp = peclet(env.flow.vy, L, D);
  } else {
    out.pe_perp = std::hypot(peclet(env.flow.vy, L, D), peclet(env.flow.vz, L, D));
  }
  out.bit_interval = D * env.bit_interval / (L * L);
  out.sim_step = D * env.sim_step / (L * L);
  out.molecules_per_emission = env.molecules_per_emission;
  out.sequence_length = env.sequence_length;
  out.samples_per_interval = env.samples_per_interval;
  out.p_one = env.p_one;
  out.noise_mean = env.noise_mean;
  return out;
}

DimensionlessEnv to_dimensionless(const PhysicalEnv& env) {
  return to_dimensionless(env, env.transmitter_offset);
}

PhysicalEnv to_dimensional(const DimensionlessEnv& env) {
  const double L = env.reference_length;
  const double D = env.diffusion_coefficient;
  PhysicalEnv out;
  out.diffusion_coefficient = D;
  out.transmitter_offset = env.transmitter_distance * L;
  out.receiver_radius = env.receiver_radius * L;
  out.flow = FlowVector{env.pe_par * D / L, env.pe_perp * D / L, 0.0};
  out.molecules_per_emission = env.molecules_per_emission;
  out.bit_interval = env.bit_interval * L * L / D;
  out.noise_mean = env.noise_mean;
  out.sequence_length = env.sequence_length;
  out.p_one = env.p_one;
  out.samples_per_interval = env.samples_per_interval;
  out.sim_step = env.sim_step * L * L / D;
  return out;
}

double to_dimensional_time(double t_star, const DimensionlessEnv& env) {
  return t_star * env.reference_length * env.reference_length / env.diffusion_coefficient;
}

double to_dimensionless_time(double t_seconds, const DimensionlessEnv& env) {
  return t_seconds * env.diffusion_coefficient / (env.reference_length * env.reference_length);
}

PhysicalEnv reference_environment() { return PhysicalEnv{}; }

}  // namespace mcflow
