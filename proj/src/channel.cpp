#include "mcflow/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <tuple>

#include <fmt/format.h>

namespace mcflow {

std::string_view to_string(Backend backend) {
  return backend == Backend::kParticle ? "particle" : "statistical";
}

ObservationMatrix::ObservationMatrix(SamplingSchedule schedule, std::vector<std::uint8_t> bits, Backend backend,
                                     std::uint64_t seed)
    : schedule_(std::move(schedule)), bits_(std::move(bits)), backend_(backend), seed_(seed) {
  counts_.assign(bits_.size() * schedule_.samples_per_interval(), 0);
}

void ObservationMatrix::write_csv(std::ostream& out, bool header) const {
  if (header) out << "seed,backend,j,m,t_seconds,count,bit\n";
  for (std::size_t j = 0; j < intervals(); ++j) {
    for (std::size_t m = 0; m < samples_per_interval(); ++m) {
      out << fmt::format("{},{},{},{},{:.9e},{},{}\n", seed_, to_string(backend_), j + 1, m + 1,
                         schedule_.time(j, m), count(j, m), static_cast<int>(bits_[j]));
    }
  }
}

std::vector<std::uint8_t> draw_sequence(double p_one, std::size_t length, Rng& rng) {
  if (!(p_one >= 0.0 && p_one <= 1.0)) throw ParameterError("p_one must lie in [0, 1]");
  std::bernoulli_distribution bit(p_one);
  std::vector<std::uint8_t> bits(length);
  for (auto& b : bits) b = bit(rng) ? 1 : 0;
  return bits;
}

void ParticleState::emit(std::uint64_t count, double transmitter_offset) {
  x.insert(x.end(), count, -transmitter_offset);
  y.insert(y.end(), count, 0.0);
  z.insert(z.end(), count, 0.0);
  emitted += count;
}

void particle_step(ParticleState& state, double dt, const PhysicalEnv& env, Rng& rng) {
  if (!(dt > 0)) throw ParameterError("particle step must be positive");
  const double sigma = std::sqrt(2.0 * env.diffusion_coefficient * dt);
  const double dx = env.flow.vx * dt;
  const double dy = env.flow.vy * dt;
  const double dz = env.flow.vz * dt;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < state.size(); ++i) {
    state.x[i] += dx + sigma * normal(rng);
    state.y[i] += dy + sigma * normal(rng);
    state.z[i] += dz + sigma * normal(rng);
  }
  state.time += dt;
}

std::uint64_t observe_particles(const ParticleState& state, const Point3& center, double radius) {
  const double r2 = radius * radius;
  std::uint64_t inside = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double dx = state.x[i] - center.x;
    const double dy = state.y[i] - center.y;
    const double dz = state.z[i] - center.z;
    inside += (dx * dx + dy * dy + dz * dz <= r2) ? 1 : 0;
  }
  return inside;
}

double occupancy_bound(const Point3& position, double horizon, const PhysicalEnv& env) {
  if (!(horizon > 0)) return 0.0;
  const auto& v = env.flow;
  const double speed2 = v.vx * v.vx + v.vy * v.vy + v.vz * v.vz;
  double closest = 0.0;
  if (speed2 > 0) {
    const double along = -(position.x * v.vx + position.y * v.vy + position.z * v.vz) / speed2;
    closest = std::clamp(along, 0.0, horizon);
  }
  const double px = position.x + v.vx * closest;
  const double py = position.y + v.vy * closest;
  const double pz = position.z + v.vz * closest;
  const double gap = std::sqrt(px * px + py * py + pz * pz) - env.receiver_radius;
  if (gap <= 0) return 1.0;
  // Every receiver point stays at least `gap` from the drifting mean, so the
  // density there is bounded by the free-space kernel at distance `gap`,
  // maximized over the remaining time.
  const double D = env.diffusion_coefficient;
  const double tau = std::min(gap * gap / (6.0 * D), horizon);
  const double volume = 4.0 / 3.0 * std::numbers::pi * std::pow(env.receiver_radius, 3);
  const double density = std::pow(4.0 * std::numbers::pi * D * tau, -1.5) * std::exp(-gap * gap / (4.0 * D * tau));
  return std::min(1.0, volume * density);
}

namespace {

struct Event {
  std::int64_t step;
  int kind;  // 0 = sample, 1 = emission; samples at an instant come first
  std::size_t interval;
  std::size_t sample;
};

std::int64_t to_step(double t, double dt) { return std::llround(t / dt); }

void retire(ParticleState& state, double horizon, const PhysicalEnv& env, double threshold) {
  std::size_t kept = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (occupancy_bound({state.x[i], state.y[i], state.z[i]}, horizon, env) < threshold) continue;
    state.x[kept] = state.x[i];
    state.y[kept] = state.y[i];
    state.z[kept] = state.z[i];
    ++kept;
  }
  state.retired += state.size() - kept;
  state.x.resize(kept);
  state.y.resize(kept);
  state.z.resize(kept);
}

std::uint32_t poisson_draw(double mean, Rng& rng) {
  if (!(mean > 0)) return 0;
  std::poisson_distribution<std::uint32_t> draw(mean);
  return draw(rng);
}

}  // namespace

ObservationMatrix simulate_particle(std::span<const std::uint8_t> bits, const PhysicalEnv& env,
                                    const SamplingSchedule& schedule, std::uint64_t seed,
                                    const ParticleOptions& options) {
  env.validate();
  schedule.validate();
  const double dt = env.sim_step;

  std::vector<Event> events;
  events.reserve(bits.size() * (schedule.samples_per_interval() + 1));
  for (std::size_t j = 0; j < bits.size(); ++j) {
    if (bits[j] != 0) events.push_back({to_step(static_cast<double>(j) * schedule.bit_interval, dt), 1, j, 0});
    for (std::size_t m = 0; m < schedule.samples_per_interval(); ++m) {
      events.push_back({to_step(schedule.time(j, m), dt), 0, j, m});
    }
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return std::tie(a.step, a.kind, a.interval, a.sample) < std::tie(b.step, b.kind, b.interval, b.sample);
  });
  const std::int64_t last_sample_step = events.empty() ? 0 : to_step(schedule.time(bits.size() - 1,
                                                                                   schedule.samples_per_interval() - 1), dt);

  Rng rng = make_rng(seed);
  ParticleState state;
  ObservationMatrix obs(schedule, std::vector<std::uint8_t>(bits.begin(), bits.end()), Backend::kParticle, seed);
  std::int64_t current = 0;
  for (const Event& ev : events) {
    if (ev.step > current && state.size() > 0) {
      if (options.stepping == ParticleOptions::Stepping::kFixedStep) {
        for (std::int64_t k = current; k < ev.step; ++k) particle_step(state, dt, env, rng);
      } else {
        particle_step(state, static_cast<double>(ev.step - current) * dt, env, rng);
      }
    }
    current = std::max(current, ev.step);
    state.time = static_cast<double>(current) * dt;

    if (ev.kind == 0) {
      const auto signal = observe_particles(state, {0.0, 0.0, 0.0}, env.receiver_radius);
      const auto noise = poisson_draw(env.noise_mean, rng);
      obs.set_count(ev.interval, ev.sample, static_cast<std::uint32_t>(signal) + noise);
      continue;
    }
    if (options.retirement_threshold > 0 && state.size() > 0) {
      retire(state, static_cast<double>(last_sample_step - current) * dt, env, options.retirement_threshold);
    }
    if (state.size() + env.molecules_per_emission > options.particle_cap) {
      throw SimulationError(fmt::format("particle cap of {} exceeded at interval {}", options.particle_cap,
                                        ev.interval + 1));
    }
    state.emit(env.molecules_per_emission, env.transmitter_offset);
  }
  return obs;
}

ObservationMatrix simulate_statistical(std::span<const std::uint8_t> bits, const SignalProfile& profile,
                                       const SamplingSchedule& schedule, std::uint64_t seed) {
  if (schedule.samples_per_interval() != profile.samples_per_interval()) {
    throw ParameterError("schedule and signal profile disagree on samples per interval");
  }
  Rng rng = make_rng(seed);
  ObservationMatrix obs(schedule, std::vector<std::uint8_t>(bits.begin(), bits.end()), Backend::kStatistical, seed);
  for (std::size_t j = 0; j < bits.size(); ++j) {
    for (std::size_t m = 0; m < schedule.samples_per_interval(); ++m) {
      obs.set_count(j, m, poisson_draw(mean_observed(j, m, bits, profile), rng));
    }
  }
  return obs;
}

StatisticalChannel::StatisticalChannel(SignalProfile profile, SamplingSchedule schedule)
    : profile_(std::move(profile)), schedule_(std::move(schedule)) {
  schedule_.validate();
  if (schedule_.samples_per_interval() != profile_.samples_per_interval()) {
    throw ParameterError("schedule and signal profile disagree on samples per interval");
  }
}

ObservationMatrix StatisticalChannel::simulate(std::span<const std::uint8_t> bits, std::uint64_t seed) const {
  return simulate_statistical(bits, profile_, schedule_, seed);
}

ParticleChannel::ParticleChannel(PhysicalEnv env, SamplingSchedule schedule, ParticleOptions options)
    : env_(std::move(env)), schedule_(std::move(schedule)), options_(options) {
  env_.validate();
  schedule_.validate();
}

ObservationMatrix ParticleChannel::simulate(std::span<const std::uint8_t> bits, std::uint64_t seed) const {
  return simulate_particle(bits, env_, schedule_, seed, options_);
}

}  // namespace mcflow
