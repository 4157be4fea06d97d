#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "mcflow/environment.hpp"
#include "mcflow/rng.hpp"
#include "mcflow/sampling.hpp"
#include "mcflow/signal_model.hpp"

namespace mcflow {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Backend { kParticle, kStatistical };

[[nodiscard]] std::string_view to_string(Backend backend);

/// B x M receiver counts for one transmitted sequence.
class ObservationMatrix {
 public:
  ObservationMatrix(SamplingSchedule schedule, std::vector<std::uint8_t> bits, Backend backend, std::uint64_t seed);

  [[nodiscard]] std::size_t intervals() const { return bits_.size(); }
  [[nodiscard]] std::size_t samples_per_interval() const { return schedule_.samples_per_interval(); }
  [[nodiscard]] std::uint32_t count(std::size_t interval, std::size_t sample) const {
    return counts_[interval * samples_per_interval() + sample];
  }
  void set_count(std::size_t interval, std::size_t sample, std::uint32_t value) {
    counts_[interval * samples_per_interval() + sample] = value;
  }
  [[nodiscard]] std::span<const std::uint32_t> row(std::size_t interval) const {
    return std::span<const std::uint32_t>(counts_).subspan(interval * samples_per_interval(), samples_per_interval());
  }
  [[nodiscard]] std::span<const std::uint8_t> bits() const { return bits_; }
  [[nodiscard]] const SamplingSchedule& schedule() const { return schedule_; }
  [[nodiscard]] Backend backend() const { return backend_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  /// Header `seed,backend,j,m,t_seconds,count,bit`, one row per sample with
  /// one-based j and m.
  void write_csv(std::ostream& out, bool header = true) const;

 private:
  SamplingSchedule schedule_;
  std::vector<std::uint8_t> bits_;
  Backend backend_;
  std::uint64_t seed_;
  std::vector<std::uint32_t> counts_;
};

/// `length` independent Bernoulli(p_one) bits.
[[nodiscard]] std::vector<std::uint8_t> draw_sequence(double p_one, std::size_t length, Rng& rng);

/// Tracked molecules, positions in metres relative to the receiver center.
struct ParticleState {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> z;
  double time = 0.0;                // seconds since the first emission
  std::uint64_t emitted = 0;        // molecules released so far
  std::uint64_t retired = 0;        // molecules dropped as unable to return

  [[nodiscard]] std::size_t size() const { return x.size(); }
  /// Adds `count` molecules at the transmitter, {-x0, 0, 0}.
  void emit(std::uint64_t count, double transmitter_offset);
};

/// Advances every molecule by dt: drift v dt plus an independent
/// N(0, 2 D dt) displacement per axis. The increment is exact for any dt
/// because the domain is unbounded and molecules do not interact.
void particle_step(ParticleState& state, double dt, const PhysicalEnv& env, Rng& rng);

/// Molecules with squared distance to `center` at most radius^2.
[[nodiscard]] std::uint64_t observe_particles(const ParticleState& state, const Point3& center, double radius);

struct ParticleOptions {
  enum class Stepping {
    kEventJump,  // one exact increment between consecutive sample/emission instants
    kFixedStep,  // repeated increments of env.sim_step
  };
  Stepping stepping = Stepping::kEventJump;
  std::size_t particle_cap = 20'000'000;
  /// Molecules whose best-case future occupancy probability for any single
  /// sample is below this are dropped. Zero disables retirement.
  double retirement_threshold = 1e-9;
};

/// Upper bound on the probability that a molecule at `position` (m, relative
/// to the receiver) is inside the receiver at any instant within `horizon`
/// seconds, accounting for drift.
[[nodiscard]] double occupancy_bound(const Point3& position, double horizon, const PhysicalEnv& env);

/// Brownian-dynamics channel: N_EM molecules released at the start of every
/// interval whose bit is 1, counted at each sample instant (snapped to a
/// multiple of env.sim_step), plus an independent Poisson(noise_mean) count
/// per sample. Throws SimulationError if the particle cap is exceeded.
[[nodiscard]] ObservationMatrix simulate_particle(std::span<const std::uint8_t> bits, const PhysicalEnv& env,
                                                  const SamplingSchedule& schedule, std::uint64_t seed,
                                                  const ParticleOptions& options = {});

/// Poisson channel: each count drawn independently with mean
/// mean_observed(j, m, bits, profile).
[[nodiscard]] ObservationMatrix simulate_statistical(std::span<const std::uint8_t> bits, const SignalProfile& profile,
                                                     const SamplingSchedule& schedule, std::uint64_t seed);

/// Uniform front end over the two backends.
class Channel {
 public:
  virtual ~Channel() = default;
  [[nodiscard]] virtual Backend backend() const = 0;
  [[nodiscard]] virtual const SamplingSchedule& schedule() const = 0;
  [[nodiscard]] virtual ObservationMatrix simulate(std::span<const std::uint8_t> bits, std::uint64_t seed) const = 0;
};

class StatisticalChannel final : public Channel {
 public:
  StatisticalChannel(SignalProfile profile, SamplingSchedule schedule);
  [[nodiscard]] Backend backend() const override { return Backend::kStatistical; }
  [[nodiscard]] const SamplingSchedule& schedule() const override { return schedule_; }
  [[nodiscard]] const SignalProfile& profile() const { return profile_; }
  [[nodiscard]] ObservationMatrix simulate(std::span<const std::uint8_t> bits, std::uint64_t seed) const override;

 private:
  SignalProfile profile_;
  SamplingSchedule schedule_;
};

class ParticleChannel final : public Channel {
 public:
  ParticleChannel(PhysicalEnv env, SamplingSchedule schedule, ParticleOptions options = {});
  [[nodiscard]] Backend backend() const override { return Backend::kParticle; }
  [[nodiscard]] const SamplingSchedule& schedule() const override { return schedule_; }
  [[nodiscard]] ObservationMatrix simulate(std::span<const std::uint8_t> bits, std::uint64_t seed) const override;

 private:
  PhysicalEnv env_;
  SamplingSchedule schedule_;
  ParticleOptions options_;
};

}  // namespace mcflow
