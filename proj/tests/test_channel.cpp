#include "doctest.h"

#include <cmath>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>

#include "mcflow/channel.hpp"

using namespace mcflow;

namespace {

DimensionlessEnv ref(std::uint32_t m = 5) {
  auto env = to_dimensionless(reference_environment());
  env.samples_per_interval = m;
  return env;
}

SamplingSchedule schedule_for(const DimensionlessEnv& env) {
  return SamplingSchedule::equally_spaced(to_dimensional_time(env.bit_interval, env), env.samples_per_interval);
}

struct Moments {
  double mean = 0;
  double var = 0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(xs.size() - 1);
  return m;
}

// p-value of a chi-square goodness-of-fit test of `counts` against
// Poisson(mean), pooling the upper tail.
double poisson_gof(const std::vector<std::uint32_t>& counts, double mean) {
  constexpr std::uint32_t kTop = 6;
  std::vector<double> observed(kTop + 1, 0.0);
  for (auto c : counts) observed[std::min(c, kTop)] += 1;
  const boost::math::poisson_distribution<double> pois(mean);
  double stat = 0;
  const double n = static_cast<double>(counts.size());
  for (std::uint32_t k = 0; k <= kTop; ++k) {
    const double p = k < kTop ? boost::math::pdf(pois, k) : 1 - boost::math::cdf(pois, kTop - 1);
    stat += (observed[k] - n * p) * (observed[k] - n * p) / (n * p);
  }
  return 1 - boost::math::cdf(boost::math::chi_squared_distribution<double>(kTop), stat);
}

}  // namespace

TEST_CASE("zero mean gives zero counts") {
  DimensionlessEnv env = ref();
  env.noise_mean = 0;
  const auto profile = build_signal_profile(env, SignalMode::kExact, 4);
  const std::vector<std::uint8_t> bits(5, 0);
  const auto obs = simulate_statistical(bits, profile, schedule_for(env), 3);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t m = 0; m < 5; ++m) CHECK(obs.count(j, m) == 0);
}

TEST_CASE("statistical counts are equidispersed") {
  const auto env = ref();
  const auto profile = build_signal_profile(env, SignalMode::kExact, 1);
  const auto schedule = schedule_for(env);
  const std::vector<std::uint8_t> bits{1, 1};
  std::vector<double> xs;
  for (std::uint64_t i = 0; i < 10000; ++i) xs.push_back(simulate_statistical(bits, profile, schedule, i).count(1, 0));
  const auto mom = moments(xs);
  const double mu = mean_observed(1, 0, bits, profile);
  const double se_mean = std::sqrt(mu / 1e4);
  const double se_var = mu * std::sqrt(2.0 / 1e4 + 1.0 / (mu * 1e4));
  CHECK(std::abs(mom.mean - mu) < 3 * se_mean);
  CHECK(std::abs(mom.var - mu) < 3 * se_var);
}

TEST_CASE("noise alone is Poisson in both backends") {
  DimensionlessEnv env = ref(100);
  env.molecules_per_emission = 0;
  const auto profile = build_signal_profile(env, SignalMode::kExact, 0);
  const auto schedule = schedule_for(env);
  const std::vector<std::uint8_t> bits(1000, 0);

  std::vector<std::uint32_t> stat;
  const auto s = simulate_statistical(bits, profile, schedule, 11);
  for (std::size_t j = 0; j < 1000; ++j)
    for (auto c : s.row(j)) stat.push_back(c);
  CHECK(stat.size() == 100000);
  CHECK(poisson_gof(stat, 1.0) > 0.01);

  // No 1 bits means no emissions, so the particle backend only adds noise.
  PhysicalEnv phys = reference_environment();
  std::vector<std::uint32_t> part;
  const auto p = simulate_particle(bits, phys, SamplingSchedule::equally_spaced(phys.bit_interval, 100), 12);
  for (std::size_t j = 0; j < 1000; ++j)
    for (auto c : p.row(j)) part.push_back(c);
  CHECK(poisson_gof(part, 1.0) > 0.01);
}

TEST_CASE("same seed reproduces the matrix") {
  const auto env = ref();
  const auto profile = build_signal_profile(env, SignalMode::kExact, 9);
  const auto schedule = schedule_for(env);
  Rng rng = make_rng(5);
  const auto bits = draw_sequence(0.5, 10, rng);
  auto same = [](const ObservationMatrix& a, const ObservationMatrix& b) {
    for (std::size_t j = 0; j < a.intervals(); ++j)
      for (std::size_t m = 0; m < a.samples_per_interval(); ++m)
        if (a.count(j, m) != b.count(j, m)) return false;
    return true;
  };
  CHECK(same(simulate_statistical(bits, profile, schedule, 9), simulate_statistical(bits, profile, schedule, 9)));
  CHECK_FALSE(same(simulate_statistical(bits, profile, schedule, 9), simulate_statistical(bits, profile, schedule, 10)));

  PhysicalEnv phys = reference_environment();
  phys.molecules_per_emission = 300;
  CHECK(same(simulate_particle(bits, phys, schedule, 4), simulate_particle(bits, phys, schedule, 4)));
}

TEST_CASE("particle single-emission mean matches the exact count") {
  PhysicalEnv phys = reference_environment();
  phys.noise_mean = 0;
  const auto env = to_dimensionless(phys);
  const auto schedule = SamplingSchedule::equally_spaced(phys.bit_interval, 5);
  const std::vector<std::uint8_t> bits{1};
  constexpr int kTrials = 200;
  for (std::size_t m = 0; m < 5; ++m) {
    std::vector<double> xs;
    for (int i = 0; i < kTrials; ++i) xs.push_back(simulate_particle(bits, phys, schedule, 100 + i).count(0, m));
    const double want = 1e4 * expected_count_exact(0.16 * (m + 1), env);
    const auto mom = moments(xs);
    CHECK(std::abs(mom.mean - want) < 3.5 * std::sqrt(want / kTrials));
  }
}

TEST_CASE("event-jump and fixed-step stepping agree in the mean") {
  PhysicalEnv phys = reference_environment();
  phys.molecules_per_emission = 2000;
  phys.noise_mean = 0;
  const auto schedule = SamplingSchedule::equally_spaced(phys.bit_interval, 2);
  const std::vector<std::uint8_t> bits{1, 0, 1};
  ParticleOptions jump, fixed;
  fixed.stepping = ParticleOptions::Stepping::kFixedStep;
  std::vector<double> a, b;
  for (int i = 0; i < 150; ++i) {
    const auto oa = simulate_particle(bits, phys, schedule, 7000 + i, jump);
    const auto ob = simulate_particle(bits, phys, schedule, 9000 + i, fixed);
    double sa = 0, sb = 0;
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t m = 0; m < 2; ++m) {
        sa += oa.count(j, m);
        sb += ob.count(j, m);
      }
    a.push_back(sa);
    b.push_back(sb);
  }
  const auto ma = moments(a), mb = moments(b);
  CHECK(std::abs(ma.mean - mb.mean) < 4 * std::sqrt(ma.var / 150 + mb.var / 150));
}

TEST_CASE("retirement does not bias counts") {
  PhysicalEnv phys = reference_environment();
  phys.molecules_per_emission = 1000;
  phys.noise_mean = 0;
  phys.flow.vx = 4e-3;  // sweeps molecules past the receiver
  const auto schedule = SamplingSchedule::equally_spaced(phys.bit_interval, 2);
  std::vector<std::uint8_t> bits(12, 1);
  ParticleOptions keep;
  keep.retirement_threshold = 0;
  std::vector<double> a, b;
  for (int i = 0; i < 100; ++i) {
    const auto oa = simulate_particle(bits, phys, schedule, 300 + i);
    const auto ob = simulate_particle(bits, phys, schedule, 600 + i, keep);
    double sa = 0, sb = 0;
    for (std::size_t m = 0; m < 2; ++m) {
      sa += oa.count(11, m);
      sb += ob.count(11, m);
    }
    a.push_back(sa);
    b.push_back(sb);
  }
  const auto ma = moments(a), mb = moments(b);
  CHECK(std::abs(ma.mean - mb.mean) < 4 * std::sqrt(ma.var / 100 + mb.var / 100));
}

TEST_CASE("occupancy bound") {
  PhysicalEnv phys = reference_environment();
  CHECK(occupancy_bound({0, 0, 0}, 1e-3, phys) == 1.0);
  CHECK(occupancy_bound({20e-6, 0, 0}, 1e-4, phys) < 1e-9);
  CHECK(occupancy_bound({20e-6, 0, 0}, 0.0, phys) == 0.0);
  // downstream of the receiver, flow carries it further away
  phys.flow.vx = 5e-3;
  CHECK(occupancy_bound({20e-6, 0, 0}, 1e-2, phys) < 1e-9);
  // same distance upstream: the flow brings it back through the receiver
  CHECK(occupancy_bound({-20e-6, 0, 0}, 1e-2, phys) == 1.0);
  // but not if the horizon ends first
  CHECK(occupancy_bound({-20e-6, 0, 0}, 1e-3, phys) < 1e-9);
}

TEST_CASE("particle cap") {
  PhysicalEnv phys = reference_environment();
  ParticleOptions opt;
  opt.particle_cap = 15000;
  opt.retirement_threshold = 0;
  const std::vector<std::uint8_t> bits{1, 1};
  CHECK_THROWS_AS((void)simulate_particle(bits, phys, SamplingSchedule::equally_spaced(phys.bit_interval, 1), 1, opt),
                  SimulationError);
}

TEST_CASE("particle bookkeeping") {
  PhysicalEnv phys = reference_environment();
  ParticleState state;
  state.emit(100, phys.transmitter_offset);
  CHECK(state.size() == 100);
  CHECK(state.emitted == 100);
  CHECK(observe_particles(state, {0, 0, 0}, phys.receiver_radius) == 0);
  CHECK(observe_particles(state, {-phys.transmitter_offset, 0, 0}, phys.receiver_radius) == 100);
  // boundary counts as inside
  CHECK(observe_particles(state, {-phys.transmitter_offset + 0.5, 0, 0}, 0.5) == 100);
  Rng rng = make_rng(1);
  particle_step(state, 1e-4, phys, rng);
  CHECK(state.time == doctest::Approx(1e-4));
  CHECK_THROWS_AS(particle_step(state, 0.0, phys, rng), ParameterError);
}

TEST_CASE("bit draws") {
  Rng rng = make_rng(2);
  for (auto b : draw_sequence(0.0, 50, rng)) CHECK(b == 0);
  for (auto b : draw_sequence(1.0, 50, rng)) CHECK(b == 1);
  CHECK_THROWS_AS((void)draw_sequence(1.5, 5, rng), ParameterError);
}

TEST_CASE("observation CSV") {
  const auto env = ref(2);
  const auto profile = build_signal_profile(env, SignalMode::kExact, 1);
  const std::vector<std::uint8_t> bits{1, 0};
  const auto obs = simulate_statistical(bits, profile, schedule_for(env), 42);
  std::ostringstream out;
  obs.write_csv(out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "seed,backend,j,m,t_seconds,count,bit");
  std::getline(in, line);
  CHECK(line.rfind("42,statistical,1,1,1.000000000e-04,", 0) == 0);
  int rows = 1;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("mismatched schedule and profile") {
  const auto env = ref(5);
  const auto profile = build_signal_profile(env, SignalMode::kExact, 0);
  CHECK_THROWS_AS(StatisticalChannel(profile, SamplingSchedule::equally_spaced(0.2e-3, 3)), ParameterError);
}
