#include "doctest.h"

#include <cmath>
#include <limits>

#include "mcflow/ber.hpp"
#include "mcflow/detectors.hpp"

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

ObservationMatrix matrix(std::vector<std::vector<std::uint32_t>> rows, std::vector<std::uint8_t> bits) {
  const auto m = static_cast<std::uint32_t>(rows.front().size());
  ObservationMatrix obs(SamplingSchedule::equally_spaced(1.0, m), std::move(bits), Backend::kStatistical, 0);
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t k = 0; k < m; ++k) obs.set_count(j, k, rows[j][k]);
  return obs;
}

}  // namespace

TEST_CASE("weighted-sum decisions") {
  const std::vector<std::uint32_t> zeros{0, 0, 0};
  CHECK(weighted_sum_decide(zeros, {equal_weights(3), 0.5}) == 0);
  const std::vector<std::uint32_t> five{5};
  CHECK(weighted_sum_decide(five, {equal_weights(1), 5.0}) == 1);
  CHECK(weighted_sum_decide(five, {equal_weights(1), 5.0001}) == 0);
  CHECK_THROWS_AS((void)weighted_sum(five, equal_weights(2)), ParameterError);
}

TEST_CASE("joint positive scaling of weights and threshold keeps decisions") {
  Rng rng = make_rng(8);
  std::uniform_int_distribution<std::uint32_t> count(0, 12);
  std::uniform_real_distribution<double> weight(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    WeightVector w{{weight(rng), weight(rng), weight(rng) + 0.1}, WeightKind::kCustom};
    const double xi = weight(rng) * 10;
    const std::vector<std::uint32_t> row{count(rng), count(rng), count(rng)};
    for (double c : {0.5, 3.0, 1e3}) {
      WeightVector scaled = w;
      for (double& v : scaled.weights) v *= c;
      CHECK(weighted_sum_decide(row, {w, xi}) == weighted_sum_decide(row, {scaled, xi * c}));
    }
  }
}

TEST_CASE("raising a count never flips a 1 to 0") {
  Rng rng = make_rng(9);
  std::uniform_int_distribution<std::uint32_t> count(0, 10);
  const DecisionRule rule{{{1.0, 0.4, 0.7}, WeightKind::kCustom}, 6.0};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::uint32_t> row{count(rng), count(rng), count(rng)};
    const auto before = weighted_sum_decide(row, rule);
    row[trial % 3] += 1 + count(rng);
    CHECK(weighted_sum_decide(row, rule) >= before);
  }
}

TEST_CASE("weight validation") {
  CHECK_THROWS_AS((WeightVector{{0, 0}, WeightKind::kCustom}.validate()), ParameterError);
  CHECK_THROWS_AS((WeightVector{{1, -1}, WeightKind::kCustom}.validate()), ParameterError);
  CHECK_THROWS_AS((void)equal_weights(0), ParameterError);
  CHECK_THROWS_AS(WeightedSumDetector("x", {equal_weights(2), std::numeric_limits<double>::infinity()}),
                  ParameterError);
}

TEST_CASE("matched weights") {
  DimensionlessEnv env = ref(5);
  const auto flat = SignalProfile(env, SignalMode::kExact, {0.1, 0.2, 0.3}, 0, {0.01, 0.01, 0.01});
  for (double w : matched_weights(flat).weights) CHECK(w == 1.0);
  CHECK_THROWS_AS((void)matched_weights(SignalProfile(env, SignalMode::kExact, {0.1, 0.2}, 0, {0, 0})),
                  ParameterError);

  const auto still = matched_weights(build_signal_profile(env, SignalMode::kExact, 0));
  CHECK(std::max_element(still.weights.begin(), still.weights.end()) == still.weights.begin());
  CHECK(still.weights[0] == 1.0);

  // finer sampling shows the argmax moving earlier as the flow speeds up
  env.samples_per_interval = 40;
  auto argmax = [&](double pe) {
    const auto w = matched_weights(build_signal_profile(env.with_peclet(pe, 0), SignalMode::kExact, 0)).weights;
    return std::max_element(w.begin(), w.end()) - w.begin();
  };
  CHECK(argmax(0) == 7);  // offsets 0.02 apart; the peak is at t*=1/6
  CHECK(argmax(3) < argmax(0));
  CHECK(argmax(10) < argmax(3));
}

TEST_CASE("threshold search on separated noiseless data") {
  auto a = matrix({{0, 0}, {9, 8}, {1, 0}, {7, 9}}, {0, 1, 0, 1});
  auto b = matrix({{10, 10}, {0, 2}}, {1, 0});
  const std::vector<ObservationMatrix> training{a, b};
  const auto result = optimize_threshold(equal_weights(2), training);
  CHECK(result.training_errors == 0);
  CHECK(result.training_bits == 6);
  CHECK(result.rule.threshold > 2);
  CHECK(result.rule.threshold <= 15);
  CHECK(result.rule.threshold == 9.0);  // lowest zero-error midpoint between 2 and 16
}

TEST_CASE("threshold search is degenerate when nothing separates") {
  const std::vector<ObservationMatrix> training{matrix({{3}, {3}}, {0, 1})};
  // every threshold gives exactly one error
  CHECK_THROWS_AS((void)optimize_threshold(equal_weights(1), training), ParameterError);
}

TEST_CASE("threshold search matches an exhaustive integer grid") {
  const auto env = ref(5);
  const auto profile = build_signal_profile(env, SignalMode::kExact, full_isi_depth(env));
  const auto schedule = schedule_for(env);
  std::vector<ObservationMatrix> training;
  for (std::size_t i = 0; i < 100; ++i) {
    Rng rng = make_rng(derive_seed(77, 2 * i));
    training.push_back(simulate_statistical(draw_sequence(0.5, 100, rng), profile, schedule, derive_seed(77, 2 * i + 1)));
  }
  const auto found = optimize_threshold(equal_weights(5), training);
  std::uint64_t best_grid = std::numeric_limits<std::uint64_t>::max();
  for (int xi = 0; xi <= 50; ++xi) {
    std::uint64_t errors = 0;
    for (const auto& obs : training)
      for (std::size_t j = 0; j < obs.intervals(); ++j)
        errors += weighted_sum_decide(obs.row(j), {equal_weights(5), double(xi)}) != obs.bits()[j];
    best_grid = std::min(best_grid, errors);
  }
  CHECK(found.training_errors <= best_grid);
  CHECK(double(found.training_errors) <= 1.1 * double(best_grid));

  // rescaled weights reach the same training error
  WeightVector scaled = equal_weights(5);
  for (double& w : scaled.weights) w = 2.5;
  CHECK(optimize_threshold(scaled, training).training_errors == found.training_errors);
  CHECK_THROWS_AS((void)optimize_threshold(equal_weights(5), profile, 99, 1), ParameterError);
}

TEST_CASE("memoryless single-sample Viterbi is the per-bit likelihood ratio test") {
  const auto env = ref(1);
  auto profile = std::make_shared<const SignalProfile>(build_signal_profile(env, SignalMode::kExact, 3));
  const SequenceDetectorConfig cfg{0, profile};
  const double mu0 = profile->noise_mean();
  const double mu1 = mu0 + profile->molecules(0, 0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed);
    const auto bits = draw_sequence(0.5, 50, rng);
    const auto obs = simulate_statistical(bits, *profile, schedule_for(env), seed + 100);
    const auto detected = viterbi_sequence_detect(obs, cfg);
    for (std::size_t j = 0; j < 50; ++j) {
      const std::uint32_t s = obs.count(j, 0);
      const bool one = poisson_log_pmf(s, mu1) > poisson_log_pmf(s, mu0);
      CHECK(detected[j] == (one ? 1 : 0));
    }
  }
}

TEST_CASE("Viterbi equals exhaustive search for short sequences") {
  for (double pe : {0.0, 1.0, -0.5}) {
    DimensionlessEnv env = ref(3).with_peclet(pe, 0);
    env.sequence_length = 8;
    auto profile = std::make_shared<const SignalProfile>(build_signal_profile(env, SignalMode::kExact, 7));
    for (bool tail : {false, true}) {
      const SequenceDetectorConfig cfg{2, profile, tail};
      for (std::uint64_t seed = 0; seed < 15; ++seed) {
        Rng rng = make_rng(seed);
        const auto bits = draw_sequence(0.5, 8, rng);
        const auto obs = simulate_statistical(bits, *profile, schedule_for(env), seed + 50);
        std::vector<std::uint8_t> best, trial(8);
        double best_ll = -std::numeric_limits<double>::infinity();
        for (std::uint32_t code = 0; code < 256; ++code) {
          for (std::size_t j = 0; j < 8; ++j) trial[j] = (code >> (7 - j)) & 1u;
          const double ll = sequence_log_likelihood(obs, trial, cfg);
          if (ll > best_ll) {
            best_ll = ll;
            best = trial;
          }
        }
        CHECK(viterbi_sequence_detect(obs, cfg) == best);
      }
    }
  }
}

TEST_CASE("zero-signal channel decodes to all zeros") {
  DimensionlessEnv env = ref(2);
  env.molecules_per_emission = 0;
  auto profile = std::make_shared<const SignalProfile>(build_signal_profile(env, SignalMode::kExact, 4));
  const auto obs = matrix({{1, 0}, {3, 2}, {0, 0}, {5, 1}, {2, 2}}, {1, 0, 1, 1, 0});
  for (auto b : viterbi_sequence_detect(obs, {2, profile})) CHECK(b == 0);
}

TEST_CASE("sequence detector configuration") {
  const auto env = ref(2);
  auto profile = std::make_shared<const SignalProfile>(build_signal_profile(env, SignalMode::kExact, 1));
  CHECK_THROWS_AS((SequenceDetectorConfig{2, profile}.validate()), ParameterError);
  CHECK_THROWS_AS((SequenceDetectorConfig{0, nullptr}.validate()), ParameterError);
  CHECK_NOTHROW((SequenceDetectorConfig{1, profile}.validate()));
  const SequenceDetectorConfig with_tail{0, profile, true};
  CHECK(tail_mean(0, 0, with_tail) == 0.0);
  CHECK(tail_mean(3, 1, with_tail) == doctest::Approx(0.5 * profile->molecules(1, 1)));
  CHECK(tail_mean(3, 1, SequenceDetectorConfig{0, profile}) == 0.0);
}

TEST_CASE("without ISI the matched filter is as good as the sequence detector") {
  PhysicalEnv phys = reference_environment();
  phys.bit_interval *= 10;
  phys.samples_per_interval = 5;
  const auto env = to_dimensionless(phys);
  const auto profile = std::make_shared<const SignalProfile>(build_signal_profile(env, SignalMode::kExact, 99));
  const auto rule = optimize_threshold(matched_weights(*profile), *profile, 100, 31).rule;
  const std::vector<std::shared_ptr<const Detector>> dets{std::make_shared<WeightedSumDetector>("matched", rule),
                                                          std::make_shared<SequenceDetector>(SequenceDetectorConfig{2, profile})};
  const auto rep = estimate_ber(dets, StatisticalChannel(*profile, schedule_for(env)), 0.5, 100, 100, 5, 1);
  const auto& mf = rep.at("matched");
  const auto& ml = rep.at("optimal");
  CHECK(mf.ci.lo <= ml.ci.hi);
  CHECK(ml.ci.lo <= mf.ci.hi);
}

TEST_CASE("sequence detector with the expected tail beats weighted sums at large M") {
  for (std::uint32_t m : {10u, 40u}) {
    const auto env = ref(m);
    const auto profile = std::make_shared<const SignalProfile>(build_signal_profile(env, SignalMode::kExact, 99));
    const auto rule = optimize_threshold(matched_weights(*profile), *profile, 100, 3).rule;
    const std::vector<std::shared_ptr<const Detector>> dets{
        std::make_shared<WeightedSumDetector>("matched", rule),
        std::make_shared<SequenceDetector>(SequenceDetectorConfig{2, profile, true})};
    const auto rep = estimate_ber(dets, StatisticalChannel(*profile, schedule_for(env)), 0.5, 100, 100, 17, 1);
    CHECK(rep.at("optimal").ber <= rep.at("matched").ci.hi);
    if (m == 40) CHECK(rep.at("optimal").ci.hi < rep.at("matched").ci.lo);
  }
}
