#include "mcflow/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <fmt/format.h>

namespace mcflow {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kMaxMemory = 16;

/// log(n!) for the counts seen so far; grows on demand.
class LogFactorials {
 public:
  double operator()(std::uint32_t n) {
    while (table_.size() <= n) {
      const auto k = table_.size();
      table_.push_back(table_.back() + std::log(static_cast<double>(k)));
    }
    return table_[n];
  }

 private:
  std::vector<double> table_{0.0};
};

double log_pmf(std::uint32_t count, double mean, LogFactorials& lf) {
  if (mean <= 0) return count == 0 ? 0.0 : kNegInf;
  return static_cast<double>(count) * std::log(mean) - mean - lf(count);
}

}  // namespace

void WeightVector::validate() const {
  bool positive = false;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0) throw ParameterError("weights must be finite and non-negative");
    positive = positive || w > 0;
  }
  if (!positive) throw ParameterError("at least one weight must be positive");
}

WeightVector equal_weights(std::size_t samples_per_interval) {
  if (samples_per_interval == 0) throw ParameterError("need at least one sample per interval");
  return {std::vector<double>(samples_per_interval, 1.0), WeightKind::kEqual};
}

WeightVector matched_weights(const SignalProfile& profile) {
  WeightVector out{std::vector<double>(profile.samples_per_interval()), WeightKind::kMatched};
  for (std::size_t m = 0; m < out.weights.size(); ++m) out.weights[m] = profile.per_emission(0, m);
  const double peak = *std::max_element(out.weights.begin(), out.weights.end());
  if (!(peak > 0)) throw ParameterError("matched weights need a non-zero current-bit response");
  for (double& w : out.weights) w /= peak;
  return out;
}

double weighted_sum(std::span<const std::uint32_t> row, const WeightVector& weights) {
  if (row.size() != weights.weights.size()) throw ParameterError("row length does not match the weight vector");
  double sum = 0.0;
  for (std::size_t m = 0; m < row.size(); ++m) sum += weights.weights[m] * static_cast<double>(row[m]);
  return sum;
}

std::uint8_t weighted_sum_decide(std::span<const std::uint32_t> row, const DecisionRule& rule) {
  return weighted_sum(row, rule.weights) >= rule.threshold ? 1 : 0;
}

ThresholdSearchResult optimize_threshold(const WeightVector& weights, std::span<const ObservationMatrix> training) {
  weights.validate();
  std::vector<std::pair<double, std::uint8_t>> samples;
  for (const auto& obs : training) {
    for (std::size_t j = 0; j < obs.intervals(); ++j) samples.emplace_back(weighted_sum(obs.row(j), weights), obs.bits()[j]);
  }
  if (samples.empty()) throw ParameterError("threshold search needs training data");
  std::sort(samples.begin(), samples.end());

  std::uint64_t ones = 0;
  for (const auto& s : samples) ones += s.second;

  // Threshold 0 decides every bit as 1, so all zeros are errors.
  double best_threshold = 0.0;
  std::uint64_t best_errors = samples.size() - ones;
  bool varied = false;
  std::uint64_t ones_below = 0;
  std::uint64_t zeros_below = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (samples[i].second ? ones_below : zeros_below) += 1;
    const bool last = i + 1 == samples.size();
    if (!last && samples[i + 1].first == samples[i].first) continue;
    // Threshold just above samples[i]: everything up to i decides 0.
    const double threshold = last ? samples[i].first + 1.0 : 0.5 * (samples[i].first + samples[i + 1].first);
    const std::uint64_t errors = ones_below + (samples.size() - ones - zeros_below);
    if (errors != best_errors) varied = true;
    if (errors < best_errors) {
      best_errors = errors;
      best_threshold = threshold;
    }
  }
  if (!varied) throw ParameterError("every threshold gives the same training error; environment is degenerate");
  return {DecisionRule{weights, best_threshold}, best_errors, samples.size()};
}

ThresholdSearchResult optimize_threshold(const WeightVector& weights, const SignalProfile& profile,
                                         std::size_t training_sequences, std::uint64_t seed) {
  if (training_sequences < 100) throw ParameterError("threshold search needs at least 100 training sequences");
  const auto& env = profile.env();
  const auto schedule = SamplingSchedule::equally_spaced(to_dimensional_time(env.bit_interval, env),
                                                         static_cast<std::uint32_t>(profile.samples_per_interval()));
  std::vector<ObservationMatrix> training;
  training.reserve(training_sequences);
  for (std::size_t i = 0; i < training_sequences; ++i) {
    Rng bit_rng = make_rng(derive_seed(seed, 2 * i));
    const auto bits = draw_sequence(env.p_one, env.sequence_length, bit_rng);
    training.push_back(simulate_statistical(bits, profile, schedule, derive_seed(seed, 2 * i + 1)));
  }
  return optimize_threshold(weights, training);
}

void SequenceDetectorConfig::validate() const {
  if (!profile) throw ParameterError("sequence detector needs a signal profile");
  if (memory > profile->isi_depth()) {
    throw ParameterError(fmt::format("memory {} exceeds the profile's ISI depth {}", memory, profile->isi_depth()));
  }
  if (memory > kMaxMemory) throw ParameterError(fmt::format("memory above {} is not supported", kMaxMemory));
}

double truncated_mean(std::uint8_t current, std::span<const std::uint8_t> history, std::size_t sample,
                      const SignalProfile& profile) {
  double mean = profile.noise_mean();
  if (current) mean += profile.molecules(0, sample);
  for (std::size_t k = 0; k < history.size(); ++k) {
    if (history[k]) mean += profile.molecules(k + 1, sample);
  }
  return mean;
}

double tail_mean(std::size_t interval, std::size_t sample, const SequenceDetectorConfig& cfg) {
  if (!cfg.expected_tail) return 0.0;
  const SignalProfile& profile = *cfg.profile;
  const std::size_t deepest = std::min(interval, profile.isi_depth());
  double sum = 0.0;
  for (std::size_t k = cfg.memory + 1; k <= deepest; ++k) sum += profile.molecules(k, sample);
  return profile.env().p_one * sum;
}

double poisson_log_pmf(std::uint32_t count, double mean) {
  if (mean <= 0) return count == 0 ? 0.0 : kNegInf;
  return static_cast<double>(count) * std::log(mean) - mean - std::lgamma(static_cast<double>(count) + 1.0);
}

std::vector<std::uint8_t> viterbi_sequence_detect(const ObservationMatrix& obs, const SequenceDetectorConfig& cfg) {
  cfg.validate();
  const SignalProfile& profile = *cfg.profile;
  const std::size_t M = obs.samples_per_interval();
  if (M != profile.samples_per_interval()) throw ParameterError("observation and profile disagree on M");
  const std::size_t F = cfg.memory;
  const std::size_t states = std::size_t{1} << F;
  const std::size_t mask = states - 1;
  const std::size_t B = obs.intervals();

  // Means for every (previous state, current bit) pair. Bit k of a state is
  // the bit k + 1 intervals back.
  std::vector<double> means(2 * states * M);
  std::vector<std::uint8_t> history(F);
  for (std::size_t s = 0; s < states; ++s) {
    for (std::size_t k = 0; k < F; ++k) history[k] = (s >> k) & 1u;
    for (std::uint8_t b = 0; b < 2; ++b) {
      for (std::size_t m = 0; m < M; ++m) means[(s * 2 + b) * M + m] = truncated_mean(b, history, m, profile);
    }
  }

  LogFactorials lf;
  std::vector<double> tail(M, 0.0);
  std::vector<double> metric(states, kNegInf);
  std::vector<double> next(states);
  std::vector<std::uint8_t> reachable(states, 0);
  std::vector<std::uint8_t> next_reachable(states);
  metric[0] = 0.0;
  reachable[0] = 1;
  std::vector<std::uint32_t> from(B * states);  // survivor predecessor per interval and state

  for (std::size_t j = 0; j < B; ++j) {
    std::fill(next.begin(), next.end(), kNegInf);
    std::fill(next_reachable.begin(), next_reachable.end(), 0);
    const auto row = obs.row(j);
    for (std::size_t m = 0; m < M; ++m) tail[m] = tail_mean(j, m, cfg);
    // Predecessors are visited with the oldest bit (and, for F = 0, the
    // current bit) ascending; only a strictly better metric replaces the
    // survivor, so ties keep the 0 branch.
    for (std::size_t s = 0; s < states; ++s) {
      if (!reachable[s]) continue;
      for (std::size_t b = 0; b < 2; ++b) {
        double branch = 0.0;
        const double* mu = &means[(s * 2 + b) * M];
        for (std::size_t m = 0; m < M; ++m) branch += log_pmf(row[m], mu[m] + tail[m], lf);
        const double total = metric[s] + branch;
        const std::size_t target = ((s << 1) | b) & mask;
        if (!next_reachable[target] || total > next[target]) {
          next[target] = total;
          next_reachable[target] = 1;
          from[j * states + target] = static_cast<std::uint32_t>((s << 1) | b);
        }
      }
    }
    metric.swap(next);
    reachable.swap(next_reachable);
  }

  // Best final state; the lowest index (most recent bits zero) wins ties.
  std::size_t best = 0;
  for (std::size_t s = 1; s < states; ++s) {
    if (reachable[s] && metric[s] > metric[best]) best = s;
  }

  std::vector<std::uint8_t> bits(B);
  std::size_t state = best;
  for (std::size_t j = B; j-- > 0;) {
    const std::uint32_t packed = from[j * states + state];
    bits[j] = static_cast<std::uint8_t>(packed & 1u);
    state = packed >> 1;
  }
  return bits;
}

double sequence_log_likelihood(const ObservationMatrix& obs, std::span<const std::uint8_t> bits,
                               const SequenceDetectorConfig& cfg) {
  cfg.validate();
  const SignalProfile& profile = *cfg.profile;
  std::vector<std::uint8_t> history(cfg.memory);
  double total = 0.0;
  for (std::size_t j = 0; j < obs.intervals(); ++j) {
    for (std::size_t k = 0; k < cfg.memory; ++k) history[k] = j > k ? bits[j - k - 1] : 0;
    for (std::size_t m = 0; m < obs.samples_per_interval(); ++m) {
      total += poisson_log_pmf(obs.count(j, m), truncated_mean(bits[j], history, m, profile) + tail_mean(j, m, cfg));
    }
  }
  return total;
}

WeightedSumDetector::WeightedSumDetector(std::string name, DecisionRule rule)
    : name_(std::move(name)), rule_(std::move(rule)) {
  rule_.weights.validate();
  if (!std::isfinite(rule_.threshold)) throw ParameterError("threshold must be finite");
}

std::vector<std::uint8_t> WeightedSumDetector::detect(const ObservationMatrix& obs) const {
  std::vector<std::uint8_t> bits(obs.intervals());
  for (std::size_t j = 0; j < bits.size(); ++j) bits[j] = weighted_sum_decide(obs.row(j), rule_);
  return bits;
}

SequenceDetector::SequenceDetector(SequenceDetectorConfig cfg, std::string name)
    : cfg_(std::move(cfg)), name_(std::move(name)) {
  cfg_.validate();
}

std::vector<std::uint8_t> SequenceDetector::detect(const ObservationMatrix& obs) const {
  return viterbi_sequence_detect(obs, cfg_);
}

}  // namespace mcflow
