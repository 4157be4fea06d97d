#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mcflow/channel.hpp"
#include "mcflow/signal_model.hpp"

namespace mcflow {

enum class WeightKind { kEqual, kMatched, kCustom };

struct WeightVector {
  std::vector<double> weights;
  WeightKind kind = WeightKind::kCustom;

  /// Throws ParameterError unless every weight is finite and non-negative and
  /// at least one is positive.
  void validate() const;
};

/// Decide 1 when the weighted sum of the interval's samples reaches the
/// threshold (a sum exactly equal to the threshold decides 1).
struct DecisionRule {
  WeightVector weights;
  double threshold = 0.0;
};

[[nodiscard]] WeightVector equal_weights(std::size_t samples_per_interval);

/// Weights proportional to the current bit's expected contribution at each
/// sampling offset, scaled so the largest weight is 1.
/// Throws ParameterError if the current-bit response is zero everywhere.
[[nodiscard]] WeightVector matched_weights(const SignalProfile& profile);

[[nodiscard]] double weighted_sum(std::span<const std::uint32_t> row, const WeightVector& weights);
[[nodiscard]] std::uint8_t weighted_sum_decide(std::span<const std::uint32_t> row, const DecisionRule& rule);

struct ThresholdSearchResult {
  DecisionRule rule;
  std::uint64_t training_errors = 0;
  std::uint64_t training_bits = 0;
};

/// Picks the threshold that minimizes the empirical bit errors of `weights`
/// over `training`. Candidates are 0, the midpoints between consecutive
/// distinct weighted sums, and one past the largest sum; the empirical error
/// is constant between candidates, so this is the exact minimizer. The lowest
/// minimizing threshold wins ties. Throws ParameterError if every candidate
/// gives the same error count.
[[nodiscard]] ThresholdSearchResult optimize_threshold(const WeightVector& weights,
                                                       std::span<const ObservationMatrix> training);

/// Generates `training_sequences` (at least 100) sequences from the Poisson channel
/// described by `profile` and runs the search above.
[[nodiscard]] ThresholdSearchResult optimize_threshold(const WeightVector& weights, const SignalProfile& profile,
                                                       std::size_t training_sequences, std::uint64_t seed);

struct SequenceDetectorConfig {
  std::size_t memory = 2;  // F: prior intervals modeled explicitly
  std::shared_ptr<const SignalProfile> profile;
  // Add the p1-weighted average of emissions older than `memory` intervals to
  // every mean instead of dropping them.
  bool expected_tail = false;

  void validate() const;
};

/// Mean count of sample m given the current bit and the `memory` bits before
/// it (history[k] is the bit k + 1 intervals back). Emissions older than
/// `memory` intervals are ignored.
[[nodiscard]] double truncated_mean(std::uint8_t current, std::span<const std::uint8_t> history, std::size_t sample,
                                    const SignalProfile& profile);

/// Mean contribution of emissions more than `memory` intervals before
/// interval j at sample m, each weighted by the prior probability of a 1.
/// Zero unless cfg.expected_tail is set.
[[nodiscard]] double tail_mean(std::size_t interval, std::size_t sample, const SequenceDetectorConfig& cfg);

/// Maximum-likelihood sequence under independent Poisson samples whose means
/// are truncated to the current bit and `memory` prior bits, found by a
/// Viterbi search over the 2^memory most recent bits. Bits before the
/// sequence are taken as 0. Equal path metrics resolve toward 0. With
/// cfg.expected_tail, tail_mean is added to every mean.
[[nodiscard]] std::vector<std::uint8_t> viterbi_sequence_detect(const ObservationMatrix& obs,
                                                                const SequenceDetectorConfig& cfg);

/// Sum over all samples of log Pr(count | mean) for a hypothesized sequence,
/// using the same means as the Viterbi search.
[[nodiscard]] double sequence_log_likelihood(const ObservationMatrix& obs, std::span<const std::uint8_t> bits,
                                             const SequenceDetectorConfig& cfg);

/// log Pr(N = count) for N ~ Poisson(mean); -inf when impossible.
[[nodiscard]] double poisson_log_pmf(std::uint32_t count, double mean);

class Detector {
 public:
  virtual ~Detector() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual std::vector<std::uint8_t> detect(const ObservationMatrix& obs) const = 0;
};

class WeightedSumDetector final : public Detector {
 public:
  WeightedSumDetector(std::string name, DecisionRule rule);
  [[nodiscard]] std::string name() const override { return name_; }
  [[nodiscard]] const DecisionRule& rule() const { return rule_; }
  [[nodiscard]] std::vector<std::uint8_t> detect(const ObservationMatrix& obs) const override;

 private:
  std::string name_;
  DecisionRule rule_;
};

class SequenceDetector final : public Detector {
 public:
  explicit SequenceDetector(SequenceDetectorConfig cfg, std::string name = "optimal");
  [[nodiscard]] std::string name() const override { return name_; }
  [[nodiscard]] std::vector<std::uint8_t> detect(const ObservationMatrix& obs) const override;

 private:
  SequenceDetectorConfig cfg_;
  std::string name_;
};

}  // namespace mcflow
