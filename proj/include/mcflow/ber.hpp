#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mcflow/channel.hpp"
#include "mcflow/detectors.hpp"

namespace mcflow {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval for `successes` out of `trials`; z = 1.959964 gives
/// 95 % coverage. Returns [0, 1] when trials == 0.
[[nodiscard]] Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z = 1.959963984540054);

struct BerEstimate {
  std::string detector;
  std::uint64_t errors = 0;
  std::uint64_t bits = 0;
  double ber = 0.0;
  Interval ci{};
};

struct BerReport {
  double pe_par = 0.0;
  double pe_perp = 0.0;
  std::uint32_t samples_per_interval = 0;
  Backend backend = Backend::kStatistical;
  std::uint64_t n_sequences = 0;
  std::uint64_t seed = 0;
  std::vector<BerEstimate> estimates;  // one per detector, in input order

  [[nodiscard]] const BerEstimate& at(const std::string& detector) const;
};

/// Simulates `n_sequences` independent sequences of `sequence_length`
/// Bernoulli(p_one) bits through `channel` and runs every detector on the
/// same observations. Sequence i draws its bits from stream 2i and its
/// channel realization from stream 2i + 1 of `seed`, so results do not
/// depend on `threads` (0 means hardware concurrency).
[[nodiscard]] BerReport estimate_ber(const std::vector<std::shared_ptr<const Detector>>& detectors,
                                     const Channel& channel, double p_one, std::size_t sequence_length,
                                     std::size_t n_sequences, std::uint64_t seed, unsigned threads = 0);

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers (0 means
/// hardware concurrency). The first exception thrown is rethrown.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace mcflow
