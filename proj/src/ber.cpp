#include "mcflow/ber.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/format.h>

namespace mcflow {

Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double z) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

const BerEstimate& BerReport::at(const std::string& detector) const {
  for (const auto& e : estimates) {
    if (e.detector == detector) return e;
  }
  throw std::out_of_range(fmt::format("no BER estimate for detector '{}'", detector));
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

BerReport estimate_ber(const std::vector<std::shared_ptr<const Detector>>& detectors, const Channel& channel,
                       double p_one, std::size_t sequence_length, std::size_t n_sequences, std::uint64_t seed,
                       unsigned threads) {
  if (n_sequences == 0) throw ParameterError("need at least one sequence");
  if (detectors.empty()) throw ParameterError("need at least one detector");

  // errors[i * D + d]: bit errors of detector d on sequence i.
  const std::size_t D = detectors.size();
  std::vector<std::uint64_t> errors(n_sequences * D, 0);
  parallel_for(n_sequences, threads, [&](std::size_t i) {
    Rng bit_rng = make_rng(derive_seed(seed, 2 * i));
    const auto bits = draw_sequence(p_one, sequence_length, bit_rng);
    const ObservationMatrix obs = channel.simulate(bits, derive_seed(seed, 2 * i + 1));
    for (std::size_t d = 0; d < D; ++d) {
      const auto decided = detectors[d]->detect(obs);
      std::uint64_t wrong = 0;
      for (std::size_t j = 0; j < bits.size(); ++j) wrong += decided[j] != bits[j] ? 1 : 0;
      errors[i * D + d] = wrong;
    }
  });

  BerReport report;
  report.backend = channel.backend();
  report.samples_per_interval = static_cast<std::uint32_t>(channel.schedule().samples_per_interval());
  report.n_sequences = n_sequences;
  report.seed = seed;
  for (std::size_t d = 0; d < D; ++d) {
    BerEstimate e;
    e.detector = detectors[d]->name();
    for (std::size_t i = 0; i < n_sequences; ++i) e.errors += errors[i * D + d];
    e.bits = static_cast<std::uint64_t>(n_sequences) * sequence_length;
    e.ber = e.bits ? static_cast<double>(e.errors) / static_cast<double>(e.bits) : 0.0;
    e.ci = wilson_interval(e.errors, e.bits);
    report.estimates.push_back(std::move(e));
  }
  return report;
}

}  // namespace mcflow
