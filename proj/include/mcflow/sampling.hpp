#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mcflow {

/// Where the receiver samples inside each bit interval. Intervals and
/// samples are indexed from zero: interval j spans [j T_int, (j+1) T_int) and
/// its m-th sample is taken at j T_int + offsets[m]. Emission j happens at
/// j T_int, so offsets[m] is also the age of the current bit's molecules.
struct SamplingSchedule {
  double bit_interval = 0.0;    // seconds
  std::vector<double> offsets;  // seconds, strictly increasing in (0, T_int]

  /// offsets[m] = (m + 1) T_int / M
  [[nodiscard]] static SamplingSchedule equally_spaced(double bit_interval, std::uint32_t samples_per_interval);

  [[nodiscard]] std::size_t samples_per_interval() const { return offsets.size(); }
  [[nodiscard]] double time(std::size_t interval, std::size_t sample) const {
    return static_cast<double>(interval) * bit_interval + offsets[sample];
  }

  /// Throws ParameterError unless 0 < g(1) < ... < g(M) <= T_int.
  void validate() const;
};

}  // namespace mcflow
