#include "mcflow/sampling.hpp"

#include <cmath>

#include "mcflow/environment.hpp"

namespace mcflow {

SamplingSchedule SamplingSchedule::equally_spaced(double bit_interval, std::uint32_t samples_per_interval) {
  if (samples_per_interval == 0) throw ParameterError("samples per interval must be at least 1");
  SamplingSchedule s;
  s.bit_interval = bit_interval;
  s.offsets.resize(samples_per_interval);
  for (std::uint32_t m = 0; m < samples_per_interval; ++m) {
    s.offsets[m] = bit_interval * static_cast<double>(m + 1) / static_cast<double>(samples_per_interval);
  }
  s.validate();
  return s;
}

void SamplingSchedule::validate() const {
  if (!(bit_interval > 0) || !std::isfinite(bit_interval)) throw ParameterError("bit interval must be positive");
  if (offsets.empty()) throw ParameterError("schedule needs at least one sample per interval");
  double prev = 0.0;
  for (double g : offsets) {
    if (!(g > prev)) throw ParameterError("sampling offsets must be positive and strictly increasing");
    prev = g;
  }
  // Allow a rounding ulp on the last offset, which is T_int itself by default.
  if (prev > bit_interval * (1.0 + 1e-12)) throw ParameterError("sampling offsets must not exceed the bit interval");
}

}  // namespace mcflow
