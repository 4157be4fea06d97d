#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>

namespace mcflow {

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Settings for the nested theta x phi Gauss-Legendre integration.
struct QuadratureSpec {
  enum class Scheme { kGaussLegendre16, kGaussLegendre8 };

  Scheme scheme = Scheme::kGaussLegendre16;
  std::uint32_t base_panels = 2;  // per axis minimum; widened for narrow clouds
  double abs_tolerance = 1e-10;
  double rel_tolerance = 1e-9;
  std::uint32_t max_depth = 20;  // dyadic bisections below a base panel

  /// Nodes per axis at the base level (base_panels times the rule order).
  [[nodiscard]] std::uint32_t base_nodes() const;
  void validate() const;
};

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  std::uint64_t evaluations = 0;
};

/// Integrates `f` over [a, b]. The interval is split into spec.base_panels
/// equal panels; each panel is bisected until the panel estimate and the sum
/// of its two halves agree within the local share of the tolerance.
/// Throws QuadratureError if a panel is still unresolved at max_depth.
[[nodiscard]] QuadratureResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                                                  const QuadratureSpec& spec);

}  // namespace mcflow
