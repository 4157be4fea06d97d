#include "mcflow/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <fmt/format.h>

namespace mcflow {

namespace {

template <unsigned N>
double panel_rule(const std::function<double(double)>& f, double a, double b, std::uint64_t& evals) {
  // Boost stores the non-negative abscissas only.
  const auto& x = boost::math::quadrature::gauss<double, N>::abscissa();
  const auto& w = boost::math::quadrature::gauss<double, N>::weights();
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double sum = 0.0;
  std::size_t start = 0;
  if constexpr (N % 2 == 1) {
    sum = w[0] * f(mid);
    ++evals;
    start = 1;
  }
  for (std::size_t i = start; i < x.size(); ++i) {
    sum += w[i] * (f(mid - half * x[i]) + f(mid + half * x[i]));
    evals += 2;
  }
  return sum * half;
}

double panel(const std::function<double(double)>& f, double a, double b, QuadratureSpec::Scheme scheme,
             std::uint64_t& evals) {
  switch (scheme) {
    case QuadratureSpec::Scheme::kGaussLegendre8:
      return panel_rule<8>(f, a, b, evals);
    case QuadratureSpec::Scheme::kGaussLegendre16:
      break;
  }
  return panel_rule<16>(f, a, b, evals);
}

struct Refiner {
  const std::function<double(double)>& f;
  const QuadratureSpec& spec;
  double tolerance;
  QuadratureResult result{};

  void refine(double a, double b, double whole, double tol, std::uint32_t depth) {
    const double mid = 0.5 * (a + b);
    const double left = panel(f, a, mid, spec.scheme, result.evaluations);
    const double right = panel(f, mid, b, spec.scheme, result.evaluations);
    const double diff = std::abs(left + right - whole);
    // Differences at the level of round-off cannot be refined away.
    const double noise = 512.0 * std::numeric_limits<double>::epsilon() * (std::abs(left) + std::abs(right));
    if (diff <= std::max(tol, noise) || !std::isfinite(diff)) {
      if (!std::isfinite(diff)) throw QuadratureError("integrand produced a non-finite value");
      result.value += left + right;
      result.error_estimate += diff;
      return;
    }
    if (depth >= spec.max_depth) {
      throw QuadratureError(fmt::format("no convergence on [{:.6g}, {:.6g}] after {} bisections (residual {:.3g})",
                                        a, b, depth, diff));
    }
    refine(a, mid, left, 0.5 * tol, depth + 1);
    refine(mid, b, right, 0.5 * tol, depth + 1);
  }
};

}  // namespace

std::uint32_t QuadratureSpec::base_nodes() const {
  return base_panels * (scheme == Scheme::kGaussLegendre8 ? 8u : 16u);
}

void QuadratureSpec::validate() const {
  if (!(abs_tolerance > 0) || !(rel_tolerance >= 0)) throw QuadratureError("quadrature tolerance must be positive");
  if (base_panels == 0 || base_nodes() < 8) throw QuadratureError("at least 8 nodes per axis are required");
}

QuadratureResult integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                                    const QuadratureSpec& spec) {
  spec.validate();
  QuadratureResult coarse;
  const double width = (b - a) / spec.base_panels;
  std::vector<double> panels(spec.base_panels);
  double total = 0.0;
  for (std::uint32_t i = 0; i < spec.base_panels; ++i) {
    panels[i] = panel(f, a + i * width, a + (i + 1) * width, spec.scheme, coarse.evaluations);
    total += panels[i];
  }
  // The relative part of the tolerance is pinned to the coarse estimate so
  // that tiny integrals (far tails) are resolved to full relative accuracy.
  double tol = spec.abs_tolerance;
  if (spec.rel_tolerance > 0 && total != 0.0) tol = std::min(tol, spec.rel_tolerance * std::abs(total));
  Refiner refiner{f, spec, tol};
  refiner.result.evaluations = coarse.evaluations;
  for (std::uint32_t i = 0; i < spec.base_panels; ++i) {
    refiner.refine(a + i * width, a + (i + 1) * width, panels[i], tol / spec.base_panels, 0);
  }
  return refiner.result;
}

}  // namespace mcflow
