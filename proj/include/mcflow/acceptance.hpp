#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mcflow {

struct CriterionResult {
  std::string id;
  std::string title;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double budget_seconds = 0.0;
};

struct AcceptanceOptions {
  std::uint64_t seed = 1;
  std::size_t particle_trials = 1000;
  unsigned threads = 0;
  /// Criterion ids to run ("1", "2", ..., "6a", ..., "7"); empty runs all.
  std::vector<std::string> only;
};

[[nodiscard]] CriterionResult check_peak_signal(const AcceptanceOptions& opt);
[[nodiscard]] CriterionResult check_uca_bounds(const AcceptanceOptions& opt);
[[nodiscard]] CriterionResult check_closed_form_oracle(const AcceptanceOptions& opt);
[[nodiscard]] CriterionResult check_backend_consistency(const AcceptanceOptions& opt);
[[nodiscard]] CriterionResult check_viterbi_brute_force(const AcceptanceOptions& opt);
[[nodiscard]] std::vector<CriterionResult> check_ber_trends(const AcceptanceOptions& opt);
[[nodiscard]] CriterionResult check_no_isi_optimality(const AcceptanceOptions& opt);

/// Runs the selected criteria in order, calling `report` after each one.
/// A criterion that throws is recorded as failed with the message.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opt,
                                            const std::function<void(const CriterionResult&)>& report = {});

/// "PASS [1] title (0.12 s): detail"
[[nodiscard]] std::string format_result(const CriterionResult& r);

}  // namespace mcflow
