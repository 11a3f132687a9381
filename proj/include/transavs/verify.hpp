#pragma once

// Oracle suite backing `transavs verify` and the acceptance tests. Each check
// compares a library computation against an independent reference and
// reports the worst discrepancy seen.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace transavs::verify {

struct CheckResult {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    std::size_t cases = 0;
    bool passed = false;
    std::string detail;
};

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kOracleTolerance = 1e-12;

/// Finite-difference check of each differentiable tensor op, one result per op.
std::vector<CheckResult> op_gradients(std::uint64_t seed = 1);
/// run_fusion end to end with N = 4, d = 8, N_1 = N_2 = 2.
CheckResult fusion_gradient(std::uint64_t seed = 2);
/// Combined objective on a tiny model with the selections frozen.
CheckResult total_loss_gradient(std::uint64_t seed = 3, bool recipe_terms = false);

CheckResult aqdl_oracle(std::size_t instances = 100, std::uint64_t seed = 4);
CheckResult aqml_oracle(std::size_t instances = 100, std::uint64_t seed = 5);
CheckResult attention_oracle(std::size_t instances = 20, std::uint64_t seed = 6);
CheckResult schedule_check();
CheckResult round_robin_check();
CheckResult jaccard_oracle(std::size_t pairs = 1000, std::uint64_t seed = 7);
CheckResult fscore_oracle(std::size_t pairs = 1000, std::uint64_t seed = 8);
CheckResult metric_conventions();
CheckResult fusion_rule_oracle(std::size_t instances = 100, std::uint64_t seed = 9);
CheckResult matching_oracle(std::size_t trials = 200, std::uint64_t seed = 10);

std::vector<CheckResult> run_all();

/// Fixed-width table, one row per check.
void print_table(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace transavs::verify
