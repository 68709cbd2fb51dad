#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

/// Oracle comparisons at fixed tolerances. Shared by the acceptance binary
/// and the `oracle-suite` subcommand.
namespace hha::oracle {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double budget_seconds = 0.0;
};

CheckResult check_forward_backward(std::uint64_t seed);
CheckResult check_single_mode_smoother(std::uint64_t seed);
CheckResult check_lqr_scalar(std::uint64_t seed);
CheckResult check_adjacency_grid(std::uint64_t seed);
CheckResult check_prior_gradient(std::uint64_t seed);
CheckResult check_dirichlet_kl(std::uint64_t seed);
CheckResult check_efe_enumeration(std::uint64_t seed);
CheckResult check_synthetic_recovery(std::uint64_t seed);

struct NamedCheck {
  int id;
  std::string name;
  std::function<CheckResult(std::uint64_t)> run;
};

/// Checks 1-8 in order.
std::vector<NamedCheck> oracle_checks();

/// One line: "[PASS] 3 lqr-scalar (0.01 s): detail".
std::string format(const CheckResult& result);

}  // namespace hha::oracle
