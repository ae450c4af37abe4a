#pragma once

#include <exception>
#include <vector>

#include "setid/cli/config.hpp"

namespace setid::cli {

// Exit codes: 0 success, 1 unexpected failure, 2 bad input or configuration,
// 3 numerical degeneracy or an exhausted replication failure budget.
int exit_code_for(const std::exception& e);

// `setid-dml estimate|simulate|coverage --config <path> [overrides]`.
int run_cli(int argc, char** argv);

int cmd_estimate(const RunConfig& config);
int cmd_simulate(const RunConfig& config);
int cmd_coverage(const RunConfig& config);

struct ErrorSummary {
  double bias = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
  double mc_se = 0.0;  // sd / sqrt(count)
  Index count = 0;
};

// Summary of estimate - truth errors; sd uses the n - 1 divisor and is zero
// for fewer than two errors.
ErrorSummary summarize_errors(const std::vector<double>& errors);

// Binomial standard error sqrt(c (1 - c) / M).
double coverage_mc_se(double coverage, int M);

// Largest share of failed replications tolerated by simulate and coverage.
inline constexpr double kFailureBudget = 0.05;

}  // namespace setid::cli
