#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "setid/crossfit.hpp"
#include "setid/dgp.hpp"

namespace setid::cli {

enum class Command { ESTIMATE, SIMULATE, COVERAGE };
enum class Variant { ORTHOGONAL_CROSSFIT, ORTHOGONAL_NOSPLIT, NAIVE, ORACLE };

std::string to_string(Command c);
std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct RunConfig {
  Command command = Command::ESTIMATE;
  Model model = Model::PLP;
  std::optional<DgpSpec> dgp;
  std::optional<std::string> data_path;
  LearnerSet learners = LearnerSet::defaults(Model::PLP);
  int K = 2;
  int grid_size = 64;
  int B = 500;
  double alpha = 0.05;
  int M = 100;
  std::vector<Variant> estimator_variants{Variant::ORTHOGONAL_CROSSFIT};
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  // Known second-moment matrix of the PLP residual; estimated when absent.
  std::optional<MatrixXd> sigma;
  double lambda_min = 1e-4;
  double lambda_max = 1e4;
};

// Parses the TOML document. Relative data_path and output_dir resolve against base_dir.
// Unknown keys and malformed values raise DataError.
RunConfig parse_config(const std::string& toml_text, Command command, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path, Command command);

// Exactly one of dgp / data_path per command, M >= 1, alpha in (0, 1), and
// the per-command minimums.
void validate(const RunConfig& config);

}  // namespace setid::cli
