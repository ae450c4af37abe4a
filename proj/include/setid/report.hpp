#pragma once

#include <json.hpp>
#include <map>
#include <optional>
#include <string>

#include "setid/bootstrap.hpp"
#include "setid/crossfit.hpp"
#include "setid/estimators.hpp"

namespace setid {

using Json = nlohmann::ordered_json;

Json to_json(const LearnerSpec& spec);
Json to_json(const LearnerSet& set, Model model);
Json to_json(const ConfidenceRegion& region);

struct ResultDocument {
  Model model = Model::PLP;
  Index n = 0;
  int K = 2;
  std::vector<VectorXd> grid;
  VectorXd sigma;
  std::optional<std::pair<double, double>> bounds;
  std::map<std::string, std::uint64_t> seeds;
  Json learners = Json::object();
};

Json to_json(const ResultDocument& doc);

// Pretty-printed with a trailing newline.
void write_json(const Json& doc, const std::string& path);

}  // namespace setid
