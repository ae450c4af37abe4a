#include "setid/report.hpp"

#include <fstream>

#include "setid/errors.hpp"

namespace setid {

namespace {

std::string penalty_name(Penalty::Kind k) {
  switch (k) {
    case Penalty::Kind::PLUGIN: return "PLUGIN";
    case Penalty::Kind::FIXED: return "FIXED";
    case Penalty::Kind::CV: return "CV";
  }
  return "?";
}

Json vector_json(const VectorXd& v) {
  Json out = Json::array();
  for (Index j = 0; j < v.size(); ++j) out.push_back(v(j));
  return out;
}

}  // namespace

Json to_json(const LearnerSpec& spec) {
  Json j;
  j["kind"] = to_string(spec.kind);
  Json pen;
  pen["kind"] = penalty_name(spec.penalty.kind);
  if (spec.penalty.kind == Penalty::Kind::FIXED) pen["lambda"] = spec.penalty.lambda;
  if (spec.penalty.kind == Penalty::Kind::CV) pen["folds"] = spec.penalty.folds;
  j["penalty"] = pen;
  if (spec.kind == LearnerKind::EMPIRICAL_QUANTILE) {
    Json cells = Json::array();
    for (int c : spec.quantile_cells) cells.push_back(c + 1);
    j["quantile_cells"] = cells;
    j["jitter"] = spec.jitter;
    if (spec.jitter) j["jitter_sd"] = spec.jitter_sd;
  }
  if (spec.kind == LearnerKind::MEMORIZING) j["memorize_share"] = spec.memorize_share;
  j["max_iter"] = spec.max_iter;
  j["tol"] = spec.tol;
  return j;
}

Json to_json(const LearnerSet& set, Model model) {
  Json j;
  switch (model) {
    case Model::PLP:
    case Model::APD:
      j["eta"] = to_json(set.eta);
      j["gamma_l"] = to_json(set.gamma_l);
      j["gamma_ul"] = to_json(set.gamma_ul);
      break;
    case Model::LEE:
      j["selection"] = to_json(set.selection);
      j["quantile"] = to_json(set.quantile);
      j["control"] = to_json(set.control);
      if (set.propensity) {
        j["propensity"] = to_json(*set.propensity);
      } else {
        j["propensity"] = Json{{"kind", "KNOWN"}, {"value", set.known_propensity}};
      }
      break;
  }
  return j;
}

Json to_json(const ConfidenceRegion& region) {
  Json j;
  j["kind"] = to_string(region.kind);
  j["level"] = region.level;
  j["critical_value"] = region.critical_value;
  j["lower"] = vector_json(region.lower);
  j["upper"] = vector_json(region.upper);
  Json ex = Json::array();
  for (Index k : region.excluded) ex.push_back(k);
  j["excluded"] = ex;
  return j;
}

Json to_json(const ResultDocument& doc) {
  Json j;
  j["model"] = to_string(doc.model);
  j["n"] = doc.n;
  j["K"] = doc.K;
  Json grid = Json::array();
  for (const auto& q : doc.grid) grid.push_back(vector_json(q));
  j["grid"] = grid;
  j["sigma"] = vector_json(doc.sigma);
  if (doc.bounds) {
    j["bounds"] = Json{{"lower", doc.bounds->first}, {"upper", doc.bounds->second}};
  } else {
    j["bounds"] = nullptr;
  }
  Json seeds = Json::object();
  for (const auto& [k, v] : doc.seeds) seeds[k] = v;
  j["meta"] = Json{{"seeds", seeds}, {"learners", doc.learners}};
  return j;
}

void write_json(const Json& doc, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path + "'");
  f << doc.dump(2) << '\n';
}

}  // namespace setid
