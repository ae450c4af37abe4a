#include "setid/cli/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <tomlplusplus/toml.hpp>

#include "setid/errors.hpp"

namespace setid::cli {

std::string to_string(Command c) {
  switch (c) {
    case Command::ESTIMATE: return "estimate";
    case Command::SIMULATE: return "simulate";
    case Command::COVERAGE: return "coverage";
  }
  return "?";
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::ORTHOGONAL_CROSSFIT: return "ORTHOGONAL_CROSSFIT";
    case Variant::ORTHOGONAL_NOSPLIT: return "ORTHOGONAL_NOSPLIT";
    case Variant::NAIVE: return "NAIVE";
    case Variant::ORACLE: return "ORACLE";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::ORTHOGONAL_CROSSFIT, Variant::ORTHOGONAL_NOSPLIT, Variant::NAIVE, Variant::ORACLE})
    if (to_string(v) == s) return v;
  throw DataError("unknown estimator variant '" + s + "'");
}

namespace {

std::string where(const toml::node& node, const std::string& key) {
  const auto& src = node.source();
  std::ostringstream out;
  out << "'" << key << "'";
  if (src.begin.line) out << " (line " << src.begin.line << ")";
  return out.str();
}

void check_keys(const toml::table& tbl, const std::set<std::string>& allowed, const std::string& context) {
  for (const auto& [k, v] : tbl) {
    const std::string key(k.str());
    if (!allowed.count(key)) throw DataError("unknown key " + where(v, context + key));
  }
}

std::optional<std::int64_t> get_int(const toml::table& tbl, const std::string& key) {
  const toml::node* n = tbl.get(key);
  if (!n) return std::nullopt;
  if (auto v = n->value_exact<std::int64_t>()) return *v;
  throw DataError("expected an integer for " + where(*n, key));
}

std::optional<double> get_double(const toml::table& tbl, const std::string& key) {
  const toml::node* n = tbl.get(key);
  if (!n) return std::nullopt;
  if (auto v = n->value_exact<double>()) return *v;
  if (auto v = n->value_exact<std::int64_t>()) return static_cast<double>(*v);
  throw DataError("expected a number for " + where(*n, key));
}

std::optional<std::string> get_string(const toml::table& tbl, const std::string& key) {
  const toml::node* n = tbl.get(key);
  if (!n) return std::nullopt;
  if (auto v = n->value_exact<std::string>()) return *v;
  throw DataError("expected a string for " + where(*n, key));
}

std::optional<bool> get_bool(const toml::table& tbl, const std::string& key) {
  const toml::node* n = tbl.get(key);
  if (!n) return std::nullopt;
  if (auto v = n->value_exact<bool>()) return *v;
  throw DataError("expected a boolean for " + where(*n, key));
}

const toml::array* get_array(const toml::table& tbl, const std::string& key) {
  const toml::node* n = tbl.get(key);
  if (!n) return nullptr;
  if (const auto* a = n->as_array()) return a;
  throw DataError("expected an array for " + where(*n, key));
}

const toml::table* get_table(const toml::table& tbl, const std::string& key) {
  const toml::node* n = tbl.get(key);
  if (!n) return nullptr;
  if (const auto* t = n->as_table()) return t;
  throw DataError("expected a table for " + where(*n, key));
}

std::vector<double> numbers(const toml::array& arr, const std::string& key) {
  std::vector<double> out;
  for (const auto& el : arr) {
    if (auto v = el.value_exact<double>()) {
      out.push_back(*v);
    } else if (auto i = el.value_exact<std::int64_t>()) {
      out.push_back(static_cast<double>(*i));
    } else {
      throw DataError("expected numbers in " + where(el, key));
    }
  }
  return out;
}

int to_int(std::int64_t v, const std::string& key) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw DataError("'" + key + "' is out of range");
  return static_cast<int>(v);
}

Penalty::Kind penalty_from_string(const std::string& s) {
  if (s == "PLUGIN") return Penalty::Kind::PLUGIN;
  if (s == "FIXED") return Penalty::Kind::FIXED;
  if (s == "CV") return Penalty::Kind::CV;
  throw DataError("unknown penalty '" + s + "'");
}

void apply_learner(const toml::table& tbl, const std::string& role, LearnerSpec& spec) {
  const std::string ctx = "learners." + role + ".";
  check_keys(tbl,
             {"kind", "penalty", "lambda", "folds", "quantile_cells", "max_iter", "tol", "jitter", "jitter_sd",
              "memorize_share"},
             ctx);
  try {
    if (auto v = get_string(tbl, "kind")) spec.kind = learner_kind_from_string(*v);
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(ctx + "kind: " + e.what());
  }
  if (auto v = get_string(tbl, "penalty")) spec.penalty.kind = penalty_from_string(*v);
  if (auto v = get_double(tbl, "lambda")) {
    spec.penalty.lambda = *v;
    if (!tbl.get("penalty")) spec.penalty.kind = Penalty::Kind::FIXED;
  }
  if (auto v = get_int(tbl, "folds")) spec.penalty.folds = to_int(*v, ctx + "folds");
  if (const auto* arr = get_array(tbl, "quantile_cells")) {
    spec.quantile_cells.clear();
    for (double c : numbers(*arr, ctx + "quantile_cells")) {
      if (c < 1 || c != std::floor(c)) throw DataError(ctx + "quantile_cells entries are 1-based column indices");
      spec.quantile_cells.push_back(static_cast<int>(c) - 1);
    }
  }
  if (auto v = get_int(tbl, "max_iter")) spec.max_iter = to_int(*v, ctx + "max_iter");
  if (auto v = get_double(tbl, "tol")) spec.tol = *v;
  if (auto v = get_bool(tbl, "jitter")) spec.jitter = *v;
  if (auto v = get_double(tbl, "jitter_sd")) spec.jitter_sd = *v;
  if (auto v = get_double(tbl, "memorize_share")) spec.memorize_share = *v;
  try {
    validate(spec);
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(ctx.substr(0, ctx.size() - 1) + ": " + e.what());
  }
}

void apply_learners(const toml::table& tbl, LearnerSet& set) {
  check_keys(tbl, {"eta", "gamma_l", "gamma_ul", "selection", "quantile", "control", "propensity", "known_propensity"},
             "learners.");
  const std::pair<const char*, LearnerSpec*> roles[] = {{"eta", &set.eta},           {"gamma_l", &set.gamma_l},
                                                        {"gamma_ul", &set.gamma_ul}, {"selection", &set.selection},
                                                        {"quantile", &set.quantile}, {"control", &set.control}};
  for (const auto& [role, spec] : roles)
    if (const auto* t = get_table(tbl, role)) apply_learner(*t, role, *spec);
  if (const auto* t = get_table(tbl, "propensity")) {
    LearnerSpec spec = set.propensity.value_or(LearnerSpec{});
    apply_learner(*t, "propensity", spec);
    set.propensity = spec;
  }
  if (auto v = get_double(tbl, "known_propensity")) {
    if (!(*v > 0.0 && *v < 1.0)) throw DataError("learners.known_propensity must lie in (0, 1)");
    set.known_propensity = *v;
  }
}

DgpSpec parse_dgp(const toml::table& tbl, Model model) {
  check_keys(tbl,
             {"n", "p", "sparsity", "beta0", "interval_width", "noise_sd", "residual_sd", "selection_shift"},
             "dgp.");
  DgpSpec spec;
  spec.model = model;
  if (auto v = get_int(tbl, "n")) spec.n = *v;
  if (auto v = get_int(tbl, "p")) spec.p = *v;
  if (auto v = get_int(tbl, "sparsity")) spec.sparsity = *v;
  if (const toml::node* n = tbl.get("beta0")) {
    std::vector<double> b;
    if (const auto* arr = n->as_array()) {
      b = numbers(*arr, "dgp.beta0");
    } else if (auto v = get_double(tbl, "beta0")) {
      b = {*v};
    }
    if (b.empty()) throw DataError("dgp.beta0 must not be empty");
    spec.beta0 = Eigen::Map<const VectorXd>(b.data(), static_cast<Index>(b.size()));
  }
  if (auto v = get_double(tbl, "interval_width")) spec.interval_width = *v;
  if (auto v = get_double(tbl, "noise_sd")) spec.noise_sd = *v;
  if (auto v = get_double(tbl, "residual_sd")) spec.residual_sd = *v;
  if (auto v = get_double(tbl, "selection_shift")) spec.selection_shift = *v;
  try {
    validate(spec);
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(std::string("dgp: ") + e.what());
  }
  return spec;
}

}  // namespace

RunConfig parse_config(const std::string& toml_text, Command command, const std::string& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw DataError(std::string("config: ") + std::string(e.description()), e.source().begin.line);
  }
  check_keys(root,
             {"command", "model", "dgp", "data_path", "learners", "K", "grid_size", "B", "alpha", "M",
              "estimator_variants", "seed", "output_dir", "sigma", "lambda_min", "lambda_max"},
             "");
  RunConfig cfg;
  cfg.command = command;
  if (auto v = get_string(root, "command")) {
    if (*v != to_string(command)) throw DataError("config is for '" + *v + "', not '" + to_string(command) + "'");
  }
  const auto model = get_string(root, "model");
  if (!model) throw DataError("config lacks 'model'");
  try {
    cfg.model = model_from_string(*model);
  } catch (const std::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  }
  cfg.learners = LearnerSet::defaults(cfg.model);
  if (const auto* t = get_table(root, "learners")) apply_learners(*t, cfg.learners);
  if (const auto* t = get_table(root, "dgp")) cfg.dgp = parse_dgp(*t, cfg.model);
  if (auto v = get_string(root, "data_path")) {
    std::filesystem::path p(*v);
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    cfg.data_path = p.lexically_normal().string();
  }
  if (auto v = get_int(root, "K")) cfg.K = to_int(*v, "K");
  if (auto v = get_int(root, "grid_size")) cfg.grid_size = to_int(*v, "grid_size");
  if (auto v = get_int(root, "B")) cfg.B = to_int(*v, "B");
  if (auto v = get_double(root, "alpha")) cfg.alpha = *v;
  if (auto v = get_int(root, "M")) cfg.M = to_int(*v, "M");
  if (const auto* arr = get_array(root, "estimator_variants")) {
    cfg.estimator_variants.clear();
    for (const auto& el : *arr) {
      auto s = el.value_exact<std::string>();
      if (!s) throw DataError("expected strings in " + where(el, "estimator_variants"));
      cfg.estimator_variants.push_back(variant_from_string(*s));
    }
  }
  if (auto v = get_int(root, "seed")) {
    if (*v < 0) throw DataError("'seed' must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(*v);
  }
  if (auto v = get_string(root, "output_dir")) {
    std::filesystem::path p(*v);
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    cfg.output_dir = p.lexically_normal().string();
  }
  if (const auto* arr = get_array(root, "sigma")) {
    std::vector<std::vector<double>> rows;
    for (const auto& el : *arr) {
      const auto* row = el.as_array();
      if (!row) throw DataError("'sigma' must be an array of rows");
      rows.push_back(numbers(*row, "sigma"));
    }
    const Index d = static_cast<Index>(rows.size());
    MatrixXd S(d, d);
    for (Index a = 0; a < d; ++a) {
      if (static_cast<Index>(rows[a].size()) != d) throw DataError("'sigma' must be square");
      for (Index b = 0; b < d; ++b) S(a, b) = rows[a][b];
    }
    cfg.sigma = S;
  }
  if (auto v = get_double(root, "lambda_min")) cfg.lambda_min = *v;
  if (auto v = get_double(root, "lambda_max")) cfg.lambda_max = *v;
  return cfg;
}

RunConfig load_config(const std::string& path, Command command) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read config '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  const auto base = std::filesystem::path(path).parent_path();
  return parse_config(buf.str(), command, base.empty() ? "." : base.string());
}

void validate(const RunConfig& c) {
  if (c.command == Command::ESTIMATE) {
    if (!c.data_path || c.dgp) throw DataError("estimate needs data_path and no [dgp] table");
  } else {
    if (!c.dgp || c.data_path) throw DataError(to_string(c.command) + " needs a [dgp] table and no data_path");
    if (c.dgp->model != c.model) throw DataError("[dgp] model differs from 'model'");
  }
  if (c.M < 1) throw DataError("M must be at least 1");
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw DataError("alpha must lie in (0, 1)");
  if (c.K < 2) throw DataError("K must be at least 2");
  if (c.grid_size < 1) throw DataError("grid_size must be at least 1");
  if (c.B < 1) throw DataError("B must be at least 1");
  if (c.command == Command::COVERAGE) {
    if (c.M < 50) throw DataError("coverage needs M >= 50");
    if (c.B < 100) throw DataError("coverage needs B >= 100");
  }
  if (c.estimator_variants.empty()) throw DataError("estimator_variants must not be empty");
  if (!(c.lambda_min > 0.0 && c.lambda_min < c.lambda_max)) throw DataError("need 0 < lambda_min < lambda_max");
  if (c.sigma) {
    if (c.model != Model::PLP) throw DataError("'sigma' applies to PLP only");
    if (!c.sigma->isApprox(c.sigma->transpose(), 0.0)) throw DataError("'sigma' must be symmetric");
  }
}

}  // namespace setid::cli
