#include "setid/cli/commands.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "setid/bootstrap.hpp"
#include "setid/errors.hpp"
#include "setid/estimators.hpp"
#include "setid/report.hpp"
#include "setid/rng.hpp"

namespace setid::cli {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const MissingCellError*>(&e) ||
      dynamic_cast<const IncompleteProfileError*>(&e) || dynamic_cast<const UnsupportedError*>(&e) ||
      dynamic_cast<const std::invalid_argument*>(&e))
    return 2;
  if (dynamic_cast<const DegenerateError*>(&e) || dynamic_cast<const ConvergenceError*>(&e)) return 3;
  return 1;
}

ErrorSummary summarize_errors(const std::vector<double>& errors) {
  ErrorSummary s;
  s.count = static_cast<Index>(errors.size());
  if (errors.empty()) return s;
  double sum = 0.0, sq = 0.0;
  for (double e : errors) {
    sum += e;
    sq += e * e;
  }
  const double n = static_cast<double>(errors.size());
  s.bias = sum / n;
  s.rmse = std::sqrt(sq / n);
  if (errors.size() > 1) {
    double ss = 0.0;
    for (double e : errors) ss += (e - s.bias) * (e - s.bias);
    s.sd = std::sqrt(ss / (n - 1.0));
  }
  s.mc_se = s.sd / std::sqrt(n);
  return s;
}

double coverage_mc_se(double coverage, int M) {
  if (M < 1) throw std::invalid_argument("coverage_mc_se needs M >= 1");
  return std::sqrt(coverage * (1.0 - coverage) / static_cast<double>(M));
}

namespace {

// One estimator variant fitted on one dataset. The profile is kept because
// the bootstrap re-evaluates the second stage against it.
struct Fit {
  NuisanceProfile profile;
  std::optional<SupportFunctionEstimate> support;
  std::optional<BoundsEstimate> bounds;
};

Fit fit_variant(const Dataset& data, const RunConfig& cfg, Variant variant, const std::vector<VectorXd>& grid,
                const std::shared_ptr<const Truth>& truth, std::uint64_t seed) {
  if (variant == Variant::ORACLE && !truth) throw DataError("the ORACLE variant needs a simulated design");
  CrossfitOptions opt;
  opt.K = cfg.K;
  opt.seed = seed;
  opt.no_split = variant == Variant::ORTHOGONAL_NOSPLIT;
  opt.truth = truth;
  const bool naive = variant == Variant::NAIVE;
  const LearnerSet learners = variant == Variant::ORACLE ? LearnerSet::oracle() : cfg.learners;

  Fit fit{crossfit(data, cfg.model, learners, opt), std::nullopt, std::nullopt};
  switch (cfg.model) {
    case Model::PLP:
      if (variant == Variant::ORACLE) {
        fit.support = support_known_sigma(data, fit.profile, truth->residual_covariance(), grid, naive);
      } else if (cfg.sigma) {
        fit.support = support_known_sigma(data, fit.profile, *cfg.sigma, grid, naive);
      } else {
        fit.support = support_unknown_sigma(data, fit.profile, grid, naive, cfg.lambda_min, cfg.lambda_max);
      }
      break;
    case Model::APD: fit.support = apd_support(data, fit.profile, grid, naive); break;
    case Model::LEE: fit.bounds = lee_bounds(data, fit.profile, naive); break;
  }
  if (fit.support && grid == axis_grid(data.dim_d())) fit.bounds = coordinate_bounds(*fit.support);
  return fit;
}

BootstrapRun run_bootstrap(const Dataset& data, const Fit& fit, const RunConfig& cfg, std::uint64_t seed) {
  BootstrapOptions bo;
  bo.B = cfg.B;
  bo.seed = seed;
  const SecondStageConfig& stage = fit.support ? fit.support->config : fit.bounds->config;
  return bootstrap_draws(data, fit.profile, stage, bo);
}

std::vector<VectorXd> support_grid(const RunConfig& cfg, Index d) {
  return cfg.model == Model::LEE ? std::vector<VectorXd>{} : direction_grid(d, cfg.grid_size);
}

std::filesystem::path prepare_output(const RunConfig& cfg) {
  const std::filesystem::path dir(cfg.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + cfg.output_dir + "': " + ec.message());
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  f << text;
}

Json region_document(const RunConfig& cfg, Variant variant, const BootstrapRun& run,
                     const std::vector<ConfidenceRegion>& regions) {
  Json j;
  j["model"] = to_string(cfg.model);
  j["variant"] = to_string(variant);
  j["alpha"] = cfg.alpha;
  j["B"] = run.B;
  j["seed"] = run.seed;
  j["weights"] = run.weights_scheme;
  j["flagged"] = run.flagged;
  Json arr = Json::array();
  for (const auto& r : regions) arr.push_back(to_json(r));
  j["regions"] = arr;
  return j;
}

// Replication driver shared by simulate and coverage. `body` returns the
// replication's payload; a throwing replication is logged and counted.
template <class T, class F>
std::vector<std::optional<T>> replicate(const RunConfig& cfg, F&& body, int& failures) {
  std::vector<std::optional<T>> out(cfg.M);
  std::vector<std::string> errors(cfg.M);
  tbb::parallel_for(0, cfg.M, [&](int m) {
    try {
      DgpSpec spec = *cfg.dgp;
      spec.seed = derive_seed(cfg.seed, Stream::Replication, static_cast<std::uint64_t>(m));
      out[m] = body(spec);
    } catch (const std::exception& e) {
      errors[m] = e.what();
    }
  });
  failures = 0;
  for (int m = 0; m < cfg.M; ++m) {
    if (out[m]) continue;
    ++failures;
    spdlog::warn("replication {} failed: {}", m, errors[m]);
  }
  return out;
}

int budget_exit(const RunConfig& cfg, int failures) {
  if (static_cast<double>(failures) > kFailureBudget * static_cast<double>(cfg.M)) {
    spdlog::error("{} of {} replications failed; the budget is {:.0f}%", failures, cfg.M, 100.0 * kFailureBudget);
    return 3;
  }
  return 0;
}

std::pair<double, double> truth_bounds(const Truth& truth) {
  if (truth.model() == Model::LEE) return truth.lee_bounds();
  const VectorXd e = VectorXd::Unit(truth.spec().beta0.size(), 0);
  return {-truth.support(-e), truth.support(e)};
}

Json summary_json(const ErrorSummary& s) {
  return Json{{"bias", s.bias}, {"sd", s.sd}, {"rmse", s.rmse}, {"mc_se", s.mc_se}, {"count", s.count}};
}

std::string format_number(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

int cmd_estimate(const RunConfig& cfg) {
  Dataset data = read_csv(*cfg.data_path);
  validate_for(data, cfg.model);
  const Variant variant = cfg.estimator_variants.front();
  const auto grid = support_grid(cfg, data.dim_d());
  const Fit fit = fit_variant(data, cfg, variant, grid, nullptr, cfg.seed);
  const BootstrapRun run = run_bootstrap(data, fit, cfg, cfg.seed);

  std::vector<ConfidenceRegion> regions;
  if (fit.bounds) {
    // With a support grid the bounds targets are the grid itself (d = 1).
    regions.push_back(pointwise_region(*fit.bounds, run, cfg.alpha));
  }
  if (fit.support) regions.push_back(uniform_band(*fit.support, run, cfg.alpha));

  ResultDocument doc;
  doc.model = cfg.model;
  doc.n = data.n();
  doc.K = cfg.K;
  doc.grid = grid;
  if (fit.support) doc.sigma = fit.support->values;
  if (fit.bounds) doc.bounds = std::make_pair(fit.bounds->lower, fit.bounds->upper);
  doc.seeds = {{"seed", cfg.seed}, {"crossfit", cfg.seed}, {"bootstrap", cfg.seed}};
  doc.learners = to_json(fit.profile.learners, cfg.model);
  const Json results = to_json(doc);

  const auto dir = prepare_output(cfg);
  write_json(results, (dir / "results.json").string());
  write_json(region_document(cfg, variant, run, regions), (dir / "region.json").string());
  write_profile_csv(fit.profile, (dir / "nuisance_profile.csv").string());
  write_text(dir / "draws.csv", format_draws_csv(run));
  return 0;
}

int cmd_simulate(const RunConfig& cfg) {
  struct Row {
    std::vector<std::pair<double, double>> estimates;  // per variant
    std::pair<double, double> truth;
  };
  const Index d = cfg.dgp->beta0.size();
  const auto grid = cfg.model == Model::LEE ? std::vector<VectorXd>{} : axis_grid(d);
  int failures = 0;
  const auto rows = replicate<Row>(
      cfg,
      [&](const DgpSpec& spec) {
        SimulatedData sim = generate(spec);
        auto truth = std::make_shared<const Truth>(sim.truth);
        Row row;
        row.truth = truth_bounds(*truth);
        for (Variant v : cfg.estimator_variants) {
          const Fit fit = fit_variant(sim.data, cfg, v, grid, truth, spec.seed);
          row.estimates.emplace_back(fit.bounds->lower, fit.bounds->upper);
        }
        return row;
      },
      failures);

  std::ostringstream csv;
  csv << "rep,variant,bound,estimate,truth\n";
  const std::size_t V = cfg.estimator_variants.size();
  std::vector<std::vector<double>> err_lower(V), err_upper(V);
  for (int m = 0; m < cfg.M; ++m) {
    if (!rows[m]) continue;
    for (std::size_t k = 0; k < V; ++k) {
      const auto [lo, up] = rows[m]->estimates[k];
      const auto [tlo, tup] = rows[m]->truth;
      const std::string name = to_string(cfg.estimator_variants[k]);
      csv << m << ',' << name << ",lower," << format_number(lo) << ',' << format_number(tlo) << '\n';
      csv << m << ',' << name << ",upper," << format_number(up) << ',' << format_number(tup) << '\n';
      err_lower[k].push_back(lo - tlo);
      err_upper[k].push_back(up - tup);
    }
  }

  Json summary;
  summary["model"] = to_string(cfg.model);
  summary["M"] = cfg.M;
  summary["seed"] = cfg.seed;
  summary["failures"] = failures;
  Json variants = Json::array();
  for (std::size_t k = 0; k < V; ++k) {
    variants.push_back(Json{{"variant", to_string(cfg.estimator_variants[k])},
                            {"lower", summary_json(summarize_errors(err_lower[k]))},
                            {"upper", summary_json(summarize_errors(err_upper[k]))}});
  }
  summary["variants"] = variants;

  // Histogram of estimate - truth on bins shared by all variants of a bound.
  constexpr int kBins = 20;
  std::ostringstream hist;
  hist << "variant,bound,bin_lower,bin_upper,count\n";
  for (int side = 0; side < 2; ++side) {
    const auto& errs = side == 0 ? err_lower : err_upper;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& v : errs)
      for (double e : v) {
        lo = std::min(lo, e);
        hi = std::max(hi, e);
      }
    if (!std::isfinite(lo)) continue;
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double width = (hi - lo) / kBins;
    for (std::size_t k = 0; k < V; ++k) {
      std::vector<int> counts(kBins, 0);
      for (double e : errs[k]) counts[std::min(kBins - 1, static_cast<int>((e - lo) / width))]++;
      for (int b = 0; b < kBins; ++b)
        hist << to_string(cfg.estimator_variants[k]) << ',' << (side == 0 ? "lower" : "upper") << ','
             << format_number(lo + b * width) << ',' << format_number(lo + (b + 1) * width) << ',' << counts[b]
             << '\n';
    }
  }

  const auto dir = prepare_output(cfg);
  write_text(dir / "sim.csv", csv.str());
  write_json(summary, (dir / "summary.json").string());
  write_text(dir / "hist.csv", hist.str());
  return budget_exit(cfg, failures);
}

int cmd_coverage(const RunConfig& cfg) {
  struct Outcome {
    bool pointwise = false;
    std::optional<bool> uniform;
  };
  const Variant variant = cfg.estimator_variants.front();
  const Index d = cfg.dgp->beta0.size();
  int failures = 0;
  const auto outcomes = replicate<Outcome>(
      cfg,
      [&](const DgpSpec& spec) {
        SimulatedData sim = generate(spec);
        auto truth = std::make_shared<const Truth>(sim.truth);
        Outcome out;
        const auto [tlo, tup] = truth_bounds(*truth);
        if (cfg.model == Model::LEE) {
          const Fit fit = fit_variant(sim.data, cfg, variant, {}, truth, spec.seed);
          const auto region = pointwise_region(*fit.bounds, run_bootstrap(sim.data, fit, cfg, spec.seed), cfg.alpha);
          out.pointwise = region.lower(0) <= tlo && tup <= region.upper(0);
          return out;
        }
        const Fit axis = fit_variant(sim.data, cfg, variant, axis_grid(d), truth, spec.seed);
        const auto region = pointwise_region(*axis.bounds, run_bootstrap(sim.data, axis, cfg, spec.seed), cfg.alpha);
        out.pointwise = region.lower(0) <= tlo && tup <= region.upper(0);

        const auto grid = direction_grid(d, cfg.grid_size);
        const Fit full = fit_variant(sim.data, cfg, variant, grid, truth, spec.seed);
        const auto band = uniform_band(*full.support, run_bootstrap(sim.data, full, cfg, spec.seed), cfg.alpha);
        bool covered = true;
        for (std::size_t k = 0; k < grid.size(); ++k) {
          const auto kk = static_cast<Index>(k);
          if (std::find(band.excluded.begin(), band.excluded.end(), kk) != band.excluded.end()) continue;
          const double s = truth->support(grid[k]);
          covered = covered && band.lower(kk) <= s && s <= band.upper(kk);
        }
        out.uniform = covered;
        return out;
      },
      failures);

  int done = 0, pw = 0, un = 0, un_total = 0;
  for (const auto& o : outcomes) {
    if (!o) continue;
    ++done;
    pw += o->pointwise;
    if (o->uniform) {
      ++un_total;
      un += *o->uniform;
    }
  }
  auto block = [](int hits, int total) -> Json {
    if (total == 0) return nullptr;
    const double c = static_cast<double>(hits) / total;
    return Json{{"coverage", c}, {"mc_se", coverage_mc_se(c, total)}, {"count", total}};
  };
  Json doc;
  doc["model"] = to_string(cfg.model);
  doc["variant"] = to_string(variant);
  doc["M"] = cfg.M;
  doc["B"] = cfg.B;
  doc["alpha"] = cfg.alpha;
  doc["seed"] = cfg.seed;
  doc["failures"] = failures;
  doc["pointwise"] = block(pw, done);
  doc["uniform"] = block(un, un_total);

  const auto dir = prepare_output(cfg);
  write_json(doc, (dir / "coverage.json").string());
  return budget_exit(cfg, failures);
}

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> model, data_path, output_dir, estimator_variants;
  std::optional<int> K, grid_size, B, M;
  std::optional<double> alpha, lambda_min, lambda_max;
  std::optional<std::uint64_t> seed;
  std::optional<Index> dgp_n, dgp_p, dgp_sparsity;
  std::optional<double> dgp_interval_width, dgp_noise_sd, dgp_residual_sd, dgp_selection_shift;
};

void add_options(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "TOML run configuration")->required();
  sub->add_option("--model", o.model);
  sub->add_option("--data-path", o.data_path);
  sub->add_option("--output-dir", o.output_dir);
  sub->add_option("--estimator-variants", o.estimator_variants, "comma-separated variant names");
  sub->add_option("--K", o.K);
  sub->add_option("--grid-size", o.grid_size);
  sub->add_option("--B", o.B);
  sub->add_option("--M", o.M);
  sub->add_option("--alpha", o.alpha);
  sub->add_option("--lambda-min", o.lambda_min);
  sub->add_option("--lambda-max", o.lambda_max);
  sub->add_option("--seed", o.seed);
  sub->add_option("--dgp-n", o.dgp_n);
  sub->add_option("--dgp-p", o.dgp_p);
  sub->add_option("--dgp-sparsity", o.dgp_sparsity);
  sub->add_option("--dgp-interval-width", o.dgp_interval_width);
  sub->add_option("--dgp-noise-sd", o.dgp_noise_sd);
  sub->add_option("--dgp-residual-sd", o.dgp_residual_sd);
  sub->add_option("--dgp-selection-shift", o.dgp_selection_shift);
}

void apply(const Overrides& o, RunConfig& cfg) {
  if (o.model) {
    try {
      cfg.model = model_from_string(*o.model);
    } catch (const std::exception& e) {
      throw DataError(std::string("--model: ") + e.what());
    }
    if (cfg.dgp) cfg.dgp->model = cfg.model;
  }
  if (o.data_path) cfg.data_path = *o.data_path;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.estimator_variants) {
    cfg.estimator_variants.clear();
    std::stringstream ss(*o.estimator_variants);
    for (std::string item; std::getline(ss, item, ',');)
      if (!item.empty()) cfg.estimator_variants.push_back(variant_from_string(item));
  }
  if (o.K) cfg.K = *o.K;
  if (o.grid_size) cfg.grid_size = *o.grid_size;
  if (o.B) cfg.B = *o.B;
  if (o.M) cfg.M = *o.M;
  if (o.alpha) cfg.alpha = *o.alpha;
  if (o.lambda_min) cfg.lambda_min = *o.lambda_min;
  if (o.lambda_max) cfg.lambda_max = *o.lambda_max;
  if (o.seed) cfg.seed = *o.seed;
  const bool any_dgp = o.dgp_n || o.dgp_p || o.dgp_sparsity || o.dgp_interval_width || o.dgp_noise_sd ||
                       o.dgp_residual_sd || o.dgp_selection_shift;
  if (any_dgp) {
    if (!cfg.dgp) {
      cfg.dgp = DgpSpec{};
      cfg.dgp->model = cfg.model;
    }
    DgpSpec& g = *cfg.dgp;
    if (o.dgp_n) g.n = *o.dgp_n;
    if (o.dgp_p) g.p = *o.dgp_p;
    if (o.dgp_sparsity) g.sparsity = *o.dgp_sparsity;
    if (o.dgp_interval_width) g.interval_width = *o.dgp_interval_width;
    if (o.dgp_noise_sd) g.noise_sd = *o.dgp_noise_sd;
    if (o.dgp_residual_sd) g.residual_sd = *o.dgp_residual_sd;
    if (o.dgp_selection_shift) g.selection_shift = *o.dgp_selection_shift;
    try {
      validate(g);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError(std::string("dgp: ") + e.what());
    }
  }
}

std::unique_ptr<tbb::global_control> thread_cap() {
  const char* env = std::getenv("SETID_DML_THREADS");
  if (!env || !*env) return nullptr;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw DataError("SETID_DML_THREADS must be a positive integer");
  return std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism,
                                               static_cast<std::size_t>(n));
}

}  // namespace

int run_cli(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("setid-dml"));
  CLI::App app{"Debiased estimation of partially identified parameters"};
  app.require_subcommand(1);
  Overrides o;
  const std::pair<const char*, Command> commands[] = {
      {"estimate", Command::ESTIMATE}, {"simulate", Command::SIMULATE}, {"coverage", Command::COVERAGE}};
  std::vector<CLI::App*> subs;
  subs.push_back(app.add_subcommand("estimate", "Estimate bounds and regions from a CSV file"));
  subs.push_back(app.add_subcommand("simulate", "Monte Carlo bias study over estimator variants"));
  subs.push_back(app.add_subcommand("coverage", "Monte Carlo coverage study of confidence regions"));
  for (auto* s : subs) add_options(s, o);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto cap = thread_cap();
    Command command = Command::ESTIMATE;
    for (std::size_t k = 0; k < subs.size(); ++k)
      if (subs[k]->parsed()) command = commands[k].second;
    RunConfig cfg = load_config(o.config, command);
    apply(o, cfg);
    validate(cfg);
    switch (command) {
      case Command::ESTIMATE: return cmd_estimate(cfg);
      case Command::SIMULATE: return cmd_simulate(cfg);
      case Command::COVERAGE: return cmd_coverage(cfg);
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  }
  return 1;
}

}  // namespace setid::cli
