#include "scglrmix/cli.hpp"

#include "scglrmix/baselines.hpp"
#include "scglrmix/model_io.hpp"
#include "scglrmix/scglr_fixed.hpp"
#include "scglrmix/scglr_mixed.hpp"
#include "scglrmix/simulate.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace scglrmix {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& s, const std::string& flag) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError(flag + ": '" + s + "' is not a number");
}

int to_int(const std::string& s, const std::string& flag) {
  const double v = to_double(s, flag);
  if (v != std::floor(v)) throw UsageError(flag + ": '" + s + "' is not an integer");
  return static_cast<int>(v);
}

// "1,2,3" or "1:3".
std::vector<int> parse_int_list(const std::string& text, const std::string& flag) {
  std::vector<int> out;
  for (const auto& item : split_list(text)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      out.push_back(to_int(item, flag));
      continue;
    }
    const int a = to_int(item.substr(0, colon), flag);
    const int b = to_int(item.substr(colon + 1), flag);
    if (b < a) throw UsageError(flag + ": empty range '" + item + "'");
    for (int v = a; v <= b; ++v) out.push_back(v);
  }
  if (out.empty()) throw UsageError(flag + ": empty list");
  return out;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& flag,
                                      bool locality = false) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    if (locality) {
      try {
        out.push_back(parse_locality(item));
      } catch (const InputError& e) {
        throw UsageError(flag + ": " + e.what());
      }
    } else {
      out.push_back(to_double(item, flag));
    }
  }
  if (out.empty()) throw UsageError(flag + ": empty list");
  return out;
}

struct DataFlags {
  std::string in;
  std::string response;
  std::string explanatory;
  std::string additional;
  std::string group = "group";
  std::string weights;
  std::string family = "gaussian";
  bool no_intercept = false;

  void add(CLI::App& app, bool need_response = true) {
    app.add_option("--in", in, "input CSV")->required();
    auto* r = app.add_option("--response", response, "response columns (comma list, 'y*' prefix)");
    if (need_response) r->required();
    app.add_option("--explanatory", explanatory, "X columns (default: all unassigned)");
    app.add_option("--additional", additional, "T columns fitted without regularization");
    app.add_option("--group", group, "group column")->capture_default_str();
    app.add_option("--weights", weights, "observation weight column");
    app.add_option("--family", family, "family, one or one per response")->capture_default_str();
    app.add_flag("--no-intercept", no_intercept, "do not add an intercept to T");
  }

  Schema schema() const {
    Schema s;
    s.response = split_list(response);
    s.explanatory = split_list(explanatory);
    s.additional = split_list(additional);
    s.group = group;
    if (!weights.empty()) s.weights = weights;
    s.add_intercept = !no_intercept;
    return s;
  }
};

struct TuningFlags {
  std::string H = "2";
  std::string s = "0.5";
  std::string l = "4";
  std::string metric = "identity";
  int max_iter = 500;
  double tol = 1e-6;
  int restarts = 10;
  std::uint64_t seed = 42;
  int threads = 1;
  int max_outer = 0;

  void add(CLI::App& app, bool lists) {
    const char* suffix = lists ? " (comma list or a:b range)" : "";
    app.add_option("--H", H, std::string("number of components") + suffix)->capture_default_str();
    app.add_option("--s", s, std::string("relevance vs goodness-of-fit trade-off") + suffix)
        ->capture_default_str();
    app.add_option("--l", l, std::string("bundle locality, >= 1 or 'inf'") + suffix)
        ->capture_default_str();
    app.add_option("--metric", metric, "loading metric")
        ->check(CLI::IsMember({"identity", "gram"}))
        ->capture_default_str();
    app.add_option("--max-iter", max_iter, "optimizer iterations per start")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--tol", tol, "optimizer and outer-loop tolerance")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--restarts", restarts, "random optimizer restarts")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app.add_option("--seed", seed, "random seed")->capture_default_str();
    app.add_option("--threads", threads, "worker threads")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--max-outer", max_outer, "outer iterations (default 100 fixed, 200 mixed)")
        ->check(CLI::NonNegativeNumber);
  }

  FitSettings settings(bool mixed) const {
    FitSettings fs = mixed ? mixed_defaults() : FitSettings{};
    fs.optimizer.max_iter = max_iter;
    fs.optimizer.tol = tol;
    fs.optimizer.n_restarts = restarts;
    fs.optimizer.seed = seed;
    fs.optimizer.threads = threads;
    fs.outer_tol = tol;
    if (max_outer > 0) fs.max_outer = max_outer;
    return fs;
  }

  CriterionParams params() const {
    CriterionParams p;
    p.metric = parse_metric(metric);
    return p;
  }

  std::vector<GridPoint> grid() const {
    const auto hs = parse_int_list(H, "--H");
    for (int h : hs) {
      if (h < 1) throw UsageError("--H must be >= 1");
    }
    const auto ss = parse_double_list(s, "--s");
    for (double v : ss) {
      if (!(v >= 0.0 && v <= 1.0)) throw UsageError("--s must lie in [0, 1]");
    }
    const auto ls = parse_double_list(l, "--l", true);
    for (double v : ls) {
      if (!(v >= 1.0)) throw UsageError("--l must be >= 1");
    }
    return make_grid(hs, ss, ls);
  }
};

std::string trace_path(const std::string& model_path) {
  std::filesystem::path p(model_path);
  p.replace_extension();
  return p.string() + ".trace.csv";
}

void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

std::ofstream open_out(const std::string& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  return out;
}

std::string grid_label(const GridPoint& g) {
  return "H=" + std::to_string(g.H) + ",s=" + format_double(g.s) + ",l=" + format_locality(g.l);
}

int model_status(const ComponentModel& m, std::ostream& err) {
  if (m.converged) return kExitOk;
  err << "warning: component " << m.failed_component + 1
      << " did not converge; model written anyway\n";
  return kExitWarnings;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Supervised component regression for grouped multivariate GLM data", "scglrmix"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "scglrmix 1.0");

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate grouped data with known bundle structure");
  SimConfig cfg;
  std::string sim_out, sim_family = "poisson", sim_sigma2 = "0.5", sim_bundles, sim_gamma;
  sim->add_option("--n", cfg.n, "rows")->capture_default_str();
  sim->add_option("--groups", cfg.N, "number of groups")->capture_default_str();
  sim->add_option("--p", cfg.p, "explanatory columns")->capture_default_str();
  sim->add_option("--q", cfg.q, "responses")->capture_default_str();
  sim->add_option("--r", cfg.r, "additional covariates besides the intercept")->capture_default_str();
  sim->add_option("--family", sim_family, "family, one or one per response")->capture_default_str();
  sim->add_option("--sigma2", sim_sigma2, "random-intercept variance, one or one per response")
      ->capture_default_str();
  sim->add_option("--bundles", sim_bundles,
                  "size:rho:weight list (default: predictive 10:0.9:1 then nuisance 10:0.9:0)");
  sim->add_option("--gamma", sim_gamma, "true component effect per response");
  sim->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
  sim->add_option("--out", sim_out, "output directory (data.csv, truth.json)")->required();

  // fit
  auto* fit = app.add_subcommand("fit", "fit a fixed or mixed component model");
  DataFlags fit_data;
  TuningFlags fit_tune;
  std::string fit_out;
  bool fit_mixed = false;
  bool fit_frozen = false;
  fit_data.add(*fit);
  fit_tune.add(*fit, false);
  fit->add_flag("--mixed", fit_mixed, "random group intercept per response");
  fit->add_flag("--freeze-random", fit_frozen, "mixed fit with xi = 0 and sigma2 at its floor");
  fit->add_option("--out", fit_out, "model JSON (trace written next to it)")->required();

  // predict
  auto* pred = app.add_subcommand("predict", "predicted means for new rows");
  std::string pred_model, pred_in, pred_out;
  bool pred_conditional = false;
  pred->add_option("--model", pred_model, "model JSON")->required();
  pred->add_option("--in", pred_in, "CSV with the model's columns")->required();
  pred->add_option("--out", pred_out, "output CSV (default stdout)");
  pred->add_flag("--conditional", pred_conditional, "add predicted group effects (mixed models)");

  // cv
  auto* cv = app.add_subcommand("cv", "grouped cross-validation of (H, s, l)");
  DataFlags cv_data;
  TuningFlags cv_tune;
  cv_tune.H = "1:3";
  std::string cv_out;
  int cv_folds = 5;
  cv_data.add(*cv);
  cv_tune.add(*cv, true);
  cv->add_option("--folds", cv_folds, "folds over groups")->check(CLI::Range(2, 1000000))
      ->capture_default_str();
  cv->add_option("--out", cv_out, "table CSV (default stdout)");

  // compare
  auto* cmp = app.add_subcommand("compare", "held-out comparison against ridge and intercept-only");
  DataFlags cmp_data;
  TuningFlags cmp_tune;
  cmp_tune.H = "1:3";
  std::string cmp_out, cmp_test, cmp_split = "groups", cmp_lambda = "1e-4:1e4:25";
  double cmp_fraction = 0.25;
  int cmp_folds = 5;
  bool cmp_conditional = false;
  cmp_data.add(*cmp);
  cmp_tune.add(*cmp, true);
  cmp->add_option("--test", cmp_test, "held-out CSV (default: split --in)");
  cmp->add_option("--test-fraction", cmp_fraction, "held-out share when splitting")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmp->add_option("--split", cmp_split, "split unit")
      ->check(CLI::IsMember({"groups", "rows"}))
      ->capture_default_str();
  cmp->add_option("--lambda-grid", cmp_lambda, "lo:hi:count or comma list")->capture_default_str();
  cmp->add_option("--folds", cmp_folds, "folds over groups")->check(CLI::Range(2, 1000000))
      ->capture_default_str();
  cmp->add_flag("--conditional", cmp_conditional, "score with predicted group effects");
  cmp->add_option("--out", cmp_out, "comparison CSV (default stdout)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << "scglrmix 1.0\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (*sim) {
      if (!sim_bundles.empty()) {
        cfg.bundles = parse_bundles(sim_bundles);
      } else {
        const int first = std::min(10, cfg.p);
        cfg.bundles = {{first, 0.9, 1.0}};
        if (cfg.p - first > 0) cfg.bundles.push_back({std::min(10, cfg.p - first), 0.9, 0.0});
      }
      const auto fams = split_list(sim_family);
      cfg.family.clear();
      for (const auto& f : fams) cfg.family.push_back(FamilyLink::parse(f));
      cfg.sigma2 = parse_double_list(sim_sigma2, "--sigma2");
      if (!sim_gamma.empty()) cfg.gamma = parse_double_list(sim_gamma, "--gamma");
      const Simulation s = gen_grouped_data(cfg);
      std::filesystem::create_directories(sim_out);
      const auto dir = std::filesystem::path(sim_out);
      write_dataset(s.data, (dir / "data.csv").string());
      write_truth(s.truth, cfg, (dir / "truth.json").string());
      out << "simulated n=" << cfg.n << " groups=" << cfg.N << " p=" << cfg.p << " q=" << cfg.q
          << " seed=" << cfg.seed << " -> " << (dir / "data.csv").string() << ", "
          << (dir / "truth.json").string() << "\n";
      return kExitOk;
    }

    if (*fit) {
      const auto grid = fit_tune.grid();
      if (grid.size() != 1) throw UsageError("fit takes a single --H, --s and --l");
      const Dataset ds = load_csv(fit_data.in, fit_data.schema());
      const FamilySpec fam = parse_family_spec(fit_data.family, ds.q());
      CriterionParams params = fit_tune.params();
      params.s = grid[0].s;
      params.l = grid[0].l;
      FitSettings settings = fit_tune.settings(fit_mixed || fit_frozen);
      settings.freeze_random_effects = fit_frozen;
      AnyModel model;
      if (fit_mixed || fit_frozen) {
        model = fit_mixed_scglr(ds, fam, grid[0].H, params, settings);
      } else {
        model = fit_scglr(ds, fam, grid[0].H, params, settings);
      }
      const ComponentModel& base =
          std::visit([](const auto& m) -> const ComponentModel& { return m; }, model);
      ensure_parent(fit_out);
      save_model(model, fit_out);
      auto trace = open_out(trace_path(fit_out));
      write_trace_csv(base, trace);
      const int status = model_status(base, err);
      out << "wrote " << fit_out << " and " << trace_path(fit_out) << "\n";
      return status;
    }

    if (*pred) {
      const AnyModel any = load_model(pred_model);
      const ComponentModel& base = std::visit(
          [](const auto& m) -> const ComponentModel& { return m; }, any);
      Schema schema;
      schema.response = base.response_names;
      schema.responses_optional = true;
      schema.explanatory = base.x_names;
      schema.additional = base.t_names;
      schema.group = base.group_name;
      schema.add_intercept = base.has_intercept;
      const Dataset ds = load_csv(pred_in, schema);
      const auto* mixed = std::get_if<MixedComponentModel>(&any);
      if (pred_conditional && !mixed) throw InputError("--conditional needs a mixed model");
      const PredictionMode mode =
          pred_conditional ? PredictionMode::Conditional : PredictionMode::Marginal;
      MatrixXd mu(ds.n(), base.q());
      for (int k = 0; k < base.q(); ++k) {
        mu.col(k) = mixed ? predict_mixed(*mixed, ds, mode, k)
                          : predict(base, raw_x(ds), raw_t(ds), k);
      }
      std::ofstream file;
      if (!pred_out.empty()) file = open_out(pred_out);
      std::ostream& o = pred_out.empty() ? out : file;
      o << "row," << base.group_name;
      for (const auto& name : base.response_names) o << ",mu_" << name;
      o << '\n';
      for (int i = 0; i < ds.n(); ++i) {
        o << i + 1 << ',' << ds.group_labels[static_cast<std::size_t>(ds.groups[static_cast<std::size_t>(i)])];
        for (int k = 0; k < base.q(); ++k) o << ',' << format_double(mu(i, k));
        o << '\n';
      }
      return kExitOk;
    }

    if (*cv) {
      const auto grid = cv_tune.grid();
      const Dataset ds = load_csv(cv_data.in, cv_data.schema());
      const FamilySpec fam = parse_family_spec(cv_data.family, ds.q());
      const CvResult res =
          cross_validate(ds, fam, grid, cv_folds, cv_tune.settings(true), cv_tune.params());
      std::ofstream file;
      if (!cv_out.empty()) file = open_out(cv_out);
      std::ostream& o = cv_out.empty() ? out : file;
      o << "H,s,l,mean_deviance,se,converged";
      for (int f = 0; f < cv_folds; ++f) o << ",fold" << f + 1;
      o << '\n';
      bool all_converged = true;
      for (const auto& row : res.table) {
        o << row.point.H << ',' << format_double(row.point.s) << ','
          << format_locality(row.point.l) << ',' << format_double(row.mean_deviance) << ','
          << format_double(row.se) << ',' << (row.converged ? 1 : 0);
        for (double d : row.fold_deviance) o << ',' << format_double(d);
        o << '\n';
        all_converged = all_converged && row.converged;
      }
      out << "selected " << grid_label(res.table[res.selected].point) << "\n";
      if (!all_converged) {
        err << "warning: some cross-validation fits did not converge\n";
        return kExitWarnings;
      }
      return kExitOk;
    }

    if (*cmp) {
      CompareConfig config;
      config.grid = cmp_tune.grid();
      config.base_params = cmp_tune.params();
      config.settings = cmp_tune.settings(true);
      config.folds = cmp_folds;
      try {
        config.lambda_grid = parse_lambda_grid(cmp_lambda);
      } catch (const InputError& e) {
        throw UsageError(std::string("--lambda-grid: ") + e.what());
      }
      Dataset train = load_csv(cmp_data.in, cmp_data.schema());
      Dataset test;
      bool rows_split = false;
      if (!cmp_test.empty()) {
        Schema s = cmp_data.schema();
        s.response = train.response_names;
        s.explanatory = train.x_names;
        s.additional = train.t_names;
        test = load_csv(cmp_test, s);
      } else {
        rows_split = cmp_split == "rows";
        auto parts = train_test_split(train, cmp_fraction, !rows_split, cmp_tune.seed);
        train = std::move(parts.first);
        test = std::move(parts.second);
      }
      config.mode = cmp_conditional || rows_split ? PredictionMode::Conditional
                                                  : PredictionMode::Marginal;
      const FamilySpec fam = parse_family_spec(cmp_data.family, train.q());
      const auto rows = compare(train, test, fam, config);
      std::ofstream file;
      if (!cmp_out.empty()) file = open_out(cmp_out);
      write_comparison_csv(rows, train.response_names, cmp_out.empty() ? out : file);
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitUsage;
}

}  // namespace scglrmix
