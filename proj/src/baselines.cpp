#include "scglrmix/baselines.hpp"

#include "scglrmix/henderson.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace scglrmix {

namespace {

// Penalized solve without random effects: (M'RM + P) beta = M'Rz.
VectorXd penalized_wls(const MatrixXd& M, const VectorXd& z, const VectorXd& w,
                       const VectorXd& penalty) {
  MatrixXd C = M.transpose() * w.asDiagonal() * M;
  C.diagonal() += penalty;
  Eigen::LDLT<MatrixXd> ldlt(C);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw InputError("penalized least squares: singular system");
  }
  return ldlt.solve(M.transpose() * w.cwiseProduct(z));
}

RidgeMixedModel fit_penalized(const Dataset& input, int k, const FamilyLink& family,
                              double lambda, const FitSettings& settings, bool use_x) {
  input.validate();
  settings.validate();
  if (k < 0 || k >= input.q()) throw InputError("response index out of range");
  if (!(lambda >= 0.0)) throw InputError("lambda must be >= 0");
  if (input.num_groups() < 2 && !settings.freeze_random_effects) {
    throw InputError("single group: random intercept confounded with fixed intercept");
  }
  const Dataset ds = prepare_dataset(input, settings.standardize);
  const VectorXd y = ds.Y.col(k);
  check_support(y, family);
  const int n = ds.n();
  const int px = use_x ? ds.p() : 0;
  const int m = px + ds.r();
  if (m == 0) throw InputError("model has no fixed effects");
  const int N = ds.num_groups();
  const bool frozen = settings.freeze_random_effects;

  MatrixXd M(n, m);
  if (use_x) M.leftCols(px) = ds.X;
  M.rightCols(ds.r()) = ds.T;
  VectorXd penalty = VectorXd::Zero(m);
  penalty.head(px).setConstant(lambda);
  const MatrixXd U = group_design(ds.groups, N);
  const VectorXd pw = ds.prior_weights();

  RidgeMixedModel model;
  model.lambda = lambda;
  model.response = k;
  model.family = family;
  model.standardization = ds.standardization;
  model.group_labels = ds.group_labels;
  model.beta = VectorXd::Zero(m);
  model.xi = VectorXd::Zero(N);
  model.sigma2 = frozen ? kSigma2Floor : settings.sigma2_init;
  if (!use_x) model.standardization.x_center.resize(0);

  VectorXd eta = initial_eta(y, family);
  std::vector<WorkingQuantities> wq{working_quantities(y, eta, family)};
  for (int it = 1; it <= settings.max_outer; ++it) {
    const VectorXd beta_old = model.beta;
    const VectorXd xi_old = model.xi;
    const double sigma2_old = model.sigma2;
    const VectorXd w = pw.cwiseProduct(wq[0].w);
    const VectorXd& z = wq[0].z;

    if (frozen) {
      model.beta = penalized_wls(M, z, w, penalty);
      model.objective_before.push_back(
          henderson_objective(M, U, z, w, model.sigma2, beta_old, xi_old, &penalty));
    } else {
      const HendersonSolution first = henderson_solve(M, U, z, w, model.sigma2, &penalty);
      const VarianceUpdate vu = update_variance(first.xi, first.trace_xixi, model.sigma2);
      if (vu.clamped) ++model.sigma2_clamps;
      model.sigma2 = vu.sigma2;
      model.objective_before.push_back(
          henderson_objective(M, U, z, w, model.sigma2, beta_old, xi_old, &penalty));
      const HendersonSolution hs = henderson_solve(M, U, z, w, model.sigma2, &penalty);
      model.beta = hs.beta;
      model.xi = hs.xi;
    }
    model.objective_after.push_back(
        henderson_objective(M, U, z, w, model.sigma2, model.beta, model.xi, &penalty));
    model.working_z = z;
    model.working_w = w;
    model.solve_sigma2 = model.sigma2;
    model.iterations = it;

    eta = M * model.beta + U * model.xi;
    double change = std::max(relative_change(model.beta, beta_old),
                             relative_change(model.xi, xi_old));
    change = std::max(change, std::abs(model.sigma2 - sigma2_old) / std::max(sigma2_old, 1.0));
    std::vector<WorkingQuantities> next{working_quantities(y, eta, family)};
    const bool stationary = frozen && working_unchanged(next, wq);
    wq = std::move(next);
    if ((it > 1 && change < settings.outer_tol) || stationary) {
      model.converged = true;
      break;
    }
  }
  return model;
}

}  // namespace

int RidgeMixedModel::p() const {
  return static_cast<int>(beta.size()) - static_cast<int>(standardization.t_center.size());
}

RidgeMixedModel fit_ridge_mixed(const Dataset& ds, int k, const FamilyLink& family, double lambda,
                                const FitSettings& settings) {
  return fit_penalized(ds, k, family, lambda, settings, true);
}

RidgeMixedModel fit_null_mixed(const Dataset& ds, int k, const FamilyLink& family,
                               const FitSettings& settings) {
  return fit_penalized(ds, k, family, 0.0, settings, false);
}

VectorXd predict_ridge(const RidgeMixedModel& model, const Dataset& ds, PredictionMode mode) {
  const MatrixXd xs = model.standardization.enabled && model.standardization.x_center.size() > 0
                          ? model.standardization.apply_x(raw_x(ds))
                          : raw_x(ds);
  const MatrixXd ts = model.standardization.apply_t(raw_t(ds));
  const int r = static_cast<int>(ts.cols());
  const int px = static_cast<int>(model.beta.size()) - r;
  if (px != 0 && px != xs.cols()) throw InputError("dataset does not match the ridge model");
  VectorXd eta = ts * model.beta.tail(r);
  if (px > 0) eta += xs * model.beta.head(px);
  if (mode == PredictionMode::Conditional) {
    std::vector<std::string> unknown;
    for (int i = 0; i < ds.n(); ++i) {
      const auto& label = ds.group_labels[static_cast<std::size_t>(ds.groups[static_cast<std::size_t>(i)])];
      const auto it = std::find(model.group_labels.begin(), model.group_labels.end(), label);
      if (it == model.group_labels.end()) {
        if (std::find(unknown.begin(), unknown.end(), label) == unknown.end()) unknown.push_back(label);
        continue;
      }
      eta(i) += model.xi(it - model.group_labels.begin());
    }
    if (!unknown.empty()) {
      std::string list;
      for (const auto& s : unknown) list += (list.empty() ? "" : ", ") + s;
      throw InputError("unknown group label(s) for conditional prediction: " + list);
    }
  }
  VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) mu(i) = inverse_link(eta(i), model.family);
  return mu;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi >= lo) || count < 1) throw InputError("bad log grid");
  std::vector<double> out;
  if (count == 1) return {lo};
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int i = 0; i < count; ++i) {
    out.push_back(std::pow(10.0, a + (b - a) * static_cast<double>(i) / (count - 1)));
  }
  return out;
}

std::vector<double> parse_lambda_grid(const std::string& text) {
  auto to_double = [&](const std::string& s) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw InputError("");
      return v;
    } catch (const std::exception&) {
      throw InputError("bad lambda grid '" + text + "'");
    }
  };
  std::vector<std::string> parts;
  char sep = text.find(':') != std::string::npos ? ':' : ',';
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  if (sep == ':') {
    if (parts.size() != 3) throw InputError("lambda grid must be lo:hi:count");
    return log_grid(to_double(parts[0]), to_double(parts[1]),
                    static_cast<int>(to_double(parts[2])));
  }
  std::vector<double> out;
  for (const auto& p : parts) {
    const double v = to_double(p);
    if (!(v >= 0.0)) throw InputError("lambda values must be >= 0");
    out.push_back(v);
  }
  if (out.empty()) throw InputError("empty lambda grid");
  return out;
}

double select_lambda(const Dataset& ds, int k, const FamilyLink& family,
                     const std::vector<double>& grid, int folds, const FitSettings& settings) {
  if (grid.empty()) throw InputError("empty lambda grid");
  if (grid.size() == 1) return grid.front();
  const std::vector<int> fold_of = group_folds(ds.num_groups(), folds, settings.optimizer.seed);
  std::vector<Dataset> train, test;
  for (int f = 0; f < folds; ++f) {
    std::vector<int> tr, te;
    for (int i = 0; i < ds.n(); ++i) {
      (fold_of[static_cast<std::size_t>(ds.groups[static_cast<std::size_t>(i)])] == f ? te : tr)
          .push_back(i);
    }
    Dataset t = ds.subset(tr);
    if (t.num_groups() < 2) throw InputError("fold leaves fewer than 2 training groups");
    if (settings.standardize) t = standardize(t);
    train.push_back(std::move(t));
    test.push_back(ds.subset(te));
  }
  double best_score = std::numeric_limits<double>::infinity();
  double best = grid.front();
  for (double lambda : grid) {
    double score = 0.0;
    for (int f = 0; f < folds; ++f) {
      const auto fi = static_cast<std::size_t>(f);
      const RidgeMixedModel m = fit_ridge_mixed(train[fi], k, family, lambda, settings);
      const VectorXd mu = predict_ridge(m, test[fi], PredictionMode::Marginal);
      score += deviance(test[fi].Y.col(k), mu, test[fi].prior_weights(), family) /
               static_cast<double>(test[fi].n());
    }
    if (score < best_score) {
      best_score = score;
      best = lambda;
    }
  }
  return best;
}

namespace {

double weighted_rmse(const VectorXd& y, const VectorXd& mu, const VectorXd& W) {
  return std::sqrt(W.dot((y - mu).array().square().matrix()));
}

std::string tuning_label(const GridPoint& g) {
  return "H=" + std::to_string(g.H) + ";s=" + format_double(g.s) + ";l=" + format_locality(g.l);
}

}  // namespace

std::vector<CompareRow> compare(const Dataset& train, const Dataset& test, const FamilySpec& family,
                                const CompareConfig& config) {
  if (test.n() == 0) throw InputError("empty test set");
  train.validate();
  if (test.p() != train.p() || test.q() != train.q() || test.r() != train.r()) {
    throw InputError("train and test datasets have different layouts");
  }
  const int q = train.q();
  std::vector<CompareRow> rows;

  const CvResult cv = cross_validate(train, family, config.grid, config.folds, config.settings,
                                     config.base_params);
  const GridPoint best = cv.table[cv.selected].point;
  CriterionParams params = config.base_params;
  params.s = best.s;
  params.l = best.l;
  const MixedComponentModel scglr = fit_mixed_scglr(train, family, best.H, params, config.settings);
  for (int k = 0; k < q; ++k) {
    const VectorXd mu = predict_mixed(scglr, test, config.mode, k);
    const VectorXd y = test.Y.col(k);
    rows.push_back({"scglr_mixed", k, tuning_label(best),
                    deviance(y, mu, test.prior_weights(), family[k]),
                    weighted_rmse(y, mu, test.W)});
  }

  for (int k = 0; k < q; ++k) {
    const double lambda =
        select_lambda(train, k, family[k], config.lambda_grid, config.folds, config.settings);
    const RidgeMixedModel ridge = fit_ridge_mixed(train, k, family[k], lambda, config.settings);
    const VectorXd mu = predict_ridge(ridge, test, config.mode);
    const VectorXd y = test.Y.col(k);
    rows.push_back({"ridge_mixed", k, "lambda=" + format_double(lambda),
                    deviance(y, mu, test.prior_weights(), family[k]),
                    weighted_rmse(y, mu, test.W)});
  }

  if (config.include_null) {
    for (int k = 0; k < q; ++k) {
      const RidgeMixedModel null_model = fit_null_mixed(train, k, family[k], config.settings);
      const VectorXd mu = predict_ridge(null_model, test, config.mode);
      const VectorXd y = test.Y.col(k);
      rows.push_back({"intercept_mixed", k, "-", deviance(y, mu, test.prior_weights(), family[k]),
                      weighted_rmse(y, mu, test.W)});
    }
  }
  return rows;
}

void write_comparison_csv(const std::vector<CompareRow>& rows,
                          const std::vector<std::string>& response_names, std::ostream& out) {
  out << "method,response,\"lambda_or_(H,s,l)\",holdout_deviance,holdout_rmse\n";
  for (const auto& r : rows) {
    const std::string name = r.response < static_cast<int>(response_names.size())
                                 ? response_names[static_cast<std::size_t>(r.response)]
                                 : std::to_string(r.response + 1);
    out << r.method << ',' << name << ',' << r.tuning << ',' << format_double(r.holdout_deviance)
        << ',' << format_double(r.holdout_rmse) << '\n';
  }
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double fraction, bool by_groups,
                                             std::uint64_t seed) {
  ds.validate();
  if (!(fraction > 0.0 && fraction < 1.0)) throw InputError("test fraction must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  std::vector<char> is_test(static_cast<std::size_t>(ds.n()), 0);
  const int N = ds.num_groups();
  if (by_groups) {
    const int held = std::clamp(static_cast<int>(std::lround(fraction * N)), 1, N - 2);
    if (N < 3) throw InputError("splitting by groups needs at least 3 groups");
    std::vector<int> order(static_cast<std::size_t>(N));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<char> held_group(static_cast<std::size_t>(N), 0);
    for (int j = 0; j < held; ++j) held_group[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] = 1;
    for (int i = 0; i < ds.n(); ++i) {
      is_test[static_cast<std::size_t>(i)] = held_group[static_cast<std::size_t>(ds.groups[static_cast<std::size_t>(i)])];
    }
  } else {
    std::vector<std::vector<int>> members(static_cast<std::size_t>(N));
    for (int i = 0; i < ds.n(); ++i) members[static_cast<std::size_t>(ds.groups[static_cast<std::size_t>(i)])].push_back(i);
    for (auto& rows : members) {
      std::shuffle(rows.begin(), rows.end(), rng);
      const int held = std::min(static_cast<int>(std::floor(fraction * static_cast<double>(rows.size()))),
                                static_cast<int>(rows.size()) - 1);
      for (int j = 0; j < held; ++j) is_test[static_cast<std::size_t>(rows[static_cast<std::size_t>(j)])] = 1;
    }
  }
  std::vector<int> tr, te;
  for (int i = 0; i < ds.n(); ++i) (is_test[static_cast<std::size_t>(i)] ? te : tr).push_back(i);
  if (te.empty()) throw InputError("empty test set");
  return {ds.subset(tr), ds.subset(te)};
}

}  // namespace scglrmix
