#include "scglrmix/scglr_mixed.hpp"

#include "scglrmix/henderson.hpp"
#include "scglrmix/scglr_fixed.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace scglrmix {

namespace {

struct ResponseState {
  VectorXd beta;  // design order [f, F, T]
  VectorXd xi;
  double sigma2 = 1.0;
};

}  // namespace

FitSettings mixed_defaults() {
  FitSettings s;
  s.max_outer = 200;
  return s;
}

MixedComponentModel fit_mixed_scglr(const Dataset& input, const FamilySpec& family, int H,
                                    const CriterionParams& params, const FitSettings& settings) {
  check_fit_inputs(input, family, H);
  if (input.num_groups() < 2) {
    throw InputError("single group: random intercept confounded with fixed intercept");
  }
  params.validate();
  settings.validate();
  const Dataset ds = prepare_dataset(input, settings.standardize);
  const int n = ds.n();
  const int q = ds.q();
  const int r = ds.r();
  const int N = ds.num_groups();
  const bool frozen = settings.freeze_random_effects;
  const VectorXd pw = ds.prior_weights();
  const MatrixXd U = group_design(ds.groups, N);
  const MatrixXd A = metric_matrix(params.metric, ds.X, ds.W);

  MixedComponentModel model;
  copy_schema(ds, model);
  model.params = params;
  model.family = family;
  model.group_labels = ds.group_labels;
  model.loadings.resize(ds.p(), 0);
  model.components.resize(n, 0);

  std::vector<ResponseState> state(static_cast<std::size_t>(q));
  std::vector<VectorXd> eta(static_cast<std::size_t>(q));
  for (int k = 0; k < q; ++k) {
    eta[k] = initial_eta(ds.Y.col(k), family[k]);
    state[k].xi = VectorXd::Zero(N);
    state[k].sigma2 = frozen ? kSigma2Floor : settings.sigma2_init;
  }

  for (int h = 0; h < H; ++h) {
    const MatrixXd& F = model.components;
    MatrixXd Tblock(n, F.cols() + r);
    Tblock << F, ds.T;
    const OrthoConstraints cons = OrthoConstraints::from_components(F, ds.W, ds.X);
    VectorXd u = feasible_start(ds.X, ds.W, cons, A);
    for (auto& st : state) st.beta = VectorXd::Zero(1 + Tblock.cols());

    auto design_for = [&](const VectorXd& loading) {
      MatrixXd M(n, 1 + Tblock.cols());
      M << ds.X * loading, Tblock;
      return M;
    };

    ComponentDiagnostics diag;
    std::vector<WorkingQuantities> wq(static_cast<std::size_t>(q));
    for (int k = 0; k < q; ++k) wq[k] = working_quantities(ds.Y.col(k), eta[k], family[k]);

    for (int outer = 1; outer <= settings.max_outer; ++outer) {
      const std::vector<ResponseState> before = state;
      const VectorXd u_before = u;
      std::vector<VectorXd> wk(static_cast<std::size_t>(q));
      for (int k = 0; k < q; ++k) wk[k] = pw.cwiseProduct(wq[k].w);

      ComponentSolution sol;
      for (int pass = 0; pass < settings.inner_passes; ++pass) {
        // Henderson at fixed u, then Schall's variance update.
        if (!frozen) {
          const MatrixXd M = design_for(u);
          for (int k = 0; k < q; ++k) {
            const HendersonSolution hs = henderson_solve(M, U, wq[k].z, wk[k], state[k].sigma2);
            const VarianceUpdate vu = update_variance(hs.xi, hs.trace_xixi, state[k].sigma2);
            state[k].sigma2 = vu.sigma2;
            state[k].xi = hs.xi;
            if (vu.clamped) ++diag.sigma2_clamps;
          }
        }
        // Component at fixed (gamma, delta, sigma2).
        FitContext ctx{ds.X, ds.W, {}, {}, Tblock};
        for (int k = 0; k < q; ++k) {
          if (settings.psi_fixed_part_only) {
            ctx.z.push_back(wq[k].z - U * state[k].xi);
          } else {
            ctx.z.push_back(wq[k].z);
          }
          ctx.weights.push_back(wk[k]);
        }
        const CriterionEvaluator crit(std::move(ctx), params);
        OptimizerSettings opt = inner_settings(settings);
        if (outer > 1 || pass > 0) opt.n_restarts = 0;
        try {
          sol = maximize_component(crit, cons, opt, {u});
        } catch (const ComponentNotConverged& e) {
          sol = e.best();
          ++diag.optimizer_failures;
        }
        diag.optimizer_restarts += sol.diagnostics.restarts;
        const double moved = 1.0 - std::abs(sol.u.dot(A * u));
        u = sol.u;
        if (moved < settings.optimizer.tol) break;
      }

      // Refresh (gamma, delta, xi) at the new u and rebuild the predictor.
      const MatrixXd M = design_for(u);
      for (int k = 0; k < q; ++k) {
        if (frozen) {
          state[k].beta = weighted_least_squares(M, wq[k].z, wk[k]);
          state[k].xi.setZero();
        } else {
          const HendersonSolution hs = henderson_solve(M, U, wq[k].z, wk[k], state[k].sigma2);
          state[k].beta = hs.beta;
          state[k].xi = hs.xi;
        }
        eta[k] = M * state[k].beta + U * state[k].xi;
      }

      double change = relative_change(u, u_before);
      double dsig = 0.0;
      TraceRow row;
      for (int k = 0; k < q; ++k) {
        change = std::max(change, relative_change(state[k].beta, before[k].beta));
        change = std::max(change, relative_change(state[k].xi, before[k].xi));
        const double ds2 = std::abs(state[k].sigma2 - before[k].sigma2);
        change = std::max(change, ds2 / std::max(before[k].sigma2, 1.0));
        dsig = std::max(dsig, ds2);
        row.sigma2.push_back(state[k].sigma2);
      }
      row.component = h;
      row.iteration = outer;
      row.criterion = sol.value;
      row.delta_u = (u - u_before).cwiseAbs().maxCoeff();
      row.delta_sigma2 = dsig;
      row.max_change = change;
      model.trace.push_back(row);
      diag.outer_iterations = outer;
      diag.criterion = sol.value;
      diag.degenerate = sol.diagnostics.degenerate;

      std::vector<WorkingQuantities> next(static_cast<std::size_t>(q));
      for (int k = 0; k < q; ++k) next[k] = working_quantities(ds.Y.col(k), eta[k], family[k]);
      const bool stationary = frozen && working_unchanged(next, wq);
      wq = std::move(next);
      if ((outer > 1 && change < settings.outer_tol) || stationary) {
        diag.converged = true;
        break;
      }
    }

    if (!diag.converged && model.converged) {
      model.converged = false;
      model.failed_component = h;
    }
    model.diagnostics.push_back(diag);
    model.loadings.conservativeResize(Eigen::NoChange, h + 1);
    model.loadings.col(h) = u;
    model.components.conservativeResize(Eigen::NoChange, h + 1);
    model.components.col(h) = ds.X * u;
  }

  model.gamma.resize(H, q);
  model.delta.resize(r, q);
  model.sigma2.resize(q);
  model.xi_hat.resize(N, q);
  for (int k = 0; k < q; ++k) {
    const VectorXd& b = state[k].beta;
    model.gamma(H - 1, k) = b(0);
    for (int j = 0; j < H - 1; ++j) model.gamma(j, k) = b(1 + j);
    model.delta.col(k) = b.tail(r);
    model.sigma2(k) = state[k].sigma2;
    model.xi_hat.col(k) = state[k].xi;
  }
  return model;
}

VectorXd predict_mixed(const MixedComponentModel& model, const MatrixXd& new_x,
                       const MatrixXd& new_t, const std::vector<std::string>& new_groups,
                       PredictionMode mode, int k) {
  VectorXd eta = model.linear_predictor(new_x, new_t, k);
  if (mode == PredictionMode::Conditional) {
    if (static_cast<Eigen::Index>(new_groups.size()) != eta.size()) {
      throw InputError("group label count does not match the number of rows");
    }
    std::map<std::string, int> code;
    for (int j = 0; j < model.num_groups(); ++j) code.emplace(model.group_labels[j], j);
    std::vector<std::string> unknown;
    for (std::size_t i = 0; i < new_groups.size(); ++i) {
      const auto it = code.find(new_groups[i]);
      if (it == code.end()) {
        if (std::find(unknown.begin(), unknown.end(), new_groups[i]) == unknown.end()) {
          unknown.push_back(new_groups[i]);
        }
        continue;
      }
      eta(static_cast<Eigen::Index>(i)) += model.xi_hat(it->second, k);
    }
    if (!unknown.empty()) {
      std::string list;
      for (const auto& s : unknown) list += (list.empty() ? "" : ", ") + s;
      throw InputError("unknown group label(s) for conditional prediction: " + list);
    }
  }
  VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    mu(i) = inverse_link(eta(i), model.family[static_cast<std::size_t>(k)]);
  }
  return mu;
}

VectorXd predict_mixed(const MixedComponentModel& model, const Dataset& ds, PredictionMode mode,
                       int k) {
  std::vector<std::string> labels;
  labels.reserve(ds.groups.size());
  for (int g : ds.groups) labels.push_back(ds.group_labels[static_cast<std::size_t>(g)]);
  return predict_mixed(model, raw_x(ds), raw_t(ds), labels, mode, k);
}

double mixed_deviance(const MixedComponentModel& model, const Dataset& ds, PredictionMode mode,
                      int k) {
  const VectorXd mu = predict_mixed(model, ds, mode, k);
  return deviance(ds.Y.col(k), mu, ds.prior_weights(), model.family[static_cast<std::size_t>(k)]);
}

std::vector<int> group_folds(int num_groups, int folds, std::uint64_t seed) {
  if (folds < 2) throw InputError("cross-validation needs at least 2 folds");
  if (folds > num_groups) {
    throw InputError("cannot split " + std::to_string(num_groups) + " groups into " +
                     std::to_string(folds) + " folds");
  }
  std::vector<int> order(static_cast<std::size_t>(num_groups));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold(static_cast<std::size_t>(num_groups));
  for (std::size_t i = 0; i < order.size(); ++i) {
    fold[static_cast<std::size_t>(order[i])] = static_cast<int>(i % static_cast<std::size_t>(folds));
  }
  return fold;
}

std::vector<GridPoint> make_grid(const std::vector<int>& H, const std::vector<double>& s,
                                 const std::vector<double>& l) {
  std::vector<GridPoint> grid;
  for (int h : H) {
    for (double sv : s) {
      for (double lv : l) grid.push_back({h, sv, lv});
    }
  }
  return grid;
}

std::size_t select_one_se(const std::vector<CvRow>& table) {
  if (table.empty()) throw InputError("empty cross-validation table");
  std::size_t best = 0;
  for (std::size_t i = 1; i < table.size(); ++i) {
    if (table[i].mean_deviance < table[best].mean_deviance) best = i;
  }
  const double limit = table[best].mean_deviance + table[best].se;
  std::size_t pick = best;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].mean_deviance > limit) continue;
    const auto& a = table[i].point;
    const auto& b = table[pick].point;
    if (a.H != b.H ? a.H < b.H : a.s != b.s ? a.s < b.s : a.l != b.l ? a.l < b.l : i < pick) {
      pick = i;
    }
  }
  return pick;
}

CvResult cross_validate(const Dataset& input, const FamilySpec& family,
                        const std::vector<GridPoint>& grid, int folds,
                        const FitSettings& settings, const CriterionParams& base_params) {
  if (grid.empty()) throw InputError("cross-validation grid is empty");
  input.validate();
  const int N = input.num_groups();
  const std::vector<int> fold_of = group_folds(N, folds, settings.optimizer.seed);

  std::vector<std::vector<int>> train_rows(static_cast<std::size_t>(folds));
  std::vector<std::vector<int>> test_rows(static_cast<std::size_t>(folds));
  std::vector<int> groups_in_fold(static_cast<std::size_t>(folds), 0);
  for (int g = 0; g < N; ++g) ++groups_in_fold[static_cast<std::size_t>(fold_of[g])];
  for (int f = 0; f < folds; ++f) {
    if (N - groups_in_fold[static_cast<std::size_t>(f)] < 2) {
      throw InputError("fold " + std::to_string(f) + " leaves fewer than 2 training groups");
    }
  }
  for (int i = 0; i < input.n(); ++i) {
    const int f = fold_of[static_cast<std::size_t>(input.groups[static_cast<std::size_t>(i)])];
    for (int g = 0; g < folds; ++g) {
      (g == f ? test_rows : train_rows)[static_cast<std::size_t>(g)].push_back(i);
    }
  }

  std::vector<Dataset> train, test;
  for (int f = 0; f < folds; ++f) {
    Dataset tr = input.subset(train_rows[static_cast<std::size_t>(f)]);
    if (settings.standardize) tr = standardize(tr);
    train.push_back(std::move(tr));
    test.push_back(input.subset(test_rows[static_cast<std::size_t>(f)]));
  }

  CvResult result;
  for (const GridPoint& point : grid) {
    CriterionParams params = base_params;
    params.s = point.s;
    params.l = point.l;
    CvRow row;
    row.point = point;
    for (int f = 0; f < folds; ++f) {
      const auto fi = static_cast<std::size_t>(f);
      const MixedComponentModel model = fit_mixed_scglr(train[fi], family, point.H, params, settings);
      row.converged = row.converged && model.converged;
      double dev = 0.0;
      for (int k = 0; k < input.q(); ++k) {
        dev += mixed_deviance(model, test[fi], PredictionMode::Marginal, k);
      }
      row.fold_deviance.push_back(dev / static_cast<double>(test[fi].n()));
    }
    const double mean = std::accumulate(row.fold_deviance.begin(), row.fold_deviance.end(), 0.0) /
                        static_cast<double>(folds);
    double ss = 0.0;
    for (double d : row.fold_deviance) ss += (d - mean) * (d - mean);
    row.mean_deviance = mean;
    row.se = std::sqrt(ss / static_cast<double>(folds - 1)) / std::sqrt(static_cast<double>(folds));
    result.table.push_back(std::move(row));
  }
  result.selected = select_one_se(result.table);
  return result;
}

}  // namespace scglrmix
