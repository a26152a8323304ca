#include "scglrmix/scglr_fixed.hpp"

#include <cmath>

namespace scglrmix {

void check_fit_inputs(const Dataset& ds, const FamilySpec& family, int H) {
  ds.validate();
  if (static_cast<int>(family.size()) != ds.q()) {
    throw InputError("family list has " + std::to_string(family.size()) + " entries for " +
                     std::to_string(ds.q()) + " responses");
  }
  if (H < 1) throw InputError("H must be >= 1");
  if (H > ds.p()) {
    throw InputError("H = " + std::to_string(H) + " exceeds the number of explanatory columns");
  }
  for (int k = 0; k < ds.q(); ++k) {
    check_support(ds.Y.col(k), family[static_cast<std::size_t>(k)],
                  "response '" + (k < static_cast<int>(ds.response_names.size())
                                      ? ds.response_names[static_cast<std::size_t>(k)]
                                      : std::to_string(k + 1)) + "'");
  }
}

ComponentModel fit_scglr(const Dataset& input, const FamilySpec& family, int H,
                         const CriterionParams& params, const FitSettings& settings) {
  check_fit_inputs(input, family, H);
  params.validate();
  settings.validate();
  const Dataset ds = prepare_dataset(input, settings.standardize);
  const int n = ds.n();
  const int q = ds.q();
  const int r = ds.r();
  const VectorXd pw = ds.prior_weights();
  const MatrixXd A = metric_matrix(params.metric, ds.X, ds.W);

  ComponentModel model;
  copy_schema(ds, model);
  model.params = params;
  model.family = family;
  model.loadings.resize(ds.p(), 0);
  model.components.resize(n, 0);

  std::vector<VectorXd> eta(static_cast<std::size_t>(q));
  for (int k = 0; k < q; ++k) eta[k] = initial_eta(ds.Y.col(k), family[k]);
  MatrixXd coefs;  // (1 + h + r) x q, design order [f, F, T]

  for (int h = 0; h < H; ++h) {
    const MatrixXd& F = model.components;
    MatrixXd Tblock(n, F.cols() + r);
    Tblock << F, ds.T;
    const OrthoConstraints cons = OrthoConstraints::from_components(F, ds.W, ds.X);
    VectorXd u = feasible_start(ds.X, ds.W, cons, A);
    coefs = MatrixXd::Zero(1 + Tblock.cols(), q);

    ComponentDiagnostics diag;
    std::vector<WorkingQuantities> wq(static_cast<std::size_t>(q));
    for (int k = 0; k < q; ++k) wq[k] = working_quantities(ds.Y.col(k), eta[k], family[k]);

    for (int outer = 1; outer <= settings.max_outer; ++outer) {
      FitContext ctx{ds.X, ds.W, {}, {}, Tblock};
      for (int k = 0; k < q; ++k) {
        ctx.z.push_back(wq[k].z);
        ctx.weights.push_back(pw.cwiseProduct(wq[k].w));
      }
      const CriterionEvaluator crit(std::move(ctx), params);
      OptimizerSettings opt = inner_settings(settings);
      if (outer > 1) opt.n_restarts = 0;
      ComponentSolution sol;
      try {
        sol = maximize_component(crit, cons, opt, {u});
      } catch (const ComponentNotConverged& e) {
        sol = e.best();
        ++diag.optimizer_failures;
      }
      diag.optimizer_restarts += sol.diagnostics.restarts;

      const VectorXd f = ds.X * sol.u;
      MatrixXd design(n, 1 + Tblock.cols());
      design << f, Tblock;
      MatrixXd new_coefs(design.cols(), q);
      for (int k = 0; k < q; ++k) {
        new_coefs.col(k) = weighted_least_squares(design, wq[k].z, crit.context().weights[k]);
        eta[k] = design * new_coefs.col(k);
      }

      double change = relative_change(sol.u, u);
      for (int k = 0; k < q; ++k) {
        change = std::max(change, relative_change(new_coefs.col(k), coefs.col(k)));
      }
      TraceRow row;
      row.component = h;
      row.iteration = outer;
      row.criterion = sol.value;
      row.delta_u = (sol.u - u).cwiseAbs().maxCoeff();
      row.max_change = change;
      model.trace.push_back(row);

      u = sol.u;
      coefs = new_coefs;
      diag.outer_iterations = outer;
      diag.criterion = sol.value;
      diag.degenerate = sol.diagnostics.degenerate;

      std::vector<WorkingQuantities> next(static_cast<std::size_t>(q));
      for (int k = 0; k < q; ++k) next[k] = working_quantities(ds.Y.col(k), eta[k], family[k]);
      // Unchanged working variables reproduce the same step, so the loop is
      // at its fixed point (the gaussian case stops after one pass).
      const bool stationary = working_unchanged(next, wq);
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

  // coefs rows: [f^H, f^1..f^{H-1}, T]
  model.gamma.resize(H, q);
  model.gamma.row(H - 1) = coefs.row(0);
  if (H > 1) model.gamma.topRows(H - 1) = coefs.middleRows(1, H - 1);
  model.delta = coefs.bottomRows(r);
  return model;
}

VectorXd predict(const ComponentModel& model, const MatrixXd& new_x, const MatrixXd& new_t, int k) {
  const VectorXd eta = model.linear_predictor(new_x, new_t, k);
  VectorXd mu(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    mu(i) = inverse_link(eta(i), model.family[static_cast<std::size_t>(k)]);
  }
  return mu;
}

double deviance(const ComponentModel& model, const Dataset& ds, int k) {
  const VectorXd mu = predict(model, raw_x(ds), raw_t(ds), k);
  return deviance(ds.Y.col(k), mu, ds.prior_weights(), model.family[static_cast<std::size_t>(k)]);
}

}  // namespace scglrmix
