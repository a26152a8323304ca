#pragma once

#include "scglrmix/component_opt.hpp"
#include "scglrmix/criterion.hpp"
#include "scglrmix/data.hpp"
#include "scglrmix/family.hpp"

#include <string>
#include <vector>

namespace scglrmix {

/// Outer-loop controls shared by the fixed and mixed fits.
struct FitSettings {
  OptimizerSettings optimizer;
  int max_outer = 100;
  double outer_tol = 1e-6;
  bool standardize = true;
  // Mixed fit only.
  double sigma2_init = 1.0;
  bool freeze_random_effects = false;  // xi = 0, sigma2 at the floor
  int inner_passes = 1;                // Henderson/component alternations per outer step
  bool psi_fixed_part_only = false;    // project z - U xi instead of z

  void validate() const;
};

/// One row of the per-iteration trace.
struct TraceRow {
  int component = 0;  // 0-based
  int iteration = 0;  // 1-based
  double criterion = 0.0;
  double delta_u = 0.0;       // |u_new - u_old|_inf
  double delta_sigma2 = 0.0;  // |sigma2_new - sigma2_old|_inf, 0 for fixed fits
  double max_change = 0.0;    // convergence metric
  std::vector<double> sigma2;
};

struct ComponentDiagnostics {
  bool converged = false;
  int outer_iterations = 0;
  int optimizer_restarts = 0;
  int optimizer_failures = 0;  // outer steps where no restart converged
  int degenerate = 0;          // rank-guard events at the final u
  int sigma2_clamps = 0;
  double criterion = 0.0;
};

/// Fitted multivariate SCGLR model: eta_k = (X U_load) gamma_k + T delta_k
/// in the standardized space.
struct ComponentModel {
  MatrixXd loadings;    // p x H
  MatrixXd components;  // n x H on the training rows
  MatrixXd gamma;       // H x q
  MatrixXd delta;       // r x q
  CriterionParams params;
  FamilySpec family;
  Standardization standardization;

  std::vector<std::string> response_names;
  std::vector<std::string> x_names;
  std::vector<std::string> t_names;
  std::string group_name = "group";
  bool has_intercept = false;

  std::vector<ComponentDiagnostics> diagnostics;
  std::vector<TraceRow> trace;
  bool converged = true;
  int failed_component = -1;

  int H() const { return static_cast<int>(loadings.cols()); }
  int p() const { return static_cast<int>(loadings.rows()); }
  int q() const { return static_cast<int>(gamma.cols()); }

  /// Fixed-effect linear predictor from raw (unstandardized) blocks.
  VectorXd linear_predictor(const MatrixXd& raw_x, const MatrixXd& raw_t, int k) const;
};

/// Adds sigma2, random-effect predictions and the group encoding.
struct MixedComponentModel : ComponentModel {
  VectorXd sigma2;                       // q
  MatrixXd xi_hat;                       // N x q
  std::vector<std::string> group_labels;  // code -> label

  int num_groups() const { return static_cast<int>(group_labels.size()); }
};

/// Dataset blocks mapped back to raw units (identity when not standardized).
MatrixXd raw_x(const Dataset& ds);
MatrixXd raw_t(const Dataset& ds);

/// Standardizes when asked and not done already; validates.
Dataset prepare_dataset(const Dataset& ds, bool standardize);

void copy_schema(const Dataset& ds, ComponentModel& model);

/// Weighted least squares of z on the columns of M with weights w; rank
/// deficient columns get a zero coefficient.
VectorXd weighted_least_squares(const MatrixXd& M, const VectorXd& z, const VectorXd& w);

/// Optimizer settings used inside the outer loops. The optimizer's
/// 1 - |cos| rule bounds the loading error by about sqrt(tol), so its tol is
/// tightened to 0.01 * outer_tol^2 (at least 1e-15) to stay below outer_tol.
OptimizerSettings inner_settings(const FitSettings& settings);

/// True when every z and w agree to 1e-12 relative.
bool working_unchanged(const std::vector<WorkingQuantities>& a,
                       const std::vector<WorkingQuantities>& b);

/// |a - b|_inf / max(|b|_inf, 1).
double relative_change(const VectorXd& now, const VectorXd& before);

}  // namespace scglrmix
