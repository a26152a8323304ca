#pragma once

#include "scglrmix/henderson.hpp"
#include "scglrmix/model.hpp"
#include "scglrmix/scglr_mixed.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace scglrmix {

/// Univariate mixed model with a ridge penalty on the X coefficients:
/// eta = X beta_X + T beta_T + U xi. T (and the intercept) is unpenalized.
struct RidgeMixedModel {
  VectorXd beta;  // p + r, order [X, T]
  VectorXd xi;    // N
  double sigma2 = kSigma2Floor;
  double lambda = 0.0;
  int response = 0;
  FamilyLink family;
  Standardization standardization;
  std::vector<std::string> group_labels;
  bool converged = false;
  int iterations = 0;
  int sigma2_clamps = 0;
  // Henderson objective per iteration at that iteration's (z, w, sigma2):
  // after the solve, and at the previous iterate's (beta, xi).
  std::vector<double> objective_after;
  std::vector<double> objective_before;
  // Working variables and weights of the final solve.
  VectorXd working_z;
  VectorXd working_w;
  double solve_sigma2 = kSigma2Floor;  // sigma2 used by the final solve

  int p() const;
};

/// Schall loop identical to the mixed SCGLR one, with design [X, T] and
/// lambda added to the X block of Henderson's fixed-effect diagonal.
/// settings.freeze_random_effects drops xi (penalized weighted least squares).
RidgeMixedModel fit_ridge_mixed(const Dataset& ds, int k, const FamilyLink& family, double lambda,
                                const FitSettings& settings);

/// Intercept/T-only mixed model: the reference every regularized fit should beat.
RidgeMixedModel fit_null_mixed(const Dataset& ds, int k, const FamilyLink& family,
                               const FitSettings& settings);

VectorXd predict_ridge(const RidgeMixedModel& model, const Dataset& ds, PredictionMode mode);

/// Log-spaced grid of `count` points between lo and hi inclusive.
std::vector<double> log_grid(double lo, double hi, int count);

/// Parses "lo:hi:count" or a comma list.
std::vector<double> parse_lambda_grid(const std::string& text);

/// Grouped-CV choice of lambda for response k (mean held-out deviance per row).
double select_lambda(const Dataset& ds, int k, const FamilyLink& family,
                     const std::vector<double>& grid, int folds, const FitSettings& settings);

struct CompareConfig {
  std::vector<GridPoint> grid{{1, 0.5, 4.0}, {2, 0.5, 4.0}, {3, 0.5, 4.0}};
  std::vector<double> lambda_grid = log_grid(1e-4, 1e4, 25);
  int folds = 5;
  CriterionParams base_params;
  FitSettings settings = mixed_defaults();
  PredictionMode mode = PredictionMode::Marginal;  // Conditional for row splits
  bool include_null = true;
};

struct CompareRow {
  std::string method;
  int response = 0;
  std::string tuning;
  double holdout_deviance = 0.0;
  double holdout_rmse = 0.0;
};

/// Held-out deviance and RMSE per response for mixed SCGLR (CV-selected
/// H, s, l), the ridge mixed model (CV-selected lambda per response) and,
/// optionally, the T-only mixed model.
std::vector<CompareRow> compare(const Dataset& train, const Dataset& test, const FamilySpec& family,
                                const CompareConfig& config);

void write_comparison_csv(const std::vector<CompareRow>& rows,
                          const std::vector<std::string>& response_names, std::ostream& out);

/// Splits a dataset into disjoint train/test parts, holding out about
/// `fraction` of the groups (by_groups) or of the rows within each group.
std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double fraction, bool by_groups,
                                             std::uint64_t seed);

}  // namespace scglrmix
