#pragma once

#include "scglrmix/model.hpp"

#include <string>
#include <vector>

namespace scglrmix {

/// Mixed SCGLR: eta_k = (Xu) gamma_k + T delta_k + U xi_k with
/// xi_k ~ N(0, sigma2_k I_N).
///
/// Each Schall step linearizes every response at the current conditional
/// predictor, solves Henderson's equations at fixed u and updates sigma2_k,
/// then re-maximizes the component criterion on the conditional working
/// variables and weights, and finally refreshes (gamma, delta, xi) at the new
/// u. Steps repeat until the largest relative change of (u, gamma, delta,
/// sigma2, xi) falls below settings.outer_tol.
///
/// settings.max_outer defaults to 100 in FitSettings; callers wanting the
/// mixed default of 200 use mixed_defaults().
MixedComponentModel fit_mixed_scglr(const Dataset& ds, const FamilySpec& family, int H,
                                    const CriterionParams& params, const FitSettings& settings);

FitSettings mixed_defaults();

enum class PredictionMode { Marginal, Conditional };

/// Marginal: g^-1(F_new gamma_k + T_new delta_k). Conditional adds the
/// predicted effect of each row's group; every label must be known.
VectorXd predict_mixed(const MixedComponentModel& model, const MatrixXd& new_x,
                       const MatrixXd& new_t, const std::vector<std::string>& new_groups,
                       PredictionMode mode, int k);

/// Predictions for a dataset (labels taken from ds.group_labels).
VectorXd predict_mixed(const MixedComponentModel& model, const Dataset& ds, PredictionMode mode,
                       int k);

double mixed_deviance(const MixedComponentModel& model, const Dataset& ds, PredictionMode mode,
                      int k);

struct GridPoint {
  int H = 1;
  double s = 0.5;
  double l = 4.0;
};

struct CvRow {
  GridPoint point;
  double mean_deviance = 0.0;  // mean over folds of held-out deviance per row
  double se = 0.0;
  std::vector<double> fold_deviance;
  bool converged = true;
};

struct CvResult {
  std::vector<CvRow> table;
  std::size_t selected = 0;  // index into table
};

/// Fold id (0..folds-1) for each group code; groups are shuffled with seed.
std::vector<int> group_folds(int num_groups, int folds, std::uint64_t seed);

/// Whole-group K-fold cross-validation of fit_mixed_scglr over a grid,
/// scored by marginal held-out deviance summed over responses and divided
/// by the number of held-out rows. Selection: smallest H, then smallest s,
/// among points within one standard error of the best mean.
CvResult cross_validate(const Dataset& ds, const FamilySpec& family,
                        const std::vector<GridPoint>& grid, int folds,
                        const FitSettings& settings, const CriterionParams& base_params = {});

/// Applies the one-standard-error rule to a filled table.
std::size_t select_one_se(const std::vector<CvRow>& table);

std::vector<GridPoint> make_grid(const std::vector<int>& H, const std::vector<double>& s,
                                 const std::vector<double>& l);

}  // namespace scglrmix
