#pragma once

#include "scglrmix/model.hpp"

namespace scglrmix {

/// Fixed-effects multivariate SCGLR. Components are extracted one at a time;
/// for each, Fisher scoring alternates a component update at fixed working
/// variables with a weighted least-squares fit of every z_k on [f, F, T].
/// Component h is W-orthogonal to the previous ones and competes against
/// T^h = F^h followed by T in the goodness-of-fit term.
ComponentModel fit_scglr(const Dataset& ds, const FamilySpec& family, int H,
                         const CriterionParams& params, const FitSettings& settings);

/// g^-1((X loadings) gamma_k + T delta_k) from raw blocks.
VectorXd predict(const ComponentModel& model, const MatrixXd& new_x, const MatrixXd& new_t, int k);

/// Exponential-family deviance of response k on a dataset carrying the
/// model's column layout (raw or standardized).
double deviance(const ComponentModel& model, const Dataset& ds, int k);

/// Common checks for the fit entry points.
void check_fit_inputs(const Dataset& ds, const FamilySpec& family, int H);

}  // namespace scglrmix
