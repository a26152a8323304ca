#pragma once

#include "scglrmix/criterion.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace scglrmix {

/// Linear constraints C u = 0 with C = F^h' W X (h x p); empty for the first
/// component.
struct OrthoConstraints {
  MatrixXd C;

  static OrthoConstraints none(int p) { return {MatrixXd(0, p)}; }
  static OrthoConstraints from_components(const MatrixXd& F, const VectorXd& W, const MatrixXd& X);
};

struct OptimizerSettings {
  int max_iter = 500;
  double tol = 1e-6;  // on 1 - |u_new' A u_old|
  int n_restarts = 10;
  std::uint64_t seed = 42;
  int threads = 1;

  void validate() const;
};

struct OptimizerDiagnostics {
  int iterations = 0;        // of the selected restart
  int restarts = 0;          // starts actually run
  int converged_restarts = 0;
  int best_restart = -1;
  bool converged = false;
  int degenerate = 0;        // responses on the rank guard at u*
  std::vector<double> trace; // criterion value after each accepted step
};

struct ComponentSolution {
  VectorXd u;
  double value = 0.0;
  OptimizerDiagnostics diagnostics;
};

/// Thrown when no restart converged; carries the best iterate seen.
class ComponentNotConverged : public std::runtime_error {
 public:
  ComponentNotConverged(ComponentSolution best);
  const ComponentSolution& best() const { return best_; }

 private:
  ComponentSolution best_;
};

/// Orthonormal basis of {u : C u = 0}. `rank` receives the numerical rank
/// of C. Throws InputError("no feasible direction") when C has rank p.
MatrixXd nullspace_basis(const MatrixXd& C, int* rank = nullptr);

/// Maximizes [phi]^s [psi]^(1-s) over u'Au = 1, C u = 0.
///
/// The search runs in null-space coordinates u = K v with the reduced metric
/// B = K'AK. Each step moves v along the B-tangent part of B^-1 grad, where
/// grad is the gradient of the log-composite, renormalizes, and accepts only
/// on strict ascent, halving the step up to 20 times. Starts: the dominant
/// right singular vector of W^1/2 X, any caller-supplied warm starts, then
/// `n_restarts` random sphere points. The best start wins (highest value,
/// then fewest iterations, then lowest start index). The returned u is
/// signed so that Xu has nonnegative W-covariance with the first working
/// response.
ComponentSolution maximize_component(const CriterionEvaluator& criterion,
                                     const OrthoConstraints& constraints,
                                     const OptimizerSettings& settings,
                                     const std::vector<VectorXd>& warm_starts = {});

ComponentSolution maximize_component(const CriterionParams& params, const FitContext& ctx,
                                     const OrthoConstraints& constraints,
                                     const OptimizerSettings& settings);

/// A = I or A = X'WX.
MatrixXd metric_matrix(Metric metric, const MatrixXd& X, const VectorXd& W);

/// Dominant right singular vector of W^1/2 X.
VectorXd dominant_direction(const MatrixXd& X, const VectorXd& W);

/// dominant_direction projected onto the feasible subspace, A-normalized.
VectorXd feasible_start(const MatrixXd& X, const VectorXd& W, const OrthoConstraints& constraints,
                        const MatrixXd& A);

}  // namespace scglrmix
