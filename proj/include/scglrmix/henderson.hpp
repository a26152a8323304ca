#pragma once

#include <Eigen/Dense>

namespace scglrmix {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kSigma2Floor = 1e-8;
inline constexpr double kSigma2Ceil = 1e8;

/// Per-response mixed-model state between Schall iterations.
struct MixedState {
  double gamma = 0.0;
  VectorXd delta;
  VectorXd xi;
  double sigma2 = 1.0;
  double trace_xixi = 0.0;
};

struct HendersonSolution {
  VectorXd beta;            // fixed effects, one per column of the design
  VectorXd xi;              // random-effect predictions, one per group
  double trace_xixi = 0.0;  // tr of the xi-xi block of the inverse coefficient matrix
};

/// Solves Henderson's mixed-model equations with R^-1 = diag(w) and
/// D^-1 = I / sigma2:
///
///   [M'R^-1 M + P   M'R^-1 U         ] [beta]   [M'R^-1 z]
///   [U'R^-1 M       U'R^-1 U + D^-1  ] [xi  ] = [U'R^-1 z]
///
/// `penalty` (length m, optional) is added to the fixed-effect diagonal P.
/// Throws InputError naming the first fixed-effect column that is
/// collinear with the others in the w metric.
HendersonSolution henderson_solve(const MatrixXd& M, const MatrixXd& U, const VectorXd& z,
                                  const VectorXd& w, double sigma2,
                                  const VectorXd* penalty = nullptr);

struct VarianceUpdate {
  double sigma2 = kSigma2Floor;
  bool clamped = false;
};

/// Schall's update: xi'xi / (N - tr(C_xixi) / sigma2_old), denominator
/// guarded at 1e-8, result clamped to [kSigma2Floor, kSigma2Ceil].
VarianceUpdate update_variance(const VectorXd& xi, double trace_xixi, double sigma2_old);

/// Penalized working objective minimized by henderson_solve at fixed sigma2:
/// |z - M beta - U xi|^2_w + beta' P beta + xi'xi / sigma2.
double henderson_objective(const MatrixXd& M, const MatrixXd& U, const VectorXd& z,
                           const VectorXd& w, double sigma2, const VectorXd& beta,
                           const VectorXd& xi, const VectorXd* penalty = nullptr);

}  // namespace scglrmix
