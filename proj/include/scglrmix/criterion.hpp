#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace scglrmix {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Metric { Identity, Gram };

inline constexpr double kInfiniteLocality = std::numeric_limits<double>::infinity();

/// s trades structural relevance (s = 1) against goodness of fit (s = 0);
/// l >= 1 sets the bundle locality, l = kInfiniteLocality targets the single
/// strongest bundle.
struct CriterionParams {
  double s = 0.5;
  double l = 4.0;
  Metric metric = Metric::Identity;

  void validate() const;
  bool infinite_locality() const { return std::isinf(l); }
};

std::string metric_name(Metric m);
Metric parse_metric(const std::string& name);
std::string format_locality(double l);
double parse_locality(const std::string& text);  // accepts "inf"

/// Raised when phi or psi is zero while 0 < s < 1.
class CriterionVanishes : public std::runtime_error {
 public:
  CriterionVanishes() : std::runtime_error("criterion vanishes; perturb start") {}
};

/// Everything the criterion needs besides u: the X block, the observation
/// metric W (sums to 1), one working response and weight diagonal per
/// response, and the covariate block spanned alongside Xu (T, or F^h
/// followed by T). `weights[k]` is the full W_k diagonal.
struct FitContext {
  MatrixXd X;
  VectorXd W;
  std::vector<VectorXd> z;
  std::vector<VectorXd> weights;
  MatrixXd T;  // n x r, r may be 0
};

struct FitValue {
  double value = 0.0;
  int degenerate = 0;  // responses whose Xu column was dropped by the rank guard
};

/// Caches the u-independent parts of phi and psi for one context.
///
/// psi is evaluated per response after projecting the T-block out in the W_k
/// metric: psi_k(u) = |P_T z|^2 + (a_k'u)^2 / (u'M_k u), with a_k and M_k the
/// cross-product and Gram matrix of the T-residualized X. This equals the
/// squared W_k-norm of the projection of z_k onto span{Xu, T}.
class CriterionEvaluator {
 public:
  CriterionEvaluator(FitContext ctx, CriterionParams params);

  const CriterionParams& params() const { return params_; }
  const FitContext& context() const { return ctx_; }
  int p() const { return static_cast<int>(ctx_.X.cols()); }
  const MatrixXd& gram() const { return gram_; }

  double phi(const VectorXd& u) const;
  VectorXd phi_gradient(const VectorXd& u) const;

  FitValue psi(const VectorXd& u) const;
  VectorXd psi_gradient(const VectorXd& u) const;

  /// [phi]^s [psi]^(1-s) and its gradient.
  double value(const VectorXd& u) const;
  VectorXd value_gradient(const VectorXd& u) const;

  /// s log phi + (1-s) log psi; -inf when a required factor vanishes.
  double log_value(const VectorXd& u) const;
  VectorXd log_gradient(const VectorXd& u) const;

 private:
  struct ResponseTerm {
    double fixed = 0.0;  // |P_T z|^2_W
    VectorXd a;
    MatrixXd M;
    MatrixXd D;  // X'W_k X, scale reference for the rank guard
  };

  FitContext ctx_;
  CriterionParams params_;
  MatrixXd gram_;  // X'WX
  std::vector<ResponseTerm> terms_;
};

double structural_relevance(const VectorXd& u, const MatrixXd& X, const VectorXd& W, double l);
VectorXd relevance_gradient(const VectorXd& u, const MatrixXd& X, const VectorXd& W, double l);

/// Same quantities from a precomputed Gram matrix X'WX.
double relevance_from_gram(const VectorXd& u, const MatrixXd& gram, double l);
VectorXd relevance_gradient_from_gram(const VectorXd& u, const MatrixXd& gram, double l);

FitValue goodness_of_fit(const VectorXd& u, const FitContext& ctx);
double combined_criterion(const VectorXd& u, const CriterionParams& params, const FitContext& ctx);
VectorXd combined_gradient(const VectorXd& u, const CriterionParams& params, const FitContext& ctx);

/// Orthonormal basis (in the sqrt(w)-scaled space) of the columns of
/// diag(sqrt(w)) B kept by a column-pivoted QR with relative pivot
/// threshold `tol`; `kept` receives the original indices of kept columns.
MatrixXd weighted_basis(const MatrixXd& B, const VectorXd& w, double tol,
                        std::vector<int>* kept = nullptr);

}  // namespace scglrmix
