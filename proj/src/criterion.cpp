#include "scglrmix/criterion.hpp"

#include "scglrmix/data.hpp"

#include <cmath>

namespace scglrmix {

namespace {

// Xu is dropped from span{Xu, T} when its T-residual is below this fraction
// of its own norm (pivot rule of the rank guard).
constexpr double kRankTol = 1e-10;

}  // namespace

void CriterionParams::validate() const {
  if (!(s >= 0.0 && s <= 1.0)) throw InputError("s must lie in [0, 1]");
  if (!(l >= 1.0)) throw InputError("l must be >= 1");
}

std::string metric_name(Metric m) { return m == Metric::Gram ? "gram" : "identity"; }

Metric parse_metric(const std::string& name) {
  if (name == "identity") return Metric::Identity;
  if (name == "gram") return Metric::Gram;
  throw InputError("unknown metric '" + name + "' (expected identity or gram)");
}

std::string format_locality(double l) { return std::isinf(l) ? "inf" : format_double(l); }

double parse_locality(const std::string& text) {
  if (text == "inf" || text == "Inf" || text == "infinity") return kInfiniteLocality;
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw InputError("bad locality '" + text + "'");
    return v;
  } catch (const std::logic_error&) {
    throw InputError("bad locality '" + text + "'");
  }
}

MatrixXd weighted_basis(const MatrixXd& B, const VectorXd& w, double tol,
                        std::vector<int>* kept) {
  if (kept) kept->clear();
  if (B.cols() == 0) return MatrixXd(B.rows(), 0);
  const MatrixXd Bw = w.array().sqrt().matrix().asDiagonal() * B;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(Bw);
  qr.setThreshold(tol);
  const auto rank = qr.rank();
  if (kept) {
    for (Eigen::Index j = 0; j < rank; ++j) {
      kept->push_back(static_cast<int>(qr.colsPermutation().indices()(j)));
    }
  }
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(B.rows(), rank);
  return Q;
}

double relevance_from_gram(const VectorXd& u, const MatrixXd& gram, double l) {
  const VectorXd c = gram * u;
  const double m = c.cwiseAbs().maxCoeff();
  if (m == 0.0) return 0.0;
  if (std::isinf(l)) return m * m;
  // Scaled by the largest covariance so that |r| <= 1 for any l.
  const double sum = (c.array().abs() / m).pow(2.0 * l).sum();
  return m * m * std::pow(sum, 1.0 / l);
}

VectorXd relevance_gradient_from_gram(const VectorXd& u, const MatrixXd& gram, double l) {
  const VectorXd c = gram * u;
  const double m = c.cwiseAbs().maxCoeff();
  if (m == 0.0) return VectorXd::Zero(u.size());
  if (std::isinf(l)) {
    VectorXd g = VectorXd::Zero(u.size());
    int active = 0;
    for (Eigen::Index j = 0; j < c.size(); ++j) {
      if (std::abs(c(j)) >= m * (1.0 - 1e-12)) {
        g += 2.0 * c(j) * gram.col(j);
        ++active;
      }
    }
    return g / static_cast<double>(active);
  }
  const Eigen::ArrayXd r = c.array() / m;
  const double sum = r.abs().pow(2.0 * l).sum();
  const VectorXd odd = (r.sign() * r.abs().pow(2.0 * l - 1.0)).matrix();
  return 2.0 * m * std::pow(sum, 1.0 / l - 1.0) * (gram * odd);
}

double structural_relevance(const VectorXd& u, const MatrixXd& X, const VectorXd& W, double l) {
  const MatrixXd gram = X.transpose() * W.asDiagonal() * X;
  return relevance_from_gram(u, gram, l);
}

VectorXd relevance_gradient(const VectorXd& u, const MatrixXd& X, const VectorXd& W, double l) {
  const MatrixXd gram = X.transpose() * W.asDiagonal() * X;
  return relevance_gradient_from_gram(u, gram, l);
}

CriterionEvaluator::CriterionEvaluator(FitContext ctx, CriterionParams params)
    : ctx_(std::move(ctx)), params_(params) {
  params_.validate();
  const auto n = ctx_.X.rows();
  if (ctx_.W.size() != n || ctx_.T.rows() != n || ctx_.z.size() != ctx_.weights.size()) {
    throw InputError("fit context blocks have inconsistent sizes");
  }
  gram_ = ctx_.X.transpose() * ctx_.W.asDiagonal() * ctx_.X;
  terms_.reserve(ctx_.z.size());
  for (std::size_t k = 0; k < ctx_.z.size(); ++k) {
    const VectorXd& w = ctx_.weights[k];
    if (w.size() != n || ctx_.z[k].size() != n) {
      throw InputError("working response " + std::to_string(k) + " has the wrong length");
    }
    const VectorXd sw = w.array().sqrt();
    const MatrixXd Q = weighted_basis(ctx_.T, w, kRankTol);
    const VectorXd zw = sw.cwiseProduct(ctx_.z[k]);
    MatrixXd Xw = sw.asDiagonal() * ctx_.X;
    ResponseTerm term;
    term.D = Xw.transpose() * Xw;
    VectorXd zr = zw;
    if (Q.cols() > 0) {
      const VectorXd qz = Q.transpose() * zw;
      term.fixed = qz.squaredNorm();
      zr -= Q * qz;
      Xw -= Q * (Q.transpose() * Xw);
    }
    term.a = Xw.transpose() * zr;
    term.M = Xw.transpose() * Xw;
    terms_.push_back(std::move(term));
  }
}

double CriterionEvaluator::phi(const VectorXd& u) const {
  return relevance_from_gram(u, gram_, params_.l);
}

VectorXd CriterionEvaluator::phi_gradient(const VectorXd& u) const {
  return relevance_gradient_from_gram(u, gram_, params_.l);
}

FitValue CriterionEvaluator::psi(const VectorXd& u) const {
  FitValue out;
  for (const auto& t : terms_) {
    out.value += t.fixed;
    const double full = u.dot(t.D * u);
    const double resid = u.dot(t.M * u);
    if (!(resid > kRankTol * kRankTol * full)) {
      ++out.degenerate;
      continue;
    }
    const double au = t.a.dot(u);
    out.value += au * au / resid;
  }
  return out;
}

VectorXd CriterionEvaluator::psi_gradient(const VectorXd& u) const {
  VectorXd g = VectorXd::Zero(u.size());
  for (const auto& t : terms_) {
    const VectorXd Mu = t.M * u;
    const double full = u.dot(t.D * u);
    const double resid = u.dot(Mu);
    if (!(resid > kRankTol * kRankTol * full)) continue;
    const double au = t.a.dot(u);
    g += (2.0 * au / resid) * t.a - (2.0 * au * au / (resid * resid)) * Mu;
  }
  return g;
}

double CriterionEvaluator::value(const VectorXd& u) const {
  const double s = params_.s;
  if (s == 0.0) return psi(u).value;
  if (s == 1.0) return phi(u);
  const double ph = phi(u);
  const double ps = psi(u).value;
  if (!(ph > 0.0) || !(ps > 0.0)) throw CriterionVanishes();
  return std::pow(ph, s) * std::pow(ps, 1.0 - s);
}

VectorXd CriterionEvaluator::value_gradient(const VectorXd& u) const {
  const double s = params_.s;
  if (s == 0.0) return psi_gradient(u);
  if (s == 1.0) return phi_gradient(u);
  return value(u) * log_gradient(u);
}

double CriterionEvaluator::log_value(const VectorXd& u) const {
  const double s = params_.s;
  double out = 0.0;
  if (s > 0.0) {
    const double ph = phi(u);
    if (!(ph > 0.0)) return -std::numeric_limits<double>::infinity();
    out += s * std::log(ph);
  }
  if (s < 1.0) {
    const double ps = psi(u).value;
    if (!(ps > 0.0)) return -std::numeric_limits<double>::infinity();
    out += (1.0 - s) * std::log(ps);
  }
  return out;
}

VectorXd CriterionEvaluator::log_gradient(const VectorXd& u) const {
  const double s = params_.s;
  VectorXd g = VectorXd::Zero(u.size());
  if (s > 0.0) {
    const double ph = phi(u);
    if (!(ph > 0.0)) throw CriterionVanishes();
    g += (s / ph) * phi_gradient(u);
  }
  if (s < 1.0) {
    const double ps = psi(u).value;
    if (!(ps > 0.0)) throw CriterionVanishes();
    g += ((1.0 - s) / ps) * psi_gradient(u);
  }
  return g;
}

FitValue goodness_of_fit(const VectorXd& u, const FitContext& ctx) {
  return CriterionEvaluator(ctx, CriterionParams{0.0, 1.0, Metric::Identity}).psi(u);
}

double combined_criterion(const VectorXd& u, const CriterionParams& params, const FitContext& ctx) {
  return CriterionEvaluator(ctx, params).value(u);
}

VectorXd combined_gradient(const VectorXd& u, const CriterionParams& params, const FitContext& ctx) {
  return CriterionEvaluator(ctx, params).value_gradient(u);
}

}  // namespace scglrmix
