#include "scglrmix/henderson.hpp"

#include "scglrmix/data.hpp"

#include <algorithm>
#include <vector>

namespace scglrmix {

HendersonSolution henderson_solve(const MatrixXd& M, const MatrixXd& U, const VectorXd& z,
                                  const VectorXd& w, double sigma2, const VectorXd* penalty) {
  const auto n = M.rows();
  const auto m = M.cols();
  const auto N = U.cols();
  if (U.rows() != n || z.size() != n || w.size() != n) {
    throw InputError("henderson_solve: inconsistent dimensions");
  }
  if (!(sigma2 > 0.0)) throw InputError("henderson_solve: sigma2 must be positive");
  if (penalty && penalty->size() != m) throw InputError("henderson_solve: penalty length");

  // Rank guard on the unpenalized columns; penalized ones are identified by
  // their penalty.
  std::vector<Eigen::Index> free_cols;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!penalty || (*penalty)(j) <= 0.0) free_cols.push_back(j);
  }
  if (!free_cols.empty()) {
    const auto k = static_cast<Eigen::Index>(free_cols.size());
    MatrixXd Mw(n, k);
    const VectorXd sw = w.array().sqrt();
    for (Eigen::Index j = 0; j < k; ++j) {
      Mw.col(j) = sw.cwiseProduct(M.col(free_cols[static_cast<std::size_t>(j)]));
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(Mw);
    qr.setThreshold(1e-10);
    if (qr.rank() < k) {
      const auto bad = free_cols[static_cast<std::size_t>(qr.colsPermutation().indices()(qr.rank()))];
      throw InputError("henderson_solve: fixed-effect column " + std::to_string(bad) +
                       " is collinear with the other columns");
    }
  }

  const MatrixXd RM = w.asDiagonal() * M;
  const MatrixXd RU = w.asDiagonal() * U;
  MatrixXd C(m + N, m + N);
  C.topLeftCorner(m, m) = M.transpose() * RM;
  if (penalty) C.topLeftCorner(m, m).diagonal() += *penalty;
  C.topRightCorner(m, N) = M.transpose() * RU;
  C.bottomLeftCorner(N, m) = C.topRightCorner(m, N).transpose();
  C.bottomRightCorner(N, N) = U.transpose() * RU;
  C.bottomRightCorner(N, N).diagonal().array() += 1.0 / sigma2;

  VectorXd rhs(m + N);
  const VectorXd wz = w.cwiseProduct(z);
  rhs.head(m) = M.transpose() * wz;
  rhs.tail(N) = U.transpose() * wz;

  Eigen::LDLT<MatrixXd> ldlt(C);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw InputError("henderson_solve: coefficient matrix is singular");
  }
  const VectorXd sol = ldlt.solve(rhs);
  MatrixXd E = MatrixXd::Zero(m + N, N);
  E.bottomRows(N).setIdentity();
  const MatrixXd inv_cols = ldlt.solve(E);

  HendersonSolution out;
  out.beta = sol.head(m);
  out.xi = sol.tail(N);
  out.trace_xixi = inv_cols.bottomRows(N).trace();
  if (!out.beta.allFinite() || !out.xi.allFinite()) {
    throw InputError("henderson_solve: non-finite solution");
  }
  return out;
}

VarianceUpdate update_variance(const VectorXd& xi, double trace_xixi, double sigma2_old) {
  const double N = static_cast<double>(xi.size());
  const double denom = std::max(N - trace_xixi / sigma2_old, 1e-8);
  const double raw = xi.squaredNorm() / denom;
  VarianceUpdate out;
  out.sigma2 = std::clamp(raw, kSigma2Floor, kSigma2Ceil);
  out.clamped = out.sigma2 != raw || denom == 1e-8;
  return out;
}

double henderson_objective(const MatrixXd& M, const MatrixXd& U, const VectorXd& z,
                           const VectorXd& w, double sigma2, const VectorXd& beta,
                           const VectorXd& xi, const VectorXd* penalty) {
  const VectorXd r = z - M * beta - U * xi;
  double obj = r.dot(w.cwiseProduct(r)) + xi.squaredNorm() / sigma2;
  if (penalty) obj += beta.dot(penalty->cwiseProduct(beta));
  return obj;
}

}  // namespace scglrmix
