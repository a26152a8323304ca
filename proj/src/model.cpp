#include "scglrmix/model.hpp"

#include <algorithm>

namespace scglrmix {

void FitSettings::validate() const {
  optimizer.validate();
  if (max_outer < 1) throw InputError("max_outer must be >= 1");
  if (!(outer_tol > 0.0)) throw InputError("outer_tol must be > 0");
  if (!(sigma2_init > 0.0)) throw InputError("sigma2_init must be > 0");
  if (inner_passes < 1) throw InputError("inner_passes must be >= 1");
}

VectorXd ComponentModel::linear_predictor(const MatrixXd& raw_x, const MatrixXd& raw_t,
                                          int k) const {
  if (raw_x.cols() != p()) {
    throw InputError("new X has " + std::to_string(raw_x.cols()) + " columns, model has " +
                     std::to_string(p()));
  }
  if (raw_t.cols() != delta.rows()) {
    throw InputError("new T has " + std::to_string(raw_t.cols()) + " columns, model has " +
                     std::to_string(delta.rows()));
  }
  if (raw_x.rows() != raw_t.rows()) throw InputError("new X and T row counts differ");
  if (k < 0 || k >= q()) throw InputError("response index out of range");
  const MatrixXd xs = standardization.apply_x(raw_x);
  const MatrixXd ts = standardization.apply_t(raw_t);
  return xs * (loadings * gamma.col(k)) + ts * delta.col(k);
}

MatrixXd raw_x(const Dataset& ds) {
  const auto& st = ds.standardization;
  if (!st.enabled) return ds.X;
  MatrixXd out = ds.X.array().rowwise() * st.x_scale.transpose().array();
  return out.rowwise() + st.x_center.transpose();
}

MatrixXd raw_t(const Dataset& ds) {
  const auto& st = ds.standardization;
  if (!st.enabled) return ds.T;
  return ds.T.rowwise() + st.t_center.transpose();
}

Dataset prepare_dataset(const Dataset& ds, bool do_standardize) {
  ds.validate();
  if (do_standardize && !ds.standardization.enabled) return standardize(ds);
  return ds;
}

void copy_schema(const Dataset& ds, ComponentModel& model) {
  model.response_names = ds.response_names;
  model.x_names = ds.x_names;
  model.t_names = ds.t_names;
  model.group_name = ds.group_name;
  model.has_intercept = ds.has_intercept;
  model.standardization = ds.standardization;
}

VectorXd weighted_least_squares(const MatrixXd& M, const VectorXd& z, const VectorXd& w) {
  if (M.cols() == 0) return VectorXd(0);
  const VectorXd sw = w.array().sqrt();
  Eigen::ColPivHouseholderQR<MatrixXd> qr(sw.asDiagonal() * M);
  qr.setThreshold(1e-10);
  return qr.solve(sw.cwiseProduct(z));
}

OptimizerSettings inner_settings(const FitSettings& settings) {
  OptimizerSettings opt = settings.optimizer;
  opt.tol = std::max(std::min(opt.tol, 0.01 * settings.outer_tol * settings.outer_tol), 1e-15);
  return opt;
}

bool working_unchanged(const std::vector<WorkingQuantities>& a,
                       const std::vector<WorkingQuantities>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (relative_change(a[k].z, b[k].z) > 1e-12 || relative_change(a[k].w, b[k].w) > 1e-12) {
      return false;
    }
  }
  return true;
}

double relative_change(const VectorXd& now, const VectorXd& before) {
  if (now.size() != before.size()) return std::numeric_limits<double>::infinity();
  if (now.size() == 0) return 0.0;
  const double denom = std::max(before.cwiseAbs().maxCoeff(), 1.0);
  return (now - before).cwiseAbs().maxCoeff() / denom;
}

}  // namespace scglrmix
