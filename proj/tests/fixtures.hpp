#pragma once

#include "oracles.hpp"
#include "scglrmix/data.hpp"

#include <string>
#include <vector>

namespace fixture {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Dataset from raw blocks; T gets a leading intercept when asked.
inline scglrmix::Dataset make(const MatrixXd& Y, const MatrixXd& X, const std::vector<int>& groups,
                              bool intercept = true, const MatrixXd& extra = MatrixXd()) {
  scglrmix::Dataset ds;
  const auto n = Y.rows();
  ds.Y = Y;
  ds.X = X;
  const auto r = extra.cols() + (intercept ? 1 : 0);
  ds.T.resize(n, r);
  if (intercept) ds.T.col(0).setOnes();
  if (extra.cols() > 0) ds.T.rightCols(extra.cols()) = extra;
  ds.has_intercept = intercept;
  ds.groups = groups;
  int N = 0;
  for (int g : groups) N = std::max(N, g + 1);
  for (int g = 0; g < N; ++g) ds.group_labels.push_back("g" + std::to_string(g + 1));
  ds.W = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (Eigen::Index k = 0; k < Y.cols(); ++k) ds.response_names.push_back("y" + std::to_string(k + 1));
  for (Eigen::Index j = 0; j < X.cols(); ++j) ds.x_names.push_back("x" + std::to_string(j + 1));
  for (Eigen::Index j = 0; j < extra.cols(); ++j) ds.t_names.push_back("t" + std::to_string(j + 1));
  return ds;
}

/// Balanced group codes: n rows in N consecutive blocks.
inline std::vector<int> balanced(int n, int N) {
  std::vector<int> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = i / (n / N);
  return g;
}

}  // namespace fixture
