#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace scglrmix {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Input or validation failure (bad file, bad schema, bad values).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Affine transform applied to the raw X and T blocks before fitting.
/// Standardized value = (raw - center) / scale.
struct Standardization {
  VectorXd x_center;
  VectorXd x_scale;
  VectorXd t_center;  // 0 for the intercept column
  bool enabled = false;

  MatrixXd apply_x(const MatrixXd& raw_x) const;
  MatrixXd apply_t(const MatrixXd& raw_t) const;
};

/// Grouped multivariate dataset: Y (n x q), X (n x p), T (n x r), group
/// codes and observation weights W normalized to sum 1.
struct Dataset {
  MatrixXd Y;
  MatrixXd X;
  MatrixXd T;
  std::vector<int> groups;               // codes 0..N-1
  std::vector<std::string> group_labels;  // code -> label, first appearance order
  VectorXd W;

  std::vector<std::string> response_names;
  std::vector<std::string> x_names;
  std::vector<std::string> t_names;  // excludes the intercept
  std::string group_name = "group";
  std::optional<std::string> weight_name;
  bool has_intercept = false;  // T column 0 is a column of ones

  Standardization standardization;

  int n() const { return static_cast<int>(Y.rows()); }
  int q() const { return static_cast<int>(Y.cols()); }
  int p() const { return static_cast<int>(X.cols()); }
  int r() const { return static_cast<int>(T.cols()); }
  int num_groups() const { return static_cast<int>(group_labels.size()); }

  /// n * W: prior weights with mean 1, used in every likelihood term.
  VectorXd prior_weights() const { return W * static_cast<double>(n()); }

  /// Throws InputError when a structural invariant is broken.
  void validate() const;
  /// validate() without the response and two-row requirements (prediction inputs).
  void validate_layout() const;

  /// Row subset with W renormalized; groups are re-encoded in order of
  /// first appearance among the kept rows, labels unchanged.
  Dataset subset(const std::vector<int>& rows) const;
};

/// Column-role map used by load_csv.
struct Schema {
  std::vector<std::string> response;
  std::vector<std::string> explanatory;  // empty: every unassigned column
  std::vector<std::string> additional;
  std::string group;
  std::optional<std::string> weights;
  bool add_intercept = true;
  bool responses_optional = false;  // drop response columns absent from the file
};

/// n x N indicator matrix U.
MatrixXd group_design(const std::vector<int>& groups, int num_groups);

Dataset load_csv(const std::string& path, const Schema& schema);
Dataset parse_csv(std::istream& in, const Schema& schema,
                  const std::string& source = "<stream>");

/// Writes a CSV readable by load_csv: response, X, non-intercept T, group,
/// then the weight column if one was loaded. Numbers use shortest
/// round-trip formatting, so reloading is bit-exact.
void write_dataset(const Dataset& ds, const std::string& path);
void write_dataset(const Dataset& ds, std::ostream& out);

/// Schema that reads back a file produced by write_dataset.
Schema schema_for(const Dataset& ds);

/// Centers and scales X in the W metric, centers the non-intercept T
/// columns. Composes with any standardization already stored.
Dataset standardize(const Dataset& ds);

/// Weighted mean and variance (W sums to 1).
double weighted_mean(const VectorXd& v, const VectorXd& w);
double weighted_variance(const VectorXd& v, const VectorXd& w);

std::string format_double(double v);

}  // namespace scglrmix
