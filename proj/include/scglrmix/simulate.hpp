#pragma once

#include "scglrmix/data.hpp"
#include "scglrmix/family.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace scglrmix {

/// Block of `size` consecutive X columns sharing one gaussian factor with
/// pairwise correlation rho. `weight` is its share of the true loading.
struct Bundle {
  int size = 10;
  double rho = 0.9;
  double weight = 1.0;
};

struct SimConfig {
  int n = 300;
  int N = 10;
  int p = 30;
  int q = 3;
  int r = 0;  // additional T columns besides the intercept
  std::vector<Bundle> bundles{{10, 0.9, 1.0}, {10, 0.9, 0.0}};
  std::vector<int> group_sizes;  // empty: balanced, n / N rows per group
  FamilySpec family{FamilyLink::canonical(Family::Poisson)};  // length 1 or q
  std::vector<double> sigma2;  // length 1 or q; empty: 0.5
  std::vector<double> gamma;   // length q; empty: 0.8, -0.6, 0.5 repeating
  MatrixXd delta;              // (1 + r) x q, intercept row first; empty: zeros
  double eta_bound = 3.0;      // max |gamma_k f| before rescaling
  std::uint64_t seed = 42;

  void validate() const;
  FamilyLink family_of(int k) const;
  double sigma2_of(int k) const;
  double gamma_of(int k) const;
};

struct GroundTruth {
  VectorXd u;                   // p, unit norm, supported on predictive bundles
  VectorXd f;                   // n, unit W-variance component X u (rescaled)
  VectorXd gamma;               // q, after any eta_bound rescaling
  MatrixXd delta;               // (1 + r) x q
  VectorXd sigma2;              // q
  MatrixXd xi;                  // N x q
  MatrixXd eta;                 // n x q, conditional linear predictor
  std::vector<double> scale;    // q, factor applied to gamma by eta_bound
};

struct Simulation {
  Dataset data;
  GroundTruth truth;
};

/// X is standardized in the W metric and stored as raw data. Y_k is drawn
/// from family_k at g^-1(gamma_k f + T delta_k + U xi_k), xi_k ~ N(0, sigma2_k I).
Simulation gen_grouped_data(const SimConfig& cfg);

/// One draw from the family at linear predictor eta (gaussian: unit variance).
double draw_response(double eta, const FamilyLink& fam, std::mt19937_64& rng);

/// Parses "size:rho:weight[,size:rho:weight...]".
std::vector<Bundle> parse_bundles(const std::string& text);

std::string truth_json(const GroundTruth& truth, const SimConfig& cfg);
void write_truth(const GroundTruth& truth, const SimConfig& cfg, const std::string& path);

}  // namespace scglrmix
