#include "scglrmix/simulate.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace scglrmix {

namespace {

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::vector<std::vector<double>> to_rows(const MatrixXd& m) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = to_std(m.row(i));
  return out;
}

}  // namespace

void SimConfig::validate() const {
  if (n < 2 || N < 1 || p < 1 || q < 1 || r < 0) {
    throw InputError("simulation needs n >= 2, N >= 1, p >= 1, q >= 1, r >= 0");
  }
  int total = 0;
  bool predictive = false;
  for (const auto& b : bundles) {
    if (b.size < 1) throw InputError("bundle size must be >= 1");
    if (!(b.rho >= 0.0 && b.rho < 1.0)) throw InputError("bundle rho must lie in [0, 1)");
    if (!(b.weight >= 0.0)) throw InputError("bundle weight must be >= 0");
    predictive = predictive || b.weight > 0.0;
    total += b.size;
  }
  if (total > p) throw InputError("bundle sizes exceed p");
  if (!predictive) throw InputError("at least one bundle must have a positive weight");
  if (group_sizes.empty()) {
    if (n % N != 0) throw InputError("n must be divisible by the number of groups");
  } else {
    if (static_cast<int>(group_sizes.size()) != N) throw InputError("group_sizes must have N entries");
    if (std::accumulate(group_sizes.begin(), group_sizes.end(), 0) != n) {
      throw InputError("group_sizes must sum to n");
    }
    for (int s : group_sizes) {
      if (s < 1) throw InputError("every group needs at least one row");
    }
  }
  if (family.size() != 1 && static_cast<int>(family.size()) != q) {
    throw InputError("family list must have 1 or q entries");
  }
  if (sigma2.size() > 1 && static_cast<int>(sigma2.size()) != q) {
    throw InputError("sigma2 list must have 1 or q entries");
  }
  for (double s : sigma2) {
    if (!(s >= 0.0)) throw InputError("sigma2 must be >= 0");
  }
  if (!gamma.empty() && static_cast<int>(gamma.size()) != q) {
    throw InputError("gamma must have q entries");
  }
  if (delta.size() > 0 && (delta.rows() != 1 + r || delta.cols() != q)) {
    throw InputError("delta must be (1 + r) x q");
  }
  if (!(eta_bound > 0.0)) throw InputError("eta_bound must be > 0");
}

FamilyLink SimConfig::family_of(int k) const {
  return family.size() == 1 ? family.front() : family[static_cast<std::size_t>(k)];
}

double SimConfig::sigma2_of(int k) const {
  if (sigma2.empty()) return 0.5;
  return sigma2.size() == 1 ? sigma2.front() : sigma2[static_cast<std::size_t>(k)];
}

double SimConfig::gamma_of(int k) const {
  static constexpr double kDefault[] = {0.8, -0.6, 0.5};
  return gamma.empty() ? kDefault[k % 3] : gamma[static_cast<std::size_t>(k)];
}

double draw_response(double eta, const FamilyLink& fam, std::mt19937_64& rng) {
  const double mu = inverse_link(eta, fam);
  switch (fam.family) {
    case Family::Gaussian:
      return mu + std::normal_distribution<double>()(rng);
    case Family::Poisson:
      return static_cast<double>(std::poisson_distribution<long long>(mu)(rng));
    case Family::Bernoulli:
      return std::bernoulli_distribution(mu)(rng) ? 1.0 : 0.0;
  }
  return mu;
}

Simulation gen_grouped_data(const SimConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;
  const int n = cfg.n;
  const int p = cfg.p;
  const int q = cfg.q;
  const int N = cfg.N;

  Dataset ds;
  ds.W = VectorXd::Constant(n, 1.0 / n);

  // X: bundle factor plus independent noise, then W-standardized.
  ds.X.resize(n, p);
  VectorXd u = VectorXd::Zero(p);
  int col = 0;
  for (const auto& b : cfg.bundles) {
    VectorXd factor(n);
    for (int i = 0; i < n; ++i) factor(i) = normal(rng);
    const double a = std::sqrt(b.rho);
    const double e = std::sqrt(1.0 - b.rho);
    for (int j = 0; j < b.size; ++j, ++col) {
      for (int i = 0; i < n; ++i) ds.X(i, col) = a * factor(i) + e * normal(rng);
      u(col) = b.weight;
    }
  }
  for (; col < p; ++col) {
    for (int i = 0; i < n; ++i) ds.X(i, col) = normal(rng);
  }
  for (int j = 0; j < p; ++j) {
    const double m = weighted_mean(ds.X.col(j), ds.W);
    const double sd = std::sqrt(weighted_variance(ds.X.col(j), ds.W));
    ds.X.col(j) = (ds.X.col(j).array() - m) / sd;
  }
  u /= u.norm();

  // T: intercept plus r gaussian covariates.
  ds.T.resize(n, 1 + cfg.r);
  ds.T.col(0).setOnes();
  for (int j = 1; j <= cfg.r; ++j) {
    for (int i = 0; i < n; ++i) ds.T(i, j) = normal(rng);
  }
  ds.has_intercept = true;

  ds.groups.resize(static_cast<std::size_t>(n));
  {
    int row = 0;
    for (int g = 0; g < N; ++g) {
      const int size = cfg.group_sizes.empty() ? n / N : cfg.group_sizes[static_cast<std::size_t>(g)];
      for (int i = 0; i < size; ++i) ds.groups[static_cast<std::size_t>(row++)] = g;
    }
  }
  for (int g = 0; g < N; ++g) ds.group_labels.push_back("g" + std::to_string(g + 1));
  const MatrixXd U = group_design(ds.groups, N);

  GroundTruth truth;
  truth.u = u;
  VectorXd f = ds.X * u;
  f = (f.array() - weighted_mean(f, ds.W)).matrix();
  f /= std::sqrt(weighted_variance(f, ds.W));
  truth.f = f;
  truth.delta = cfg.delta.size() > 0 ? cfg.delta : MatrixXd::Zero(1 + cfg.r, q);
  truth.gamma.resize(q);
  truth.sigma2.resize(q);
  truth.xi.resize(N, q);
  truth.eta.resize(n, q);
  const double fmax = f.cwiseAbs().maxCoeff();
  for (int k = 0; k < q; ++k) {
    double g = cfg.gamma_of(k);
    double scale = 1.0;
    if (std::abs(g) * fmax > cfg.eta_bound) {
      scale = cfg.eta_bound / (std::abs(g) * fmax);
      g *= scale;
    }
    truth.gamma(k) = g;
    truth.scale.push_back(scale);
    truth.sigma2(k) = cfg.sigma2_of(k);
    const double sd = std::sqrt(truth.sigma2(k));
    for (int j = 0; j < N; ++j) truth.xi(j, k) = sd > 0.0 ? sd * normal(rng) : 0.0;
    truth.eta.col(k) = g * f + ds.T * truth.delta.col(k) + U * truth.xi.col(k);
  }

  ds.Y.resize(n, q);
  for (int k = 0; k < q; ++k) {
    const FamilyLink fam = cfg.family_of(k);
    for (int i = 0; i < n; ++i) ds.Y(i, k) = draw_response(truth.eta(i, k), fam, rng);
  }

  for (int k = 0; k < q; ++k) ds.response_names.push_back("y" + std::to_string(k + 1));
  for (int j = 0; j < p; ++j) ds.x_names.push_back("x" + std::to_string(j + 1));
  for (int j = 0; j < cfg.r; ++j) ds.t_names.push_back("t" + std::to_string(j + 1));
  ds.group_name = "group";
  ds.validate();
  return {std::move(ds), std::move(truth)};
}

std::vector<Bundle> parse_bundles(const std::string& text) {
  std::vector<Bundle> out;
  std::stringstream items(text);
  std::string item;
  while (std::getline(items, item, ',')) {
    std::stringstream fields(item);
    std::string a, b, c;
    if (!std::getline(fields, a, ':') || !std::getline(fields, b, ':') ||
        !std::getline(fields, c, ':')) {
      throw InputError("bundle '" + item + "' must be size:rho:weight");
    }
    try {
      out.push_back({std::stoi(a), std::stod(b), std::stod(c)});
    } catch (const std::exception&) {
      throw InputError("bundle '" + item + "' must be size:rho:weight");
    }
  }
  if (out.empty()) throw InputError("empty bundle list");
  return out;
}

std::string truth_json(const GroundTruth& truth, const SimConfig& cfg) {
  nlohmann::ordered_json j;
  j["seed"] = cfg.seed;
  j["n"] = cfg.n;
  j["groups"] = cfg.N;
  j["p"] = cfg.p;
  j["q"] = cfg.q;
  j["r"] = cfg.r;
  auto& bundles = j["bundles"] = nlohmann::ordered_json::array();
  for (const auto& b : cfg.bundles) {
    bundles.push_back({{"size", b.size}, {"rho", b.rho}, {"weight", b.weight}});
  }
  std::vector<std::string> fams;
  for (int k = 0; k < cfg.q; ++k) fams.push_back(cfg.family_of(k).name());
  j["family"] = fams;
  j["u_true"] = to_std(truth.u);
  j["gamma_true"] = to_std(truth.gamma);
  j["gamma_scale"] = truth.scale;
  j["delta_true"] = to_rows(truth.delta);
  j["sigma2_true"] = to_std(truth.sigma2);
  j["xi_true"] = to_rows(truth.xi.transpose());
  return j.dump(2) + "\n";
}

void write_truth(const GroundTruth& truth, const SimConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << truth_json(truth, cfg);
  if (!out) throw InputError("cannot write " + path);
}

}  // namespace scglrmix
