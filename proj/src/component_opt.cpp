#include "scglrmix/component_opt.hpp"

#include "scglrmix/data.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <random>
#include <thread>

namespace scglrmix {

namespace {

constexpr int kMaxHalvings = 20;

struct RestartResult {
  VectorXd v;
  double log_value = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  bool started = false;
  std::vector<double> trace;
};

class ReducedProblem {
 public:
  ReducedProblem(const CriterionEvaluator& crit, MatrixXd K, const MatrixXd& A)
      : crit_(crit), K_(std::move(K)) {
    B_ = K_.transpose() * A * K_;
    B_ = 0.5 * (B_ + B_.transpose());
    llt_.compute(B_);
    if (llt_.info() != Eigen::Success) {
      throw InputError("metric A is not positive definite on the feasible subspace");
    }
  }

  int dim() const { return static_cast<int>(K_.cols()); }
  const MatrixXd& K() const { return K_; }

  std::optional<VectorXd> normalize(const VectorXd& v) const {
    const double norm2 = v.dot(B_ * v);
    if (!(norm2 > 0.0) || !std::isfinite(norm2)) return std::nullopt;
    return VectorXd(v / std::sqrt(norm2));
  }


  // Ascent on the unit sphere in w = L'v (B = LL'). The first step is the
  // normed-gradient fixed-point step; later steps use an L-BFGS direction
  // built from tangent pairs transported by projection, falling back to
  // the gradient when that direction fails to ascend.
  RestartResult run(const VectorXd& start, const OptimizerSettings& settings) const {
    RestartResult res;
    auto v0 = normalize(start);
    if (!v0) return res;
    VectorXd w = llt_.matrixU() * *v0;
    w.normalize();
    double L = log_value_w(w);
    if (!std::isfinite(L)) return res;
    res.started = true;
    res.trace.push_back(crit_.value(K_ * to_v(w)));

    std::deque<std::pair<VectorXd, VectorXd>> pairs;  // (s, y) with s'y > 0
    VectorXd r_old;
    VectorXd w_old;
    double step = -1.0;
    for (int it = 1; it <= settings.max_iter; ++it) {
      const VectorXd g = llt_.matrixL().solve(K_.transpose() * crit_.log_gradient(K_ * to_v(w)));
      const double radial = w.dot(g);
      const VectorXd r = g - radial * w;
      const double rnorm = r.norm();
      if (!(rnorm > 1e-14)) {
        res.converged = true;
        break;
      }
      if (w_old.size() > 0) {
        VectorXd sk = w - w_old;
        sk -= w.dot(sk) * w;
        VectorXd yk = r_old - w.dot(r_old) * w - r;
        if (sk.dot(yk) > 1e-12 * sk.norm() * yk.norm()) {
          pairs.emplace_back(std::move(sk), std::move(yk));
          if (pairs.size() > kMemory) pairs.pop_front();
        }
      }

      VectorXd d = r;
      double trial = 1.0;
      if (pairs.empty()) {
        if (step < 0.0) step = radial > 1e-12 ? 1.0 / radial : 1.0 / rnorm;
        trial = step;
      } else {
        d = lbfgs_direction(r, w, pairs);
        if (!(d.dot(r) > 0.0)) {
          pairs.clear();
          d = r;
          trial = 1.0 / rnorm;
        }
      }

      VectorXd cand;
      double Lc = L;
      bool accepted = try_steps(w, d, trial, L, cand, Lc);
      if (!accepted && !pairs.empty()) {
        pairs.clear();
        trial = 1.0 / rnorm;
        accepted = try_steps(w, r, trial, L, cand, Lc);
      }
      res.iterations = it;
      if (!accepted) {
        res.converged = true;
        break;
      }
      if (pairs.empty()) step = std::min(2.0 * trial, 1e12);
      const double change = 1.0 - std::abs(cand.dot(w));
      w_old = w;
      r_old = r;
      w = std::move(cand);
      L = Lc;
      res.trace.push_back(crit_.value(K_ * to_v(w)));
      if (change < settings.tol) {
        res.converged = true;
        break;
      }
    }
    res.v = to_v(w);
    res.log_value = L;
    return res;
  }

 private:
  static constexpr std::size_t kMemory = 10;

  VectorXd to_v(const VectorXd& w) const { return llt_.matrixU().solve(w); }
  double log_value_w(const VectorXd& w) const { return crit_.log_value(K_ * to_v(w)); }

  // Strict ascent along the retraction normalize(w + t d), halving t; on
  // success `trial` holds the accepted t.
  bool try_steps(const VectorXd& w, const VectorXd& d, double& trial, double L, VectorXd& cand,
                 double& Lc) const {
    for (int h = 0; h <= kMaxHalvings; ++h, trial *= 0.5) {
      VectorXd c = w + trial * d;
      const double norm = c.norm();
      if (!(norm > 0.0) || !std::isfinite(norm)) continue;
      c /= norm;
      const double lc = log_value_w(c);
      if (lc > L) {
        cand = std::move(c);
        Lc = lc;
        return true;
      }
    }
    return false;
  }

  // Two-loop recursion for the ascent direction H r, pairs projected onto
  // the tangent space at w.
  static VectorXd lbfgs_direction(const VectorXd& r, const VectorXd& w,
                                  const std::deque<std::pair<VectorXd, VectorXd>>& pairs) {
    const std::size_t m = pairs.size();
    std::vector<VectorXd> S(m), Y(m);
    std::vector<double> rho(m), alpha(m);
    for (std::size_t i = 0; i < m; ++i) {
      S[i] = pairs[i].first - w.dot(pairs[i].first) * w;
      Y[i] = pairs[i].second - w.dot(pairs[i].second) * w;
      const double sy = S[i].dot(Y[i]);
      rho[i] = sy > 0.0 ? 1.0 / sy : 0.0;
    }
    VectorXd q = r;
    for (std::size_t i = m; i-- > 0;) {
      alpha[i] = rho[i] * S[i].dot(q);
      q -= alpha[i] * Y[i];
    }
    const double yy = Y[m - 1].squaredNorm();
    const double gamma = rho[m - 1] > 0.0 && yy > 0.0 ? 1.0 / (rho[m - 1] * yy) : 1.0;
    VectorXd d = gamma * q;
    for (std::size_t i = 0; i < m; ++i) {
      const double beta = rho[i] * Y[i].dot(d);
      d += (alpha[i] - beta) * S[i];
    }
    return d - w.dot(d) * w;
  }

  const CriterionEvaluator& crit_;
  MatrixXd K_;
  MatrixXd B_;
  Eigen::LLT<MatrixXd> llt_;
};

bool better(const RestartResult& a, const RestartResult& b) {
  if (a.log_value != b.log_value) return a.log_value > b.log_value;
  return a.iterations < b.iterations;  // equal: lower index already kept
}

}  // namespace

ComponentNotConverged::ComponentNotConverged(ComponentSolution best)
    : std::runtime_error("component optimization did not converge from any start"),
      best_(std::move(best)) {}

OrthoConstraints OrthoConstraints::from_components(const MatrixXd& F, const VectorXd& W,
                                                   const MatrixXd& X) {
  return {F.transpose() * W.asDiagonal() * X};
}

void OptimizerSettings::validate() const {
  if (max_iter < 1) throw InputError("max_iter must be >= 1");
  if (!(tol > 0.0)) throw InputError("tol must be > 0");
  if (n_restarts < 0) throw InputError("restarts must be >= 0");
  if (threads < 1) throw InputError("threads must be >= 1");
}

MatrixXd nullspace_basis(const MatrixXd& C, int* rank) {
  const auto p = C.cols();
  if (C.rows() == 0) {
    if (rank) *rank = 0;
    return MatrixXd::Identity(p, p);
  }
  Eigen::JacobiSVD<MatrixXd> svd(C, Eigen::ComputeFullV);
  const VectorXd& sv = svd.singularValues();
  int r = 0;
  if (sv.size() > 0 && sv(0) > 0.0) {
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      if (sv(i) > 1e-10 * sv(0)) ++r;
    }
  }
  if (rank) *rank = r;
  if (r >= p) throw InputError("no feasible direction");
  return svd.matrixV().rightCols(p - r);
}

MatrixXd metric_matrix(Metric metric, const MatrixXd& X, const VectorXd& W) {
  if (metric == Metric::Gram) return X.transpose() * W.asDiagonal() * X;
  return MatrixXd::Identity(X.cols(), X.cols());
}

VectorXd dominant_direction(const MatrixXd& X, const VectorXd& W) {
  const MatrixXd G = X.transpose() * W.asDiagonal() * X;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(G);
  VectorXd v = es.eigenvectors().col(G.cols() - 1);
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  if (v(imax) < 0.0) v = -v;
  return v;
}

VectorXd feasible_start(const MatrixXd& X, const VectorXd& W, const OrthoConstraints& constraints,
                        const MatrixXd& A) {
  const MatrixXd K = nullspace_basis(constraints.C);
  VectorXd u = K * (K.transpose() * dominant_direction(X, W));
  if (!(u.dot(A * u) > 1e-20)) u = K.col(0);
  return u / std::sqrt(u.dot(A * u));
}

ComponentSolution maximize_component(const CriterionEvaluator& criterion,
                                     const OrthoConstraints& constraints,
                                     const OptimizerSettings& settings,
                                     const std::vector<VectorXd>& warm_starts) {
  settings.validate();
  const FitContext& ctx = criterion.context();
  const int p = criterion.p();
  if (constraints.C.cols() != p) throw InputError("constraint matrix has the wrong width");

  const MatrixXd K = nullspace_basis(constraints.C);
  const MatrixXd A = metric_matrix(criterion.params().metric, ctx.X, ctx.W);
  const ReducedProblem problem(criterion, K, A);

  std::vector<VectorXd> starts;
  starts.push_back(K.transpose() * dominant_direction(ctx.X, ctx.W));
  for (const auto& w : warm_starts) starts.push_back(K.transpose() * w);
  for (int r = 0; r < settings.n_restarts; ++r) {
    std::mt19937_64 rng(settings.seed + static_cast<std::uint64_t>(r));
    std::normal_distribution<double> normal;
    VectorXd v(problem.dim());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
    starts.push_back(std::move(v));
  }

  std::vector<RestartResult> results(starts.size());
  const auto run_range = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < starts.size(); i += stride) {
      results[i] = problem.run(starts[i], settings);
    }
  };
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(settings.threads), starts.size());
  if (workers <= 1) {
    run_range(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(run_range, t, workers);
  }

  int best_conv = -1;
  int best_any = -1;
  int started = 0;
  int converged = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    if (!r.started) continue;
    ++started;
    if (best_any < 0 || better(r, results[static_cast<std::size_t>(best_any)])) {
      best_any = static_cast<int>(i);
    }
    if (r.converged) {
      ++converged;
      if (best_conv < 0 || better(r, results[static_cast<std::size_t>(best_conv)])) {
        best_conv = static_cast<int>(i);
      }
    }
  }
  if (best_any < 0) throw CriterionVanishes();

  const int best = best_conv >= 0 ? best_conv : best_any;
  const RestartResult& win = results[static_cast<std::size_t>(best)];
  VectorXd u = K * win.v;
  u /= std::sqrt(u.dot(A * u));

  if (!ctx.z.empty()) {
    const VectorXd f = ctx.X * u;
    const VectorXd& z0 = ctx.z.front();
    const double zbar = ctx.W.dot(z0);
    const double cov = ctx.W.dot(f.cwiseProduct((z0.array() - zbar).matrix()));
    if (cov < 0.0) u = -u;
  }

  ComponentSolution sol;
  sol.u = u;
  sol.value = criterion.value(u);
  sol.diagnostics.iterations = win.iterations;
  sol.diagnostics.restarts = started;
  sol.diagnostics.converged_restarts = converged;
  sol.diagnostics.best_restart = best;
  sol.diagnostics.converged = best_conv >= 0;
  sol.diagnostics.degenerate = criterion.psi(u).degenerate;
  sol.diagnostics.trace = win.trace;
  if (best_conv < 0) throw ComponentNotConverged(std::move(sol));
  return sol;
}

ComponentSolution maximize_component(const CriterionParams& params, const FitContext& ctx,
                                     const OrthoConstraints& constraints,
                                     const OptimizerSettings& settings) {
  const CriterionEvaluator crit(ctx, params);
  return maximize_component(crit, constraints, settings);
}

}  // namespace scglrmix
