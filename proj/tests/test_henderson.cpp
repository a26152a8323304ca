#include "doctest.h"
#include "fixtures.hpp"
#include "scglrmix/henderson.hpp"

using namespace scglrmix;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Small {
  MatrixXd M;
  MatrixXd U;
  VectorXd z;
  VectorXd w;
};

// n = 6, N = 2, m = 1.
Small handcrafted() {
  Small s;
  s.M.resize(6, 1);
  s.M << 1, 2, 3, 1, 2, 3;
  s.U = group_design({0, 0, 0, 1, 1, 1}, 2);
  s.z.resize(6);
  s.z << 3, 5, 8, 1, 2, 2;
  s.w.resize(6);
  s.w << 1, 2, 1, 3, 1, 2;
  return s;
}

struct Balanced {
  MatrixXd M;
  MatrixXd U;
  VectorXd y;
};

// N groups of `per` rows; y = 1 + xi_g + e with xi ~ N(0, 1), e ~ N(0, 1).
Balanced balanced_layout(int N, int per, std::uint64_t seed) {
  Balanced b;
  const int n = N * per;
  b.M = MatrixXd::Ones(n, 1);
  b.U = group_design(fixture::balanced(n, N), N);
  const VectorXd xi = oracle::random_vector(N, seed);
  b.y = VectorXd::Ones(n) + b.U * xi + oracle::random_vector(n, seed + 1000);
  return b;
}

}  // namespace

TEST_CASE("matches the dense joint solve") {
  const Small s = handcrafted();
  for (double sigma2 : {0.1, 1.0, 7.0}) {
    const HendersonSolution got = henderson_solve(s.M, s.U, s.z, s.w, sigma2);
    const oracle::Joint want = oracle::henderson_dense(s.M, s.U, s.z, s.w, sigma2);
    CHECK((got.beta - want.beta).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((got.xi - want.xi).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(got.trace_xixi - want.trace_xixi) < 1e-10);
  }
  const MatrixXd M = oracle::random_matrix(40, 3, 5);
  const MatrixXd U = group_design(fixture::balanced(40, 5), 5);
  const VectorXd z = oracle::random_vector(40, 6);
  const VectorXd w = oracle::random_weights(40, 7) * 40;
  const HendersonSolution got = henderson_solve(M, U, z, w, 0.8);
  const oracle::Joint want = oracle::henderson_dense(M, U, z, w, 0.8);
  CHECK((got.beta - want.beta).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((got.xi - want.xi).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("vanishing variance gives weighted least squares") {
  const Small s = handcrafted();
  const HendersonSolution got = henderson_solve(s.M, s.U, s.z, s.w, 1e-12);
  CHECK(got.xi.cwiseAbs().maxCoeff() < 1e-6 * s.z.cwiseAbs().maxCoeff());
  const VectorXd beta = oracle::wls(s.M, s.z, s.w);
  CHECK(std::abs(got.beta(0) - beta(0)) < 1e-8 * std::abs(beta(0)));
}

TEST_CASE("huge variance gives the group-dummy regression") {
  const Small s = handcrafted();
  const HendersonSolution got = henderson_solve(s.M, s.U, s.z, s.w, 1e8);
  const VectorXd fitted = s.M * got.beta + s.U * got.xi;
  const VectorXd want = oracle::dummy_fitted(s.M, s.U, s.z, s.w);
  CHECK((fitted - want).norm() <= 1e-4 * want.norm());
  // Without an intercept in M the dummy coefficients are identified.
  MatrixXd Z(6, 3);
  Z << s.M, s.U;
  const VectorXd coef = oracle::wls(Z, s.z, s.w);
  CHECK(std::abs(got.beta(0) - coef(0)) <= 1e-4 * std::abs(coef(0)));
  CHECK((got.xi - coef.tail(2)).norm() <= 1e-4 * coef.tail(2).norm());

  // With an intercept only fitted values are identified.
  MatrixXd M2(6, 2);
  M2 << VectorXd::Ones(6), s.M;
  const HendersonSolution g2 = henderson_solve(M2, s.U, s.z, s.w, 1e8);
  const VectorXd want2 = oracle::dummy_fitted(M2, s.U, s.z, s.w);
  CHECK((M2 * g2.beta + s.U * g2.xi - want2).norm() <= 1e-4 * want2.norm());
}

TEST_CASE("solution minimizes the penalized objective") {
  const MatrixXd M = oracle::random_matrix(30, 2, 11);
  const MatrixXd U = group_design(fixture::balanced(30, 3), 3);
  const VectorXd z = oracle::random_vector(30, 12);
  const VectorXd w = oracle::random_weights(30, 13) * 30;
  VectorXd pen(2);
  pen << 0.5, 0.0;
  const HendersonSolution sol = henderson_solve(M, U, z, w, 0.4, &pen);
  const double best = henderson_objective(M, U, z, w, 0.4, sol.beta, sol.xi, &pen);
  for (std::uint64_t k = 0; k < 10; ++k) {
    const VectorXd db = 1e-3 * oracle::random_vector(2, 20 + k);
    const VectorXd dx = 1e-3 * oracle::random_vector(3, 40 + k);
    CHECK(henderson_objective(M, U, z, w, 0.4, sol.beta + db, sol.xi + dx, &pen) > best);
  }
}

TEST_CASE("collinear fixed design is rejected") {
  MatrixXd M(6, 2);
  M << VectorXd::Ones(6), 2.0 * VectorXd::Ones(6);
  const Small s = handcrafted();
  CHECK_THROWS_AS(henderson_solve(M, s.U, s.z, s.w, 1.0), InputError);
}

TEST_CASE("variance update guards") {
  const VarianceUpdate zero = update_variance(VectorXd::Zero(4), 0.0, 1.0);
  CHECK(zero.sigma2 == kSigma2Floor);
  CHECK(zero.clamped);

  VectorXd xi(4);
  xi << 1, -1, 0.5, 0.5;
  const VarianceUpdate plain = update_variance(xi, 2.0, 1.0);
  CHECK(plain.sigma2 == doctest::Approx(2.5 / 2.0).epsilon(1e-15));
  CHECK_FALSE(plain.clamped);

  const VarianceUpdate guarded = update_variance(xi, 10.0, 1.0);
  CHECK(guarded.sigma2 == kSigma2Ceil);
  CHECK(guarded.clamped);
}

TEST_CASE("predictions shrink the centered group means") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Balanced b = balanced_layout(5, 8, 50 + seed);
    const VectorXd w = VectorXd::Ones(40);
    const HendersonSolution sol = henderson_solve(b.M, b.U, b.y, w, 0.5);
    const double grand = b.y.mean();
    for (int g = 0; g < 5; ++g) {
      const double dummy = b.y.segment(8 * g, 8).mean() - grand;
      const double ratio = sol.xi(g) / dummy;
      CHECK(ratio >= 0.0);
      CHECK(ratio <= 1.0);
      // Balanced closed form: xi_g = n_g / (n_g + 1 / sigma2) * dummy.
      CHECK(ratio == doctest::Approx(8.0 / (8.0 + 2.0)).epsilon(1e-10));
    }
  }
}

TEST_CASE("permuting group labels permutes the predictions") {
  const MatrixXd M = oracle::random_matrix(24, 2, 60);
  const VectorXd z = oracle::random_vector(24, 61);
  const VectorXd w = oracle::random_weights(24, 62) * 24;
  std::vector<int> groups = fixture::balanced(24, 4);
  const std::vector<int> perm{2, 0, 3, 1};
  std::vector<int> relabeled(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) relabeled[i] = perm[static_cast<std::size_t>(groups[i])];
  const HendersonSolution a = henderson_solve(M, group_design(groups, 4), z, w, 0.7);
  const HendersonSolution b = henderson_solve(M, group_design(relabeled, 4), z, w, 0.7);
  for (int g = 0; g < 4; ++g) CHECK(b.xi(perm[static_cast<std::size_t>(g)]) == doctest::Approx(a.xi(g)).epsilon(1e-12));
  CHECK((a.beta - b.beta).norm() < 1e-12);
}

TEST_CASE("Schall fixed point reproduces balanced REML") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Balanced b = balanced_layout(4, 10, 70 + seed);
    const VectorXd w = VectorXd::Ones(40);
    double sigma2 = 1.0;
    HendersonSolution sol;
    for (int it = 0; it < 100000; ++it) {
      sol = henderson_solve(b.M, b.U, b.y, w, sigma2);
      const double next = update_variance(sol.xi, sol.trace_xixi, sigma2).sigma2;
      const bool done = std::abs(next - sigma2) < 1e-14 * std::max(1.0, sigma2);
      sigma2 = next;
      if (done) break;
    }
    const double reml = oracle::balanced_reml(b.y, 4, 10);
    if (reml > 0.0) {
      CHECK(std::abs(sigma2 - reml) < 1e-6);
    } else {
      CHECK(sigma2 < 1e-6);
    }
    const HendersonSolution again = henderson_solve(b.M, b.U, b.y, w, sigma2);
    CHECK((again.xi - sol.xi).cwiseAbs().maxCoeff() < 1e-10);
  }
}
