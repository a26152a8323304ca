#include "doctest.h"
#include "fixtures.hpp"
#include "scglrmix/criterion.hpp"

using namespace scglrmix;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// W-orthonormal columns: X'WX = I.
MatrixXd orthonormal_columns(int n, int p, const VectorXd& W, std::uint64_t seed) {
  const MatrixXd A = oracle::random_matrix(n, p, seed);
  const VectorXd sw = W.array().sqrt();
  Eigen::HouseholderQR<MatrixXd> qr(sw.asDiagonal() * A);
  const MatrixXd Q = qr.householderQ() * MatrixXd::Identity(n, p);
  return sw.cwiseInverse().asDiagonal() * Q;
}

FitContext random_context(int n, int p, int q, int r, std::uint64_t seed) {
  FitContext ctx;
  ctx.X = oracle::random_matrix(n, p, seed);
  ctx.W = oracle::random_weights(n, seed + 1);
  for (int k = 0; k < q; ++k) {
    ctx.z.push_back(oracle::random_vector(n, seed + 10 + k));
    ctx.weights.push_back(oracle::random_weights(n, seed + 20 + k) * n);
  }
  ctx.T = oracle::random_matrix(n, r, seed + 2);
  return ctx;
}

}  // namespace

TEST_CASE("phi: single self-covariance") {
  const VectorXd W = VectorXd::Constant(4, 0.25);
  MatrixXd x(4, 1);
  x << 1, -1, 1, -1;
  VectorXd u(1);
  u << 1.0;
  for (double l : {1.0, 2.0, 7.5, kInfiniteLocality}) {
    CHECK(structural_relevance(u, x, W, l) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("phi: orthonormal Gram at l = 1 gives u'u") {
  const VectorXd W = oracle::random_weights(12, 3);
  const MatrixXd X = orthonormal_columns(12, 4, W, 4);
  const VectorXd u = oracle::random_unit(4, 5);
  CHECK(structural_relevance(u, X, W, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("phi: brute-force double sum") {
  const MatrixXd X = oracle::random_matrix(6, 3, 10);
  const VectorXd W = oracle::random_weights(6, 11);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const VectorXd u = oracle::random_unit(3, 100 + s);
    for (double l : {1.0, 2.0, 3.5, kInfiniteLocality}) {
      const double want = oracle::phi(u, X, W, l);
      CHECK(std::abs(structural_relevance(u, X, W, l) - want) <= 1e-12 * std::max(1.0, want));
    }
  }
}

TEST_CASE("phi: gradient matches finite differences; Euler identity at l = 1") {
  const MatrixXd X = oracle::random_matrix(20, 8, 21);
  const VectorXd W = oracle::random_weights(20, 22);
  for (double l : {1.0, 2.0, 4.0}) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const VectorXd u = oracle::random_unit(8, 200 + s);
      const VectorXd fd =
          oracle::fd_gradient([&](const VectorXd& v) { return oracle::phi(v, X, W, l); }, u);
      CHECK(oracle::relative_error(relevance_gradient(u, X, W, l), fd) < 1e-6);
    }
  }
  const VectorXd u = oracle::random_unit(8, 300);
  CHECK(relevance_gradient(u, X, W, 1.0).dot(u) ==
        doctest::Approx(2.0 * structural_relevance(u, X, W, 1.0)).epsilon(1e-12));
  const MatrixXd G = X.transpose() * W.asDiagonal() * X;
  const VectorXd closed = 2.0 * G * G * u;
  CHECK(oracle::relative_error(relevance_gradient(u, X, W, 1.0), closed) < 1e-12);
}

TEST_CASE("phi: tied maximizers at l = inf average their gradients") {
  const VectorXd W = VectorXd::Constant(10, 0.1);
  const MatrixXd X = orthonormal_columns(10, 2, W, 31);
  VectorXd u(2);
  u << 1.0, 1.0;
  u /= std::sqrt(2.0);
  const VectorXd g = relevance_gradient(u, X, W, kInfiniteLocality);
  // Active gradients 2 c_j G e_j with c_j = 1/sqrt(2), G = I.
  CHECK(g(0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-10));
  CHECK(g(1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-10));
}

TEST_CASE("phi: scaling and the large-l limit") {
  const MatrixXd X = oracle::random_matrix(30, 5, 41);
  const VectorXd W = oracle::random_weights(30, 42);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const VectorXd u = oracle::random_unit(5, 400 + s);
    const double base = structural_relevance(u, X, W, 3.0);
    CHECK(structural_relevance(2.5 * u, X, W, 3.0) == doctest::Approx(6.25 * base).epsilon(1e-12));
    const double mx = structural_relevance(u, X, W, kInfiniteLocality);
    CHECK(std::abs(structural_relevance(u, X, W, 64.0) - mx) <= 0.01 * mx);
  }
}

TEST_CASE("psi: vector in its own span and orthogonal vectors") {
  FitContext ctx;
  ctx.X = oracle::random_matrix(9, 3, 51);
  ctx.W = VectorXd::Constant(9, 1.0 / 9);
  const VectorXd u = oracle::random_unit(3, 52);
  const VectorXd w = oracle::random_weights(9, 53) * 9;
  ctx.z = {ctx.X * u};
  ctx.weights = {w};
  ctx.T = MatrixXd(9, 0);
  const double norm2 = ctx.z[0].dot(w.asDiagonal() * ctx.z[0]);
  CHECK(goodness_of_fit(u, ctx).value == doctest::Approx(norm2).epsilon(1e-12));

  // z W-orthogonal to Xu and to T.
  ctx.T = oracle::random_matrix(9, 1, 54);
  MatrixXd B(9, 2);
  B << ctx.X * u, ctx.T;
  VectorXd z = oracle::random_vector(9, 55);
  const MatrixXd Wd = w.asDiagonal();
  z -= B * (B.transpose() * Wd * B).ldlt().solve(B.transpose() * Wd * z);
  ctx.z = {z};
  CHECK(std::abs(goodness_of_fit(u, ctx).value) < 1e-12);
}

TEST_CASE("psi: explicit projector oracle") {
  const FitContext ctx = random_context(5, 3, 2, 1, 60);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const VectorXd u = oracle::random_unit(3, 600 + s);
    const double want = oracle::psi(u, ctx.X, ctx.z, ctx.weights, ctx.T);
    CHECK(std::abs(goodness_of_fit(u, ctx).value - want) <= 1e-10 * std::max(1.0, want));
  }
  const FitContext wide = random_context(40, 6, 3, 3, 61);
  const VectorXd u = oracle::random_unit(6, 610);
  const double want = oracle::psi(u, wide.X, wide.z, wide.weights, wide.T);
  CHECK(std::abs(goodness_of_fit(u, wide).value - want) <= 1e-10 * want);
}

TEST_CASE("psi: span invariance and gradient") {
  const FitContext ctx = random_context(20, 8, 3, 2, 70);
  const CriterionEvaluator ev(ctx, {});
  for (std::uint64_t s = 0; s < 10; ++s) {
    const VectorXd u = oracle::random_unit(8, 700 + s);
    CHECK(ev.psi(-3.0 * u).value == doctest::Approx(ev.psi(u).value).epsilon(1e-12));
    const VectorXd fd = oracle::fd_gradient([&](const VectorXd& v) { return ev.psi(v).value; }, u);
    CHECK(oracle::relative_error(ev.psi_gradient(u), fd) < 1e-5);
  }
}

TEST_CASE("psi: Xu inside span(T) is dropped and flagged") {
  FitContext ctx = random_context(12, 3, 1, 0, 80);
  VectorXd u(3);
  u << 1, 0, 0;
  ctx.T = ctx.X.col(0) * 2.0;
  const FitValue fv = goodness_of_fit(u, ctx);
  CHECK(fv.degenerate == 1);
  // With Xu dropped the projection is onto span(T) alone.
  const VectorXd w = ctx.weights[0];
  const VectorXd t = ctx.T.col(0);
  const double coef = t.dot(w.asDiagonal() * ctx.z[0]) / t.dot(w.asDiagonal() * t);
  const VectorXd pz = coef * t;
  CHECK(fv.value == doctest::Approx(pz.dot(w.asDiagonal() * pz)).epsilon(1e-10));
}

TEST_CASE("combined criterion: exponent collapse, product oracle, continuity") {
  const FitContext ctx = random_context(6, 3, 2, 1, 90);
  const VectorXd u = oracle::random_unit(3, 91);
  CriterionParams p;
  p.l = 2.0;
  p.s = 0.0;
  CHECK(combined_criterion(u, p, ctx) == goodness_of_fit(u, ctx).value);
  p.s = 1.0;
  CHECK(combined_criterion(u, p, ctx) == structural_relevance(u, ctx.X, ctx.W, 2.0));
  p.s = 0.5;
  const double phi = oracle::phi(u, ctx.X, ctx.W, 2.0);
  const double psi = oracle::psi(u, ctx.X, ctx.z, ctx.weights, ctx.T);
  CHECK(combined_criterion(u, p, ctx) == doctest::Approx(std::sqrt(phi * psi)).epsilon(1e-12));
  p.s = 1e-6;
  const double eps_value = combined_criterion(u, p, ctx);
  p.s = 0.0;
  CHECK(std::abs(eps_value - combined_criterion(u, p, ctx)) < 1e-4 * psi);
}

TEST_CASE("combined gradient and log gradient match finite differences") {
  const FitContext ctx = random_context(20, 8, 2, 2, 95);
  for (double s : {0.0, 0.3, 0.5, 1.0}) {
    CriterionParams p;
    p.s = s;
    p.l = 4.0;
    const CriterionEvaluator ev(ctx, p);
    for (std::uint64_t k = 0; k < 10; ++k) {
      const VectorXd u = oracle::random_unit(8, 900 + k);
      const VectorXd fd = oracle::fd_gradient([&](const VectorXd& v) { return ev.value(v); }, u);
      CHECK(oracle::relative_error(ev.value_gradient(u), fd) < 1e-5);
      const VectorXd fdl =
          oracle::fd_gradient([&](const VectorXd& v) { return ev.log_value(v); }, u);
      CHECK(oracle::relative_error(ev.log_gradient(u), fdl) < 1e-5);
    }
  }
}

TEST_CASE("criterion vanishes when a required factor is zero") {
  FitContext ctx = random_context(8, 3, 1, 0, 99);
  ctx.z[0].setZero();
  CriterionParams p;
  p.s = 0.5;
  const VectorXd u = oracle::random_unit(3, 98);
  CHECK_THROWS_AS(combined_criterion(u, p, ctx), CriterionVanishes);
  p.s = 1.0;
  CHECK_NOTHROW(combined_criterion(u, p, ctx));
}

TEST_CASE("params validation and parsing") {
  CriterionParams p;
  p.s = 1.5;
  CHECK_THROWS_AS(p.validate(), InputError);
  p.s = 0.5;
  p.l = 0.5;
  CHECK_THROWS_AS(p.validate(), InputError);
  CHECK(std::isinf(parse_locality("inf")));
  CHECK(format_locality(kInfiniteLocality) == "inf");
  CHECK(parse_metric("gram") == Metric::Gram);
  CHECK_THROWS_AS(parse_metric("euclid"), InputError);
}
