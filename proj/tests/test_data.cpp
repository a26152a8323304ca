#include "doctest.h"
#include "fixtures.hpp"
#include "scglrmix/data.hpp"
#include "scglrmix/family.hpp"

#include <sstream>

using namespace scglrmix;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const char* kSix =
    "y,x1,x2,site\n"
    "1,0.5,2,a\n"
    "2,1.5,1,a\n"
    "0,2.5,0,b\n"
    "4,3.5,5,b\n"
    "3,1.0,2,a\n"
    "1,0.25,7,b\n";

Schema six_schema() {
  Schema s;
  s.response = {"y"};
  s.group = "site";
  return s;
}

std::string what_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("load_csv: uniform default weights and first-appearance groups") {
  std::istringstream in(kSix);
  const Dataset ds = parse_csv(in, six_schema());
  CHECK(ds.n() == 6);
  CHECK(ds.p() == 2);
  CHECK(ds.q() == 1);
  CHECK(ds.num_groups() == 2);
  CHECK(ds.group_labels == std::vector<std::string>{"a", "b"});
  CHECK(ds.groups == std::vector<int>{0, 0, 1, 1, 0, 1});
  for (int i = 0; i < 6; ++i) CHECK(ds.W(i) == doctest::Approx(1.0 / 6).epsilon(1e-15));
  CHECK(ds.has_intercept);
  CHECK(ds.T.cols() == 1);
}

TEST_CASE("load_csv: absent column is named") {
  Schema s = six_schema();
  s.additional = {"elevation"};
  std::istringstream in(kSix);
  const std::string msg = what_of([&] { parse_csv(in, s); });
  CHECK(msg.find("elevation") != std::string::npos);
}

TEST_CASE("load_csv: NA in X reports row and column") {
  std::istringstream in("y,x1,site\n1,2,a\n2,NA,b\n");
  Schema s;
  s.response = {"y"};
  s.group = "site";
  const std::string msg = what_of([&] { parse_csv(in, s); });
  CHECK(msg.find("row 2") != std::string::npos);
  CHECK(msg.find("x1") != std::string::npos);
}

TEST_CASE("load_csv: non-numeric cell is rejected") {
  std::istringstream in("y,x1,site\n1,2,a\n2,abc,b\n");
  Schema s;
  s.response = {"y"};
  s.group = "site";
  CHECK_THROWS_AS(parse_csv(in, s), InputError);
}

TEST_CASE("load_csv: missing file") {
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", six_schema()), InputError);
}

TEST_CASE("load_csv: prefix patterns and weights") {
  std::istringstream in("y1,y2,xa,xb,w,g\n1,2,3,4,1,a\n2,3,4,6,3,b\n");
  Schema s;
  s.response = {"y*"};
  s.explanatory = {"x*"};
  s.group = "g";
  s.weights = "w";
  const Dataset ds = parse_csv(in, s);
  CHECK(ds.response_names == std::vector<std::string>{"y1", "y2"});
  CHECK(ds.x_names == std::vector<std::string>{"xa", "xb"});
  CHECK(ds.W(0) == doctest::Approx(0.25));
  CHECK(ds.W(1) == doctest::Approx(0.75));
}

TEST_CASE("group design: rows sum to one, columns to group sizes") {
  const std::vector<int> g{0, 2, 1, 2, 2, 0};
  const MatrixXd U = group_design(g, 3);
  CHECK((U.rowwise().sum().array() == 1.0).all());
  CHECK(U.col(0).sum() == 2.0);
  CHECK(U.col(1).sum() == 1.0);
  CHECK(U.col(2).sum() == 3.0);
  CHECK((U * VectorXd::Ones(3) - VectorXd::Ones(6)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("standardize: symmetric column, constant column, idempotence") {
  MatrixXd X(3, 2);
  X << 1, 4, 2, 9, 3, 1;
  Dataset ds = fixture::make(VectorXd::Ones(3), X, {0, 0, 1});
  const Dataset st = standardize(ds);
  const double scale = std::sqrt(2.0 / 3.0);
  CHECK(st.X(0, 0) == doctest::Approx(-1.0 / scale).epsilon(1e-14));
  CHECK(st.X(1, 0) == doctest::Approx(0.0));
  CHECK(st.X(2, 0) == doctest::Approx(1.0 / scale).epsilon(1e-14));
  for (int j = 0; j < 2; ++j) {
    CHECK(std::abs(weighted_mean(st.X.col(j), st.W)) < 1e-10);
    CHECK(std::abs(weighted_variance(st.X.col(j), st.W) - 1.0) < 1e-10);
  }
  const Dataset twice = standardize(st);
  CHECK((twice.X - st.X).cwiseAbs().maxCoeff() < 1e-10);

  MatrixXd C(3, 1);
  C << 5, 5, 5;
  Dataset bad = fixture::make(VectorXd::Ones(3), C, {0, 0, 1});
  bad.x_names = {"flat"};
  const std::string msg = what_of([&] { standardize(bad); });
  CHECK(msg.find("flat") != std::string::npos);
}

TEST_CASE("standardize: T intercept kept, other T columns centered") {
  const MatrixXd X = oracle::random_matrix(8, 2, 3);
  const MatrixXd extra = oracle::random_matrix(8, 1, 4).array() + 5.0;
  Dataset ds = fixture::make(VectorXd::Ones(8), X, fixture::balanced(8, 2), true, extra);
  const Dataset st = standardize(ds);
  CHECK((st.T.col(0).array() == 1.0).all());
  CHECK(std::abs(weighted_mean(st.T.col(1), st.W)) < 1e-12);
}

TEST_CASE("write then load is bit-exact and keeps labels") {
  const MatrixXd X = oracle::random_matrix(7, 3, 11);
  const MatrixXd Y = oracle::random_matrix(7, 2, 12);
  Dataset ds = fixture::make(Y, X, {0, 1, 1, 2, 0, 2, 1});
  ds.group_labels = {"north site", "Zeta", "b,quoted"};
  std::stringstream buf;
  write_dataset(ds, buf);
  const Dataset back = parse_csv(buf, schema_for(ds));
  CHECK(back.Y == ds.Y);
  CHECK(back.X == ds.X);
  CHECK(back.T == ds.T);
  CHECK(back.group_labels == ds.group_labels);
  CHECK(back.groups == ds.groups);

  Dataset empty = ds.subset({});
  std::stringstream sink;
  CHECK_THROWS_AS(write_dataset(empty, sink), InputError);
}

TEST_CASE("validate: weights and groups") {
  Dataset ds = fixture::make(VectorXd::Ones(4), oracle::random_matrix(4, 1, 1), {0, 0, 1, 1});
  CHECK_NOTHROW(ds.validate());
  ds.W(0) = -0.25;
  CHECK_THROWS_AS(ds.validate(), InputError);
  ds.W.setConstant(0.3);
  CHECK_THROWS_AS(ds.validate(), InputError);
}

TEST_CASE("subset renormalizes weights and re-encodes groups") {
  Dataset ds = fixture::make(VectorXd::LinSpaced(6, 0, 5), oracle::random_matrix(6, 2, 5),
                             {0, 0, 1, 1, 2, 2});
  const Dataset s = ds.subset({2, 3, 4});
  CHECK(s.n() == 3);
  CHECK(s.W.sum() == doctest::Approx(1.0));
  CHECK(s.group_labels == std::vector<std::string>{"g2", "g3"});
  CHECK(s.groups == std::vector<int>{0, 0, 1});
}

TEST_CASE("mean_and_derivs at canonical points") {
  VectorXd eta(1);
  eta << 0.0;
  auto p = mean_and_derivs(eta, FamilyLink::canonical(Family::Poisson));
  CHECK(p.mu(0) == 1.0);
  CHECK(p.g_prime(0) == 1.0);
  CHECK(p.variance(0) == 1.0);
  auto b = mean_and_derivs(eta, FamilyLink::canonical(Family::Bernoulli));
  CHECK(b.mu(0) == 0.5);
  CHECK(b.g_prime(0) == doctest::Approx(4.0));
  CHECK(b.variance(0) == 0.25);
  eta << 2.5;
  auto g = mean_and_derivs(eta, FamilyLink::canonical(Family::Gaussian));
  CHECK(g.mu(0) == 2.5);
  CHECK(g.g_prime(0) == 1.0);
  CHECK(g.variance(0) == 1.0);
}

TEST_CASE("working quantities: closed-form points") {
  VectorXd eta = VectorXd::Zero(1);
  VectorXd y(1);
  y << 3.0;
  auto p = working_quantities(y, eta, FamilyLink::canonical(Family::Poisson));
  CHECK(p.z(0) == doctest::Approx(2.0));
  CHECK(p.w(0) == doctest::Approx(1.0));
  y << 1.0;
  auto b = working_quantities(y, eta, FamilyLink::canonical(Family::Bernoulli));
  CHECK(b.z(0) == doctest::Approx(2.0));
  CHECK(b.w(0) == doctest::Approx(0.25));
}

TEST_CASE("working quantities: gaussian identity map, shift, weight identity") {
  const VectorXd y = oracle::random_vector(20, 7);
  const VectorXd eta = oracle::random_vector(20, 8);
  const auto gauss = FamilyLink::canonical(Family::Gaussian);
  auto g = working_quantities(y, eta, gauss);
  CHECK((g.z - y).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((g.w.array() == 1.0).all());
  auto shifted = working_quantities((y.array() + 2.5).matrix(), eta, gauss);
  CHECK((shifted.z - g.z).cwiseAbs().maxCoeff() == doctest::Approx(2.5));
  CHECK(((shifted.z - g.z).array() - 2.5).abs().maxCoeff() < 1e-12);

  for (auto fam : {Family::Poisson, Family::Bernoulli}) {
    const auto fl = FamilyLink::canonical(fam);
    VectorXd yy = (y.array() > 0).cast<double>();
    auto wq = working_quantities(yy, eta, fl);
    auto md = mean_and_derivs(eta, fl);
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      CHECK(std::abs(wq.w(i) * md.g_prime(i) * md.g_prime(i) * md.variance(i) - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("eta clamp keeps poisson finite") {
  VectorXd eta(2);
  eta << 100.0, -100.0;
  auto md = mean_and_derivs(eta, FamilyLink::canonical(Family::Poisson));
  CHECK(md.mu(0) == doctest::Approx(std::exp(30.0)));
  CHECK(std::isfinite(md.mu(1)));
}

TEST_CASE("support checks name the row") {
  VectorXd y(3);
  y << 1, -2, 0;
  const std::string msg =
      what_of([&] { check_support(y, FamilyLink::canonical(Family::Poisson)); });
  CHECK(msg.find("row 2") != std::string::npos);
  y << 0, 1, 2;
  CHECK_THROWS_AS(check_support(y, FamilyLink::canonical(Family::Bernoulli)), InputError);
}

TEST_CASE("family parsing enforces canonical links") {
  CHECK(FamilyLink::parse("poisson").link == Link::Log);
  CHECK(FamilyLink::parse("bernoulli").link == Link::Logit);
  CHECK_THROWS_AS(FamilyLink::parse("poisson/identity"), InputError);
  const auto spec = parse_family_spec("poisson,gaussian", 2);
  CHECK(spec[1].family == Family::Gaussian);
  CHECK_THROWS_AS(parse_family_spec("poisson,gaussian", 3), InputError);
}

TEST_CASE("deviance closed forms") {
  const auto bern = FamilyLink::canonical(Family::Bernoulli);
  VectorXd y(4), mu(4), w(4);
  y << 0, 1, 0, 1;
  mu.setConstant(0.5);
  w << 1, 2, 1, 2;
  CHECK(deviance(y, mu, w, bern) == doctest::Approx(6.0 * 2.0 * std::log(2.0)).epsilon(1e-14));
  const auto pois = FamilyLink::canonical(Family::Poisson);
  y << 0, 3, 1, 7;
  CHECK(deviance(y, y, w, pois) == doctest::Approx(0.0));
  const auto gauss = FamilyLink::canonical(Family::Gaussian);
  mu << 1, 1, 1, 1;
  const double rss = w.dot((y - mu).array().square().matrix());
  CHECK(deviance(y, mu, w, gauss) == doctest::Approx(rss));
}
