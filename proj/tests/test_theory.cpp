#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "mixreg/errors.hpp"
#include "mixreg/theory.hpp"

using namespace mixreg;

TEST_CASE("Jacobi eigenvalues agree with Eigen") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const QuadraticLoss q = random_quadratic(7, seed);
    const auto mine = symmetric_eigenvalues(q.hessian());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(q.hessian()));
    REQUIRE(mine.size() == 7);
    auto sorted = mine;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 7; ++i) CHECK(sorted[i] == doctest::Approx(es.eigenvalues()(i)).epsilon(1e-12));
    CHECK(q.strong_convexity() == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-12));
  }
}

TEST_CASE("quadratics reject asymmetric or indefinite matrices") {
  Matrix a(2, 2);
  a << 1.0, 0.5, 0.0, 1.0;
  CHECK_THROWS(QuadraticLoss(a, {0.0, 0.0}));
  a << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS(QuadraticLoss(a, {0.0, 0.0}));
}

TEST_CASE("quadratic gradient matches finite differences") {
  const QuadraticLoss q = random_quadratic(4, 3);
  const ParamVector w = ParamVector::flat({0.2, -0.4, 0.9, 0.1});
  const LossGrad lg = q.loss_and_grad(w);
  CHECK(lg.loss == doctest::Approx(q.value(w)));
  for (std::size_t i = 0; i < 4; ++i) {
    ParamVector up = w, down = w;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    CHECK(lg.grad[i] == doctest::Approx((q.value(up) - q.value(down)) / 2e-6).epsilon(1e-7));
  }
}

TEST_CASE("enumeration matches the closed form on a small case") {
  const QuadraticLoss q = random_quadratic(3, 11);
  const ParamVector w = ParamVector::flat({1.0, -0.5, 0.25});
  const ParamVector u = ParamVector::flat({0.0, 0.5, -1.0});
  MixPolicy policy = MixPolicy::mixout(u, 0.4, AnchorKind::explicit_vector);
  const double e = enum_expected_loss([&](const ParamVector& v) { return q.value(v); }, w, policy);
  CHECK(std::abs(e - quadratic_expected_loss(q, w, policy)) < 1e-12);
  const BoundReport b = check_lower_bound(q, w, policy);
  CHECK(b.holds);
  CHECK(b.slack >= -1e-12);
}

TEST_CASE("p = 0 expected loss is the loss itself") {
  const QuadraticLoss q = random_quadratic(4, 2);
  const ParamVector w = ParamVector::flat({0.1, 0.2, 0.3, 0.4});
  const MixPolicy policy = MixPolicy::mixout(ParamVector::flat({1, 1, 1, 1}), 0.0, AnchorKind::explicit_vector);
  CHECK(quadratic_expected_loss(q, w, policy) == doctest::Approx(q.value(w)).epsilon(1e-14));
}

TEST_CASE("too many units raise a capacity error; general laws fall back to Monte Carlo") {
  const auto layout = ParamLayout::flat(21);
  const ParamVector w(layout);
  MixPolicy policy = MixPolicy::dropconnect(layout, 0.5);
  policy.granularity = Granularity::per_parameter;
  auto zero = [](const ParamVector&) { return 0.0; };
  CHECK_THROWS_AS(enum_expected_loss(zero, w, policy), CapacityError);

  const auto small = ParamLayout::flat(3);
  const ParamVector v = ParamVector::flat({1.0, -1.0, 0.5});
  MixPolicy general = MixPolicy::dropconnect(small, 0.0);
  general.distribution = MaskDistribution::general(0.8, 0.04);
  auto sq = [](const ParamVector& x) {
    double s = 0.0;
    for (double t : x.values()) s += t * t;
    return s;
  };
  const ExpectedLoss el = expected_loss(sq, v, general, 200000, 1);
  CHECK_FALSE(el.exact);
  CHECK(el.std_error > 0.0);
  // E||phi||^2 = (1 + var/mu^2) ||v||^2 with u = 0.
  const double truth = (1.0 + 0.04 / 0.64) * 2.25;
  CHECK(std::abs(el.value - truth) < 5.0 * el.std_error);

  const ExpectedLoss exact = expected_loss(sq, v, MixPolicy::dropconnect(small, 0.5));
  CHECK(exact.exact);
  CHECK(exact.value == doctest::Approx(2.0 * 2.25).epsilon(1e-14));
}

TEST_CASE("expected minimizer solves the penalised problem") {
  const QuadraticLoss q = random_quadratic(4, 5);
  const ParamVector u = ParamVector::flat({0.3, 0.3, -0.3, 0.0});
  const MixPolicy policy = MixPolicy::mixout(u, 0.6, AnchorKind::explicit_vector);
  const auto wmin = quadratic_expected_minimizer(q, policy);
  const ParamVector w = ParamVector::flat(wmin);
  const double at = quadratic_expected_loss(q, w, policy);
  for (std::size_t i = 0; i < 4; ++i) {
    ParamVector moved = w;
    moved[i] += 1e-3;
    CHECK(quadratic_expected_loss(q, moved, policy) > at);
  }
}

TEST_CASE("phi moments") {
  const ParamVector w = ParamVector::flat({2.0, -1.0});
  const ParamVector u = ParamVector::flat({1.0, 1.0});
  const MixPolicy policy = MixPolicy::mixout(u, 0.25, AnchorKind::explicit_vector);
  const PhiMoments m = enum_phi_moments(w, policy);
  CHECK(std::abs(m.mean[0] - 2.0) < 1e-14);
  CHECK(std::abs(m.mean[1] + 1.0) < 1e-14);
  // Single unit (one column of a 1 x 2 layer is one entry each): ratio 1/3.
  CHECK(std::abs(m.second_moment - (0.25 / 0.75) * 5.0) < 1e-14);
}

TEST_CASE("least squares hand example and rank errors") {
  RegressionProblem hand;
  hand.x = Matrix(2, 1);
  hand.x << 1.0, -1.0;
  hand.y = {2.0, -2.0};
  CHECK(std::abs(ls_mixout_solve(hand, {0.0}, 0.5)[0] - 1.0) < 1e-12);
  CHECK(std::abs(ls_mixout_solve(hand, {0.0}, 0.0)[0] - 2.0) < 1e-12);
  CHECK_THROWS_AS(ls_mixout_solve(hand, {0.0}, 1.0), ConfigError);
  CHECK_THROWS_AS(ls_mixout_solve(hand, {0.0, 1.0}, 0.5), DimensionError);

  RegressionProblem flat;
  flat.x = Matrix::Zero(3, 2);
  flat.y = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(ls_mixout_solve(flat, {0.0, 0.0}, 0.5), RankError);
}

TEST_CASE("regression demo moves toward u and writes CSV") {
  RegressionDemoOptions opts;
  opts.run_sgd = false;
  const RegressionDemo demo = ls_regression_demo(4, {0.0, 0.3, 0.6, 0.9}, opts);
  REQUIRE(demo.rows.size() == 4);
  for (std::size_t i = 1; i < 4; ++i) CHECK(demo.rows[i].dev_from_u < demo.rows[i - 1].dev_from_u);
  std::ostringstream os;
  write_regression_csv(demo, os);
  const std::string text = os.str();
  CHECK(text.rfind("p,w_hat_1,w_hat_2,dev_from_u,dev_from_true\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}

TEST_CASE("short SGD runs land near the closed form") {
  const RegressionProblem prob = RegressionProblem::synthesize(100, 0.1, 9);
  const std::vector<double> u = {0.5, -0.5};
  SgdOptions opts;
  opts.steps = 2000000;
  opts.seed = 3;
  for (double p : {0.0, 0.5}) {
    const auto exact = ls_mixout_solve(prob, u, p);
    const auto sgd = ls_mixout_sgd(prob, u, p, opts);
    for (std::size_t i = 0; i < 2; ++i) CHECK(sgd[i] == doctest::Approx(exact[i]).epsilon(2e-2));
  }
}

TEST_CASE("verify_theory passes") {
  for (const CheckResult& c : verify_theory(3, 40)) {
    CAPTURE(c.name);
    CAPTURE(c.detail);
    CHECK(c.passed);
  }
}
