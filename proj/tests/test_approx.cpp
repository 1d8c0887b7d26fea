#include <doctest.h>

#include <cmath>
#include <random>

#include "besovnet/approx.hpp"
#include "oracles.hpp"

using namespace besovnet;

namespace {
std::vector<double> v2(double a, double b) { return {a, b}; }
}  // namespace

TEST_CASE("approximate multiplication") {
  for (double eta : {1e-2, 1e-3}) {
    CnnNetwork net = build_multiplication_net(1.0, eta);
    MlpNetwork mlp = build_multiplication_mlp(1.0, eta);
    CHECK(audit(net).pass());
    double worst = 0;
    for (int a = -100; a <= 100; ++a)
      for (int b = -100; b <= 100; b += 5) {
        double x = a / 100.0, y = b / 100.0;
        double got = eval_cnn(net, v2(x, y));
        CHECK(got == doctest::Approx(oracle::mlp_forward(mlp, {x, y})).epsilon(1e-12));
        worst = std::max(worst, std::abs(got - x * y));
      }
    CHECK(worst <= eta);
    for (double x : {-1.0, -0.3, 0.0, 0.7, 1.0}) {
      CHECK(eval_cnn(net, v2(x, 0.0)) == 0.0);
      CHECK(eval_cnn(net, v2(0.0, x)) == 0.0);
    }
    CHECK(std::abs(eval_cnn(net, v2(1, 1)) - 1.0) <= eta);
  }
  // wider input range
  CnnNetwork wide = build_multiplication_net(2.0, 1e-3);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int n = 0; n < 2000; ++n) {
    double x = u(rng), y = u(rng);
    CHECK(std::abs(eval_cnn(wide, v2(x, y)) - x * y) <= 1e-3);
  }
  CHECK(multiplication_stages(1.0, 1e-2) < multiplication_stages(1.0, 1e-3));
  CHECK_THROWS_AS(build_multiplication_net(1.0, 0.0), DomainError);
}

TEST_CASE("squared distance is one-sided and tightens with theta") {
  std::mt19937_64 rng(7);
  std::vector<double> c{0.3, -0.2, 0.5};
  const double B = 1.5;
  double prev = 1e9;
  for (double theta : {1e-2, 1e-3, 1e-4}) {
    CnnNetwork net = build_squared_distance_net(c, B, theta, 2);
    CHECK(audit(net).pass());
    double worst = 0;
    std::uniform_real_distribution<double> u(-1, 1);
    for (int n = 0; n < 3000; ++n) {
      std::vector<double> x{u(rng), u(rng), u(rng)};
      double d2 = 0;
      for (int i = 0; i < 3; ++i) d2 += (x[i] - c[i]) * (x[i] - c[i]);
      double got = eval_cnn(net, x);
      CHECK(got >= d2 - 1e-12);
      worst = std::max(worst, got - d2);
    }
    CHECK(worst <= 4 * B * B * 3 * theta);
    CHECK(worst <= prev);
    prev = worst;
    CHECK(eval_cnn(net, c) == 0.0);
  }
}

TEST_CASE("indicator saturates outside the collar") {
  const double omega = 0.5, Delta = 0.02, theta = 1e-4, B = 1.0;
  const std::size_t D = 2;
  CnnNetwork ind = build_indicator_net(omega, Delta, theta, B, D);
  CHECK(audit(ind).pass());
  auto sh = indicator_shape(omega, Delta, theta, B, D);
  CHECK(ind.depth() == static_cast<std::size_t>(2 * sh.steps + 2));
  const double slack = 4 * B * B * D * theta;
  for (int n = 0; n <= 400; ++n) {
    double a = n / 400.0 * (omega * omega - Delta + slack);
    CHECK(eval_cnn(ind, std::vector<double>{a}) == 1.0);
  }
  for (int n = 0; n <= 400; ++n) {
    double a = omega * omega + n / 100.0;
    CHECK(eval_cnn(ind, std::vector<double>{a}) == 0.0);
  }
  for (int n = 0; n <= 400; ++n) {
    double a = omega * omega - Delta + slack + n / 400.0 * (Delta - slack);
    double g = eval_cnn(ind, std::vector<double>{a});
    CHECK(g >= 0.0);
    CHECK(g <= 1.0);
  }
  CHECK_THROWS_AS(build_indicator_net(omega, 1e-5, 1e-4, B, D), DomainError);
}

TEST_CASE("chart projection is exact") {
  SyntheticManifold M = make_manifold(ManifoldKind::sphere, 4, {});
  Atlas at = build_atlas(M, 0.4, 3);
  const Chart& ch = at.charts[0];
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (std::size_t i = 0; i < 2; ++i) {
    CnnNetwork net = build_chart_projection_cnn(ch, i, 3);
    CHECK(audit(net).pass());
    CHECK(net.envelope().depth == 1 + M.D);
    for (int n = 0; n < 200; ++n) {
      std::vector<double> x(M.D);
      for (auto& v : x) v = 0.5 * g(rng);
      auto z = chart_map(ch, x);
      CHECK(std::abs(eval_cnn(net, x) - z[i]) <= 1e-12);
      // moving along the normal space leaves the coordinate fixed
      Eigen::VectorXd n0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(M.D));
      n0(0) = 1.0;
      n0 -= ch.V * (ch.V.transpose() * n0);
      std::vector<double> y(x);
      for (std::size_t k = 0; k < M.D; ++k) y[k] += 0.3 * n0(static_cast<Eigen::Index>(k));
      CHECK(std::abs(eval_cnn(net, y) - eval_cnn(net, x)) <= 1e-12);
    }
  }
}

TEST_CASE("b-spline networks") {
  for (std::size_t d : {1, 2})
    for (double eps1 : {1e-2, 1e-3}) {
      BSplineIndex idx{2, std::vector<int>(d, 1), 3};
      CnnNetwork net = build_bspline_cnn(idx, eps1, 2);
      CHECK(audit(net).pass());
      CHECK(net.envelope() == bspline_envelope(idx, eps1, 2));
      std::mt19937_64 rng(11 + d);
      std::uniform_real_distribution<double> u(0, 1);
      double worst = 0;
      for (int n = 0; n < 4000; ++n) {
        std::vector<double> x(d);
        for (auto& v : x) v = u(rng);
        double got = eval_cnn(net, x), want = eval_tensor_bspline(idx, x);
        worst = std::max(worst, std::abs(got - want));
        if (!in_support(idx, x)) CHECK(got == 0.0);
      }
      CHECK(worst <= eps1);
    }
  // tighter tolerance never needs fewer layers
  BSplineIndex idx{1, {0, 1}, 3};
  CHECK(bspline_envelope(idx, 1e-4, 2).depth >= bspline_envelope(idx, 1e-2, 2).depth);
  CHECK(build_bspline_cnn(idx, 1e-4, 2).depth() >= build_bspline_cnn(idx, 1e-2, 2).depth());
}

TEST_CASE("tolerances shrink with eps") {
  auto a = choose_tolerances(0.1, 10, 0.4, 1.0, 1.0, 2, 1, 2.0);
  auto b = choose_tolerances(0.05, 10, 0.4, 1.0, 1.0, 2, 1, 2.0);
  CHECK(b.delta < a.delta);
  CHECK(b.eta < a.eta);
  CHECK(b.Delta < a.Delta);
  CHECK(b.theta < a.theta);
  CHECK(b.N >= a.N);
  CHECK(a.delta == doctest::Approx(0.1 / 30));
  CHECK_THROWS_AS(choose_tolerances(1.5, 10, 0.4, 1.0, 1.0, 2, 1, 2.0), DomainError);
}

TEST_CASE("end to end on the circle") {
  SyntheticManifold M = make_manifold(ManifoldKind::circle, 3, {});
  BuildOptions opt;
  opt.eps = 0.1;
  opt.samples = 2000;
  opt.strict = false;
  auto f = make_target(M, "trig", {{"frequency", 1}, {"amplitude", 1.0}}, 0);
  auto res = build_theorem1_network(f, M, opt);
  INFO(res.report.to_json().dump(1));
  CHECK(res.report.pass());
  CHECK(res.report.sup_error <= 0.1);

  auto zero = make_target(M, "constant", {{"value", 0.0}}, 0);
  auto rz = build_theorem1_network(zero, M, opt);
  for (const auto& p : sample(M, 200, 4)) CHECK(std::abs(eval_resnet(rz.network, p)) <= 1e-12);
}
