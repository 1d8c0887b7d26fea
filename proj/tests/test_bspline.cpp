#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "besovnet/bspline.hpp"
#include "besovnet/error.hpp"

using namespace besovnet;

namespace {

// truncated power form, independent of the recursion
double psi_power(int m, double x) {
  if (x < 0 || x >= m + 1) return 0.0;
  double fact = 1, sum = 0, binom = 1;
  for (int i = 1; i <= m; ++i) fact *= i;
  for (int j = 0; j <= m + 1; ++j) {
    if (j > 0) binom = binom * (m + 2 - j) / j;
    double t = x - j;
    if (t > 0) sum += ((j % 2) ? -1.0 : 1.0) * binom * std::pow(t, m);
  }
  return sum / fact;
}

}  // namespace

TEST_CASE("psi values") {
  CHECK(eval_psi(0, 0.5) == 1.0);
  CHECK(eval_psi(0, 1.5) == 0.0);
  CHECK(eval_psi(1, 1.0) == 1.0);
  for (int m = 0; m <= 5; ++m) {
    CHECK(eval_psi(m, -0.1) == 0.0);
    CHECK(eval_psi(m, m + 1.1) == 0.0);
    for (int i = 0; i <= 400; ++i) {
      double x = (m + 1.0) * i / 400.0 + 1e-7;
      CHECK(std::abs(eval_psi(m, x) - psi_power(m, x)) <= 1e-10);
    }
  }
  CHECK(eval_psi(3, 2.0) == doctest::Approx(2.0 / 3.0));
  CHECK(psi_second_derivative_bound(3) == 2.0);
  CHECK(psi_second_derivative_bound(2) == 2.0);
  CHECK_THROWS_AS(eval_psi(-1, 0.0), DomainError);
}

TEST_CASE("partition of unity and support") {
  for (int m = 0; m <= 4; ++m)
    for (int k = 0; k <= 4; ++k) {
      SparseGridPlan pl;
      pl.d = 1;
      pl.m = m;
      auto lv = pl.level(k);
      for (int i = 0; i < 200; ++i) {
        double lo = m * std::ldexp(1.0, -k);
        double x = lo + (1.0 - lo) * i / 200.0;
        if (x > 1.0) continue;
        double sum = 0;
        for (auto& idx : lv) sum += eval_tensor_bspline(idx, std::vector<double>{x});
        CHECK(std::abs(sum - 1.0) <= 1e-12);
      }
    }
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  BSplineIndex idx{2, {1, -1}, 3};
  for (int n = 0; n < 2000; ++n) {
    std::vector<double> x{u(rng), u(rng)};
    if (!in_support(idx, x)) CHECK(eval_tensor_bspline(idx, x) == 0.0);
  }
  BSplineIndex base{0, {0}, 2};
  CHECK(eval_tensor_bspline(base, std::vector<double>{0.7}) == eval_psi(2, 0.7));
  BSplineIndex hat{1, {0, 0}, 1};
  CHECK(eval_tensor_bspline(hat, std::vector<double>{0.5, 0.5}) == 1.0);
}

TEST_CASE("plan budget") {
  for (std::size_t N : {100, 1000, 10000})
    for (std::size_t d : {1, 2}) {
      auto pl = make_plan(N, d, 2.0, 2.0 * d, 2.0, 3);
      CHECK(pl.basis_count() <= N);
      CHECK(pl.u == doctest::Approx(0.5));
      CHECK(pl.nu == doctest::Approx((2.0 * 2 * d - d) / (2.0 * d)));
      CHECK(pl.n_k.size() == static_cast<std::size_t>(pl.Hstar - pl.H));
    }
  auto inf = make_plan(1000, 1, 1.5, kInf, kInf, 3);
  CHECK(inf.n_k.empty());
  CHECK(inf.Hstar == inf.H);
  // H tracks c1 log N
  int prev = -1;
  for (double N : {1e3, 1e6, 1e9, 1e12}) {
    auto pl = make_plan(static_cast<std::size_t>(N), 1, 1.5, kInf, kInf, 3, 1.0);
    CHECK(pl.H == static_cast<int>(std::ceil(std::log(N))));
    CHECK(pl.H > prev);
    prev = pl.H;
  }
  CHECK_THROWS_AS(make_plan(100, 1, 2.0, kInf, kInf, 3), DomainError);
  CHECK_NOTHROW(make_plan(100, 1, 2.0, 1.0, 2.0, 3));
  CHECK_THROWS_AS(make_plan(100, 2, 0.8, 2.0, 2.0, 3), DomainError);
  CHECK_THROWS_AS(make_plan(20, 1, 1.5, kInf, kInf, 3, 3.0), DomainError);
}

TEST_CASE("fit exact cases") {
  auto pl = make_plan(200, 1, 1.5, kInf, kInf, 3);
  auto zero = fit_coefficients([](std::span<const double>) { return 0.0; }, pl);
  for (auto& t : zero.terms) CHECK(t.alpha == 0.0);
  CHECK(zero.quasi_norm == 0.0);

  BSplineIndex target{pl.H, {3}, 3};
  auto one = fit_coefficients([&](std::span<const double> x) { return eval_tensor_bspline(target, x); }, pl);
  CHECK(one.rank == one.terms.size());
  for (auto& t : one.terms) CHECK(std::abs(t.alpha - (t.index == target ? 1.0 : 0.0)) <= 1e-8);
  CHECK(one.residual_rms <= 1e-8);

  auto pl2 = make_plan(400, 2, 0.8, kInf, kInf, 2);
  BSplineIndex t2{pl2.H, {1, 2}, 2};
  auto two = fit_coefficients([&](std::span<const double> x) { return eval_tensor_bspline(t2, x); }, pl2);
  for (auto& t : two.terms) CHECK(std::abs(t.alpha - (t.index == t2 ? 1.0 : 0.0)) <= 1e-8);

  // anything in the span comes back
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  auto lv = pl.level(pl.H);
  std::vector<double> c(lv.size());
  for (auto& v : c) v = g(rng);
  auto rnd = fit_coefficients(
      [&](std::span<const double> x) {
        double s = 0;
        for (std::size_t i = 0; i < lv.size(); ++i) s += c[i] * eval_tensor_bspline(lv[i], x);
        return s;
      },
      pl);
  CHECK(rnd.residual_rms <= 1e-8);
  CHECK(rnd.sup_error <= 1e-8);

  FitOptions tight;
  tight.cap_constant = 1e-3;
  CHECK_THROWS_AS(fit_coefficients([](std::span<const double> x) { return x[0]; }, pl, tight), DomainError);
}

TEST_CASE("fine-scale tail") {
  auto pl = make_plan(200, 1, 2.0, 2.0, 2.0, 3);
  REQUIRE(!pl.n_k.empty());
  auto f = fit_coefficients([](std::span<const double> x) { return std::abs(x[0] - 0.37); }, pl);
  CHECK(f.terms.size() == pl.level(pl.H).size() + std::accumulate(pl.n_k.begin(), pl.n_k.end(), std::size_t{0}));
  CHECK(f.rank == f.terms.size());
  bool has_fine = false;
  for (auto& t : f.terms) has_fine |= t.index.k > pl.H;
  CHECK(has_fine);
}

TEST_CASE("convergence trend") {
  const double pi = std::acos(-1.0);
  std::vector<double> logN, logE;
  for (std::size_t N : {64, 256, 1024}) {
    auto pl = make_plan(N, 1, 2.0, 2.0, 2.0, 3);
    auto f = fit_coefficients([&](std::span<const double> x) { return std::sin(2 * pi * x[0]); }, pl);
    logN.push_back(std::log(static_cast<double>(N)));
    logE.push_back(std::log(f.sup_error));
  }
  double mx = (logN[0] + logN[1] + logN[2]) / 3, my = (logE[0] + logE[1] + logE[2]) / 3, sxy = 0, sxx = 0;
  for (int i = 0; i < 3; ++i) {
    sxy += (logN[i] - mx) * (logE[i] - my);
    sxx += (logN[i] - mx) * (logN[i] - mx);
  }
  MESSAGE("slope " << sxy / sxx);
  CHECK(sxy / sxx <= -2.0 * 0.7);
  CHECK(logE[1] < logE[0]);
  CHECK(logE[2] < logE[1]);
}

TEST_CASE("evaluation and quasi-norm") {
  SplineApproximant empty;
  CHECK(eval_approximant(empty, std::vector<double>{0.3}) == 0.0);
  CHECK(quasi_norm(empty, 2, 2, 2) == 0.0);
  SplineApproximant one;
  one.m = 1;
  one.terms.push_back({{1, {0}, 1}, 2.0});
  CHECK(eval_approximant(one, std::vector<double>{0.5}) == 2.0);
  CHECK(quasi_norm(one, 2.0, 2.0, 3.0) == doctest::Approx(2.0 * std::exp2(1 * (2.0 - 0.5))));
  SplineApproximant two;
  two.m = 1;
  two.terms = {{{0, {0}, 1}, -3.0}, {{2, {1}, 1}, 0.5}, {{2, {2}, 1}, -1.0}};
  CHECK(quasi_norm(two, 1.0, kInf, kInf) == doctest::Approx(std::max(3.0, 4.0 * 1.0)));
  // random approximant vs independent summation
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  SplineApproximant r;
  r.d = 2;
  r.m = 2;
  SparseGridPlan pl;
  pl.d = 2;
  pl.m = 2;
  for (auto& idx : pl.level(2)) r.terms.push_back({idx, u(rng) - 0.5});
  for (int n = 0; n < 50; ++n) {
    std::vector<double> x{u(rng), u(rng)};
    double s = 0;
    for (auto it = r.terms.rbegin(); it != r.terms.rend(); ++it)
      s += it->alpha * psi_power(2, 4 * x[0] - it->index.j[0]) * psi_power(2, 4 * x[1] - it->index.j[1]);
    CHECK(std::abs(eval_approximant(r, x) - s) <= 1e-12);
  }
  auto js = to_json(two);
  CHECK(js["terms"].size() == 3);
}
