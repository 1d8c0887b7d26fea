// One line per acceptance criterion; exit status 0 iff all pass.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "besovnet/approx.hpp"
#include "besovnet/bspline.hpp"
#include "besovnet/classifier.hpp"
#include "besovnet/rng.hpp"
#include "besovnet/suites.hpp"

using namespace besovnet;

namespace {

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail, double secs) {
  std::printf("criterion %2d %s  %s: %s [%.1fs]\n", id, pass ? "PASS" : "FAIL", what.c_str(), detail.c_str(), secs);
  std::fflush(stdout);
  failures += !pass;
}

std::string g(double v) {
  char b[64];
  std::snprintf(b, sizeof b, "%.4g", v);
  return b;
}

void suite_criterion(int id, const std::string& what, const SuiteResult& r, double limit = INFINITY) {
  std::string detail;
  for (const auto& row : r.rows)
    if (row.tolerance > 0 || !row.pass) {
      if (!detail.empty()) detail += "; ";
      detail += row.check + " " + g(row.measured) + "/" + g(row.tolerance);
    }
  if (detail.empty()) detail = std::to_string(r.rows.size()) + " exact checks";
  const bool fast = r.seconds < limit;
  if (!fast) detail += "; runtime over " + g(limit) + "s";
  report(id, r.pass() && fast, what, r.pass() ? detail : "failed " + r.first_failure() + "; " + detail, r.seconds);
}

// covering bound written out directly, long double, no shared code
long double covering_oracle(const CoveringInputs& in) {
  using L = long double;
  auto softplus = [](L x) { return x > 30 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  const L M = in.M, Ld = in.L, K = in.K, D = in.D, k1 = in.kappa1, k2 = in.kappa2;
  const L lam2 = M * Ld * (16 * D * D * K + 4 * D) + 4 * D * D + 1;
  const L log_rho = Ld * std::log(4 * D * K * k1);
  const L log_rho_plus = Ld * std::max<L>(0, std::log(4 * D * K * k1));
  const L log_rt = M * softplus(log_rho);
  const L log_rtp = softplus(std::log(M * Ld) + log_rho_plus);
  const L log_lam1 = std::log(8 * M + 12) + 2 * std::log(D) + std::max<L>(0, std::log(k2)) +
                     std::max<L>(0, std::log(k1)) + log_rt + log_rtp;
  const L kappa = std::max(k1, k2);
  return lam2 * (std::log(2 * kappa) + log_lam1 - std::log(static_cast<L>(in.delta)));
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

int main() {
  const std::uint64_t seed = 20241019;
  const double pi = std::numbers::pi;

  suite_criterion(1, "calculus exactness", run_calculus_suite(seed, {20, 100, 16, 6, 8}), 120.0);
  suite_criterion(2, "approximate multiplication", run_multiplication_suite(seed));
  suite_criterion(3, "b-spline networks", run_bspline_suite(seed));
  suite_criterion(4, "distance and indicator on the circle", run_indicator_suite(seed, 10000));

  {
    const auto t0 = Clock::now();
    const auto M = make_manifold(ManifoldKind::circle, 3);
    const auto f = make_target(M, "trig", {{"amplitude", 1.0}, {"frequency", 1.0}}, seed);
    bool ok = f.s == 2;
    std::string detail;
    std::vector<double> blocks;
    for (double eps : {0.2, 0.1, 0.05}) {
      BuildOptions o;
      o.eps = eps;
      o.seed = seed;
      o.samples = 10000;
      o.strict = false;
      const auto r = build_theorem1_network(f, M, o);
      const bool pass = r.report.pass() && r.report.sup_error <= eps && r.report.samples >= 10000;
      ok = ok && pass;
      blocks.push_back(static_cast<double>(r.report.blocks));
      detail += "eps " + g(eps) + " sup " + g(r.report.sup_error) + " M " + std::to_string(r.report.blocks) +
                (pass ? "" : " (" + r.report.first_failure() + ")") + "; ";
    }
    // (eps ratio)^(-d/s) with d = 1, s = 2
    const double expect = std::pow(0.5, -0.5);
    for (std::size_t i = 1; i < blocks.size(); ++i) {
      const double ratio = blocks[i] / blocks[i - 1];
      ok = ok && ratio >= expect / 2 && ratio <= expect * 2;
      detail += "ratio " + g(ratio) + (i + 1 < blocks.size() ? ", " : "");
    }
    detail += " vs " + g(expect) + " within x2";
    const double secs = since(t0);
    ok = ok && secs <= 600;
    report(5, ok, "end to end on the circle", detail, secs);
  }

  {
    const auto t0 = Clock::now();
    std::vector<double> logN, logE;
    std::string detail;
    for (std::size_t N : {64, 256, 1024}) {
      const auto plan = make_plan(N, 1, 2.0, 2.0, 2.0, 3);
      const auto fit = fit_coefficients([&](std::span<const double> x) { return std::sin(2 * pi * x[0]); }, plan);
      logN.push_back(std::log(static_cast<double>(N)));
      logE.push_back(std::log(fit.sup_error));
      detail += "N " + std::to_string(N) + " err " + g(fit.sup_error) + "; ";
    }
    const double mx = (logN[0] + logN[1] + logN[2]) / 3, my = (logE[0] + logE[1] + logE[2]) / 3;
    double sxy = 0, sxx = 0;
    for (int i = 0; i < 3; ++i) {
      sxy += (logN[i] - mx) * (logE[i] - my);
      sxx += (logN[i] - mx) * (logN[i] - mx);
    }
    const double slope = sxy / sxx;
    report(6, slope <= -2.0 * 0.7, "b-spline convergence", detail + "slope " + g(slope) + " <= -1.4", since(t0));
  }

  suite_criterion(7, "reverse mode vs central differences", run_gradient_suite(seed, 20));

  const auto Mc = make_manifold(ManifoldKind::circle, 2);
  const auto eta = make_target(Mc, "trig", {{"amplitude", 0.4}, {"offset", 0.5}, {"phase", pi / 2}}, seed);
  const LabelModel model = make_label_model(Mc, eta);
  const double F = 2.0, eps = 1e-2;
  std::optional<ClassifierResult> cls;
  {
    const auto t0 = Clock::now();
    BuildOptions o;
    o.seed = seed;
    o.samples = 10000;
    cls = build_classifier_network(model, F, eps, o, false);
    const auto& c = cls->certificate;
    const bool ok = c.pass() && c.samples >= 10000 && c.sup_error <= 4 * std::exp(F) * eps && c.output_max <= F;
    report(8, ok, "classifier certificate",
           "sup " + g(c.sup_error) + " <= " + g(4 * std::exp(F) * eps) + ", max|f| " + g(c.output_max) + " <= " + g(F) +
               ", samples " + std::to_string(c.samples) + ", sign violations " + std::to_string(c.sign_violations) +
               ", dominating " + c.dominating_stage(),
           since(t0));
  }

  {
    const auto t0 = Clock::now();
    const double l2 = covering_bound({1, 1, 1, 1, 1, 1, 2, 1}).Lambda2;
    bool ok = l2 == 89;
    double worst = 0;
    std::size_t nonmono = 0;
    std::mt19937_64 rng(seed);
    auto lu = [&](double lo, double hi) { return std::exp(std::uniform_real_distribution<double>(std::log(lo), std::log(hi))(rng)); };
    for (int t = 0; t < 100; ++t) {
      CoveringInputs in{std::round(lu(1, 1e3)), std::round(lu(1, 50)), std::round(lu(1, 64)), std::round(lu(1, 8)),
                        lu(1, 1e3),          lu(1, 1e3),           std::round(lu(1, 64)), lu(1e-6, 1)};
      const double got = covering_bound(in).log_bound;
      const long double want = covering_oracle(in);
      worst = std::max(worst, static_cast<double>(std::abs((got - want) / want)));
      for (int arg = 0; arg < 7; ++arg) {
        CoveringInputs up = in;
        double* f[] = {&up.M, &up.L, &up.J, &up.K, &up.kappa1, &up.kappa2, &up.D};
        *f[arg] = *f[arg] * 1.5 + 1;
        nonmono += covering_bound(up).log_bound < got;
      }
    }
    ok = ok && worst <= 1e-12 && nonmono == 0;
    report(9, ok, "covering calculator",
           "Lambda2 " + g(l2) + ", oracle rel err " + g(worst) + " over 100 tuples, monotonicity violations " +
               std::to_string(nonmono),
           since(t0));
  }

  {
    const auto t0 = Clock::now();
    std::string detail;
    std::vector<double> medians;
    for (std::size_t n : {500, 2000, 8000}) {
      std::vector<double> ex;
      for (std::uint64_t s = 0; s < 5; ++s) {
        const auto train = model.draw(n, derive_seed(seed, "acceptance-erm", n * 100 + s));
        SgdConfig cfg;
        cfg.seed = derive_seed(seed, "acceptance-sgd", n * 100 + s);
        ex.push_back(train_erm(model, {}, train, cfg, 100000).test.excess);
      }
      medians.push_back(median(ex));
      detail += "n " + std::to_string(n) + " median " + g(medians.back()) + "; ";
    }
    bool ok = medians[1] < medians[0] && medians[2] < medians[1];
    const auto risk = estimate_excess_risk(
        model, [&](std::span<const double> x) { return eval_resnet_batch(cls->network, x); }, 20000,
        derive_seed(seed, "acceptance-risk"));
    const double bound = 4 * std::exp(F) * eps + 8 * F * std::exp(-F) + 3 * risk.se;
    ok = ok && risk.excess <= bound;
    detail += "constructed " + g(risk.excess) + " <= " + g(bound);
    const double secs = since(t0);
    ok = ok && secs <= 1200;
    report(10, ok, "erm trend and constructed classifier risk", detail, secs);
  }

  std::printf("%s: %d of 10 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
