#pragma once
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "besovnet/bspline.hpp"
#include "besovnet/calculus.hpp"
#include "besovnet/manifold.hpp"
#include "besovnet/network.hpp"

namespace besovnet {

// ---- gadgets ----

// squaring stages needed so that C^2 * 4^-(m+1) < eta
int multiplication_stages(double C_bound, double eta);
MlpNetwork build_multiplication_mlp(double C_bound, double eta);
// two-row input (x, y)
CnnNetwork build_multiplication_net(double C_bound, double eta);

MlpNetwork build_squared_distance_mlp(std::span<const double> centre, double B, double theta);
CnnNetwork build_squared_distance_net(std::span<const double> centre, double B, double theta, std::size_t K);

struct IndicatorShape {
  double T = 0;      // omega^2 - 4 B^2 D theta
  int steps = 0;     // k
  double scale = 0;  // 1/T, nudged so that fl(T * scale) >= 1
  double one_below() const { return (1.0 - std::ldexp(1.0, -steps)) * T; }
};
IndicatorShape indicator_shape(double omega, double Delta, double theta, double B, std::size_t D);
MlpNetwork build_indicator_mlp(double omega, double Delta, double theta, double B, std::size_t D);
CnnNetwork build_indicator_net(double omega, double Delta, double theta, double B, std::size_t D);

// one coordinate of the chart map, realized exactly
CnnNetwork build_chart_projection_cnn(const Chart& chart, std::size_t coord, std::size_t K);

// psi_m about its centre as a signed sum of truncated powers, error <= err
struct SplineFactorPlan {
  double W = 0;  // half support (m+1)/2
  std::vector<double> coeffs;
  int stages = 0;  // squarer stages per product
};
SplineFactorPlan spline_factor_plan(int m, double err);
CnnEnvelope bspline_envelope(const BSplineIndex& idx, double eps1, std::size_t K, double C = 1.0);
MlpNetwork build_bspline_mlp(const BSplineIndex& idx, double eps1);
// K is the filter size used for d >= 2 (2 <= K <= d); ignored for d = 1
CnnNetwork build_bspline_cnn(const BSplineIndex& idx, double eps1, std::size_t K, double C = 1.0);

// ---- tolerances ----

struct ToleranceBudget {
  double eps = 0, delta = 0, eta = 0, Delta = 0, theta = 0;
  std::size_t N = 0, C_M = 0;
  double C = 1, c = 1, c0 = 1;  // spline constant, collar Lipschitz constant, target norm proxy
  double omega = 0, tau = 0, B = 0;
  std::size_t D = 0, d = 0;
  double s = 0;
  double collar_budget() const;  // c (pi + 1) Delta / (omega (1 - omega / tau))
  nlohmann::json to_json() const;
};

ToleranceBudget choose_tolerances(double eps, std::size_t C_M, double omega, double tau, double B, std::size_t D,
                                  std::size_t d, double s, double C = 1.0, double c = 1.0, double c0 = 1.0);

// ---- assembly ----

struct ChartComponents {
  std::vector<CnnNetwork> projection;  // one per chart coordinate
  CnnNetwork gate;                     // indicator of the squared distance
  std::optional<ConvStack> projection_stack;  // d >= 2
};

ChartComponents build_chart_components(const Chart& chart, const ToleranceBudget& tb, std::size_t K);

// alpha * x~(spline(phi(x)), gate(x)), rescaled by a power of two so conv parameters stay <= kappa1_target
CnnNetwork assemble_chart_unit(const ChartComponents& parts, const CnnNetwork& spline, double alpha, double eta_unit,
                               double mult_bound, double kappa1_target);

struct BuildOptions {
  double eps = 0.1;
  std::size_t K = 2;
  std::optional<double> omega;      // default min(0.4 tau, 0.9 B)
  double C = 1.0;                   // spline approximation constant
  std::optional<double> c;          // collar constant; default measured Lipschitz constant
  std::optional<double> c1;         // sparse-grid constant; default fits the budget
  std::optional<double> lambda;     // tail-count constant; default the largest that fits
  double cap_constant = 16.0;
  std::string kappa1_rule = "unit";  // "unit" or "bfijcnn"
  double C_prime = 1.0;             // scale inside the "bfijcnn" rule
  std::uint64_t seed = 0;
  std::size_t samples = 10000;
  std::size_t collar_samples = 24;  // per chart
  bool strict = true;               // throw on the first failed stage
};

struct StageCheck {
  std::string name;
  double measured = 0, budget = 0;
  bool pass = true;
};

struct ChartLedger {
  std::size_t chart = 0, terms = 0;
  double A1 = 0, A2 = 0, A3 = 0;
  double spline_fit = 0, spline_cnn = 0, lipschitz = 0, norm = 0;  // norm: H^2 estimate of the chart function
  double S = 0, eps1 = 0;  // max overlapping |alpha| sum, per-spline CNN tolerance
};

struct VerificationReport {
  ToleranceBudget budget;
  std::vector<ChartLedger> charts;
  std::vector<StageCheck> stages;
  SizeAudit audit;
  std::size_t blocks = 0;
  std::size_t samples = 0;
  double sup_error = 0;        // final network vs target on the manifold
  double ledger_total = 0;     // sum over charts of A1 + A2 + A3
  double structural_dev = 0;   // resnet vs sum of units
  double locality_dev = 0;     // largest unit output outside its chart
  double channels_formula_a = 0, channels_formula_b = 0;
  double seconds = 0;
  bool pass() const;
  std::string first_failure() const;
  nlohmann::json to_json() const;
};

struct Theorem1Result {
  ConvResNet network;
  VerificationReport report;
  Atlas atlas;
};

Theorem1Result build_theorem1_network(const TargetFunction& target, const SyntheticManifold& M,
                                      const BuildOptions& opt);

}  // namespace besovnet
