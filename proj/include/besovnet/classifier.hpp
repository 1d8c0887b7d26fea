#pragma once
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <optional>
#include <span>
#include <vector>

#include "besovnet/approx.hpp"
#include "besovnet/manifold.hpp"
#include "besovnet/network.hpp"

namespace besovnet {

// phi(z) = log(1 + exp(-z))
double logistic_loss(double z);
// phi'(z) = -1 / (1 + exp(z))
double logistic_loss_derivative(double z);

struct LabeledSample {
  std::size_t D = 0;
  std::vector<double> x;  // n x D row-major
  std::vector<int> y;     // +1 / -1
  std::size_t size() const { return y.size(); }
  std::span<const double> point(std::size_t i) const { return {x.data() + i * D, D}; }
};

using ScalarField = std::function<double(std::span<const double>)>;
double empirical_risk(const ScalarField& f, const LabeledSample& s);
double empirical_risk(std::span<const double> outputs, const LabeledSample& s);

// P(y = 1 | x) = eta(x)
struct LabelModel {
  SyntheticManifold manifold;
  TargetFunction eta;
  LabeledSample draw(std::size_t n, std::uint64_t seed) const;
  // log(eta / (1 - eta)), unclipped
  double log_odds(std::span<const double> x) const;
};

// eta must take values in [0, 1]; checked on a sample
LabelModel make_label_model(const SyntheticManifold& M, TargetFunction eta);

// clamp(log(eta / (1 - eta)), -F, F)
double truncated_log_odds(double eta, double F);
// F_n = s / (2s + 2 max(s, d)) log n
double default_truncation(std::size_t n, double s, std::size_t d);

// clip to [1/(1+e^F), e^F/(1+e^F)]
MlpNetwork build_gate_gn(double F);
// clip to [-F, F]
MlpNetwork build_gate_gFn(double F);

struct LogOddsPlan {
  double lo = 0, hi = 0;  // clipped probability range
  std::vector<double> knots, values;
  double curvature = 0;  // max |logit''| on [lo, hi]
};
LogOddsPlan logodds_plan(double F, double eps2);
// piecewise-linear interpolant of the clipped log-odds on [lo, hi]
MlpNetwork build_logodds_net(double F, double eps2);

struct ClassifierStage {
  std::string name;
  double measured = 0, budget = 0;
  bool pass = true;
};

struct ClassifierCertificate {
  double F = 0, eps = 0, eps2 = 0;
  double bound = 0;           // 4 e^F eps
  double sup_error = 0;       // sup |f - f*_{phi,n}| over the samples
  double output_max = 0;      // sup |f|
  std::size_t samples = 0;
  std::size_t sign_violations = 0;
  std::vector<ClassifierStage> stages;
  bool pass() const;
  std::string dominating_stage() const;
  nlohmann::json to_json() const;
};

struct ClassifierResult {
  ConvResNet network;
  ClassifierCertificate certificate;
  VerificationReport eta_report;
};

// f = g_F o h~ o g_n o eta~, eta~ from the Theorem-1 builder at tolerance eps
ClassifierResult build_classifier_network(const LabelModel& model, double F, double eps, const BuildOptions& opt,
                                          bool strict = true);

struct CoveringInputs {
  double M = 1, L = 1, J = 1, K = 1, kappa1 = 1, kappa2 = 1, D = 1, delta = 1;
};

struct CoveringBound {
  double Lambda2 = 0;
  double log_Lambda1 = 0;
  double log_rho = 0, log_rho_plus = 0, log_rho_tilde = 0, log_rho_tilde_plus = 0;
  double log_bound = 0;  // Lambda2 log(2 kappa Lambda1 / delta)
  nlohmann::json to_json() const;
};

CoveringBound covering_bound(const CoveringInputs& in);

struct ArchitectureTemplate {
  std::size_t layers = 3;
  std::size_t channels = 8;
  std::size_t K = 2;
  double F = 2.0;  // output clip
  double init_scale = 1.0;
};

struct SgdConfig {
  std::size_t epochs = 50;
  std::size_t batch = 32;
  double lr = 1e-2;
  double decay = 0.5;  // applied every quarter of training
  std::uint64_t seed = 0;
};

struct RiskEstimate {
  double risk = 0, bayes_risk = 0, excess = 0, se = 0;
  std::size_t points = 0;
};

// Monte Carlo over fresh manifold samples, conditional on x (eta known)
RiskEstimate estimate_excess_risk(const LabelModel& model, const std::function<std::vector<double>(std::span<const double>)>& f,
                                  std::size_t points, std::uint64_t seed);

struct ErmResult {
  ConvResNet network;  // trained CNN as a one-block resnet followed by the output clip
  double train_risk = 0;
  RiskEstimate test;
  double weight_max = 0;
  std::vector<double> epoch_risk;
  nlohmann::json to_json() const;
};

ErmResult train_erm(const LabelModel& model, const ArchitectureTemplate& arch, const LabeledSample& train,
                    const SgdConfig& cfg, std::size_t test_points = 100000);

}  // namespace besovnet
