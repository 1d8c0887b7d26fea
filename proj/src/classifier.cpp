#include "besovnet/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "besovnet/autodiff.hpp"
#include "besovnet/calculus.hpp"
#include "besovnet/error.hpp"
#include "besovnet/parallel.hpp"
#include "besovnet/rng.hpp"

namespace besovnet {

double logistic_loss(double z) { return z >= 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z)); }

double logistic_loss_derivative(double z) {
  if (z >= 0) {
    double e = std::exp(-z);
    return -e / (1 + e);
  }
  return -1 / (1 + std::exp(z));
}

double empirical_risk(const ScalarField& f, const LabeledSample& s) {
  if (s.size() == 0) throw DomainError("empirical risk of an empty sample");
  double acc = 0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += logistic_loss(s.y[i] * f(s.point(i)));
  return acc / static_cast<double>(s.size());
}

double empirical_risk(std::span<const double> outputs, const LabeledSample& s) {
  if (outputs.size() != s.size()) throw ShapeError("one output per labelled point expected");
  if (s.size() == 0) throw DomainError("empirical risk of an empty sample");
  double acc = 0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += logistic_loss(s.y[i] * outputs[i]);
  return acc / static_cast<double>(s.size());
}

LabeledSample LabelModel::draw(std::size_t n, std::uint64_t seed) const {
  LabeledSample s;
  s.D = manifold.D;
  for (const auto& p : sample(manifold, n, derive_seed(seed, "label-x"))) s.x.insert(s.x.end(), p.begin(), p.end());
  auto rng = make_stream(seed, "label-y");
  std::uniform_real_distribution<double> U(0.0, 1.0);
  s.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.y[i] = U(rng) < eta(s.point(i)) ? 1 : -1;
  return s;
}

double LabelModel::log_odds(std::span<const double> x) const {
  const double e = eta(x);
  return std::log(e) - std::log1p(-e);
}

LabelModel make_label_model(const SyntheticManifold& M, TargetFunction eta) {
  for (const auto& p : sample(M, 2000, 0)) {
    const double v = eta(p);
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("eta takes the value " + std::to_string(v) + " outside [0,1]");
  }
  return {M, std::move(eta)};
}

double truncated_log_odds(double eta, double F) {
  if (eta <= 0) return -F;
  if (eta >= 1) return F;
  return std::clamp(std::log(eta) - std::log1p(-eta), -F, F);
}

double default_truncation(std::size_t n, double s, std::size_t d) {
  if (n < 2 || !(s > 0)) throw DomainError("truncation level needs n >= 2 and s > 0");
  const double dd = static_cast<double>(d);
  return s / (2 * s + 2 * std::max(s, dd)) * std::log(static_cast<double>(n));
}

namespace {

// half-width of the probability clip: e^F/(1+e^F) - 1/2
double gate_halfwidth(double F) { return 0.5 * std::tanh(0.5 * F); }

void require_level(double F) {
  if (!(F > 0) || !std::isfinite(F)) throw DomainError("truncation level F must be positive");
}

}  // namespace

MlpNetwork build_gate_gn(double F) {
  require_level(F);
  const double a = gate_halfwidth(F);
  // w = z - 1/2 in +/- form, then relu(-relu(a - w) + 2a) - a, then + 1/2; saturates exactly and is idempotent
  std::vector<DenseLayer> ls{
      {2, 1, {1, -1}, {-0.5, 0.5}},
      {1, 2, {-1, 1}, {a}},
      {1, 1, {-1}, {2 * a}},
      {2, 1, {1, -1}, {-a, a}},
      {1, 2, {1, -1}, {0.5}},
  };
  return MlpNetwork(std::move(ls), {5, 2, 1.0, 0.5 + a}, {"gate_gn", {{"F", F}}});
}

MlpNetwork build_gate_gFn(double F) {
  require_level(F);
  std::vector<DenseLayer> ls{{1, 1, {-1}, {F}}, {1, 1, {-1}, {2 * F}}, {1, 1, {1}, {-F}}};
  return MlpNetwork(std::move(ls), {3, 1, std::max(1.0, 2 * F), F}, {"gate_gFn", {{"F", F}}});
}

LogOddsPlan logodds_plan(double F, double eps2) {
  require_level(F);
  if (!(eps2 > 0 && eps2 < 1)) throw DomainError("log-odds tolerance must lie in (0,1)");
  LogOddsPlan p;
  const double a = gate_halfwidth(F);
  p.lo = 0.5 - a;
  p.hi = 0.5 + a;
  p.curvature = std::abs(2 * p.lo - 1) / (p.lo * p.lo * (1 - p.lo) * (1 - p.lo));
  const double h = std::sqrt(8 * eps2 / p.curvature);
  const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((p.hi - p.lo) / h)));
  for (std::size_t l = 0; l <= n; ++l) {
    const double t = l == n ? p.hi : p.lo + (p.hi - p.lo) * static_cast<double>(l) / static_cast<double>(n);
    p.knots.push_back(t);
    p.values.push_back(truncated_log_odds(t, F));
  }
  return p;
}

MlpNetwork build_logodds_net(double F, double eps2) {
  const LogOddsPlan p = logodds_plan(F, eps2);
  const std::size_t n = p.knots.size() - 1;
  DenseLayer hidden{n, 1, std::vector<double>(n, 1.0), std::vector<double>(n)};
  DenseLayer out{1, n, std::vector<double>(n), {p.values[0]}};
  double prev = 0, mag = std::max(1.0, std::abs(p.values[0]));
  for (std::size_t l = 0; l < n; ++l) {
    hidden.bias[l] = -p.knots[l];
    const double slope = (p.values[l + 1] - p.values[l]) / (p.knots[l + 1] - p.knots[l]);
    out.weights[l] = slope - prev;
    prev = slope;
    mag = std::max({mag, std::abs(out.weights[l]), p.knots[l]});
  }
  return MlpNetwork({hidden, out}, {2, n, mag, std::nullopt}, {"logodds", {{"F", F}, {"eps2", eps2}, {"knots", n + 1}}});
}

// ---------------------------------------------------------------- constructed classifier

bool ClassifierCertificate::pass() const {
  return std::all_of(stages.begin(), stages.end(), [](const ClassifierStage& s) { return s.pass; }) && sign_violations == 0;
}

std::string ClassifierCertificate::dominating_stage() const {
  // the largest share of the final error among the stages feeding it
  std::string best;
  double worst = -1;
  for (const auto& s : stages)
    if (s.name != "total" && s.name != "output_bound" && s.budget > 0 && s.measured / s.budget > worst) {
      worst = s.measured / s.budget;
      best = s.name;
    }
  return best;
}

nlohmann::json ClassifierCertificate::to_json() const {
  nlohmann::json st = nlohmann::json::array();
  for (const auto& s : stages) st.push_back({{"name", s.name}, {"measured", s.measured}, {"budget", s.budget}, {"pass", s.pass}});
  return {{"F", F},
          {"eps", eps},
          {"eps2", eps2},
          {"bound", bound},
          {"sup_error", sup_error},
          {"output_max", output_max},
          {"samples", samples},
          {"sign_violations", sign_violations},
          {"stages", st},
          {"pass", pass()}};
}

ClassifierResult build_classifier_network(const LabelModel& model, double F, double eps, const BuildOptions& opt,
                                          bool strict) {
  require_level(F);
  if (!(4 * std::exp(F) * eps < 1)) throw DomainError("need 4 e^F eps < 1");
  const double lip = (1 + std::exp(F)) * (1 + std::exp(F)) / std::exp(F);
  const double eps2 = lip * eps;
  if (!(eps2 < 1)) throw DomainError("log-odds tolerance (1+e^F)^2/e^F eps must be below 1");

  BuildOptions o = opt;
  o.eps = eps;
  Theorem1Result eta = build_theorem1_network(model.eta, model.manifold, o);

  MlpNetwork gn = build_gate_gn(F), h = build_logodds_net(F, eps2), gF = build_gate_gFn(F);
  ConvResNet net = resnet_append_scalar_block(eta.network, gn, gn.provenance());
  net = resnet_append_scalar_block(net, h, h.provenance());
  net = resnet_append_scalar_block(net, gF, gF.provenance());

  ClassifierCertificate c;
  c.F = F;
  c.eps = eps;
  c.eps2 = eps2;
  c.bound = 4 * std::exp(F) * eps;

  auto pts = sample(model.manifold, std::max<std::size_t>(opt.samples, 10000), derive_seed(opt.seed, "classifier-verify"));
  std::vector<double> flat;
  for (const auto& p : pts) flat.insert(flat.end(), p.begin(), p.end());
  auto fv = eval_resnet_batch(net, flat);
  auto ev = eval_resnet_batch(eta.network, flat);
  c.samples = pts.size();
  double eta_err = 0;
  for (std::size_t n = 0; n < pts.size(); ++n) {
    const double e = model.eta(pts[n]);
    const double target = truncated_log_odds(e, F);
    const double err = std::abs(fv[n] - target);
    eta_err = std::max(eta_err, std::abs(ev[n] - e));
    c.sup_error = std::max(c.sup_error, err);
    c.output_max = std::max(c.output_max, std::abs(fv[n]));
    if (std::abs(target) > c.bound + err && (fv[n] > 0) != (target > 0)) ++c.sign_violations;
  }
  // log-odds interpolant on a grid over the clipped range
  const auto plan = logodds_plan(F, eps2);
  double h_err = 0;
  for (int n = 0; n <= 10000; ++n) {
    const double p = plan.lo + (plan.hi - plan.lo) * n / 10000.0;
    h_err = std::max(h_err, std::abs(eval_mlp(h, std::vector<double>{p})[0] - truncated_log_odds(p, F)));
  }
  auto stage = [&](std::string name, double m, double b) { c.stages.push_back({std::move(name), m, b, m <= b}); };
  stage("eta", eta_err, eps);
  stage("logodds", h_err, eps2);
  stage("total", c.sup_error, c.bound);
  stage("output_bound", c.output_max, F);
  if (strict && !c.pass())
    throw EnvelopeError("classifier certificate failed (sup error " + std::to_string(c.sup_error) + " vs " +
                        std::to_string(c.bound) + "); dominating stage: " + c.dominating_stage());
  return {std::move(net), std::move(c), std::move(eta.report)};
}

// ---------------------------------------------------------------- covering numbers

namespace {
// log(1 + e^t) without overflow
double softplus(double t) { return t > 30 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }
}  // namespace

nlohmann::json CoveringBound::to_json() const {
  return {{"Lambda2", Lambda2},          {"log_Lambda1", log_Lambda1},
          {"log_rho", log_rho},          {"log_rho_plus", log_rho_plus},
          {"log_rho_tilde", log_rho_tilde}, {"log_rho_tilde_plus", log_rho_tilde_plus},
          {"log_bound", log_bound}};
}

CoveringBound covering_bound(const CoveringInputs& in) {
  for (double v : {in.M, in.L, in.J, in.K, in.kappa1, in.kappa2, in.D, in.delta})
    if (!(v > 0) || !std::isfinite(v)) throw DomainError("covering inputs must be positive and finite");
  CoveringBound b;
  const double base = std::log(4 * in.D * in.K * in.kappa1);
  b.log_rho = in.L * base;
  b.log_rho_plus = in.L * std::max(0.0, base);
  b.log_rho_tilde = in.M * softplus(b.log_rho);
  b.log_rho_tilde_plus = softplus(std::log(in.M * in.L) + b.log_rho_plus);
  b.log_Lambda1 = std::log(8 * in.M + 12) + 2 * std::log(in.D) + std::max(0.0, std::log(in.kappa2)) +
                  std::max(0.0, std::log(in.kappa1)) + b.log_rho_tilde + b.log_rho_tilde_plus;
  b.Lambda2 = in.M * in.L * (16 * in.D * in.D * in.K + 4 * in.D) + 4 * in.D * in.D + 1;
  const double kappa = std::max(in.kappa1, in.kappa2);
  b.log_bound = b.Lambda2 * (std::log(2 * kappa) + b.log_Lambda1 - std::log(in.delta));
  return b;
}

// ---------------------------------------------------------------- risk and training

RiskEstimate estimate_excess_risk(const LabelModel& model,
                                  const std::function<std::vector<double>(std::span<const double>)>& f,
                                  std::size_t points, std::uint64_t seed) {
  if (points < 2) throw DomainError("need at least two Monte Carlo points");
  auto pts = sample(model.manifold, points, derive_seed(seed, "risk-mc"));
  std::vector<double> flat;
  for (const auto& p : pts) flat.insert(flat.end(), p.begin(), p.end());
  auto fv = f(flat);
  if (fv.size() != points) throw ShapeError("risk: one output per point expected");
  RiskEstimate r;
  r.points = points;
  double s = 0, s2 = 0, rs = 0, bs = 0;
  for (std::size_t n = 0; n < points; ++n) {
    const double e = model.eta(pts[n]);
    const double fs = std::log(e) - std::log1p(-e);
    const double risk = e * logistic_loss(fv[n]) + (1 - e) * logistic_loss(-fv[n]);
    const double bayes = e * logistic_loss(fs) + (1 - e) * logistic_loss(-fs);
    rs += risk;
    bs += bayes;
    s += risk - bayes;
    s2 += (risk - bayes) * (risk - bayes);
  }
  const double n = static_cast<double>(points);
  r.risk = rs / n;
  r.bayes_risk = bs / n;
  r.excess = s / n;
  r.se = std::sqrt(std::max(0.0, s2 / n - r.excess * r.excess) / (n - 1));
  return r;
}

nlohmann::json ErmResult::to_json() const {
  return {{"train_risk", train_risk},
          {"test_risk", test.risk},
          {"bayes_risk", test.bayes_risk},
          {"excess_risk", test.excess},
          {"excess_se", test.se},
          {"test_points", test.points},
          {"weight_max", weight_max},
          {"epoch_risk", epoch_risk}};
}

namespace {

struct ErmParams {
  ParameterSet set;
  std::vector<ParamId> filters, biases;
  ParamId readout_w{0}, readout_b{0};
};

ErmParams init_params(const ArchitectureTemplate& a, std::size_t D, std::uint64_t seed) {
  if (a.layers < 1 || a.channels < 1 || a.K < 1 || a.K > D) throw DomainError("architecture needs layers, channels >= 1 and 1 <= K <= D");
  ErmParams p;
  auto rng = make_stream(seed, "erm-init");
  std::size_t cin = 1;
  for (std::size_t l = 0; l < a.layers; ++l) {
    const double s = a.init_scale * std::sqrt(6.0 / static_cast<double>(a.K * cin));
    std::uniform_real_distribution<double> U(-s, s);
    std::vector<double> w(a.channels * a.K * cin);
    for (auto& v : w) v = U(rng);
    p.filters.push_back(p.set.add("filter" + std::to_string(l), {a.channels, a.K, cin}, std::move(w)));
    p.biases.push_back(p.set.add("bias" + std::to_string(l), {D, a.channels}, std::vector<double>(D * a.channels, 0.0)));
    cin = a.channels;
  }
  const double s = a.init_scale / std::sqrt(static_cast<double>(a.channels));
  std::uniform_real_distribution<double> U(-s, s);
  std::vector<double> w(D * a.channels, 0.0);
  for (std::size_t c = 0; c < a.channels; ++c) w[c] = U(rng);  // first row only
  p.readout_w = p.set.add("readout", {D, a.channels}, std::move(w));
  p.readout_b = p.set.add("readout_bias", {1}, {0.0});
  return p;
}

NodeId forward(Tape& t, NodeId z, const ErmParams& p, double F) {
  for (std::size_t l = 0; l < p.filters.size(); ++l) z = t.relu(t.add_bias(t.conv(p.filters[l], z), p.biases[l]));
  NodeId y = t.readout(p.readout_w, p.readout_b, z);
  // output clip to [-F, F]
  NodeId u = t.relu(t.affine(y, -1.0, F));
  NodeId v = t.relu(t.affine(u, -1.0, 2 * F));
  return t.affine(v, 1.0, -F);
}

CnnNetwork to_cnn(const ErmParams& p, std::size_t D, const ArchitectureTemplate& a) {
  std::vector<ConvLayer> layers;
  double mag = 0;
  for (std::size_t l = 0; l < p.filters.size(); ++l) {
    const auto& sh = p.set.shape(p.filters[l]);
    auto w = p.set.values(p.filters[l]);
    auto b = p.set.values(p.biases[l]);
    for (double v : w) mag = std::max(mag, std::abs(v));
    for (double v : b) mag = std::max(mag, std::abs(v));
    layers.push_back({ConvFilter::dense(sh[0], sh[1], sh[2], w),
                      BiasMatrix(FeatureMap(D, a.channels, std::vector<double>(b.begin(), b.end())))});
  }
  auto rw = p.set.values(p.readout_w);
  FeatureMap ro(D, a.channels, std::vector<double>(rw.begin(), rw.end()));
  const double rb = p.set.values(p.readout_b)[0];
  const double rmag = std::max(ro.norm_inf(), std::abs(rb));
  return CnnNetwork(D, 1, std::move(layers), std::move(ro), rb, true,
                    {a.layers + 1, a.channels, a.K, std::max(mag, 1e-12), std::max(rmag, 1e-12)}, {{"erm", {}}});
}

}  // namespace

ErmResult train_erm(const LabelModel& model, const ArchitectureTemplate& arch, const LabeledSample& train,
                    const SgdConfig& cfg, std::size_t test_points) {
  const std::size_t D = train.D, n = train.size();
  if (n == 0) throw DomainError("empty training sample");
  if (cfg.batch == 0 || cfg.epochs == 0 || !(cfg.lr > 0)) throw DomainError("sgd needs batch, epochs and lr > 0");
  ErmParams p = init_params(arch, D, cfg.seed);
  const std::size_t quarter = std::max<std::size_t>(1, cfg.epochs / 4);
  std::vector<std::size_t> order(n);
  ErmResult res{cnn_sum_to_resnet(std::vector<CnnNetwork>{}, {1, 3, 1, 1.0, 1.0}), 0, {}, 0, {}};
  auto shuffle = make_stream(cfg.seed, "erm-shuffle");
  std::vector<double> flat_grad(p.set.total_size());
  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    const double lr = cfg.lr * std::pow(cfg.decay, static_cast<double>(ep / quarter));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle);
    double loss = 0;
    for (std::size_t b0 = 0; b0 < n; b0 += cfg.batch) {
      const std::size_t b1 = std::min(n, b0 + cfg.batch);
      std::fill(flat_grad.begin(), flat_grad.end(), 0.0);
      for (std::size_t q = b0; q < b1; ++q) {
        const std::size_t i = order[q];
        Tape t(p.set);
        NodeId out = forward(t, t.input(FeatureMap::column(train.point(i))), p, arch.F);
        const double f = t.value(out)(0, 0);
        const double yf = train.y[i] * f;
        loss += logistic_loss(yf);
        const double scale = logistic_loss_derivative(yf) * train.y[i];
        auto g = t.backward(out);
        std::size_t off = 0;
        for (const auto& blk : g) {
          for (double v : blk) flat_grad[off++] += scale * v;
        }
      }
      auto theta = p.set.flat();
      const double step = lr / static_cast<double>(b1 - b0);
      for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= step * flat_grad[k];
      p.set.set_flat(theta);
      // readout stays first-row-only
      auto rw = p.set.values(p.readout_w);
      std::fill(rw.begin() + static_cast<std::ptrdiff_t>(arch.channels), rw.end(), 0.0);
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss)) throw Error("training diverged at epoch " + std::to_string(ep) + " (loss is not finite)");
    res.epoch_risk.push_back(loss);
  }
  CnnNetwork cnn = to_cnn(p, D, arch);
  std::vector<CnnNetwork> one{cnn};
  ConvResNet net = cnn_sum_to_resnet(one, envelope_hull(one));
  MlpNetwork clip = build_gate_gFn(arch.F);
  res.network = resnet_append_scalar_block(net, clip, clip.provenance());
  res.weight_max = cnn.envelope().conv_bound;
  std::vector<double> outs = eval_resnet_batch(res.network, train.x);
  res.train_risk = empirical_risk(outs, train);
  res.test = estimate_excess_risk(
      model, [&](std::span<const double> x) { return eval_resnet_batch(res.network, x); }, test_points,
      derive_seed(cfg.seed, "erm-test"));
  return res;
}

}  // namespace besovnet
