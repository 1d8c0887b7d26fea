#include "besovnet/approx.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>

#include "besovnet/error.hpp"
#include "besovnet/parallel.hpp"
#include "besovnet/rng.hpp"

namespace besovnet {

namespace {

// affine form over the units of the current layer
struct Lin {
  std::map<std::size_t, double> w;
  double b = 0;
};

Lin unit(std::size_t i, double c = 1.0) {
  Lin l;
  l.w[i] = c;
  return l;
}
Lin cst(double c) {
  Lin l;
  l.b = c;
  return l;
}
Lin operator+(Lin a, const Lin& b) {
  for (auto [i, v] : b.w) a.w[i] += v;
  a.b += b.b;
  return a;
}
Lin operator*(double s, Lin a) {
  for (auto& kv : a.w) kv.second *= s;
  a.b *= s;
  return a;
}
Lin operator-(Lin a, const Lin& b) { return a + (-1.0) * b; }

class Assembler {
 public:
  explicit Assembler(std::size_t in) : width_(in), in_(in) {}
  std::vector<Lin> inputs() const {
    std::vector<Lin> v;
    for (std::size_t i = 0; i < in_; ++i) v.push_back(unit(i));
    return v;
  }
  std::vector<Lin> relu(const std::vector<Lin>& pre) {
    layers_.push_back(dense(pre));
    width_ = pre.size();
    std::vector<Lin> v;
    for (std::size_t i = 0; i < width_; ++i) v.push_back(unit(i));
    return v;
  }
  MlpNetwork finish(const Lin& out, double bound, Provenance p) {
    layers_.push_back(dense({out}));
    std::size_t width = in_;
    double mag = 0;
    for (const auto& l : layers_) {
      width = std::max(width, l.out);
      for (double w : l.weights) mag = std::max(mag, std::abs(w));
      for (double b : l.bias) mag = std::max(mag, std::abs(b));
    }
    if (mag > bound * (1 + 1e-12))
      throw EnvelopeError(p.step + ": parameter " + std::to_string(mag) + " exceeds declared " + std::to_string(bound));
    return MlpNetwork(layers_, {layers_.size(), width, bound, std::nullopt}, std::move(p));
  }

 private:
  DenseLayer dense(const std::vector<Lin>& pre) const {
    DenseLayer L{pre.size(), width_, std::vector<double>(pre.size() * width_, 0.0), std::vector<double>(pre.size())};
    for (std::size_t r = 0; r < pre.size(); ++r) {
      for (auto [i, v] : pre[r].w) {
        if (i >= width_) throw ShapeError("affine form refers to a missing unit");
        L.weights[r * width_ + i] = v;
      }
      L.bias[r] = pre[r].b;
    }
    return L;
  }
  std::size_t width_, in_;
  std::vector<DenseLayer> layers_;
};

// one branch of the sawtooth squarer: t^2 ~ t - sum_s g_s(t) / 4^s for t in [0, 1]
struct Squarer {
  Lin g, acc;
};

std::vector<Lin> squarer_pre(const Squarer& q) { return {q.g, q.g - cst(0.5), q.acc}; }

Squarer squarer_post(const std::vector<Lin>& u, std::size_t base, int s, std::size_t stride = 1) {
  Squarer q;
  q.g = 2.0 * u[base] - 4.0 * u[base + stride];
  q.acc = u[base + 2 * stride] - std::ldexp(1.0, -2 * s) * q.g;
  return q;
}

struct MultState {
  Squarer a, b;
};

std::vector<Lin> mult_pre0(const Lin& x, const Lin& y, double C) {
  const double w = 1.0 / (2.0 * C);
  return {w * (x + y), (-w) * (x + y), w * (x - y), (-w) * (x - y)};
}

MultState mult_post0(const std::vector<Lin>& u, std::size_t base) {
  Lin a = u[base] + u[base + 1], b = u[base + 2] + u[base + 3];
  return {{a, a}, {b, b}};
}

// x*y = C^2 (a^2 - b^2) with a = |x+y|/2C, b = |x-y|/2C
Lin mult_out(const MultState& m, double C) { return (C * C) * (m.a.acc - m.b.acc); }

// multiplies each group pairwise until one value is left; all groups share a size so they run in lockstep.
// unpaired values ride along as (v+, v-)
std::vector<Lin> product_forest(Assembler& A, std::vector<std::vector<Lin>> groups, double C, int stages) {
  if (groups.empty()) return {};
  for (const auto& g : groups)
    if (g.size() != groups.front().size() || g.empty()) throw ShapeError("product groups must share a nonzero size");
  const std::size_t G = groups.size();
  while (groups.front().size() > 1) {
    const std::size_t n = groups.front().size(), pairs = n / 2;
    const bool odd = n % 2 == 1;
    const std::size_t per0 = 4 * pairs + (odd ? 2 : 0), per = 6 * pairs + (odd ? 2 : 0);
    std::vector<Lin> pre;
    for (const auto& vals : groups) {
      for (std::size_t p = 0; p < pairs; ++p) {
        auto q = mult_pre0(vals[2 * p], vals[2 * p + 1], C);
        pre.insert(pre.end(), q.begin(), q.end());
      }
      if (odd) {
        pre.push_back(vals.back());
        pre.push_back((-1.0) * vals.back());
      }
    }
    auto u = A.relu(pre);
    std::vector<std::vector<MultState>> st(G);
    std::vector<Lin> carry(G);
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t p = 0; p < pairs; ++p) st[g].push_back(mult_post0(u, g * per0 + 4 * p));
      if (odd) carry[g] = u[g * per0 + 4 * pairs] - u[g * per0 + 4 * pairs + 1];
    }
    for (int s = 1; s <= stages; ++s) {
      pre.clear();
      for (std::size_t g = 0; g < G; ++g) {
        for (const auto& m : st[g]) {
          // a and b units interleaved so a - b cancels term by term when they agree
          auto qa = squarer_pre(m.a), qb = squarer_pre(m.b);
          for (int t = 0; t < 3; ++t) {
            pre.push_back(qa[t]);
            pre.push_back(qb[t]);
          }
        }
        if (odd) {
          pre.push_back(carry[g]);
          pre.push_back((-1.0) * carry[g]);
        }
      }
      u = A.relu(pre);
      for (std::size_t g = 0; g < G; ++g) {
        const std::size_t base = g * per;
        for (std::size_t p = 0; p < pairs; ++p)
          st[g][p] = {squarer_post(u, base + 6 * p, s, 2), squarer_post(u, base + 6 * p + 1, s, 2)};
        if (odd) carry[g] = u[base + 6 * pairs] - u[base + 6 * pairs + 1];
      }
    }
    for (std::size_t g = 0; g < G; ++g) {
      std::vector<Lin> next;
      for (const auto& m : st[g]) next.push_back(mult_out(m, C));
      if (odd) next.push_back(carry[g]);
      groups[g] = std::move(next);
    }
  }
  std::vector<Lin> out;
  for (auto& g : groups) out.push_back(g.front());
  return out;
}

Lin product_tree(Assembler& A, std::vector<Lin> vals, double C, int stages) {
  return product_forest(A, {std::move(vals)}, C, stages).front();
}

int squaring_stages(double tol) {
  int m = 1;
  while (std::ldexp(1.0, -2 * m - 2) > tol) ++m;
  return m;
}

CnnNetwork scale_readout(const CnnNetwork& f, double alpha) {
  FeatureMap ro = f.readout_weights();
  for (double& v : ro.values()) v *= alpha;
  CnnEnvelope e = f.envelope();
  e.readout_bound *= std::max(1.0, std::abs(alpha));
  auto p = f.provenance();
  p.push_back({"scale_readout", {{"alpha", alpha}}});
  return CnnNetwork(f.input_rows(), f.input_channels(), f.layers(), std::move(ro), f.readout_bias() * alpha,
                    f.first_row_only(), e, std::move(p));
}

double sqdist(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

// ---------------------------------------------------------------- gadgets

int multiplication_stages(double C, double eta) {
  if (!(eta > 0 && eta < 1)) throw DomainError("multiplication tolerance must lie in (0,1)");
  if (!(C > 0)) throw DomainError("multiplication input bound must be positive");
  int m = 1;
  while (!(C * C * std::ldexp(1.0, -2 * m - 2) < eta)) ++m;
  return m;
}

MlpNetwork build_multiplication_mlp(double C, double eta) {
  const int m = multiplication_stages(C, eta);
  Assembler A(2);
  auto in = A.inputs();
  Lin out = product_tree(A, {in[0], in[1]}, C, m);
  return A.finish(out, std::max({C * C, 4.0, 1.0 / (2 * C)}),
                  {"multiplication", {{"C", C}, {"eta", eta}, {"stages", m}}});
}

CnnNetwork build_multiplication_net(double C, double eta) { return mlp_to_cnn(build_multiplication_mlp(C, eta), 2, 2); }

MlpNetwork build_squared_distance_mlp(std::span<const double> c, double B, double theta) {
  if (!(theta > 0 && theta < 1)) throw DomainError("distance tolerance must lie in (0,1)");
  if (!(B > 0)) throw DomainError("bound B must be positive");
  const std::size_t D = c.size();
  const int m = squaring_stages(theta);
  Assembler A(D);
  auto in = A.inputs();
  const double w = 1.0 / (2 * B);
  std::vector<Lin> pre;
  for (std::size_t j = 0; j < D; ++j) {
    Lin t = w * (in[j] - cst(c[j]));
    pre.push_back(t);
    pre.push_back((-1.0) * t);
  }
  auto u = A.relu(pre);
  std::vector<Squarer> sq;
  for (std::size_t j = 0; j < D; ++j) {
    Lin t = u[2 * j] + u[2 * j + 1];
    sq.push_back({t, t});
  }
  for (int s = 1; s <= m; ++s) {
    pre.clear();
    for (const auto& q : sq) {
      auto p = squarer_pre(q);
      pre.insert(pre.end(), p.begin(), p.end());
    }
    u = A.relu(pre);
    for (std::size_t j = 0; j < D; ++j) sq[j] = squarer_post(u, 3 * j, s);
  }
  Lin out;
  for (const auto& q : sq) out = out + (4 * B * B) * q.acc;
  double cmax = 0;
  for (double v : c) cmax = std::max(cmax, std::abs(v));
  return A.finish(out, std::max({4 * B * B, 4.0, w, cmax * w}),
                  {"squared_distance", {{"B", B}, {"theta", theta}, {"stages", m}, {"D", D}}});
}

CnnNetwork build_squared_distance_net(std::span<const double> c, double B, double theta, std::size_t K) {
  return mlp_to_cnn(build_squared_distance_mlp(c, B, theta), c.size(), K);
}

IndicatorShape indicator_shape(double omega, double Delta, double theta, double B, std::size_t D) {
  const double slack = 4 * B * B * static_cast<double>(D) * theta;
  if (!(theta > 0 && theta < 1)) throw DomainError("distance tolerance must lie in (0,1)");
  if (!(Delta > 2 * slack))
    throw DomainError("collar width " + std::to_string(Delta) + " must exceed 8 B^2 D theta = " + std::to_string(2 * slack));
  IndicatorShape sh;
  sh.T = omega * omega - slack;
  if (!(sh.T > 0)) throw DomainError("omega^2 must exceed 4 B^2 D theta");
  sh.steps = std::max(1, static_cast<int>(std::ceil(std::log2(sh.T / (Delta - 2 * slack)))));
  sh.scale = 1.0 / sh.T;
  while (sh.T * sh.scale < 1.0) sh.scale = std::nextafter(sh.scale, 2 * sh.scale);
  return sh;
}

MlpNetwork build_indicator_mlp(double omega, double Delta, double theta, double B, std::size_t D) {
  const IndicatorShape sh = indicator_shape(omega, Delta, theta, B, D);
  const double T = sh.T;
  Assembler A(1);
  Lin a = A.inputs()[0];
  // r tracks T - g_s with g_s = clamp(2 g_{s-1} - T, 0, T); saturated cases stay exact
  Lin v = A.relu({2.0 * a - cst(T)})[0];
  Lin r = A.relu({cst(T) - v})[0];
  for (int s = 2; s <= sh.steps; ++s) {
    v = A.relu({cst(T) - 2.0 * r})[0];
    r = A.relu({cst(T) - v})[0];
  }
  Lin w = A.relu({cst(1.0) - sh.scale * r})[0];
  return A.finish(cst(1.0) - w, std::max({2.0, T, sh.scale}),
                  {"indicator", {{"omega", omega}, {"Delta", Delta}, {"theta", theta}, {"steps", sh.steps}}});
}

CnnNetwork build_indicator_net(double omega, double Delta, double theta, double B, std::size_t D) {
  return mlp_to_cnn(build_indicator_mlp(omega, Delta, theta, B, D), 1, 1);
}

CnnNetwork build_chart_projection_cnn(const Chart& chart, std::size_t coord, std::size_t K) {
  const std::size_t D = chart.center.size();
  if (coord >= static_cast<std::size_t>(chart.V.cols())) throw ShapeError("chart coordinate out of range");
  if (K < 2 || K > D) throw DomainError("filter size " + std::to_string(K) + " outside [2, " + std::to_string(D) + "]");
  DenseLayer L{1, D, std::vector<double>(D), {chart.b[coord]}};
  double shift = 0;
  for (std::size_t i = 0; i < D; ++i) {
    L.weights[i] = chart.a * chart.V(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(coord));
    shift += L.weights[i] * chart.center[i];
  }
  L.bias[0] -= shift;
  double mag = std::abs(L.bias[0]);
  for (double w : L.weights) mag = std::max(mag, std::abs(w));
  MlpNetwork m({L}, {1, D, mag, std::nullopt}, {"chart_projection", {{"coord", coord}}});
  return mlp_to_cnn(m, D, K);
}

SplineFactorPlan spline_factor_plan(int m, double err) {
  if (m < 1) throw DomainError("spline networks need order m >= 1");
  if (!(err > 0 && err < 1)) throw DomainError("spline tolerance must lie in (0,1)");
  SplineFactorPlan p;
  p.W = (m + 1) / 2.0;
  // psi(W - r) = sum_{l < W} (-1)^l binom(m+1, l) / m! (W - r - l)_+^m, written in u = (.)_+ / W
  double binom = 1, fact = 1, total = 0;
  for (int i = 2; i <= m; ++i) fact *= i;
  for (int l = 0; l < p.W; ++l) {
    const double c = (l % 2 ? -1.0 : 1.0) * binom / fact * std::pow(p.W, m);
    p.coeffs.push_back(c);
    total += std::abs(c);
    binom = binom * (m + 1 - l) / (l + 1);
  }
  // m - 1 products per power, each within 2^{-2s-2}
  if (m >= 2) p.stages = multiplication_stages(1.0, err / (total * (m - 1)));
  return p;
}

CnnEnvelope bspline_envelope(const BSplineIndex& idx, double eps1, std::size_t K, double C) {
  const double d = static_cast<double>(idx.d()), m = idx.m;
  const double inner = std::ceil(std::log2(std::max(3.0, m) / (C * eps1)) + 5);
  const double L = 3 + 2 * inner * std::ceil(std::log2(std::max(d, m))) + d;
  const double J = 24 * d * m * (m + 2) + 8 * d;
  const double kappa = std::max(2 * std::pow(m + 1, m), std::ldexp(1.0, idx.k));
  return {static_cast<std::size_t>(L), static_cast<std::size_t>(J), idx.d() == 1 ? 1 : K, kappa, kappa};
}

MlpNetwork build_bspline_mlp(const BSplineIndex& idx, double eps1) {
  if (!(eps1 > 0 && eps1 < 1)) throw DomainError("spline tolerance must lie in (0,1)");
  const std::size_t d = idx.d();
  if (d < 1) throw ShapeError("spline index has no coordinates");
  const double factor_err = d == 1 ? eps1 : eps1 / (3.0 * d);
  const auto plan = spline_factor_plan(idx.m, factor_err);
  Assembler A(d);
  auto in = A.inputs();
  std::vector<Lin> pre;
  const double half_scale = std::ldexp(1.0, idx.k - 1);
  for (std::size_t i = 0; i < d; ++i) {
    // |2^k x - j - W| = 2 (U+ + U-)
    Lin t = half_scale * in[i] - cst((idx.j[i] + plan.W) / 2);
    pre.push_back(t);
    pre.push_back((-1.0) * t);
  }
  auto u = A.relu(pre);
  pre.clear();
  // r = |t - W| and its excess over W; z = W - min(r, W) in [0, W], zero off the support
  for (std::size_t i = 0; i < d; ++i) {
    Lin r = 2.0 * (u[2 * i] + u[2 * i + 1]);
    pre.push_back(r);
    pre.push_back(r - cst(plan.W));
  }
  u = A.relu(pre);
  pre.clear();
  const std::size_t T = plan.coeffs.size();
  for (std::size_t i = 0; i < d; ++i) {
    Lin z = cst(plan.W) - u[2 * i] + u[2 * i + 1];
    for (std::size_t l = 0; l < T; ++l) pre.push_back((1.0 / plan.W) * (z - cst(static_cast<double>(l))));
  }
  u = A.relu(pre);
  std::vector<std::vector<Lin>> groups;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t l = 0; l < T; ++l) groups.emplace_back(static_cast<std::size_t>(idx.m), u[i * T + l]);
  auto powers = product_forest(A, std::move(groups), 1.0, plan.stages);
  std::vector<Lin> factors(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t l = 0; l < T; ++l) factors[i] = factors[i] + plan.coeffs[l] * powers[i * T + l];
  int stages = 0;
  Lin out = factors[0];
  if (d > 1) {
    stages = multiplication_stages(1.0, eps1 / (3.0 * d));
    out = product_tree(A, factors, 1.0, stages);
  }
  const double kappa = std::max(2 * std::pow(idx.m + 1.0, idx.m), std::ldexp(1.0, idx.k));
  return A.finish(out, kappa,
                  {"bspline", {{"k", idx.k}, {"j", idx.j}, {"m", idx.m}, {"eps1", eps1}, {"power_stages", plan.stages}, {"stages", stages}}});
}

CnnNetwork build_bspline_cnn(const BSplineIndex& idx, double eps1, std::size_t K, double C) {
  const std::size_t d = idx.d();
  if (d >= 2 && (K < 2 || K > d)) throw DomainError("filter size " + std::to_string(K) + " outside [2, " + std::to_string(d) + "]");
  CnnNetwork net = mlp_to_cnn(build_bspline_mlp(idx, eps1), d, d == 1 ? 1 : K);
  CnnNetwork out = net.with_envelope(bspline_envelope(idx, eps1, K, C));
  SizeAudit a = audit(out);
  for (const auto& f : a.fields)
    if (!f.pass)
      throw EnvelopeError("spline network exceeds its envelope on " + f.name + " (" + std::to_string(f.measured) + " > " +
                          std::to_string(f.declared) + ")");
  return out;
}

// ---------------------------------------------------------------- tolerances

double ToleranceBudget::collar_budget() const {
  const double shrink = std::isinf(tau) ? 1.0 : 1.0 - omega / tau;
  return c * (std::numbers::pi + 1) * Delta / (omega * shrink);
}

nlohmann::json ToleranceBudget::to_json() const {
  return {{"eps", eps},   {"delta", delta}, {"eta", eta}, {"Delta", Delta}, {"theta", theta},
          {"N", N},       {"C_M", C_M},     {"C", C},     {"c", c},         {"c0", c0},
          {"omega", omega}, {"tau", std::isinf(tau) ? nlohmann::json("inf") : nlohmann::json(tau)},
          {"B", B},       {"D", D},         {"d", d},     {"s", s},         {"collar_budget", collar_budget()}};
}

ToleranceBudget choose_tolerances(double eps, std::size_t C_M, double omega, double tau, double B, std::size_t D,
                                  std::size_t d, double s, double C, double c, double c0) {
  if (!(eps > 0 && eps < 1)) throw DomainError("eps must lie in (0,1)");
  if (C_M < 1 || !(omega > 0) || !(B > 0) || !(s > 0) || !(C > 0) || !(c > 0) || !(c0 > 0))
    throw DomainError("tolerance inputs must be positive");
  ToleranceBudget t;
  t.eps = eps;
  t.C_M = C_M;
  t.omega = omega;
  t.tau = tau;
  t.B = B;
  t.D = D;
  t.d = d;
  t.s = s;
  t.C = C;
  t.c = c;
  t.c0 = c0;
  const double base = eps / (3.0 * static_cast<double>(C_M));
  const double ds = static_cast<double>(d) / s;
  t.delta = base;
  t.eta = std::pow(base, ds + 1) / C;
  const double shrink = std::isinf(tau) ? 1.0 : 1.0 - omega / tau;
  t.Delta = omega * shrink * eps / (3 * c * (std::numbers::pi + 1) * static_cast<double>(C_M));
  t.theta = t.Delta / (16 * B * B * static_cast<double>(D));
  t.N = static_cast<std::size_t>(std::ceil(std::pow(t.delta / (2 * C * c0), -ds)));
  return t;
}

// ---------------------------------------------------------------- assembly

ChartComponents build_chart_components(const Chart& chart, const ToleranceBudget& tb, std::size_t K) {
  ChartComponents parts{{}, build_indicator_net(tb.omega, tb.Delta, tb.theta, tb.B, tb.D), std::nullopt};
  CnnNetwork dist = build_squared_distance_net(chart.center, tb.B, tb.theta, K);
  parts.gate = cnn_compose(dist, parts.gate);
  for (std::size_t i = 0; i < tb.d; ++i) parts.projection.push_back(build_chart_projection_cnn(chart, i, K));
  if (tb.d > 1) parts.projection_stack = cnn_stack(parts.projection);
  return parts;
}

CnnNetwork assemble_chart_unit(const ChartComponents& parts, const CnnNetwork& spline, double alpha, double eta_unit,
                               double mult_bound, double kappa1_target) {
  const std::size_t D = parts.gate.input_rows();
  CnnNetwork local = parts.projection_stack
                         ? cnn_append(*parts.projection_stack, cnn_lift_encoded_input(spline, D))
                         : cnn_compose(parts.projection.front(), spline);
  ConvStack pair = cnn_stack(local, parts.gate);
  CnnNetwork mult = cnn_lift_encoded_input(build_multiplication_net(mult_bound, eta_unit), D);
  CnnNetwork unit = scale_readout(cnn_append(pair, mult), alpha);
  const double k1 = unit.envelope().conv_bound;
  if (k1 > kappa1_target) {
    const double a = std::exp2(std::ceil(std::log2(k1 / kappa1_target)));
    unit = cnn_rescale(unit, a);
  }
  return unit;
}

// ---------------------------------------------------------------- report

bool VerificationReport::pass() const {
  if (!audit.pass()) return false;
  for (const auto& s : stages)
    if (!s.pass) return false;
  return true;
}

std::string VerificationReport::first_failure() const {
  for (const auto& s : stages)
    if (!s.pass) return s.name;
  if (!audit.pass())
    for (const auto& f : audit.fields)
      if (!f.pass) return "audit:" + f.name;
  return "";
}

nlohmann::json VerificationReport::to_json() const {
  nlohmann::json st = nlohmann::json::array(), ch = nlohmann::json::array(), au = nlohmann::json::array();
  for (const auto& s : stages) st.push_back({{"name", s.name}, {"measured", s.measured}, {"budget", s.budget}, {"pass", s.pass}});
  for (const auto& c : charts)
    ch.push_back({{"chart", c.chart},
                  {"terms", c.terms},
                  {"A1", c.A1},
                  {"A2", c.A2},
                  {"A3", c.A3},
                  {"spline_fit", c.spline_fit},
                  {"spline_cnn", c.spline_cnn},
                  {"lipschitz", c.lipschitz},
                  {"norm", c.norm},
                  {"S", c.S},
                  {"eps1", c.eps1}});
  for (const auto& f : audit.fields)
    au.push_back({{"field", f.name}, {"measured", f.measured}, {"declared", f.declared}, {"pass", f.pass}});
  return {{"budget", budget.to_json()},
          {"blocks", blocks},
          {"samples", samples},
          {"sup_error", sup_error},
          {"ledger_total", ledger_total},
          {"structural_dev", structural_dev},
          {"locality_dev", locality_dev},
          {"channel_formulas", {channels_formula_a, channels_formula_b}},
          {"stages", st},
          {"charts", ch},
          {"audit", au},
          {"pass", pass()}};
}

// ---------------------------------------------------------------- theorem-1 build

namespace {

// manifold points whose squared distance to the centre sits in [omega^2 - 2 Delta, omega^2)
std::vector<Point> collar_points(const SyntheticManifold& M, const Chart& c, double Delta, std::size_t n,
                                 std::mt19937_64& rng) {
  std::vector<Point> out;
  std::normal_distribution<double> G;
  std::uniform_real_distribution<double> U(0.0, 2.0);
  const double w2 = c.omega * c.omega;
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<double> dir(M.d);
    double nn = 0;
    for (auto& v : dir) {
      v = G(rng);
      nn += v * v;
    }
    nn = std::sqrt(nn);
    const double goal = w2 - Delta * U(rng);
    auto at = [&](double s) -> std::optional<Point> {
      std::vector<double> z(M.d);
      for (std::size_t i = 0; i < M.d; ++i) z[i] = c.b[i] + c.a * s * dir[i] / nn;
      return chart_inverse(M, c, z);
    };
    double lo = 0, hi = c.omega;
    for (int it = 0; it < 80; ++it) {
      double mid = 0.5 * (lo + hi);
      auto p = at(mid);
      if (p && sqdist(*p, c.center) < goal) lo = mid;
      else hi = mid;
    }
    if (auto p = at(lo)) out.push_back(*p);
  }
  return out;
}

std::vector<double> flatten(const std::vector<Point>& pts) {
  std::vector<double> f;
  for (const auto& p : pts) f.insert(f.end(), p.begin(), p.end());
  return f;
}

}  // namespace

Theorem1Result build_theorem1_network(const TargetFunction& target, const SyntheticManifold& M, const BuildOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t D = M.D, d = M.d;
  if (opt.K < 2 || opt.K > D) throw DomainError("filter size K must lie in [2, D]");
  const double omega = opt.omega ? *opt.omega : std::min(0.4 * M.tau, 0.9 * M.B);
  Atlas atlas = build_atlas(M, omega, derive_seed(opt.seed, "atlas"));
  const std::size_t CM = atlas.size();
  const int m = static_cast<int>(std::ceil(target.s)) + 1;

  // spline targets g_i(z) = rho_i f*(phi_i^-1 z), zero off the chart image
  std::vector<Target> local(CM);
  for (std::size_t i = 0; i < CM; ++i) {
    local[i] = [&, i](std::span<const double> z) -> double {
      auto x = chart_inverse(M, atlas.charts[i], z);
      if (!x) return 0.0;
      return partition_weights(atlas, *x)[i] * target(*x);
    };
  }
  // collar constant: Lipschitz estimate of g_i on a grid, unless configured
  double lip = 0;
  std::vector<double> lip_chart(CM, 0.0), norm_chart(CM, 0.0);
  {
    const std::size_t per = d == 1 ? 2001 : 161;
    for (std::size_t i = 0; i < CM; ++i) {
      std::vector<double> vals;
      std::size_t total = 1;
      for (std::size_t k = 0; k < d; ++k) total *= per;
      vals.resize(total);
      std::vector<double> z(d);
      for (std::size_t n = 0; n < total; ++n) {
        std::size_t r = n;
        for (std::size_t k = 0; k < d; ++k) z[k] = static_cast<double>(r % per) / (per - 1), r /= per;
        vals[n] = local[i](z);
      }
      const double h = 1.0 / (per - 1);
      std::size_t stride = 1;
      for (std::size_t k = 0; k < d; ++k, stride *= per)
        for (std::size_t n = 0; n < total; ++n)
          if ((n / stride) % per + 1 < per) lip_chart[i] = std::max(lip_chart[i], std::abs(vals[n + stride] - vals[n]) / h);
      // H^2 norm estimate of g_i: L2 norms of g, its first and pure second differences
      double n0 = 0, n1 = 0, n2 = 0;
      for (double v : vals) n0 += v * v;
      stride = 1;
      for (std::size_t k = 0; k < d; ++k, stride *= per)
        for (std::size_t n = 0; n < total; ++n) {
          const std::size_t pos = (n / stride) % per;
          if (pos + 1 < per) n1 += std::pow((vals[n + stride] - vals[n]) / h, 2);
          if (pos + 2 < per) n2 += std::pow((vals[n + 2 * stride] - 2 * vals[n + stride] + vals[n]) / (h * h), 2);
        }
      norm_chart[i] = std::sqrt((n0 + n1 + n2) * std::pow(h, static_cast<double>(d)));
      lip = std::max(lip, lip_chart[i]);
    }
  }
  const double c_const = opt.c ? *opt.c : std::max(lip, 1e-3);
  // the manifold norm is taken chart by chart, so the partition weights count; the zero target has norm 0
  // and any positive proxy gives a valid (tiny) budget
  const double c0 = std::max({target.c0, *std::max_element(norm_chart.begin(), norm_chart.end()), 1e-2});
  ToleranceBudget tb = choose_tolerances(opt.eps, CM, omega, M.tau, M.B, D, d, target.s, opt.C, c_const, c0);

  VerificationReport rep;
  rep.budget = tb;
  auto stage = [&](const std::string& name, double measured, double budget) {
    StageCheck s{name, measured, budget, measured <= budget};
    rep.stages.push_back(s);
    if (!s.pass && opt.strict)
      throw EnvelopeError("stage " + name + " failed: measured " + std::to_string(measured) + " > budget " +
                          std::to_string(budget));
  };

  // spline fits per chart
  std::vector<SplineApproximant> fits(CM);
  FitOptions fo;
  fo.c0 = c0;
  fo.cap_constant = opt.cap_constant;
  const SparseGridPlan plan = make_plan(tb.N, d, target.s, target.p, target.q, m, opt.c1, opt.lambda);
  double fit_worst = 0;
  for (std::size_t i = 0; i < CM; ++i) {
    fits[i] = fit_coefficients(local[i], plan, fo);
    ChartLedger L;
    L.chart = i;
    L.terms = fits[i].terms.size();
    L.spline_fit = fits[i].sup_error;
    L.lipschitz = lip_chart[i];
    L.norm = norm_chart[i];
    rep.charts.push_back(L);
    fit_worst = std::max(fit_worst, fits[i].sup_error);
  }
  // the binding check on the fitted sum is A2 <= delta below; this only guards the fit itself
  stage("spline_fit", fit_worst, tb.delta);

  // per-chart overlap sum S and spline tolerance eps1 = delta / (2 S)
  const std::size_t sgrid = d == 1 ? 4001 : 201;
  for (std::size_t i = 0; i < CM; ++i) {
    double S = 0;
    std::vector<double> z(d);
    std::size_t total = 1;
    for (std::size_t k = 0; k < d; ++k) total *= sgrid;
    for (std::size_t n = 0; n < total; ++n) {
      std::size_t r = n;
      for (std::size_t k = 0; k < d; ++k) z[k] = static_cast<double>(r % sgrid) / (sgrid - 1), r /= sgrid;
      double acc = 0;
      for (const auto& t : fits[i].terms)
        if (t.alpha != 0.0 && in_support(t.index, z)) acc += std::abs(t.alpha);
      S = std::max(S, acc);
    }
    rep.charts[i].S = S;
    rep.charts[i].eps1 = std::min(0.5, tb.delta / (2 * std::max(S, 1e-300)));
  }

  // networks
  std::vector<ChartComponents> parts;
  for (std::size_t i = 0; i < CM; ++i) parts.push_back(build_chart_components(atlas.charts[i], tb, opt.K));
  std::size_t total_terms = 0;
  for (const auto& f : fits) total_terms += f.terms.size();
  const double mult_bound = d == 1 ? 1.0 : 2.0;

  // kappa1 target
  double kappa1 = 1.0;
  std::vector<std::vector<CnnNetwork>> splines(CM);
  for (std::size_t i = 0; i < CM; ++i)
    for (const auto& t : fits[i].terms)
      splines[i].push_back(build_bspline_cnn(t.index, rep.charts[i].eps1, std::min(opt.K, std::max<std::size_t>(d, 2)), opt.C));
  if (opt.kappa1_rule == "bfijcnn") {
    std::size_t depth = 0;
    for (std::size_t i = 0; i < CM && !fits[i].terms.empty(); ++i) {
      CnnNetwork probe = assemble_chart_unit(parts[i], splines[i][0], 1.0, tb.eta, mult_bound, 1e300);
      depth = std::max(depth, probe.depth());
    }
    kappa1 = opt.C_prime / (8.0 * static_cast<double>(opt.K * D)) *
             std::pow(static_cast<double>(std::max<std::size_t>(total_terms, 1)), -1.0 / std::max<std::size_t>(depth, 1));
  } else if (opt.kappa1_rule != "unit") {
    throw DomainError("unknown kappa1 rule '" + opt.kappa1_rule + "'");
  }

  std::vector<CnnNetwork> units;
  std::vector<std::pair<std::size_t, std::size_t>> owner;
  for (std::size_t i = 0; i < CM; ++i)
    for (std::size_t j = 0; j < fits[i].terms.size(); ++j) {
      const double alpha = fits[i].terms[j].alpha;
      const double eta_unit = tb.eta / std::max(1.0, std::abs(alpha));
      units.push_back(assemble_chart_unit(parts[i], splines[i][j], alpha, eta_unit, mult_bound, kappa1));
      owner.push_back({i, j});
    }
  CnnEnvelope shared = envelope_hull(units);
  if (units.empty()) shared = {1, 3, opt.K, 1.0, 1.0};
  ConvResNet net = cnn_sum_to_resnet(units, shared);
  rep.blocks = units.size();
  rep.audit = audit(net);

  // verification samples: uniform plus collar-focused
  std::vector<Point> pts = sample(M, opt.samples, derive_seed(opt.seed, "verify"));
  {
    auto rng = make_stream(opt.seed, "collar");
    for (const auto& c : atlas.charts) {
      auto cp = collar_points(M, c, tb.Delta, opt.collar_samples, rng);
      pts.insert(pts.end(), cp.begin(), cp.end());
    }
  }
  rep.samples = pts.size();

  // end-to-end error
  {
    auto out = eval_resnet_batch(net, flatten(pts));
    for (std::size_t n = 0; n < pts.size(); ++n) rep.sup_error = std::max(rep.sup_error, std::abs(out[n] - target(pts[n])));
  }

  // ledger per chart, measured through the component networks
  double dist_worst = 0, cnn_worst = 0, A1w = 0, A2w = 0, A3w = 0;
  std::size_t ind_viol = 0;
  const CnnNetwork mult_probe = build_multiplication_net(mult_bound, tb.eta);
  for (std::size_t i = 0; i < CM; ++i) {
    const Chart& ch = atlas.charts[i];
    CnnNetwork dist = build_squared_distance_net(ch.center, tb.B, tb.theta, opt.K);
    auto flat = flatten(pts);
    auto dv = eval_cnn_batch(dist, flat);
    auto gv = eval_cnn_batch(parts[i].gate, flat);
    std::vector<std::size_t> inside;
    for (std::size_t n = 0; n < pts.size(); ++n) {
      const double d2 = sqdist(pts[n], ch.center);
      dist_worst = std::max(dist_worst, std::abs(dv[n] - d2));
      const double g = gv[n];
      const bool in_u = d2 < ch.omega * ch.omega;
      if (!in_u) ind_viol += g != 0.0;
      else if (d2 <= ch.omega * ch.omega - tb.Delta) ind_viol += g != 1.0;
      else ind_viol += !(g >= 0.0 && g <= 1.0);
      if (in_u) inside.push_back(n);
    }
    // spline values on chart coordinates of the points inside U_i
    std::vector<double> zflat;
    for (std::size_t n : inside) {
      auto z = chart_map(ch, pts[n]);
      zflat.insert(zflat.end(), z.begin(), z.end());
    }
    std::vector<double> S(inside.size(), 0.0), S_exact(inside.size(), 0.0);
    ChartLedger& L = rep.charts[i];
    std::vector<double> unit_err(fits[i].terms.size(), 0.0);
    for (std::size_t j = 0; j < fits[i].terms.size(); ++j) {
      const double alpha = fits[i].terms[j].alpha;
      auto sv = eval_cnn_batch(splines[i][j], zflat);
      CnnNetwork mj = build_multiplication_net(mult_bound, tb.eta / std::max(1.0, std::abs(alpha)));
      std::vector<double> pair;
      for (std::size_t q = 0; q < inside.size(); ++q) {
        pair.push_back(sv[q]);
        pair.push_back(gv[inside[q]]);
      }
      auto prod = eval_cnn_batch(mj, pair);
      for (std::size_t q = 0; q < inside.size(); ++q) {
        S[q] += alpha * sv[q];
        std::span<const double> z(zflat.data() + q * d, d);
        S_exact[q] += alpha * eval_tensor_bspline(fits[i].terms[j].index, z);
        unit_err[j] = std::max(unit_err[j], std::abs(alpha * prod[q] - alpha * sv[q] * gv[inside[q]]));
      }
    }
    for (double e : unit_err) L.A1 += e;
    for (std::size_t q = 0; q < inside.size(); ++q) {
      const Point& x = pts[inside[q]];
      const double fi = partition_weights(atlas, x)[i] * target(x);
      const double g = gv[inside[q]];
      L.A2 = std::max(L.A2, std::abs((S[q] - fi) * g));
      L.A3 = std::max(L.A3, std::abs(fi * (g - 1.0)));
      L.spline_cnn = std::max(L.spline_cnn, std::abs(S[q] - S_exact[q]));
    }
    cnn_worst = std::max(cnn_worst, L.spline_cnn);
    A1w = std::max(A1w, L.A1);
    A2w = std::max(A2w, L.A2);
    A3w = std::max(A3w, L.A3);
    rep.ledger_total += L.A1 + L.A2 + L.A3;
  }
  (void)mult_probe;
  stage("spline_cnn", cnn_worst, tb.delta / 2);
  stage("distance", dist_worst, 4 * tb.B * tb.B * static_cast<double>(D) * tb.theta);
  stage("indicator_violations", static_cast<double>(ind_viol), 0.0);
  stage("A1", A1w, static_cast<double>(tb.N) * tb.eta);
  stage("A2", A2w, tb.delta);
  stage("A3", A3w, tb.collar_budget());

  // structure: resnet equals the sum of its units; units vanish off their chart
  {
    std::vector<Point> probe(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(100, pts.size())));
    auto flat = flatten(probe);
    auto whole = eval_resnet_batch(net, flat);
    std::vector<double> sum(probe.size(), 0.0);
    for (std::size_t u = 0; u < units.size(); ++u) {
      auto v = eval_cnn_batch(units[u], flat);
      const Chart& ch = atlas.charts[owner[u].first];
      for (std::size_t n = 0; n < probe.size(); ++n) {
        sum[n] += v[n];
        if (!in_chart(ch, probe[n])) rep.locality_dev = std::max(rep.locality_dev, std::abs(v[n]));
      }
    }
    for (std::size_t n = 0; n < probe.size(); ++n) rep.structural_dev = std::max(rep.structural_dev, std::abs(whole[n] - sum[n]));
  }
  stage("structural", rep.structural_dev, 1e-9);
  stage("locality", rep.locality_dev, 1e-12);

  // channel count of the summed network against both readings of the channel formula
  const double s = target.s;
  rep.channels_formula_a = std::ceil(48.0 * d * (s + 1) * (s + 3) + 28.0 * d + 6.0 * D);
  rep.channels_formula_b = std::ceil(28.0 * d * (s + 1) * (s + 3) + 18.0 * d) + 6.0 * D;
  stage("channels", static_cast<double>(net.envelope().channels), std::max(rep.channels_formula_a, rep.channels_formula_b));
  stage("ledger_total", rep.ledger_total, tb.eps);
  stage("sup_error", rep.sup_error, tb.eps);
  if (opt.strict && !rep.audit.pass()) throw EnvelopeError("size audit failed on " + rep.first_failure());
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(net), std::move(rep), std::move(atlas)};
}

}  // namespace besovnet
