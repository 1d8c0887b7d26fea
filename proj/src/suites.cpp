#include "besovnet/suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "besovnet/approx.hpp"
#include "besovnet/autodiff.hpp"
#include "besovnet/calculus.hpp"
#include "besovnet/error.hpp"
#include "besovnet/manifold.hpp"
#include "besovnet/rng.hpp"

namespace besovnet {

bool SuiteResult::pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const SuiteRow& r) { return r.pass; });
}

std::string SuiteResult::first_failure() const {
  for (const auto& r : rows)
    if (!r.pass) return name + "/" + r.check;
  return "";
}

nlohmann::json SuiteResult::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows)
    rs.push_back({{"check", r.check}, {"measured", r.measured}, {"tolerance", r.tolerance}, {"trials", r.trials},
                  {"pass", r.pass}});
  return {{"suite", name}, {"pass", pass()}, {"rows", rs}};
}

namespace {

using Clock = std::chrono::steady_clock;

// running max |error| against a tolerance
struct Tally {
  std::string check;
  double tol;
  double worst = 0;
  std::size_t n = 0;
  void add(double err) {
    worst = std::max(worst, std::isnan(err) ? INFINITY : err);
    ++n;
  }
  SuiteRow row() const { return {check, worst, tol, n, worst <= tol}; }
};

// counts of a property that must never fail
struct Counter {
  std::string check;
  std::size_t bad = 0, n = 0;
  void add(bool ok) {
    bad += !ok;
    ++n;
  }
  SuiteRow row() const { return {check, static_cast<double>(bad), 0.0, n, bad == 0}; }
};

std::vector<double> uniform_point(std::mt19937_64& rng, std::size_t D, double B = 1.0) {
  std::uniform_real_distribution<double> u(-B, B);
  std::vector<double> x(D);
  for (auto& v : x) v = u(rng);
  return x;
}

// plain dense forward pass, no library evaluation involved
double direct_mlp(const MlpNetwork& net, std::vector<double> x) {
  const auto& ls = net.layers();
  for (std::size_t n = 0; n < ls.size(); ++n) {
    std::vector<double> y(ls[n].out, 0.0);
    for (std::size_t r = 0; r < ls[n].out; ++r) {
      for (std::size_t c = 0; c < ls[n].in; ++c) y[r] += ls[n].weights[r * ls[n].in + c] * x[c];
      y[r] += ls[n].bias[r];
      if (n + 1 < ls.size() && y[r] < 0) y[r] = 0;
    }
    x = std::move(y);
  }
  return x[0];
}

MlpNetwork random_mlp(std::mt19937_64& rng, std::size_t in, std::size_t layers, std::size_t J) {
  std::uniform_int_distribution<std::size_t> width(1, J);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<DenseLayer> ls;
  std::size_t c = in, wmax = in;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t o = l + 1 == layers ? 1 : width(rng);
    DenseLayer d{o, c, std::vector<double>(o * c), std::vector<double>(o)};
    for (auto& v : d.weights) v = u(rng);
    for (auto& v : d.bias) v = u(rng);
    ls.push_back(std::move(d));
    c = o;
    wmax = std::max(wmax, o);
  }
  return MlpNetwork(ls, {layers, wmax, 1.0}, {"random"});
}

CnnNetwork random_cnn(std::mt19937_64& rng, std::size_t D, std::size_t layers, std::size_t J, std::size_t K,
                      double scale = 0.8) {
  std::uniform_int_distribution<std::size_t> width(1, J), ksize(1, std::min(K, D));
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<ConvLayer> ls;
  std::size_t c = 1, jmax = 1, kmax = 1;
  double mag = 0.0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t o = width(rng), k = ksize(rng);
    std::vector<double> w(o * k * c), b(o);
    for (auto& v : w) v = u(rng);
    for (auto& v : b) v = 0.5 * u(rng);
    ls.push_back({ConvFilter::dense(o, k, c, w), BiasMatrix::first_row(D, b)});
    mag = std::max({mag, ls.back().filter.norm_inf(), ls.back().bias.norm_inf()});
    c = o;
    jmax = std::max(jmax, o);
    kmax = std::max(kmax, k);
  }
  FeatureMap w(D, c);
  for (std::size_t ch = 0; ch < c; ++ch) w(0, ch) = u(rng);
  const double b = u(rng);
  const double rmag = std::max(w.norm_inf(), std::abs(b));
  return CnnNetwork(D, 1, ls, w, b, true, {layers + 1, jmax, kmax, std::max(mag, 1e-3), std::max(rmag, 1e-3)},
                    {{"random", {{"D", D}}}});
}

std::size_t nonzero_lower_rows(const FeatureMap& w) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < w.rows(); ++i)
    for (std::size_t c = 0; c < w.channels(); ++c) n += w(i, c) != 0.0;
  return n;
}

}  // namespace

SuiteResult run_calculus_suite(std::uint64_t seed, const CalculusSuiteOptions& opt) {
  const auto t0 = Clock::now();
  if (opt.max_D < 2 || opt.max_layers < 1 || opt.max_channels < 1) throw DomainError("calculus suite sizes too small");
  const double tol = 1e-9;
  Tally mlp{"mlp_to_cnn", tol}, comp{"cnn_compose", tol}, stack{"cnn_stack_decode", tol}, lift{"cnn_lift_encoded_input", 0.0},
      r1{"cnn_rescale_alpha1", 0.0}, r2{"cnn_rescale_alpha2", 0.0}, r3{"cnn_rescale_alpha3", tol},
      sum{"cnn_sum_to_resnet", tol}, copy{"cnn_stack_copy", 0.0};
  Counter rows{"first_row_readout"}, audits{"size_audit"};
  auto rng = make_stream(seed, "calculus-suite");
  std::uniform_int_distribution<std::size_t> Dd(1, opt.max_D), D2(2, opt.max_D), Ld(0, opt.max_layers),
      L1(1, opt.max_layers);
  for (std::size_t rep = 0; rep < opt.instances; ++rep) {
    {
      const std::size_t D = Dd(rng), L = L1(rng);
      MlpNetwork m = random_mlp(rng, D, L, opt.max_channels);
      const std::size_t K = D == 1 ? 1 : std::min<std::size_t>(D, 3);
      CnnNetwork c = mlp_to_cnn(m, D, K);
      audits.add(audit(c).pass());
      rows.add(nonzero_lower_rows(c.readout_weights()) == 0);
      for (std::size_t n = 0; n < opt.inputs; ++n) {
        auto x = uniform_point(rng, D);
        mlp.add(std::abs(eval_cnn(c, x) - direct_mlp(m, x)));
      }
    }
    {
      const std::size_t D = Dd(rng);
      CnnNetwork f1 = random_cnn(rng, D, L1(rng), opt.max_channels, 3);
      CnnNetwork f2 = random_cnn(rng, 1, Ld(rng), opt.max_channels, 1);
      CnnNetwork c = cnn_compose(f1, f2);
      audits.add(audit(c).pass());
      rows.add(nonzero_lower_rows(c.readout_weights()) == 0);
      for (std::size_t n = 0; n < opt.inputs; ++n) {
        auto x = uniform_point(rng, D);
        comp.add(std::abs(eval_cnn(c, x) - eval_cnn(f2, std::vector<double>{eval_cnn(f1, x)})));
      }
    }
    {
      const std::size_t D = D2(rng);
      CnnNetwork f1 = random_cnn(rng, D, Ld(rng), opt.max_channels, 4);
      CnnNetwork f2 = random_cnn(rng, D, Ld(rng), opt.max_channels, 4);
      ConvStack s = cnn_stack(f1, f2), same = cnn_stack(f1, f1);
      for (std::size_t n = 0; n < opt.inputs; ++n) {
        auto x = uniform_point(rng, D);
        auto v = eval_stack(s, x).decode();
        stack.add(std::max(std::abs(v[0] - eval_cnn(f1, x)), std::abs(v[1] - eval_cnn(f2, x))));
        auto w = eval_stack(same, x).decode();
        copy.add(std::abs(w[0] - w[1]));
      }
    }
    {
      const std::size_t M = std::uniform_int_distribution<std::size_t>(1, 6)(rng), D = Dd(rng);
      CnnNetwork g = random_cnn(rng, M, Ld(rng), opt.max_channels, 3);
      CnnNetwork lg = cnn_lift_encoded_input(g, D);
      audits.add(audit(lg).pass());
      rows.add(nonzero_lower_rows(lg.readout_weights()) == 0);
      for (std::size_t n = 0; n < opt.inputs; ++n) {
        auto x = uniform_point(rng, M);
        lift.add(std::abs(eval_cnn(lg, PlusMinusEncoding::encode(x, D).map) - eval_cnn(g, x)));
      }
    }
    {
      const std::size_t D = Dd(rng);
      CnnNetwork f = random_cnn(rng, D, L1(rng), opt.max_channels, 4);
      CnnNetwork a1 = cnn_rescale(f, 1.0), a2 = cnn_rescale(f, 2.0), a3 = cnn_rescale(f, 3.0);
      for (const auto* r : {&a1, &a2, &a3}) {
        audits.add(audit(*r).pass());
        rows.add(nonzero_lower_rows(r->readout_weights()) == 0);
      }
      for (std::size_t n = 0; n < opt.inputs; ++n) {
        auto x = uniform_point(rng, D);
        const double y = eval_cnn(f, x);
        r1.add(std::abs(eval_cnn(a1, x) - y));
        r2.add(std::abs(eval_cnn(a2, x) - y));
        r3.add(std::abs(eval_cnn(a3, x) - y));
      }
    }
    {
      const std::size_t D = Dd(rng), L = Ld(rng);
      std::vector<CnnNetwork> nets;
      for (int m = 0; m < 3; ++m) nets.push_back(random_cnn(rng, D, L, opt.max_channels, 4));
      ConvResNet r = cnn_sum_to_resnet(nets, envelope_hull(nets));
      audits.add(audit(r).pass());
      for (std::size_t n = 0; n < opt.inputs; ++n) {
        auto x = uniform_point(rng, D);
        sum.add(std::abs(eval_resnet(r, x) - (eval_cnn(nets[0], x) + eval_cnn(nets[1], x) + eval_cnn(nets[2], x))));
      }
    }
  }
  SuiteResult res{"calculus", {}, 0};
  for (const Tally* t : {&mlp, &comp, &stack, &copy, &lift, &r1, &r2, &r3, &sum}) res.rows.push_back(t->row());
  res.rows.push_back(rows.row());
  res.rows.push_back(audits.row());
  res.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return res;
}

SuiteResult run_multiplication_suite(std::uint64_t) {
  const auto t0 = Clock::now();
  SuiteResult res{"multiplication", {}, 0};
  const int n = 200;
  for (double eta : {1e-2, 1e-3}) {
    CnnNetwork net = build_multiplication_net(1.0, eta);
    const std::string tag = "eta=" + std::string(eta == 1e-2 ? "1e-2" : "1e-3");
    Tally err{"grid_error " + tag, eta};
    Counter zero{"zero_factor " + tag}, aud{"size_audit " + tag};
    aud.add(audit(net).pass());
    std::vector<double> xs(n * n * 2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        xs[2 * (i * n + j)] = -1.0 + 2.0 * i / (n - 1);
        xs[2 * (i * n + j) + 1] = -1.0 + 2.0 * j / (n - 1);
      }
    auto ys = eval_cnn_batch(net, xs);
    for (std::size_t k = 0; k < ys.size(); ++k) err.add(std::abs(ys[k] - xs[2 * k] * xs[2 * k + 1]));
    for (int i = 0; i < n; ++i) {
      const double a = -1.0 + 2.0 * i / (n - 1);
      zero.add(eval_cnn(net, std::vector<double>{a, 0.0}) == 0.0);
      zero.add(eval_cnn(net, std::vector<double>{0.0, a}) == 0.0);
    }
    res.rows.push_back(err.row());
    res.rows.push_back(zero.row());
    res.rows.push_back(aud.row());
  }
  res.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return res;
}

SuiteResult run_bspline_suite(std::uint64_t) {
  const auto t0 = Clock::now();
  SuiteResult res{"bspline", {}, 0};
  struct Case {
    std::size_t d;
    int m;
  };
  for (Case cs : {Case{1, 3}, Case{2, 3}})
    for (double eps1 : {1e-2, 1e-3}) {
      BSplineIndex idx;
      idx.k = 3;
      idx.m = cs.m;
      idx.j = cs.d == 1 ? std::vector<int>{2} : std::vector<int>{2, 3};
      const std::size_t K = cs.d == 1 ? 1 : 2;
      CnnNetwork net = build_bspline_cnn(idx, eps1, K);
      const std::string tag =
          "d=" + std::to_string(cs.d) + " m=" + std::to_string(cs.m) + " eps1=" + (eps1 == 1e-2 ? "1e-2" : "1e-3");
      Tally err{"grid_error " + tag, eps1};
      Counter zero{"zero_off_support " + tag}, env{"envelope_formula " + tag}, aud{"size_audit " + tag};
      env.add(net.envelope() == bspline_envelope(idx, eps1, K));
      aud.add(audit(net).pass());
      const std::size_t per = cs.d == 1 ? 20001 : 241;
      std::size_t total = 1;
      for (std::size_t i = 0; i < cs.d; ++i) total *= per;
      std::vector<double> xs(total * cs.d);
      for (std::size_t p = 0; p < total; ++p) {
        std::size_t r = p;
        for (std::size_t i = 0; i < cs.d; ++i) {
          xs[p * cs.d + i] = static_cast<double>(r % per) / static_cast<double>(per - 1);
          r /= per;
        }
      }
      auto ys = eval_cnn_batch(net, xs);
      for (std::size_t p = 0; p < total; ++p) {
        std::span<const double> x(xs.data() + p * cs.d, cs.d);
        err.add(std::abs(ys[p] - eval_tensor_bspline(idx, x)));
        if (!in_support(idx, x)) zero.add(ys[p] == 0.0);
      }
      for (const auto& row : {err.row(), zero.row(), env.row(), aud.row()}) res.rows.push_back(row);
    }
  res.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return res;
}

SuiteResult run_indicator_suite(std::uint64_t seed, std::size_t samples) {
  const auto t0 = Clock::now();
  SuiteResult res{"indicator", {}, 0};
  SyntheticManifold M = make_manifold(ManifoldKind::circle, 3);
  const double omega = 0.4, Delta = 0.02, theta = 1e-4, B = M.B;
  const double t = 0.0;
  const Point c = M.embed(std::span<const double>(&t, 1));
  CnnNetwork dist = build_squared_distance_net(c, B, theta, 2);
  CnnNetwork ind = build_indicator_net(omega, Delta, theta, B, M.D);
  CnnNetwork gate = cnn_compose(dist, ind);
  const double slack = 4 * B * B * static_cast<double>(M.D) * theta;
  Tally err{"distance_error", slack};
  Counter one_sided{"distance_one_sided"}, inside{"indicator_inside"}, outside{"indicator_outside"},
      collar{"indicator_collar_range"}, aud{"size_audit"};
  aud.add(audit(dist).pass());
  aud.add(audit(gate).pass());
  auto pts = sample(M, samples, derive_seed(seed, "indicator-suite"));
  std::vector<double> flat;
  for (const auto& p : pts) flat.insert(flat.end(), p.begin(), p.end());
  auto d2n = eval_cnn_batch(dist, flat);
  auto g = eval_cnn_batch(gate, flat);
  for (std::size_t n = 0; n < pts.size(); ++n) {
    double d2 = 0;
    for (std::size_t i = 0; i < M.D; ++i) d2 += (pts[n][i] - c[i]) * (pts[n][i] - c[i]);
    err.add(std::abs(d2n[n] - d2));
    one_sided.add(d2n[n] >= d2);
    if (d2 <= omega * omega - Delta)
      inside.add(g[n] == 1.0);
    else if (d2 >= omega * omega)
      outside.add(g[n] == 0.0);
    else
      collar.add(g[n] >= 0.0 && g[n] <= 1.0);
  }
  for (const auto& row : {err.row(), one_sided.row(), inside.row(), outside.row(), collar.row(), aud.row()})
    res.rows.push_back(row);
  res.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return res;
}

namespace {

struct RandomConvNet {
  std::size_t D = 0;
  ParameterSet params;
  std::vector<std::pair<ParamId, ParamId>> layers;
  ParamId w{0}, b{0};
};

RandomConvNet random_conv_net(std::mt19937_64& rng) {
  RandomConvNet n;
  n.D = std::uniform_int_distribution<std::size_t>(3, 10)(rng);
  const std::size_t L = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
  std::uniform_int_distribution<std::size_t> width(1, 6), ksize(1, 3);
  std::uniform_real_distribution<double> u(-1, 1);
  auto vals = [&](std::size_t k) {
    std::vector<double> v(k);
    for (auto& x : v) x = u(rng);
    return v;
  };
  std::size_t c = 1;
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t o = width(rng), k = ksize(rng);
    ParamId f = n.params.add("f" + std::to_string(l), {o, k, c}, vals(o * k * c));
    ParamId bias = n.params.add("b" + std::to_string(l), {n.D, o}, vals(n.D * o));
    n.layers.emplace_back(f, bias);
    c = o;
  }
  n.w = n.params.add("w", {n.D, c}, vals(n.D * c));
  n.b = n.params.add("b", {1}, vals(1));
  return n;
}

NodeId conv_forward(const RandomConvNet& n, Tape& t, NodeId x, std::vector<NodeId>* pre) {
  for (auto [f, b] : n.layers) {
    NodeId z = t.add_bias(t.conv(f, x), b);
    if (pre) pre->push_back(z);
    x = t.relu(z);
  }
  return t.readout(n.w, n.b, x);
}

// output and relu pattern at a flat parameter vector
std::pair<double, std::vector<bool>> forward_pattern(const RandomConvNet& n, std::span<const double> flat,
                                                     const FeatureMap& x) {
  RandomConvNet m = n;
  m.params.set_flat(flat);
  Tape t(m.params);
  std::vector<NodeId> pre;
  NodeId out = conv_forward(m, t, t.input(x), &pre);
  std::vector<bool> pat;
  for (NodeId p : pre)
    for (double v : t.value(p).values()) pat.push_back(v > 0);
  return {t.value(out)(0, 0), pat};
}

}  // namespace

SuiteResult run_gradient_suite(std::uint64_t seed, std::size_t networks) {
  const auto t0 = Clock::now();
  SuiteResult res{"gradient", {}, 0};
  Tally rel{"reverse_vs_central_difference", 1e-5};
  Counter size{"parameter_count_le_1000"};
  std::size_t excluded = 0;
  auto rng = make_stream(seed, "gradient-suite");
  const double h = 1e-6;
  for (std::size_t rep = 0; rep < networks; ++rep) {
    RandomConvNet n = random_conv_net(rng);
    size.add(n.params.total_size() <= 1000);
    FeatureMap x(n.D, 1);
    for (auto& v : x.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    Gradient g = grad([&](Tape& t, NodeId in) { return conv_forward(n, t, in, nullptr); }, x, n.params);
    const auto flat = n.params.flat();
    const auto base = forward_pattern(n, flat, x).second;
    std::size_t off = 0;
    for (std::size_t p = 0; p < n.params.count(); ++p)
      for (std::size_t q = 0; q < g.per_parameter[p].size(); ++q, ++off) {
        auto v = flat;
        v[off] = flat[off] + h;
        auto up = forward_pattern(n, v, x);
        v[off] = flat[off] - h;
        auto dn = forward_pattern(n, v, x);
        // a relu switching inside the stencil makes the difference quotient meaningless
        if (up.second != base || dn.second != base) {
          ++excluded;
          continue;
        }
        const double fd = (up.first - dn.first) / (2 * h), an = g.per_parameter[p][q];
        rel.add(std::abs(fd - an) / std::max(1.0, std::abs(an)));
      }
  }
  res.rows.push_back(rel.row());
  res.rows.push_back(size.row());
  res.rows.push_back({"kink_adjacent_excluded", static_cast<double>(excluded), static_cast<double>(rel.n), rel.n + excluded,
                      excluded <= rel.n});
  res.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return res;
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"calculus", "multiplication", "bspline", "indicator", "gradient"};
  return names;
}

SuiteResult run_suite(const std::string& name, std::uint64_t seed) {
  if (name == "calculus") return run_calculus_suite(seed);
  if (name == "multiplication") return run_multiplication_suite(seed);
  if (name == "bspline") return run_bspline_suite(seed);
  if (name == "indicator") return run_indicator_suite(seed);
  if (name == "gradient") return run_gradient_suite(seed);
  throw DomainError("unknown suite '" + name + "'");
}

}  // namespace besovnet
