#include "besovnet/calculus.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace besovnet {

namespace {

using Entry = ConvFilter::Entry;

Entry E(std::size_t j, std::size_t k, std::size_t l, double w) {
  return {static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(l), w};
}

BiasMatrix first_row_bias(std::size_t rows, const std::vector<double>& b) { return BiasMatrix::first_row(rows, b); }

void require_first_row(const CnnNetwork& f, const char* op) {
  if (!f.first_row_only()) throw DomainError(std::string(op) + ": input network readout is not first-row-only");
}

Provenance prov(const char* name, nlohmann::json params) { return {name, std::move(params)}; }

std::vector<Provenance> merged(std::initializer_list<const std::vector<Provenance>*> parts, Provenance extra) {
  std::vector<Provenance> out;
  for (auto* p : parts) out.insert(out.end(), p->begin(), p->end());
  out.push_back(std::move(extra));
  return out;
}

double dense_w(const DenseLayer& l, std::size_t r, std::size_t c) { return l.weights[r * l.in + c]; }

}  // namespace

std::vector<double> PlusMinusEncoding::decode() const {
  if (map.channels() < 2 * values) throw ShapeError("encoding narrower than its value count");
  std::vector<double> v(values);
  for (std::size_t i = 0; i < values; ++i) v[i] = map(0, 2 * i) - map(0, 2 * i + 1);
  return v;
}

PlusMinusEncoding PlusMinusEncoding::encode(std::span<const double> v, std::size_t rows) {
  FeatureMap m(rows, 2 * v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    m(0, 2 * i) = std::max(v[i], 0.0);
    m(0, 2 * i + 1) = std::max(-v[i], 0.0);
  }
  return {std::move(m), v.size()};
}

PlusMinusEncoding eval_stack(const ConvStack& s, std::span<const double> x) {
  if (s.input_channels != 1 || x.size() != s.input_rows) throw ShapeError("stack input does not match");
  return {conv_block_apply(std::span<const ConvLayer>(s.layers), FeatureMap::column(x)), s.values};
}

CnnNetwork mlp_to_cnn(const MlpNetwork& net, std::size_t D, std::size_t K) {
  if (net.input_dim() != D) throw ShapeError("mlp input dimension differs from D=" + std::to_string(D));
  if (net.output_dim() != 1) throw ShapeError("mlp_to_cnn needs a scalar-output mlp");
  if (D == 1 ? K != 1 : (K < 2 || K > D))
    throw DomainError("filter size " + std::to_string(K) + " outside [2, " + std::to_string(D) + "]");
  const auto& W = net.layers();
  const std::size_t L = W.size();
  const double kappa = std::max(net.envelope().bound, 1.0);
  std::vector<ConvLayer> layers;
  FeatureMap ro(D, 1);
  double ro_bias = 0.0;
  const DenseLayer& W1 = W[0];
  const std::size_t n1 = W1.out;
  const bool affine_only = L == 1;

  if (D == 1) {
    if (affine_only) {
      ro(0, 0) = dense_w(W1, 0, 0);
      ro_bias = W1.bias[0];
    } else {
      std::vector<Entry> e;
      for (std::size_t r = 0; r < n1; ++r) e.push_back(E(r, 0, 0, dense_w(W1, r, 0)));
      layers.push_back({ConvFilter(n1, 1, 1, e), first_row_bias(1, W1.bias)});
    }
  } else {
    // Gather the D inputs into row 0 two rows at a time: a shifting copy of x
    // in (carry+, carry-) and the first-layer sums in +/- accumulator pairs.
    const std::size_t G = D - 1;
    const std::size_t acc_ch = 2 + 2 * n1;
    for (std::size_t g = 1; g <= G; ++g) {
      const bool last = g == G;
      std::vector<Entry> e;
      std::size_t out_ch;
      std::vector<double> bias;
      // source of x_{i+g-1}... expressed as (channel, sign) terms at tap 0 / tap 1
      auto add_linear = [&](std::size_t out, double sign, std::size_t r) {
        if (g == 1) {
          e.push_back(E(out, 0, 0, sign * dense_w(W1, r, 0)));
          e.push_back(E(out, 1, 0, sign * dense_w(W1, r, 1)));
        } else {
          e.push_back(E(out, 0, 2 + 2 * r, sign));
          e.push_back(E(out, 0, 3 + 2 * r, -sign));
          e.push_back(E(out, 1, 0, sign * dense_w(W1, r, g)));
          e.push_back(E(out, 1, 1, -sign * dense_w(W1, r, g)));
        }
      };
      if (!last) {
        out_ch = acc_ch;
        if (g == 1) {
          e.push_back(E(0, 1, 0, 1.0));
          e.push_back(E(1, 1, 0, -1.0));
        } else {
          e.push_back(E(0, 1, 0, 1.0));
          e.push_back(E(0, 1, 1, -1.0));
          e.push_back(E(1, 1, 0, -1.0));
          e.push_back(E(1, 1, 1, 1.0));
        }
        for (std::size_t r = 0; r < n1; ++r) {
          add_linear(2 + 2 * r, 1.0, r);
          add_linear(3 + 2 * r, -1.0, r);
        }
        bias.assign(out_ch, 0.0);
      } else if (affine_only) {
        out_ch = 2;
        add_linear(0, 1.0, 0);
        add_linear(1, -1.0, 0);
        bias.assign(2, 0.0);
      } else {
        out_ch = n1;
        for (std::size_t r = 0; r < n1; ++r) add_linear(r, 1.0, r);
        bias = W1.bias;
      }
      std::size_t in_ch = g == 1 ? 1 : acc_ch;
      layers.push_back({ConvFilter(out_ch, 2, in_ch, e), first_row_bias(D, bias)});
    }
    if (affine_only) {
      ro = FeatureMap(D, 2);
      ro(0, 0) = 1.0;
      ro(0, 1) = -1.0;
      ro_bias = W1.bias[0];
    }
  }
  if (!affine_only) {
    for (std::size_t l = 1; l + 1 < L; ++l) {
      std::vector<Entry> e;
      for (std::size_t r = 0; r < W[l].out; ++r)
        for (std::size_t c = 0; c < W[l].in; ++c) e.push_back(E(r, 0, c, dense_w(W[l], r, c)));
      layers.push_back({ConvFilter(W[l].out, 1, W[l].in, e), first_row_bias(D, W[l].bias)});
    }
    const DenseLayer& WL = W[L - 1];
    ro = FeatureMap(D, WL.in);
    for (std::size_t c = 0; c < WL.in; ++c) ro(0, c) = dense_w(WL, 0, c);
    ro_bias = WL.bias[0];
  }
  CnnEnvelope env{L + D, 4 * net.envelope().width, K, kappa, kappa};
  std::vector<Provenance> p{net.provenance(), prov("mlp_to_cnn", {{"D", D}, {"K", K}, {"mlp_depth", L}})};
  return CnnNetwork(D, 1, std::move(layers), std::move(ro), ro_bias, true, env, std::move(p));
}

CnnNetwork cnn_compose(const CnnNetwork& f1, const CnnNetwork& f2) {
  require_first_row(f1, "compose");
  require_first_row(f2, "compose");
  if (f2.input_rows() != 1 || f2.input_channels() != 1) throw ShapeError("compose: outer network must take a scalar");
  const std::size_t D = f1.input_rows();
  std::vector<ConvLayer> layers = f1.layers();
  const FeatureMap& w1 = f1.readout_weights();
  const std::size_t cq = f1.output_channels();
  {
    std::vector<Entry> e;
    for (std::size_t c = 0; c < cq; ++c) {
      e.push_back(E(0, 0, c, w1(0, c)));
      e.push_back(E(1, 0, c, -w1(0, c)));
    }
    layers.push_back({ConvFilter(2, 1, cq, e), first_row_bias(D, {f1.readout_bias(), -f1.readout_bias()})});
  }
  FeatureMap ro(D, 2);
  const auto& g = f2.layers();
  if (g.empty()) {
    ro(0, 0) = f2.readout_weights()(0, 0);
    ro(0, 1) = -f2.readout_weights()(0, 0);
  } else {
    for (std::size_t l = 0; l < g.size(); ++l) {
      const ConvFilter& f = g[l].filter;
      std::vector<Entry> e;
      for (const auto& x : f.entries()) {
        if (l == 0) {
          e.push_back(E(x.out, 0, 0, x.weight));
          e.push_back(E(x.out, 0, 1, -x.weight));
        } else {
          e.push_back(E(x.out, 0, x.in, x.weight));
        }
      }
      std::vector<double> b(f.out_channels());
      for (std::size_t c = 0; c < b.size(); ++c) b[c] = g[l].bias(0, c);
      layers.push_back({ConvFilter(f.out_channels(), 1, l == 0 ? 2 : f.in_channels(), e), first_row_bias(D, b)});
    }
    ro = FeatureMap(D, f2.output_channels());
    for (std::size_t c = 0; c < f2.output_channels(); ++c) ro(0, c) = f2.readout_weights()(0, c);
  }
  const auto &e1 = f1.envelope(), &e2 = f2.envelope();
  CnnEnvelope env{e1.depth + e2.depth, std::max({e1.channels, e2.channels, std::size_t{2}}),
                  std::max(e1.filter_size, e2.filter_size), std::max({e1.conv_bound, e2.conv_bound, e1.readout_bound}),
                  e2.readout_bound};
  auto p = merged({&f1.provenance(), &f2.provenance()}, prov("compose", {{"L1", e1.depth}, {"L2", e2.depth}}));
  return CnnNetwork(D, f1.input_channels(), std::move(layers), std::move(ro), f2.readout_bias(), true, env,
                    std::move(p));
}

ConvStack cnn_stack(const CnnNetwork& f1, const CnnNetwork& f2) {
  std::vector<CnnNetwork> v{f1, f2};
  return cnn_stack(v);
}

ConvStack cnn_stack(std::span<const CnnNetwork> nets) {
  if (nets.empty()) throw DomainError("stack of no networks");
  const std::size_t D = nets[0].input_rows(), Cin = nets[0].input_channels();
  std::size_t Lmax = 0, Kmax = 1, J = 0;
  double kappa = 1.0;
  for (const auto& f : nets) {
    require_first_row(f, "stack");
    if (f.input_rows() != D || f.input_channels() != Cin) throw ShapeError("stack: networks read different inputs");
    Lmax = std::max(Lmax, f.depth());
    Kmax = std::max(Kmax, f.envelope().filter_size);
    J += std::max(f.envelope().channels, std::size_t{2});
    kappa = std::max({kappa, f.envelope().conv_bound, f.envelope().readout_bound});
  }
  // per network and stack layer: the sub-layer it contributes
  auto sublayer = [&](const CnnNetwork& f, std::size_t l) -> ConvLayer {
    const std::size_t c = f.layers().size();
    if (l < c) return f.layers()[l];
    if (l == c) {
      const std::size_t cq = f.output_channels();
      std::vector<Entry> e;
      for (std::size_t ch = 0; ch < cq; ++ch) {
        e.push_back(E(0, 0, ch, f.readout_weights()(0, ch)));
        e.push_back(E(1, 0, ch, -f.readout_weights()(0, ch)));
      }
      return {ConvFilter(2, 1, cq, e), first_row_bias(D, {f.readout_bias(), -f.readout_bias()})};
    }
    return {ConvFilter::identity(2), BiasMatrix(D, 2)};
  };
  ConvStack s;
  s.input_rows = D;
  s.input_channels = Cin;
  s.values = nets.size();
  for (std::size_t l = 0; l < Lmax; ++l) {
    std::vector<ConvLayer> subs;
    std::size_t out = 0, in = 0, size = 1;
    for (const auto& f : nets) {
      subs.push_back(sublayer(f, l));
      out += subs.back().filter.out_channels();
      in += subs.back().filter.in_channels();
      size = std::max(size, subs.back().filter.size());
    }
    if (l == 0) in = Cin;
    std::vector<Entry> e;
    BiasMatrix bias(D, out);
    std::size_t oo = 0, io = 0;
    for (const auto& sl : subs) {
      for (const auto& x : sl.filter.entries()) e.push_back(E(oo + x.out, x.tap, io + x.in, x.weight));
      for (std::size_t i = 0; i < D; ++i)
        for (std::size_t c = 0; c < sl.filter.out_channels(); ++c) bias(i, oo + c) = sl.bias(i, c);
      oo += sl.filter.out_channels();
      if (l > 0) io += sl.filter.in_channels();
    }
    s.layers.push_back({ConvFilter(out, size, in, std::move(e)), std::move(bias)});
  }
  s.envelope = {Lmax, J, Kmax, kappa, 0.0};
  for (const auto& f : nets) s.provenance.insert(s.provenance.end(), f.provenance().begin(), f.provenance().end());
  s.provenance.push_back(prov("stack", {{"count", nets.size()}, {"depth", Lmax}}));
  return s;
}

CnnNetwork cnn_lift_encoded_input(const CnnNetwork& g, std::size_t rows) {
  require_first_row(g, "lift");
  if (g.input_channels() != 1) throw ShapeError("lift: inner network must read a single channel");
  const std::size_t M = g.input_rows();
  std::vector<ConvLayer> layers;
  std::size_t cin = 1;
  for (std::size_t l = 0; l < g.layers().size(); ++l) {
    const ConvLayer& gl = g.layers()[l];
    const std::size_t cout = gl.filter.out_channels();
    std::vector<Entry> e;
    for (const auto& x : gl.filter.entries())
      for (std::size_t r = 0; r + x.tap < M; ++r) {
        const std::size_t src = r + x.tap;
        if (l == 0) {
          e.push_back(E(r * cout + x.out, 0, 2 * src, x.weight));
          e.push_back(E(r * cout + x.out, 0, 2 * src + 1, -x.weight));
        } else {
          e.push_back(E(r * cout + x.out, 0, src * cin + x.in, x.weight));
        }
      }
    std::vector<double> b(M * cout);
    for (std::size_t r = 0; r < M; ++r)
      for (std::size_t c = 0; c < cout; ++c) b[r * cout + c] = gl.bias(r, c);
    layers.push_back({ConvFilter(M * cout, 1, l == 0 ? 2 * M : M * cin, std::move(e)), first_row_bias(rows, b)});
    cin = cout;
  }
  const FeatureMap& w = g.readout_weights();
  FeatureMap ro(rows, g.layers().empty() ? 2 * M : M * cin);
  for (std::size_t r = 0; r < M; ++r)
    for (std::size_t c = 0; c < w.channels(); ++c) {
      if (g.layers().empty()) {
        ro(0, 2 * r) = w(r, 0);
        ro(0, 2 * r + 1) = -w(r, 0);
      } else {
        ro(0, r * cin + c) = w(r, c);
      }
    }
  const auto& ge = g.envelope();
  CnnEnvelope env{ge.depth, M * std::max(ge.channels, std::size_t{2}), 1, ge.conv_bound, ge.readout_bound};
  auto p = g.provenance();
  p.push_back(prov("lift_encoded_input", {{"M", M}}));
  return CnnNetwork(rows, 2 * M, std::move(layers), std::move(ro), g.readout_bias(), true, env, std::move(p));
}

CnnNetwork cnn_append(const ConvStack& s, const CnnNetwork& g) {
  if (g.input_rows() != s.input_rows || g.input_channels() != 2 * s.values)
    throw ShapeError("append: network does not read the stack's encoding");
  std::vector<ConvLayer> layers = s.layers;
  layers.insert(layers.end(), g.layers().begin(), g.layers().end());
  const auto& ge = g.envelope();
  CnnEnvelope env{s.envelope.depth + ge.depth, std::max(s.envelope.channels, ge.channels),
                  std::max(s.envelope.filter_size, ge.filter_size), std::max(s.envelope.conv_bound, ge.conv_bound),
                  ge.readout_bound};
  auto p = s.provenance;
  p.insert(p.end(), g.provenance().begin(), g.provenance().end());
  return CnnNetwork(s.input_rows, s.input_channels, std::move(layers), g.readout_weights(), g.readout_bias(), true, env,
                    std::move(p));
}

CnnNetwork cnn_rescale(const CnnNetwork& f, double alpha) {
  if (!(alpha >= 1.0) || !std::isfinite(alpha)) throw DomainError("rescale factor must be >= 1");
  const std::size_t Lc = f.layers().size();
  if (static_cast<double>(Lc) * std::log(alpha) > 700.0)
    throw EnvelopeError("rescale by " + std::to_string(alpha) + " over " + std::to_string(Lc) +
                        " layers overflows the readout");
  const double inv = 1.0 / alpha;
  std::vector<ConvLayer> layers;
  double bias_scale = 1.0, ro_scale = 1.0;
  for (const auto& l : f.layers()) {
    bias_scale *= inv;
    ro_scale *= alpha;
    layers.push_back({l.filter.scaled(inv), l.bias.scaled(bias_scale)});
  }
  FeatureMap ro = f.readout_weights();
  for (double& v : ro.values()) v *= ro_scale;
  const auto& e = f.envelope();
  CnnEnvelope env{e.depth, e.channels, e.filter_size, e.conv_bound * inv, e.readout_bound * ro_scale};
  auto p = f.provenance();
  p.push_back(prov("rescale", {{"alpha", alpha}, {"layers", Lc}}));
  return CnnNetwork(f.input_rows(), f.input_channels(), std::move(layers), std::move(ro), f.readout_bias(),
                    f.first_row_only(), env, std::move(p));
}

CnnEnvelope envelope_hull(std::span<const CnnNetwork> nets) {
  CnnEnvelope h{};
  for (const auto& f : nets) {
    const auto& e = f.envelope();
    h.depth = std::max(h.depth, e.depth);
    h.channels = std::max(h.channels, e.channels);
    h.filter_size = std::max(h.filter_size, e.filter_size);
    h.conv_bound = std::max(h.conv_bound, e.conv_bound);
    h.readout_bound = std::max(h.readout_bound, e.readout_bound);
  }
  return h;
}

ConvResNet cnn_sum_to_resnet(std::span<const CnnNetwork> nets, const CnnEnvelope& shared) {
  const double k1 = shared.conv_bound, k2 = shared.readout_bound;
  if (!(k1 > 0.0) || !(k2 > 0.0)) throw DomainError("shared envelope needs positive parameter bounds");
  const std::size_t C2 = 3;
  std::size_t D = nets.empty() ? 1 : nets[0].input_rows();
  std::vector<ResidualBlock> blocks;
  for (std::size_t m = 0; m < nets.size(); ++m) {
    const CnnNetwork& f = nets[m];
    require_first_row(f, "sum_to_resnet");
    if (f.input_rows() != D || f.input_channels() != 1) throw ShapeError("sum_to_resnet: networks read different inputs");
    SizeAudit a = audit(f.with_envelope(shared));
    if (!a.pass()) {
      for (const auto& fld : a.fields)
        if (!fld.pass)
          throw EnvelopeError("network " + std::to_string(m) + " exceeds shared envelope on " + fld.name + " (" +
                              std::to_string(fld.measured) + " > " + std::to_string(fld.declared) + ")");
    }
    ResidualBlock b;
    b.layers = f.layers();
    if (!b.layers.empty()) {
      auto& first = b.layers.front().filter;
      first = first.padded(first.out_channels(), first.size(), C2);
    }
    const std::size_t cq = b.layers.empty() ? C2 : f.output_channels();
    std::vector<Entry> e;
    for (std::size_t c = 0; c < f.output_channels(); ++c) {
      // (w / k2) * k1 rather than w * (k1 / k2) keeps |weight| <= k1 under rounding
      double w = f.readout_weights()(0, c) / k2 * k1;
      e.push_back(E(1, 0, c, w));
      e.push_back(E(2, 0, c, -w));
    }
    b.layers.push_back(
        {ConvFilter(C2, 1, cq, std::move(e)), first_row_bias(D, {0.0, f.readout_bias() / k2 * k1, -(f.readout_bias() / k2 * k1)})});
    b.provenance = f.provenance().empty() ? Provenance{"network"} : f.provenance().back();
    b.provenance.parameters["index"] = m;
    blocks.push_back(std::move(b));
  }
  FeatureMap ro(D, C2);
  ro(0, 1) = k2 / k1;
  ro(0, 2) = -(k2 / k1);
  ResNetEnvelope env{nets.size(), shared.depth, std::max(shared.channels, C2), std::max<std::size_t>(shared.filter_size, 1),
                     k1, k1 < 1.0 ? k2 / k1 : k2};
  std::vector<Provenance> p{prov("sum_to_resnet", {{"M", nets.size()}, {"kappa1", k1}, {"kappa2", k2}})};
  return ConvResNet(D, C2, std::move(blocks), std::move(ro), 0.0, env, std::move(p));
}

}  // namespace besovnet

namespace besovnet {

ConvResNet resnet_append_scalar_block(const ConvResNet& net, const MlpNetwork& g, const Provenance& p) {
  if (g.input_dim() != 1 || g.output_dim() != 1) throw ShapeError("appended block must map a scalar to a scalar");
  const std::size_t D = net.input_rows(), C0 = net.padded_channels(), P = C0 + 2;
  const FeatureMap& ro = net.readout_weights();
  for (std::size_t i = 1; i < ro.rows(); ++i)
    for (std::size_t c = 0; c < ro.channels(); ++c)
      if (ro(i, c) != 0.0) throw DomainError("append_scalar_block: readout is not first-row-only");

  std::vector<ResidualBlock> blocks;
  for (const auto& b : net.blocks()) {
    ResidualBlock nb = b;
    auto& first = nb.layers.front().filter;
    first = first.padded(first.out_channels(), first.size(), P);
    auto& last = nb.layers.back();
    last.filter = last.filter.padded(P, last.filter.size(), last.filter.in_channels());
    last.bias = last.bias.padded(P);
    blocks.push_back(std::move(nb));
  }

  // the scalar read by g is sum_c ro(0,c) z(0,c) + readout_bias; fold it into the first layer.
  // a large readout stays in the readout: with R a power of two, g runs on y/R with biases b/R
  // (positive homogeneity) and the new readout is +-R
  double romax = 0;
  for (std::size_t c = 0; c < C0; ++c) romax = std::max(romax, std::abs(ro(0, c)));
  const double R = romax > 1.0 ? std::exp2(std::ceil(std::log2(romax))) : 1.0;
  const auto& ls = g.layers();
  ResidualBlock blk;
  double mag = 0;
  std::size_t in_ch = P;
  for (std::size_t n = 0; n < ls.size(); ++n) {
    const DenseLayer& L = ls[n];
    const bool last = n + 1 == ls.size();
    const std::size_t out_ch = last ? P : L.out;
    std::vector<Entry> e;
    std::vector<double> bias(out_ch, 0.0);
    for (std::size_t r = 0; r < L.out; ++r) {
      double b = L.bias[r] / R;
      if (n == 0) b += dense_w(L, r, 0) * (net.readout_bias() / R);
      const double sign_rows = last ? 2 : 1;
      for (int s = 0; s < sign_rows; ++s) {
        const double sg = s == 0 ? 1.0 : -1.0;
        const std::size_t j = last ? C0 + s : r;
        if (n == 0) {
          for (std::size_t c = 0; c < C0; ++c)
            if (ro(0, c) != 0.0) e.push_back(E(j, 0, c, sg * dense_w(L, r, 0) * (ro(0, c) / R)));
        } else {
          for (std::size_t c = 0; c < L.in; ++c)
            if (dense_w(L, r, c) != 0.0) e.push_back(E(j, 0, c, sg * dense_w(L, r, c)));
        }
        bias[j] = sg * b;
      }
    }
    for (const auto& x : e) mag = std::max(mag, std::abs(x.weight));
    for (double b : bias) mag = std::max(mag, std::abs(b));
    std::sort(e.begin(), e.end(), [](const Entry& a, const Entry& b) {
      return std::tie(a.out, a.tap, a.in) < std::tie(b.out, b.tap, b.in);
    });
    blk.layers.push_back({ConvFilter(out_ch, 1, in_ch, std::move(e)), first_row_bias(D, bias)});
    in_ch = out_ch;
  }
  blk.provenance = p;
  blocks.push_back(std::move(blk));

  FeatureMap nro(D, P);
  nro(0, C0) = R;
  nro(0, C0 + 1) = -R;
  ResNetEnvelope env = net.envelope();
  env.blocks += 1;
  env.depth = std::max(env.depth, ls.size());
  std::size_t width = P;
  for (const auto& L : ls) width = std::max(width, L.out);
  env.channels = std::max(env.channels, width);
  env.filter_size = std::max<std::size_t>(env.filter_size, 1);
  env.conv_bound = std::max(env.conv_bound, mag);
  env.readout_bound = std::max(env.readout_bound, R);
  env.output_bound = g.envelope().clip;
  auto prov_list = net.provenance();
  prov_list.push_back(p);
  return ConvResNet(D, P, std::move(blocks), std::move(nro), 0.0, env, std::move(prov_list));
}

}  // namespace besovnet
