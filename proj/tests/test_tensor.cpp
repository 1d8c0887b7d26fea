#include <doctest.h>

#include <cmath>
#include <random>

#include "besovnet/autodiff.hpp"
#include "besovnet/tensor.hpp"
#include "oracles.hpp"

using namespace besovnet;

TEST_CASE("identity filter leaves the map alone") {
  std::mt19937_64 rng(1);
  FeatureMap z = oracle::random_map(rng, 6, 3);
  CHECK(convolve(ConvFilter::identity(3), z) == z);
}

TEST_CASE("two-tap sum with bottom padding") {
  ConvFilter f = ConvFilter::dense(1, 2, 1, std::vector<double>{1, 1});
  FeatureMap y = convolve(f, FeatureMap::column(std::vector<double>{1, 2, 3}));
  CHECK(y(0, 0) == 3);
  CHECK(y(1, 0) == 5);
  CHECK(y(2, 0) == 3);
}

TEST_CASE("sparse kernel agrees with the dense triple loop") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    ConvFilter f = oracle::random_filter(rng, 4, 3, 2, 1.0, rep % 2 ? 0.5 : 1.0);
    FeatureMap z = oracle::random_map(rng, 5, 2);
    FeatureMap a = convolve(f, z), b = convolve_reference(f, z);
    CHECK(a == b);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(a(i, j) == doctest::Approx(oracle::naive_conv_entry(f, z, i, j)).epsilon(1e-15));
  }
}

TEST_CASE("convolution rejects mismatched shapes") {
  ConvFilter f(2, 2, 3);
  CHECK_THROWS_AS(convolve(f, FeatureMap(4, 2)), ShapeError);
  CHECK_THROWS_AS(convolve(ConvFilter(1, 5, 1), FeatureMap(4, 1)), ShapeError);
}

TEST_CASE("convolution is linear") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    ConvFilter f = oracle::random_filter(rng, 3, 2, 2);
    FeatureMap z1 = oracle::random_map(rng, 6, 2), z2 = oracle::random_map(rng, 6, 2);
    double a = 0.7, b = -1.3;
    FeatureMap comb(6, 2);
    for (std::size_t t = 0; t < 12; ++t) comb.values()[t] = a * z1.values()[t] + b * z2.values()[t];
    FeatureMap lhs = convolve(f, comb), y1 = convolve(f, z1), y2 = convolve(f, z2);
    for (std::size_t t = 0; t < lhs.values().size(); ++t) {
      double rhs = a * y1.values()[t] + b * y2.values()[t];
      CHECK(std::abs(lhs.values()[t] - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
    }
  }
}

TEST_CASE("relu basics and power-of-two homogeneity") {
  FeatureMap z(3, 1, {-2, 0, 3});
  FeatureMap r = relu(z);
  CHECK(r(0, 0) == 0);
  CHECK(r(1, 0) == 0);
  CHECK(r(2, 0) == 3);
  std::mt19937_64 rng(5);
  FeatureMap x = oracle::random_map(rng, 4, 3);
  FeatureMap sx = x;
  for (auto& v : sx.values()) v *= 8.0;
  FeatureMap lhs = relu(sx), rhs = relu(x);
  for (auto& v : rhs.values()) v *= 8.0;
  CHECK(lhs == rhs);
}

TEST_CASE("conv block") {
  std::mt19937_64 rng(11);
  FeatureMap z = relu(oracle::random_map(rng, 4, 2));
  std::vector<ConvFilter> fs{ConvFilter::identity(2)};
  std::vector<BiasMatrix> bs{BiasMatrix(4, 2)};
  CHECK(conv_block_apply(fs, bs, z) == z);

  std::vector<ConvFilter> zf{ConvFilter(2, 1, 2)};
  std::vector<BiasMatrix> cb{BiasMatrix::per_channel(4, std::vector<double>{0.5, 2.0})};
  FeatureMap c = conv_block_apply(zf, cb, z);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(c(i, 0) == 0.5);
    CHECK(c(i, 1) == 2.0);
  }

  std::vector<ConvFilter> two{oracle::random_filter(rng, 3, 2, 2, 0.5), oracle::random_filter(rng, 2, 3, 3, 0.5)};
  std::vector<BiasMatrix> tb{BiasMatrix(oracle::random_map(rng, 4, 3, 0.1)), BiasMatrix(oracle::random_map(rng, 4, 2, 0.1))};
  FeatureMap both = conv_block_apply(two, tb, z);
  FeatureMap step = conv_block_apply(std::span(two).subspan(0, 1), std::span(tb).subspan(0, 1), z);
  step = conv_block_apply(std::span(two).subspan(1, 1), std::span(tb).subspan(1, 1), step);
  CHECK(both == step);

  std::vector<BiasMatrix> one{BiasMatrix(4, 3)};
  CHECK_THROWS_AS(conv_block_apply(two, one, z), ShapeError);
}

TEST_CASE("readout") {
  std::mt19937_64 rng(13);
  FeatureMap q = oracle::random_map(rng, 4, 3);
  CHECK(readout(FeatureMap(4, 3), 1.25, q) == 1.25);
  FeatureMap w(4, 3);
  w(0, 0) = 1.0;
  CHECK(readout(w, 0.0, q) == q(0, 0));
  FeatureMap rw = oracle::random_map(rng, 4, 3);
  double expect = 0.0;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) expect += rw(i, c) * q(i, c);
  CHECK(readout(rw, 0.3, q) == doctest::Approx(expect + 0.3).epsilon(1e-14));
  CHECK_THROWS_AS(readout(FeatureMap(3, 3), 0.0, q), ShapeError);
}

TEST_CASE("batched layer matches the per-map path bitwise") {
  std::mt19937_64 rng(17);
  ConvLayer l1{oracle::random_filter(rng, 5, 2, 1, 1.0, 0.7), BiasMatrix(oracle::random_map(rng, 4, 5, 0.3))};
  ConvLayer l2{oracle::random_filter(rng, 3, 3, 5, 1.0, 0.6), BiasMatrix(oracle::random_map(rng, 4, 3, 0.3))};
  std::vector<ConvLayer> layers{l1, l2};
  std::vector<double> pts(4 * 37);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : pts) v = u(rng);
  FeatureBatch out = conv_block_apply(std::span<const ConvLayer>(layers), FeatureBatch::columns(pts, 4));
  FeatureMap w = oracle::random_map(rng, 4, 3);
  auto ys = readout(w, 0.1, out);
  for (std::size_t n = 0; n < 37; ++n) {
    FeatureMap single = conv_block_apply(std::span<const ConvLayer>(layers),
                                         FeatureMap::column(std::span<const double>(pts).subspan(4 * n, 4)));
    CHECK(out.item(n) == single);
    CHECK(ys[n] == readout(w, 0.1, single));
  }
}

namespace {

struct SmallNet {
  ParameterSet params;
  ParamId f1, b1, f2, b2, f3, b3, w, b;
};

SmallNet random_small_net(std::mt19937_64& rng, std::size_t D) {
  std::normal_distribution<double> g(0.0, 0.6);
  auto vals = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    return v;
  };
  SmallNet n;
  n.f1 = n.params.add("f1", {3, 2, 1}, vals(6));
  n.b1 = n.params.add("b1", {D, 3}, vals(3 * D));
  n.f2 = n.params.add("f2", {3, 2, 3}, vals(18));
  n.b2 = n.params.add("b2", {D, 3}, vals(3 * D));
  n.f3 = n.params.add("f3", {2, 1, 3}, vals(6));
  n.b3 = n.params.add("b3", {D, 2}, vals(2 * D));
  n.w = n.params.add("w", {D, 2}, vals(2 * D));
  n.b = n.params.add("b", {1}, vals(1));
  return n;
}

NodeId small_forward(const SmallNet& n, Tape& t, NodeId x) {
  NodeId z = t.relu(t.add_bias(t.conv(n.f1, x), n.b1));
  z = t.relu(t.add_bias(t.conv(n.f2, z), n.b2));
  z = t.relu(t.add_bias(t.conv(n.f3, z), n.b3));
  return t.readout(n.w, n.b, z);
}

double min_kink_distance(const SmallNet& n, const FeatureMap& x) {
  Tape t(n.params);
  small_forward(n, t, t.input(x));
  double m = INFINITY;
  for (std::size_t idx = 0; idx < t.size(); ++idx) {
    // pre-activations are the nodes feeding a relu: every third node after the input
    if (idx % 3 == 2)
      for (double v : t.value({idx}).values()) m = std::min(m, std::abs(v));
  }
  return m;
}

}  // namespace

TEST_CASE("gradient of a linear map is its coefficients") {
  ParameterSet ps;
  ParamId w = ps.add("w", {3, 1}, {0.5, -2.0, 1.5});
  ParamId b = ps.add("b", {1}, {0.25});
  FeatureMap x = FeatureMap::column(std::vector<double>{1.0, 2.0, -3.0});
  Gradient g = grad([&](Tape& t, NodeId in) { return t.readout(w, b, in); }, x, ps);
  CHECK(g.value == doctest::Approx(0.5 - 4.0 - 4.5 + 0.25));
  CHECK(g.per_parameter[0] == std::vector<double>{1.0, 2.0, -3.0});
  CHECK(g.per_parameter[1][0] == 1.0);
}

TEST_CASE("negative pre-activation blocks the gradient") {
  ParameterSet ps;
  ParamId f = ps.add("f", {1, 1, 1}, {1.0});
  ParamId bias = ps.add("bias", {2, 1}, {-5.0, -5.0});
  ParamId w = ps.add("w", {2, 1}, {1.0, 1.0});
  ParamId b = ps.add("b", {1}, {0.0});
  FeatureMap x = FeatureMap::column(std::vector<double>{1.0, 2.0});
  Gradient g = grad([&](Tape& t, NodeId in) { return t.readout(w, b, t.relu(t.add_bias(t.conv(f, in), bias))); }, x, ps);
  CHECK(g.per_parameter[0][0] == 0.0);
  CHECK(g.per_parameter[1] == std::vector<double>{0.0, 0.0});
  CHECK(g.per_parameter[2] == std::vector<double>{0.0, 0.0});
}

TEST_CASE("reverse mode agrees with central differences") {
  std::mt19937_64 rng(23);
  const std::size_t D = 5;
  int checked = 0;
  for (int rep = 0; rep < 10; ++rep) {
    SmallNet n = random_small_net(rng, D);
    FeatureMap x = oracle::random_map(rng, D, 1);
    if (min_kink_distance(n, x) < 1e-3) continue;
    Gradient g = grad([&](Tape& t, NodeId in) { return small_forward(n, t, in); }, x, n.params);
    auto flat = n.params.flat();
    std::size_t off = 0;
    for (std::size_t p = 0; p < n.params.count(); ++p)
      for (std::size_t q = 0; q < g.per_parameter[p].size(); ++q, ++off) {
        const double h = 1e-5;
        auto eval = [&](double delta) {
          auto v = flat;
          v[off] += delta;
          SmallNet m = n;
          m.params.set_flat(v);
          Tape t(m.params);
          return t.value(small_forward(m, t, t.input(x)))(0, 0);
        };
        double fd = (eval(h) - eval(-h)) / (2 * h);
        double an = g.per_parameter[p][q];
        CHECK(std::abs(fd - an) <= 1e-5 * std::max(1.0, std::abs(an)));
        ++checked;
      }
  }
  CHECK(checked > 100);
}

TEST_CASE("replay detects a tampered parameter set") {
  ParameterSet ps;
  ParamId w = ps.add("w", {2, 1}, {1.0, 1.0});
  ParamId b = ps.add("b", {1}, {0.0});
  Tape t(ps);
  t.readout(w, b, t.input(FeatureMap::column(std::vector<double>{1.0, 2.0})));
  CHECK_NOTHROW(t.replay());
  ps.values(w)[0] = 3.0;
  CHECK_THROWS_AS(t.replay(), ConsistencyError);
}

TEST_CASE("forward evaluation is deterministic") {
  std::mt19937_64 rng(29);
  SmallNet n = random_small_net(rng, 4);
  FeatureMap x = oracle::random_map(rng, 4, 1);
  Tape a(n.params), b(n.params);
  CHECK(a.value(small_forward(n, a, a.input(x))) == b.value(small_forward(n, b, b.input(x))));
}
