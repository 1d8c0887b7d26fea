#include <doctest.h>

#include <cmath>
#include <random>

#include "besovnet/calculus.hpp"
#include "oracles.hpp"

using namespace besovnet;

TEST_CASE("mlp realized as cnn") {
  std::mt19937_64 rng(31);
  DenseLayer id{1, 3, {1, 0, 0}, {0}};
  MlpNetwork sel({id}, {1, 3, 1.0}, {"selector"});
  CnnNetwork c = mlp_to_cnn(sel, 3, 2);
  CHECK(audit(c).pass());
  CHECK(c.envelope().depth == 4);
  for (int n = 0; n < 100; ++n) {
    auto x = oracle::random_point(rng, 3);
    CHECK(std::abs(eval_cnn(c, x) - x[0]) <= 1e-12);
  }
  for (std::size_t D : {1, 2, 3, 7, 16})
    for (std::size_t L : {1, 2, 4, 6}) {
      MlpNetwork m = oracle::random_mlp(rng, D, L, 8);
      std::size_t K = D == 1 ? 1 : std::min<std::size_t>(D, 3);
      CnnNetwork cn = mlp_to_cnn(m, D, K);
      CHECK(audit(cn).pass());
      CHECK(cn.envelope().depth == L + D);
      for (std::size_t i = 1; i < D; ++i)
        for (std::size_t ch = 0; ch < cn.readout_weights().channels(); ++ch) CHECK(cn.readout_weights()(i, ch) == 0.0);
      for (int n = 0; n < 100; ++n) {
        auto x = oracle::random_point(rng, D);
        CHECK(std::abs(eval_cnn(cn, x) - oracle::mlp_forward(m, x)) <= 1e-9);
      }
    }
  DenseLayer z{1, 2, {0, 0}, {0}};
  CnnNetwork zc = mlp_to_cnn(MlpNetwork({z}, {1, 2, 1.0}, {"zero"}), 2, 2);
  CHECK(eval_cnn(zc, std::vector<double>{0.3, -0.9}) == 0.0);
  CHECK_THROWS_AS(mlp_to_cnn(sel, 3, 4), DomainError);
  CHECK_THROWS_AS(mlp_to_cnn(sel, 3, 1), DomainError);
}

TEST_CASE("composition evaluates f2 after f1") {
  std::mt19937_64 rng(37);
  // identity gate: relu(x) - relu(-x) as a two-layer mlp on a scalar
  MlpNetwork idm({DenseLayer{2, 1, {1, -1}, {0, 0}}, DenseLayer{1, 2, {1, -1}, {0}}}, {2, 2, 1.0}, {"identity"});
  CnnNetwork idc = mlp_to_cnn(idm, 1, 1);
  for (int rep = 0; rep < 20; ++rep) {
    std::size_t D = 2 + rep % 10;
    CnnNetwork f1 = oracle::random_cnn(rng, D, 1 + rep % 5, 8, 3);
    CnnNetwork f2 = oracle::random_cnn(rng, 1, rep % 5, 8, 1);
    CnnNetwork c = cnn_compose(f1, f2);
    CnnNetwork ci = cnn_compose(f1, idc);
    CHECK(audit(c).pass());
    CHECK(c.envelope().depth == f1.depth() + f2.depth());
    for (int n = 0; n < 100; ++n) {
      auto x = oracle::random_point(rng, D);
      double y1 = eval_cnn(f1, x);
      CHECK(std::abs(eval_cnn(c, x) - eval_cnn(f2, std::vector<double>{y1})) <= 1e-9);
      CHECK(std::abs(eval_cnn(ci, x) - y1) <= 1e-12);
    }
  }
  FeatureMap w(3, 1);
  CnnNetwork constant(3, 1, {}, w, 0.4, true, {1, 1, 1, 1, 1}, {});
  CnnNetwork f2 = oracle::random_cnn(rng, 1, 3, 4, 1);
  CnnNetwork cc = cnn_compose(constant, f2);
  CHECK(eval_cnn(cc, std::vector<double>{5, -2, 1}) == doctest::Approx(eval_cnn(f2, std::vector<double>{0.4})).epsilon(1e-13));

  FeatureMap bad(3, 1);
  bad(1, 0) = 1.0;
  CnnNetwork nf(3, 1, {}, bad, 0.0, false, {1, 1, 1, 1, 1}, {});
  CHECK_THROWS_AS(cnn_compose(nf, f2), DomainError);
}

TEST_CASE("stacking encodes both outputs") {
  std::mt19937_64 rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    std::size_t D = 2 + rep % 14;
    CnnNetwork f1 = oracle::random_cnn(rng, D, rep % 6, 8, 4);
    CnnNetwork f2 = oracle::random_cnn(rng, D, (rep * 7) % 6, 8, 4);
    ConvStack s = cnn_stack(f1, f2);
    CHECK(s.layers.size() == std::max(f1.depth(), f2.depth()));
    CHECK(s.envelope.channels <= std::max<std::size_t>(f1.envelope().channels, 2) + std::max<std::size_t>(f2.envelope().channels, 2));
    for (int n = 0; n < 100; ++n) {
      auto x = oracle::random_point(rng, D);
      auto v = eval_stack(s, x).decode();
      CHECK(std::abs(v[0] - eval_cnn(f1, x)) <= 1e-9);
      CHECK(std::abs(v[1] - eval_cnn(f2, x)) <= 1e-9);
    }
    ConvStack same = cnn_stack(f1, f1);
    auto x = oracle::random_point(rng, D);
    auto v = eval_stack(same, x).decode();
    CHECK(v[0] == v[1]);
  }
  CnnNetwork f1 = oracle::random_cnn(rng, 4, 2, 5, 2);
  CnnNetwork zero(4, 1, {}, FeatureMap(4, 1), 0.0, true, {1, 1, 1, 1, 1}, {});
  ConvStack s = cnn_stack(f1, zero);
  auto m = eval_stack(s, oracle::random_point(rng, 4)).map;
  CHECK(m(0, 2) == 0.0);
  CHECK(m(0, 3) == 0.0);
}

TEST_CASE("lifting reads the encoded vector") {
  std::mt19937_64 rng(43);
  FeatureMap w(3, 1);
  w(0, 0) = 1.0;
  CnnNetwork pick(3, 1, {}, w, 0.0, true, {1, 1, 1, 1, 1}, {});
  CnnNetwork lifted = cnn_lift_encoded_input(pick, 5);
  auto enc = PlusMinusEncoding::encode(std::vector<double>{-0.75, 2.0, 0.5}, 5);
  CHECK(eval_cnn(lifted, enc.map) == -0.75);
  for (int rep = 0; rep < 20; ++rep) {
    std::size_t M = 1 + rep % 6, D = 1 + rep % 5;
    CnnNetwork g = oracle::random_cnn(rng, M, rep % 5, 6, 3);
    CnnNetwork lg = cnn_lift_encoded_input(g, D);
    CHECK(audit(lg).pass());
    for (int n = 0; n < 100; ++n) {
      auto x = oracle::random_point(rng, M);
      CHECK(eval_cnn(lg, PlusMinusEncoding::encode(x, D).map) == eval_cnn(g, x));
    }
  }
  CnnNetwork zero(2, 1, {}, FeatureMap(2, 1), 0.0, true, {1, 1, 1, 1, 1}, {});
  CHECK(eval_cnn(cnn_lift_encoded_input(zero, 3), PlusMinusEncoding::encode(std::vector<double>{1, -1}, 3).map) == 0.0);
}

TEST_CASE("rescaling preserves the function") {
  std::mt19937_64 rng(47);
  for (int rep = 0; rep < 20; ++rep) {
    std::size_t D = 1 + rep % 16;
    CnnNetwork f = oracle::random_cnn(rng, D, 1 + rep % 5, 8, 4);
    CnnNetwork r1 = cnn_rescale(f, 1.0), r2 = cnn_rescale(f, 2.0), r3 = cnn_rescale(f, 3.0);
    CHECK(r1.layers() == f.layers());
    CHECK(r1.readout_weights() == f.readout_weights());
    for (const auto* r : {&r2, &r3}) CHECK(audit(*r).pass());
    CHECK(r2.envelope().conv_bound == f.envelope().conv_bound / 2);
    for (int n = 0; n < 100; ++n) {
      auto x = oracle::random_point(rng, D);
      double y = eval_cnn(f, x);
      CHECK(eval_cnn(r2, x) == y);
      CHECK(std::abs(eval_cnn(r3, x) - y) <= 1e-9);
    }
  }
  CHECK_THROWS_AS(cnn_rescale(oracle::random_cnn(rng, 2, 1, 2, 1), 0.5), DomainError);
}

TEST_CASE("sum into a residual network") {
  std::mt19937_64 rng(53);
  for (int rep = 0; rep < 20; ++rep) {
    std::size_t D = 1 + rep % 16;
    std::vector<CnnNetwork> nets;
    for (int m = 0; m < 3; ++m) nets.push_back(oracle::random_cnn(rng, D, rep % 6, 8, 4));
    CnnEnvelope shared = envelope_hull(nets);
    ConvResNet r = cnn_sum_to_resnet(nets, shared);
    ConvResNet r12 = cnn_sum_to_resnet(std::span(nets).subspan(0, 2), shared);
    ConvResNet r3 = cnn_sum_to_resnet(std::span(nets).subspan(2, 1), shared);
    ConvResNet single = cnn_sum_to_resnet(std::span(nets).subspan(0, 1), envelope_hull(std::span(nets).subspan(0, 1)));
    CHECK(audit(r).pass());
    CHECK(r.readout_weights().norm_inf() <= shared.readout_bound * std::max(1.0, 1.0 / shared.conv_bound));
    for (int n = 0; n < 100; ++n) {
      auto x = oracle::random_point(rng, D);
      double expect = eval_cnn(nets[0], x) + eval_cnn(nets[1], x) + eval_cnn(nets[2], x);
      double got = eval_resnet(r, x);
      CHECK(std::abs(got - expect) <= 1e-9);
      CHECK(std::abs(got - eval_resnet(r12, x) - eval_resnet(r3, x)) <= 1e-9);
      CHECK(std::abs(eval_resnet(single, x) - eval_cnn(nets[0], x)) <= 1e-9);
    }
  }
  std::vector<CnnNetwork> zeros(2, CnnNetwork(3, 1, {}, FeatureMap(3, 1), 0.0, true, {1, 1, 1, 1, 1}, {}));
  ConvResNet z = cnn_sum_to_resnet(zeros, envelope_hull(zeros));
  CHECK(eval_resnet(z, std::vector<double>{1, 2, 3}) == 0.0);

  std::vector<CnnNetwork> big{oracle::random_cnn(rng, 3, 2, 4, 2)};
  CnnEnvelope tight = big[0].envelope();
  tight.conv_bound *= 0.5;
  CHECK_THROWS_AS(cnn_sum_to_resnet(big, tight), EnvelopeError);
}

TEST_CASE("scalar block appended to a residual network") {
  std::mt19937_64 rng(59);
  for (int rep = 0; rep < 20; ++rep) {
    std::size_t D = 1 + rep % 8;
    std::vector<CnnNetwork> nets;
    for (int m = 0; m < 2; ++m) nets.push_back(oracle::random_cnn(rng, D, 1 + rep % 4, 6, 3));
    ConvResNet r = cnn_sum_to_resnet(nets, envelope_hull(nets));
    MlpNetwork g = oracle::random_mlp(rng, 1, 1 + rep % 4, 5);
    ConvResNet a = resnet_append_scalar_block(r, g, {"head"});
    ConvResNet a2 = resnet_append_scalar_block(a, g, {"head2"});
    CHECK(audit(a).pass());
    CHECK(audit(a2).pass());
    CHECK(a.blocks().size() == r.blocks().size() + 1);
    for (int n = 0; n < 100; ++n) {
      auto x = oracle::random_point(rng, D);
      double inner = eval_resnet(r, x);
      double want = oracle::mlp_forward(g, {inner});
      CHECK(std::abs(eval_resnet(a, x) - want) <= 1e-9);
      CHECK(std::abs(eval_resnet(a2, x) - oracle::mlp_forward(g, {want})) <= 1e-9);
    }
    auto pts = oracle::random_point(rng, 7 * D);
    auto b = eval_resnet_batch(a, pts);
    for (std::size_t n = 0; n < 7; ++n) CHECK(b[n] == eval_resnet(a, std::span<const double>(pts).subspan(n * D, D)));
  }
  MlpNetwork two({DenseLayer{1, 2, {1, 1}, {0}}}, {1, 2, 1.0}, {"pair"});
  std::vector<CnnNetwork> one{oracle::random_cnn(rng, 2, 1, 2, 2)};
  CHECK_THROWS_AS(resnet_append_scalar_block(cnn_sum_to_resnet(one, envelope_hull(one)), two, {"bad"}), ShapeError);
}

TEST_CASE("a large readout stays out of the appended block's weights") {
  std::mt19937_64 rng(61);
  std::vector<CnnNetwork> nets{oracle::random_cnn(rng, 3, 2, 4, 2)};
  CnnEnvelope e = envelope_hull(nets);
  e.conv_bound = std::max(e.conv_bound, 1.0);
  e.readout_bound = 3e40;
  ConvResNet r = cnn_sum_to_resnet(nets, e);
  // g(y) = relu(y - 0.25) - relu(-y - 0.25), a dead zone
  MlpNetwork g({DenseLayer{2, 1, {1, -1}, {-0.25, -0.25}}, DenseLayer{1, 2, {1, -1}, {0}}}, {2, 2, 1.0}, {"deadzone"});
  ConvResNet a = resnet_append_scalar_block(r, g, {"head"});
  CHECK(audit(a).pass());
  CHECK(a.envelope().conv_bound <= std::max(r.envelope().conv_bound, 1.0));
  const double R = a.readout_weights()(0, r.padded_channels());
  CHECK(R == std::exp2(std::round(std::log2(R))));
  CHECK(R >= 3e40 / e.conv_bound);
  for (int n = 0; n < 100; ++n) {
    auto x = oracle::random_point(rng, 3);
    const double y = eval_resnet(r, x);
    CHECK(std::abs(eval_resnet(a, x) - oracle::mlp_forward(g, {y})) <= 1e-9 * std::max(1.0, std::abs(y)));
  }
}
