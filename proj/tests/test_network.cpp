#include <doctest.h>

#include <random>

#include "besovnet/serialize.hpp"
#include "oracles.hpp"

using namespace besovnet;

namespace {

MlpNetwork random_mlp(std::mt19937_64& rng, std::vector<std::size_t> widths) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<DenseLayer> ls;
  for (std::size_t n = 0; n + 1 < widths.size(); ++n) {
    DenseLayer l{widths[n + 1], widths[n]};
    l.weights.resize(l.out * l.in);
    l.bias.resize(l.out);
    for (auto& v : l.weights) v = u(rng);
    for (auto& v : l.bias) v = u(rng);
    ls.push_back(l);
  }
  return MlpNetwork(ls, {widths.size() - 1, 8, 1.0}, {"random"});
}

CnnNetwork random_cnn(std::mt19937_64& rng, std::size_t D) {
  std::vector<ConvLayer> ls{{oracle::random_filter(rng, 4, 2, 1), BiasMatrix(oracle::random_map(rng, D, 4, 0.2))},
                            {oracle::random_filter(rng, 3, 3, 4), BiasMatrix(oracle::random_map(rng, D, 3, 0.2))}};
  FeatureMap w(D, 3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t c = 0; c < 3; ++c) w(0, c) = u(rng);
  return CnnNetwork(D, 1, ls, w, 0.3, true, {3, 4, 3, 1.0, 1.0}, {{"random", {{"seed", 1}}}});
}

}  // namespace

TEST_CASE("mlp forward pass") {
  DenseLayer id{2, 2, {1, 0, 0, 1}, {0, 0}};
  MlpNetwork net({id}, {1, 2, 1.0}, {"identity"});
  CHECK(eval_mlp(net, std::vector<double>{-3.0, 4.0}) == std::vector<double>{-3.0, 4.0});

  std::mt19937_64 rng(2);
  MlpNetwork r = random_mlp(rng, {3, 5, 1});
  std::uniform_real_distribution<double> u(-1, 1);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> x{u(rng), u(rng), u(rng)};
    CHECK(eval_mlp(r, x)[0] == doctest::Approx(oracle::mlp_forward(r, x)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(eval_mlp(r, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("two-relu clip at level two") {
  const double F = 2.0;
  DenseLayer l1{1, 1, {-1}, {F}};
  DenseLayer l2{1, 1, {-1}, {2 * F}};
  DenseLayer l3{1, 1, {1}, {-F}};
  MlpNetwork g({l1, l2, l3}, {3, 1, 4.0}, {"clip"});
  CHECK(eval_mlp(g, std::vector<double>{5.0})[0] == 2.0);
}

TEST_CASE("cnn evaluation") {
  FeatureMap w(3, 1);
  CnnNetwork zero(3, 1, {}, w, 0.0, true, {1, 1, 1, 1, 1}, {});
  CHECK(eval_cnn(zero, std::vector<double>{1, 2, 3}) == 0.0);

  FeatureMap sel(3, 1);
  sel(0, 0) = 2.5;
  CnnNetwork one(3, 1, {{ConvFilter::identity(1), BiasMatrix(3, 1)}}, sel, 0.0, true, {2, 1, 1, 1, 2.5}, {});
  CHECK(eval_cnn(one, std::vector<double>{-1.5, 2, 3}) == 0.0);
  CHECK(eval_cnn(one, std::vector<double>{1.5, 2, 3}) == 1.5 * 2.5);
  CHECK_THROWS_AS(eval_cnn(one, std::vector<double>{1, 2}), ShapeError);

  FeatureMap bad(3, 1);
  bad(1, 0) = 1.0;
  CHECK_THROWS_AS(CnnNetwork(3, 1, {}, bad, 0.0, true, {}, {}), ShapeError);
}

TEST_CASE("resnet evaluation") {
  FeatureMap w(3, 2);
  w(0, 0) = 1.0;
  ConvResNet empty(3, 2, {}, w, 0.0, {0, 0, 2, 0, 0, 1});
  CHECK(eval_resnet(empty, std::vector<double>{-0.7, 1, 2}) == -0.7);
  auto a = audit(empty);
  CHECK(a.pass());
  CHECK(a.field("M").measured == 0.0);

  ResidualBlock dead{{{ConvFilter(2, 1, 2), BiasMatrix(3, 2)}}, {"zero"}};
  FeatureMap w2(3, 2);
  w2(0, 0) = 0.5;
  w2(2, 0) = 2.0;
  ConvResNet skip(3, 2, {dead, dead}, w2, 0.1, {2, 1, 2, 1, 1, 2});
  std::vector<double> x{0.3, -1, 4};
  CHECK(eval_resnet(skip, x) == 0.5 * 0.3 + 2.0 * 4 + 0.1);
}

TEST_CASE("audit flags an oversized weight") {
  std::vector<ConvLayer> ls{{ConvFilter::dense(1, 1, 1, std::vector<double>{1.5}), BiasMatrix(2, 1)}};
  FeatureMap w(2, 1);
  w(0, 0) = 1;
  CnnNetwork n(2, 1, ls, w, 0, true, {2, 1, 1, 1.0, 1.0}, {});
  auto a = audit(n);
  CHECK_FALSE(a.pass());
  CHECK_FALSE(a.field("kappa1").pass);
  CHECK(a.field("L").pass);
}

TEST_CASE("batched and scalar evaluation agree bitwise") {
  std::mt19937_64 rng(3);
  CnnNetwork n = random_cnn(rng, 5);
  std::vector<double> pts(5 * 300);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : pts) v = u(rng);
  auto ys = eval_cnn_batch(n, pts);
  for (std::size_t p = 0; p < 300; ++p) CHECK(ys[p] == eval_cnn(n, std::span<const double>(pts).subspan(5 * p, 5)));
}

TEST_CASE("documents round-trip losslessly") {
  std::mt19937_64 rng(4);
  CnnNetwork n = random_cnn(rng, 5);
  auto doc = serialize(n);
  CnnNetwork back = deserialize_cnn(nlohmann::json::parse(doc.dump()));
  REQUIRE(back.layers().size() == n.layers().size());
  for (std::size_t l = 0; l < n.layers().size(); ++l) CHECK(back.layers()[l] == n.layers()[l]);
  CHECK(back.readout_weights() == n.readout_weights());
  CHECK(back.readout_bias() == n.readout_bias());
  CHECK(back.envelope() == n.envelope());
  CHECK(back.provenance() == n.provenance());

  MlpNetwork m = random_mlp(rng, {2, 4, 1});
  MlpNetwork mb = deserialize_mlp(serialize(m));
  CHECK(mb.layers() == m.layers());

  ResidualBlock blk{n.layers(), {"block", {{"i", 0}}}};
  blk.layers.push_back({ConvFilter(1, 1, 3), BiasMatrix(5, 1)});
  ConvResNet r(5, 1, {blk}, FeatureMap(5, 1), 0.5, {1, 3, 4, 3, 1, 1, 2.0});
  ConvResNet rb = deserialize_resnet(serialize(r));
  CHECK(rb.blocks() == r.blocks());
  CHECK(rb.envelope() == r.envelope());
}

TEST_CASE("documents that break the declared filter size are rejected") {
  std::mt19937_64 rng(5);
  auto doc = serialize(random_cnn(rng, 5));
  doc["envelope"]["K"] = 2;
  CHECK_THROWS_AS(deserialize_cnn(doc), SchemaError);
  auto doc2 = serialize(random_cnn(rng, 5));
  doc2["version"] = 99;
  CHECK_THROWS_AS(deserialize(doc2), SchemaError);
  auto doc3 = serialize(random_cnn(rng, 5));
  doc3["readout"]["bias"] = "abc";
  try {
    deserialize(doc3);
    FAIL("expected rejection");
  } catch (const SchemaError& e) {
    CHECK(e.path() == "/readout/bias");
  }
}
