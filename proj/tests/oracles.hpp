#pragma once
// Straight-line reference implementations used only by tests.
#include <random>
#include <vector>

#include "besovnet/network.hpp"

namespace oracle {

inline double naive_conv_entry(const besovnet::ConvFilter& f, const besovnet::FeatureMap& z, std::size_t i,
                               std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k)
    for (std::size_t l = 0; l < f.in_channels(); ++l)
      if (i + k < z.rows()) s += f.at(j, k, l) * z(i + k, l);
  return s;
}

inline double mlp_forward(const besovnet::MlpNetwork& net, std::vector<double> x) {
  const auto& ls = net.layers();
  for (std::size_t n = 0; n < ls.size(); ++n) {
    std::vector<double> y(ls[n].out, 0.0);
    for (std::size_t r = 0; r < ls[n].out; ++r) {
      for (std::size_t c = 0; c < ls[n].in; ++c) y[r] += ls[n].weights[r * ls[n].in + c] * x[c];
      y[r] += ls[n].bias[r];
      if (n + 1 < ls.size() && y[r] < 0) y[r] = 0;
    }
    x = y;
  }
  return x[0];
}

inline besovnet::FeatureMap random_map(std::mt19937_64& rng, std::size_t d, std::size_t c, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  besovnet::FeatureMap m(d, c);
  for (auto& v : m.values()) v = u(rng);
  return m;
}

inline besovnet::ConvFilter random_filter(std::mt19937_64& rng, std::size_t o, std::size_t k, std::size_t i,
                                          double scale = 1.0, double density = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::bernoulli_distribution keep(density);
  std::vector<double> w(o * k * i);
  for (auto& v : w) v = keep(rng) ? u(rng) : 0.0;
  return besovnet::ConvFilter::dense(o, k, i, w);
}

}  // namespace oracle

namespace oracle {

// Random first-row-readout CNN with `layers` conv layers; envelope is the measured one.
inline besovnet::CnnNetwork random_cnn(std::mt19937_64& rng, std::size_t D, std::size_t layers, std::size_t J,
                                       std::size_t K, double scale = 0.8) {
  using namespace besovnet;
  std::uniform_int_distribution<std::size_t> width(1, J);
  std::uniform_int_distribution<std::size_t> ksize(1, std::min(K, D));
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<ConvLayer> ls;
  std::size_t c = 1, jmax = 1, kmax = 1;
  double mag = 0.0;
  for (std::size_t l = 0; l < layers; ++l) {
    std::size_t o = width(rng), k = ksize(rng);
    ConvFilter f = random_filter(rng, o, k, c, scale);
    std::vector<double> b(o);
    for (auto& v : b) v = u(rng) * 0.5;
    ls.push_back({f, BiasMatrix::first_row(D, b)});
    mag = std::max({mag, f.norm_inf(), ls.back().bias.norm_inf()});
    c = o;
    jmax = std::max(jmax, o);
    kmax = std::max(kmax, k);
  }
  FeatureMap w(D, c);
  for (std::size_t ch = 0; ch < c; ++ch) w(0, ch) = u(rng);
  double b = u(rng);
  double rmag = std::max(w.norm_inf(), std::abs(b));
  return CnnNetwork(D, 1, ls, w, b, true, {layers + 1, jmax, kmax, std::max(mag, 1e-3), std::max(rmag, 1e-3)},
                    {{"random", {{"D", D}}}});
}

inline besovnet::MlpNetwork random_mlp(std::mt19937_64& rng, std::size_t in, std::size_t layers, std::size_t J) {
  using namespace besovnet;
  std::uniform_int_distribution<std::size_t> width(1, J);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<DenseLayer> ls;
  std::size_t c = in, wmax = in;
  for (std::size_t l = 0; l < layers; ++l) {
    std::size_t o = l + 1 == layers ? 1 : width(rng);
    DenseLayer d{o, c};
    d.weights.resize(o * c);
    d.bias.resize(o);
    for (auto& v : d.weights) v = u(rng);
    for (auto& v : d.bias) v = u(rng);
    ls.push_back(d);
    c = o;
    wmax = std::max(wmax, o);
  }
  return MlpNetwork(ls, {layers, wmax, 1.0}, {"random"});
}

inline std::vector<double> random_point(std::mt19937_64& rng, std::size_t D, double B = 1.0) {
  std::uniform_real_distribution<double> u(-B, B);
  std::vector<double> x(D);
  for (auto& v : x) v = u(rng);
  return x;
}

}  // namespace oracle
