#pragma once
#include <span>
#include <vector>

#include "besovnet/network.hpp"

namespace besovnet {

// Row 0 carries (v1+, v1-, ..., vM+, vM-); other rows are don't-care.
struct PlusMinusEncoding {
  FeatureMap map;
  std::size_t values = 0;
  std::vector<double> decode() const;
  static PlusMinusEncoding encode(std::span<const double> v, std::size_t rows);
};

// Conv layers without a readout; the last layer emits a PlusMinusEncoding of
// `values` scalars in row 0.
struct ConvStack {
  std::size_t input_rows = 0;
  std::size_t input_channels = 1;
  std::vector<ConvLayer> layers;
  std::size_t values = 0;
  CnnEnvelope envelope;  // depth here counts conv layers only; readout_bound unused
  std::vector<Provenance> provenance;
};

PlusMinusEncoding eval_stack(const ConvStack& s, std::span<const double> x);

CnnNetwork mlp_to_cnn(const MlpNetwork& net, std::size_t D, std::size_t filter_size);
CnnNetwork cnn_compose(const CnnNetwork& f1, const CnnNetwork& f2);
ConvStack cnn_stack(const CnnNetwork& f1, const CnnNetwork& f2);
ConvStack cnn_stack(std::span<const CnnNetwork> nets);
// g reads an M x 1 input; result reads the D x 2M encoding of that input
CnnNetwork cnn_lift_encoded_input(const CnnNetwork& g, std::size_t rows);
// stack followed by a network consuming its encoding
CnnNetwork cnn_append(const ConvStack& s, const CnnNetwork& g);
CnnNetwork cnn_rescale(const CnnNetwork& f, double alpha);
ConvResNet cnn_sum_to_resnet(std::span<const CnnNetwork> nets, const CnnEnvelope& shared);
// extra residual block computing g(net(x)) into two fresh channels (g(.)+, g(.)-); the readout moves there.
// g must be scalar to scalar; its envelope clip becomes the output bound
ConvResNet resnet_append_scalar_block(const ConvResNet& net, const MlpNetwork& g, const Provenance& p);
// smallest envelope containing every declared envelope in the list
CnnEnvelope envelope_hull(std::span<const CnnNetwork> nets);

}  // namespace besovnet
