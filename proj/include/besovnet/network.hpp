#pragma once
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "besovnet/tensor.hpp"

namespace besovnet {

struct Provenance {
  std::string step;
  nlohmann::json parameters = nlohmann::json::object();
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct MlpEnvelope {
  std::size_t depth = 0;
  std::size_t width = 0;
  double bound = 0.0;
  std::optional<double> clip;
  friend bool operator==(const MlpEnvelope&, const MlpEnvelope&) = default;
};

// depth counts the conv layers plus the readout
struct CnnEnvelope {
  std::size_t depth = 0;
  std::size_t channels = 0;
  std::size_t filter_size = 0;
  double conv_bound = 0.0;
  double readout_bound = 0.0;
  friend bool operator==(const CnnEnvelope&, const CnnEnvelope&) = default;
};

struct ResNetEnvelope {
  std::size_t blocks = 0;
  std::size_t depth = 0;  // conv layers per block
  std::size_t channels = 0;
  std::size_t filter_size = 0;
  double conv_bound = 0.0;
  double readout_bound = 0.0;
  std::optional<double> output_bound;
  friend bool operator==(const ResNetEnvelope&, const ResNetEnvelope&) = default;
};

struct DenseLayer {
  std::size_t out = 0, in = 0;
  std::vector<double> weights;  // row-major out x in
  std::vector<double> bias;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

class MlpNetwork {
 public:
  MlpNetwork(std::vector<DenseLayer> layers, MlpEnvelope envelope, Provenance provenance);
  std::size_t input_dim() const { return layers_.front().in; }
  std::size_t output_dim() const { return layers_.back().out; }
  std::size_t depth() const { return layers_.size(); }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  const MlpEnvelope& envelope() const { return envelope_; }
  const Provenance& provenance() const { return provenance_; }

 private:
  std::vector<DenseLayer> layers_;
  MlpEnvelope envelope_;
  Provenance provenance_;
};

class CnnNetwork {
 public:
  CnnNetwork(std::size_t input_rows, std::size_t input_channels, std::vector<ConvLayer> layers, FeatureMap readout,
             double readout_bias, bool first_row_only, CnnEnvelope envelope, std::vector<Provenance> provenance);
  std::size_t input_rows() const { return rows_; }
  std::size_t input_channels() const { return in_channels_; }
  std::size_t output_channels() const { return layers_.empty() ? in_channels_ : layers_.back().filter.out_channels(); }
  std::size_t depth() const { return layers_.size() + 1; }
  const std::vector<ConvLayer>& layers() const { return layers_; }
  const FeatureMap& readout_weights() const { return readout_; }
  double readout_bias() const { return readout_bias_; }
  bool first_row_only() const { return first_row_only_; }
  const CnnEnvelope& envelope() const { return envelope_; }
  const std::vector<Provenance>& provenance() const { return provenance_; }

  CnnNetwork with_envelope(CnnEnvelope e) const;
  CnnNetwork with_provenance(std::vector<Provenance> p) const;

 private:
  std::size_t rows_, in_channels_;
  std::vector<ConvLayer> layers_;
  FeatureMap readout_;
  double readout_bias_;
  bool first_row_only_;
  CnnEnvelope envelope_;
  std::vector<Provenance> provenance_;
};

struct ResidualBlock {
  std::vector<ConvLayer> layers;
  Provenance provenance;
  friend bool operator==(const ResidualBlock&, const ResidualBlock&) = default;
};

class ConvResNet {
 public:
  ConvResNet(std::size_t input_rows, std::size_t padded_channels, std::vector<ResidualBlock> blocks, FeatureMap readout,
             double readout_bias, ResNetEnvelope envelope, std::vector<Provenance> provenance = {});
  std::size_t input_rows() const { return rows_; }
  std::size_t padded_channels() const { return channels_; }
  const std::vector<ResidualBlock>& blocks() const { return blocks_; }
  const FeatureMap& readout_weights() const { return readout_; }
  double readout_bias() const { return readout_bias_; }
  const ResNetEnvelope& envelope() const { return envelope_; }
  const std::vector<Provenance>& provenance() const { return provenance_; }

 private:
  std::size_t rows_, channels_;
  std::vector<ResidualBlock> blocks_;
  FeatureMap readout_;
  double readout_bias_;
  ResNetEnvelope envelope_;
  std::vector<Provenance> provenance_;
};

std::vector<double> eval_mlp(const MlpNetwork& net, std::span<const double> x);
double eval_cnn(const CnnNetwork& net, std::span<const double> x);
double eval_cnn(const CnnNetwork& net, const FeatureMap& input);
// final conv feature map, before the readout
FeatureMap cnn_features(const CnnNetwork& net, const FeatureMap& input);
double eval_resnet(const ConvResNet& net, std::span<const double> x);

// points: n x D row-major
std::vector<double> eval_cnn_batch(const CnnNetwork& net, std::span<const double> points);
std::vector<double> eval_resnet_batch(const ConvResNet& net, std::span<const double> points);

struct AuditField {
  std::string name;
  double measured = 0.0;
  double declared = 0.0;
  bool pass = true;
};

struct SizeAudit {
  std::vector<AuditField> fields;
  bool pass() const;
  const AuditField& field(const std::string& name) const;
};

SizeAudit audit(const MlpNetwork& net);
SizeAudit audit(const CnnNetwork& net);
SizeAudit audit(const ConvResNet& net);

}  // namespace besovnet
