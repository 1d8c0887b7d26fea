#include "besovnet/network.hpp"

#include <algorithm>
#include <cmath>

#include "besovnet/parallel.hpp"

namespace besovnet {

namespace {

constexpr std::size_t kBatchChunk = 256;

void check_chain(std::size_t rows, std::size_t channels, const std::vector<ConvLayer>& layers, const char* what) {
  std::size_t c = channels;
  for (std::size_t n = 0; n < layers.size(); ++n) {
    const auto& l = layers[n];
    if (l.filter.in_channels() != c)
      throw ShapeError(std::string(what) + " layer " + std::to_string(n) + ": filter " + l.filter.shape_string() +
                       " after " + std::to_string(c) + " channels");
    if (l.filter.size() > rows)
      throw ShapeError(std::string(what) + " layer " + std::to_string(n) + ": filter longer than " +
                       std::to_string(rows) + " rows");
    if (l.bias.rows() != rows || l.bias.channels() != l.filter.out_channels())
      throw ShapeError(std::string(what) + " layer " + std::to_string(n) + ": bias " +
                       l.bias.values().shape_string() + " vs filter " + l.filter.shape_string());
    c = l.filter.out_channels();
  }
}

bool rows_below_first_zero(const FeatureMap& w) {
  for (std::size_t i = 1; i < w.rows(); ++i)
    for (std::size_t c = 0; c < w.channels(); ++c)
      if (w(i, c) != 0.0) return false;
  return true;
}

}  // namespace

MlpNetwork::MlpNetwork(std::vector<DenseLayer> layers, MlpEnvelope envelope, Provenance provenance)
    : layers_(std::move(layers)), envelope_(envelope), provenance_(std::move(provenance)) {
  if (layers_.empty()) throw ShapeError("mlp needs at least one layer");
  for (std::size_t n = 0; n < layers_.size(); ++n) {
    const auto& l = layers_[n];
    if (l.weights.size() != l.out * l.in || l.bias.size() != l.out || l.out == 0 || l.in == 0)
      throw ShapeError("mlp layer " + std::to_string(n) + " has inconsistent shape");
    if (n > 0 && l.in != layers_[n - 1].out)
      throw ShapeError("mlp layer " + std::to_string(n) + " expects " + std::to_string(l.in) + " inputs, previous emits " +
                       std::to_string(layers_[n - 1].out));
  }
}

CnnNetwork::CnnNetwork(std::size_t input_rows, std::size_t input_channels, std::vector<ConvLayer> layers,
                       FeatureMap readout, double readout_bias, bool first_row_only, CnnEnvelope envelope,
                       std::vector<Provenance> provenance)
    : rows_(input_rows),
      in_channels_(input_channels),
      layers_(std::move(layers)),
      readout_(std::move(readout)),
      readout_bias_(readout_bias),
      first_row_only_(first_row_only),
      envelope_(envelope),
      provenance_(std::move(provenance)) {
  if (rows_ == 0 || in_channels_ == 0) throw ShapeError("cnn input shape must be positive");
  check_chain(rows_, in_channels_, layers_, "cnn");
  if (readout_.rows() != rows_ || readout_.channels() != output_channels())
    throw ShapeError("cnn readout " + readout_.shape_string() + " does not match output " + std::to_string(rows_) + "x" +
                     std::to_string(output_channels()));
  if (first_row_only_ && !rows_below_first_zero(readout_))
    throw ShapeError("cnn flagged first-row-only but readout has entries below row 1");
}

CnnNetwork CnnNetwork::with_envelope(CnnEnvelope e) const {
  CnnNetwork n = *this;
  n.envelope_ = e;
  return n;
}

CnnNetwork CnnNetwork::with_provenance(std::vector<Provenance> p) const {
  CnnNetwork n = *this;
  n.provenance_ = std::move(p);
  return n;
}

ConvResNet::ConvResNet(std::size_t input_rows, std::size_t padded_channels, std::vector<ResidualBlock> blocks,
                       FeatureMap readout, double readout_bias, ResNetEnvelope envelope,
                       std::vector<Provenance> provenance)
    : rows_(input_rows),
      channels_(padded_channels),
      blocks_(std::move(blocks)),
      readout_(std::move(readout)),
      readout_bias_(readout_bias),
      envelope_(envelope),
      provenance_(std::move(provenance)) {
  if (rows_ == 0 || channels_ == 0) throw ShapeError("resnet shape must be positive");
  for (std::size_t m = 0; m < blocks_.size(); ++m) {
    const auto& b = blocks_[m];
    if (b.layers.empty()) throw ShapeError("resnet block " + std::to_string(m) + " has no layers");
    check_chain(rows_, channels_, b.layers, "resnet block");
    if (b.layers.back().filter.out_channels() != channels_)
      throw ShapeError("resnet block " + std::to_string(m) + " does not return to " + std::to_string(channels_) +
                       " channels");
  }
  if (readout_.rows() != rows_ || readout_.channels() != channels_)
    throw ShapeError("resnet readout " + readout_.shape_string() + " does not match padded map");
}

std::vector<double> eval_mlp(const MlpNetwork& net, std::span<const double> x) {
  if (x.size() != net.input_dim())
    throw ShapeError("mlp expects input dimension " + std::to_string(net.input_dim()) + ", got " +
                     std::to_string(x.size()));
  std::vector<double> z(x.begin(), x.end());
  const auto& layers = net.layers();
  for (std::size_t n = 0; n < layers.size(); ++n) {
    const auto& l = layers[n];
    std::vector<double> y(l.out);
    for (std::size_t r = 0; r < l.out; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < l.in; ++c) acc += l.weights[r * l.in + c] * z[c];
      acc += l.bias[r];
      y[r] = (n + 1 < layers.size()) ? std::max(acc, 0.0) : acc;
    }
    z = std::move(y);
  }
  return z;
}

FeatureMap cnn_features(const CnnNetwork& net, const FeatureMap& input) {
  if (input.rows() != net.input_rows() || input.channels() != net.input_channels())
    throw ShapeError("cnn expects input " + std::to_string(net.input_rows()) + "x" +
                     std::to_string(net.input_channels()) + ", got " + input.shape_string());
  return conv_block_apply(std::span<const ConvLayer>(net.layers()), input);
}

double eval_cnn(const CnnNetwork& net, const FeatureMap& input) {
  return readout(net.readout_weights(), net.readout_bias(), cnn_features(net, input));
}

double eval_cnn(const CnnNetwork& net, std::span<const double> x) {
  if (net.input_channels() != 1) throw ShapeError("vector input needs a single-channel cnn");
  return eval_cnn(net, FeatureMap::column(x));
}

double eval_resnet(const ConvResNet& net, std::span<const double> x) {
  if (x.size() != net.input_rows())
    throw ShapeError("resnet expects input dimension " + std::to_string(net.input_rows()) + ", got " +
                     std::to_string(x.size()));
  FeatureMap z(net.input_rows(), net.padded_channels());
  for (std::size_t i = 0; i < x.size(); ++i) z(i, 0) = x[i];
  for (const auto& b : net.blocks()) z = add(z, conv_block_apply(std::span<const ConvLayer>(b.layers), z));
  return readout(net.readout_weights(), net.readout_bias(), z);
}

std::vector<double> eval_cnn_batch(const CnnNetwork& net, std::span<const double> points) {
  const std::size_t D = net.input_rows();
  if (net.input_channels() != 1) throw ShapeError("point batch needs a single-channel cnn");
  if (points.size() % D != 0) throw ShapeError("point buffer is not a multiple of " + std::to_string(D));
  const std::size_t n = points.size() / D;
  std::vector<double> out(n);
  parallel_chunks(n, kBatchChunk, [&](std::size_t b, std::size_t e) {
    FeatureBatch z = FeatureBatch::columns(points.subspan(b * D, (e - b) * D), D);
    z = conv_block_apply(std::span<const ConvLayer>(net.layers()), std::move(z));
    auto y = readout(net.readout_weights(), net.readout_bias(), z);
    std::copy(y.begin(), y.end(), out.begin() + b);
  });
  return out;
}

std::vector<double> eval_resnet_batch(const ConvResNet& net, std::span<const double> points) {
  const std::size_t D = net.input_rows();
  if (points.size() % D != 0) throw ShapeError("point buffer is not a multiple of " + std::to_string(D));
  const std::size_t n = points.size() / D;
  std::vector<double> out(n);
  parallel_chunks(n, kBatchChunk, [&](std::size_t b, std::size_t e) {
    FeatureBatch z = FeatureBatch::columns(points.subspan(b * D, (e - b) * D), D).padded(net.padded_channels());
    for (const auto& blk : net.blocks()) z.add_inplace(conv_block_apply(std::span<const ConvLayer>(blk.layers), z));
    auto y = readout(net.readout_weights(), net.readout_bias(), z);
    std::copy(y.begin(), y.end(), out.begin() + b);
  });
  return out;
}

bool SizeAudit::pass() const {
  return std::all_of(fields.begin(), fields.end(), [](const AuditField& f) { return f.pass; });
}

const AuditField& SizeAudit::field(const std::string& name) const {
  for (const auto& f : fields)
    if (f.name == name) return f;
  throw DomainError("audit has no field " + name);
}

namespace {

AuditField check(std::string name, double measured, double declared) {
  return {std::move(name), measured, declared, measured <= declared};
}

struct LayerScan {
  std::size_t channels = 0, filter = 0;
  double magnitude = 0.0;
};

LayerScan scan(const std::vector<ConvLayer>& layers, std::size_t channels) {
  LayerScan s;
  s.channels = channels;
  for (const auto& l : layers) {
    s.channels = std::max({s.channels, l.filter.out_channels(), l.filter.in_channels()});
    s.filter = std::max(s.filter, l.filter.size());
    s.magnitude = std::max({s.magnitude, l.filter.norm_inf(), l.bias.norm_inf()});
  }
  return s;
}

}  // namespace

SizeAudit audit(const MlpNetwork& net) {
  SizeAudit a;
  std::size_t width = net.input_dim();
  double mag = 0.0;
  for (const auto& l : net.layers()) {
    width = std::max(width, l.out);
    for (double w : l.weights) mag = std::max(mag, std::abs(w));
    for (double b : l.bias) mag = std::max(mag, std::abs(b));
  }
  const auto& e = net.envelope();
  a.fields.push_back(check("L", static_cast<double>(net.depth()), static_cast<double>(e.depth)));
  a.fields.push_back(check("J", static_cast<double>(width), static_cast<double>(e.width)));
  a.fields.push_back(check("kappa", mag, e.bound));
  return a;
}

SizeAudit audit(const CnnNetwork& net) {
  SizeAudit a;
  LayerScan s = scan(net.layers(), net.input_channels());
  const auto& e = net.envelope();
  a.fields.push_back(check("L", static_cast<double>(net.depth()), static_cast<double>(e.depth)));
  a.fields.push_back(check("J", static_cast<double>(s.channels), static_cast<double>(e.channels)));
  a.fields.push_back(check("K", static_cast<double>(s.filter), static_cast<double>(e.filter_size)));
  a.fields.push_back(check("kappa1", s.magnitude, e.conv_bound));
  double rmag = std::max(net.readout_weights().norm_inf(), std::abs(net.readout_bias()));
  a.fields.push_back(check("kappa2", rmag, e.readout_bound));
  return a;
}

SizeAudit audit(const ConvResNet& net) {
  SizeAudit a;
  std::size_t depth = 0, channels = net.padded_channels(), filter = 0;
  double mag = 0.0;
  for (const auto& b : net.blocks()) {
    LayerScan s = scan(b.layers, net.padded_channels());
    depth = std::max(depth, b.layers.size());
    channels = std::max(channels, s.channels);
    filter = std::max(filter, s.filter);
    mag = std::max(mag, s.magnitude);
  }
  const auto& e = net.envelope();
  a.fields.push_back(check("M", static_cast<double>(net.blocks().size()), static_cast<double>(e.blocks)));
  a.fields.push_back(check("L", static_cast<double>(depth), static_cast<double>(e.depth)));
  a.fields.push_back(check("J", static_cast<double>(channels), static_cast<double>(e.channels)));
  a.fields.push_back(check("K", static_cast<double>(filter), static_cast<double>(e.filter_size)));
  a.fields.push_back(check("kappa1", mag, e.conv_bound));
  double rmag = std::max(net.readout_weights().norm_inf(), std::abs(net.readout_bias()));
  a.fields.push_back(check("kappa2", rmag, e.readout_bound));
  return a;
}

}  // namespace besovnet
