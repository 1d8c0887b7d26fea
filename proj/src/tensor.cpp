#include "besovnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace besovnet {

FeatureMap::FeatureMap(std::size_t rows, std::size_t channels)
    : rows_(rows), channels_(channels), values_(rows * channels, 0.0) {
  if (rows == 0 || channels == 0) throw ShapeError("feature map needs positive shape, got " + shape_string());
}

FeatureMap::FeatureMap(std::size_t rows, std::size_t channels, std::vector<double> values)
    : rows_(rows), channels_(channels), values_(std::move(values)) {
  if (rows == 0 || channels == 0) throw ShapeError("feature map needs positive shape, got " + shape_string());
  if (values_.size() != rows * channels)
    throw ShapeError("feature map " + shape_string() + " given " + std::to_string(values_.size()) + " values");
}

FeatureMap FeatureMap::column(std::span<const double> x) {
  return FeatureMap(x.size(), 1, std::vector<double>(x.begin(), x.end()));
}

bool FeatureMap::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double FeatureMap::norm_inf() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

std::string FeatureMap::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(channels_);
}

namespace {

bool entry_less(const ConvFilter::Entry& a, const ConvFilter::Entry& b) {
  if (a.out != b.out) return a.out < b.out;
  if (a.tap != b.tap) return a.tap < b.tap;
  return a.in < b.in;
}

bool same_slot(const ConvFilter::Entry& a, const ConvFilter::Entry& b) {
  return a.out == b.out && a.tap == b.tap && a.in == b.in;
}

}  // namespace

ConvFilter::ConvFilter(std::size_t out_channels, std::size_t size, std::size_t in_channels)
    : out_(out_channels), size_(size), in_(in_channels) {
  if (out_ == 0 || size_ == 0 || in_ == 0) throw ShapeError("filter needs positive shape, got " + shape_string());
}

ConvFilter::ConvFilter(std::size_t out_channels, std::size_t size, std::size_t in_channels,
                       std::vector<Entry> entries)
    : ConvFilter(out_channels, size, in_channels) {
  for (const auto& e : entries) {
    if (e.out >= out_ || e.tap >= size_ || e.in >= in_)
      throw ShapeError("filter entry (" + std::to_string(e.out) + "," + std::to_string(e.tap) + "," +
                       std::to_string(e.in) + ") outside " + shape_string());
  }
  std::stable_sort(entries.begin(), entries.end(), entry_less);
  // later duplicates overwrite earlier ones
  std::vector<Entry> merged;
  merged.reserve(entries.size());
  for (const auto& e : entries) {
    if (!merged.empty() && same_slot(merged.back(), e))
      merged.back().weight = e.weight;
    else
      merged.push_back(e);
  }
  std::erase_if(merged, [](const Entry& e) { return e.weight == 0.0; });
  entries_ = std::move(merged);
}

ConvFilter ConvFilter::dense(std::size_t out_channels, std::size_t size, std::size_t in_channels,
                             std::span<const double> weights) {
  if (weights.size() != out_channels * size * in_channels)
    throw ShapeError("dense filter weight count " + std::to_string(weights.size()) + " does not match shape");
  std::vector<Entry> e;
  for (std::size_t j = 0; j < out_channels; ++j)
    for (std::size_t k = 0; k < size; ++k)
      for (std::size_t l = 0; l < in_channels; ++l) {
        double w = weights[(j * size + k) * in_channels + l];
        if (w != 0.0)
          e.push_back({static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(k),
                       static_cast<std::uint32_t>(l), w});
      }
  return ConvFilter(out_channels, size, in_channels, std::move(e));
}

ConvFilter ConvFilter::identity(std::size_t channels) {
  std::vector<Entry> e;
  for (std::uint32_t c = 0; c < channels; ++c) e.push_back({c, 0, c, 1.0});
  return ConvFilter(channels, 1, channels, std::move(e));
}

double ConvFilter::at(std::size_t j, std::size_t k, std::size_t l) const {
  Entry key{static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(l), 0.0};
  auto it = std::lower_bound(entries_.begin(), entries_.end(), key, entry_less);
  if (it != entries_.end() && same_slot(*it, key)) return it->weight;
  return 0.0;
}

void ConvFilter::set(std::size_t j, std::size_t k, std::size_t l, double w) {
  if (j >= out_ || k >= size_ || l >= in_) throw ShapeError("filter index outside " + shape_string());
  Entry key{static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(l), w};
  auto it = std::lower_bound(entries_.begin(), entries_.end(), key, entry_less);
  bool present = it != entries_.end() && same_slot(*it, key);
  if (w == 0.0) {
    if (present) entries_.erase(it);
  } else if (present) {
    it->weight = w;
  } else {
    entries_.insert(it, key);
  }
}

std::vector<double> ConvFilter::to_dense() const {
  std::vector<double> w(out_ * size_ * in_, 0.0);
  for (const auto& e : entries_) w[(e.out * size_ + e.tap) * in_ + e.in] = e.weight;
  return w;
}

double ConvFilter::norm_inf() const {
  double m = 0.0;
  for (const auto& e : entries_) m = std::max(m, std::abs(e.weight));
  return m;
}

ConvFilter ConvFilter::scaled(double a) const {
  ConvFilter f = *this;
  for (auto& e : f.entries_) e.weight *= a;
  std::erase_if(f.entries_, [](const Entry& e) { return e.weight == 0.0; });
  return f;
}

ConvFilter ConvFilter::padded(std::size_t out_channels, std::size_t size, std::size_t in_channels) const {
  if (out_channels < out_ || size < size_ || in_channels < in_)
    throw ShapeError("cannot pad filter " + shape_string() + " down");
  ConvFilter f = *this;
  f.out_ = out_channels;
  f.size_ = size;
  f.in_ = in_channels;
  return f;
}

std::string ConvFilter::shape_string() const {
  return std::to_string(out_) + "x" + std::to_string(size_) + "x" + std::to_string(in_);
}

bool operator==(const ConvFilter& a, const ConvFilter& b) {
  if (a.out_ != b.out_ || a.size_ != b.size_ || a.in_ != b.in_ || a.entries_.size() != b.entries_.size())
    return false;
  for (std::size_t n = 0; n < a.entries_.size(); ++n) {
    const auto &x = a.entries_[n], &y = b.entries_[n];
    if (!same_slot(x, y) || x.weight != y.weight) return false;
  }
  return true;
}

BiasMatrix BiasMatrix::per_channel(std::size_t rows, std::span<const double> b) {
  BiasMatrix m(rows, b.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < b.size(); ++c) m(i, c) = b[c];
  return m;
}

BiasMatrix BiasMatrix::first_row(std::size_t rows, std::span<const double> b) {
  BiasMatrix m(rows, b.size());
  for (std::size_t c = 0; c < b.size(); ++c) m(0, c) = b[c];
  return m;
}

BiasMatrix BiasMatrix::scaled(double a) const {
  BiasMatrix m = *this;
  for (double& v : m.values_.values()) v *= a;
  return m;
}

BiasMatrix BiasMatrix::padded(std::size_t channels) const {
  if (channels < this->channels()) throw ShapeError("cannot pad bias down");
  BiasMatrix m(rows(), channels);
  for (std::size_t i = 0; i < rows(); ++i)
    for (std::size_t c = 0; c < this->channels(); ++c) m(i, c) = (*this)(i, c);
  return m;
}

bool BiasMatrix::is_zero() const {
  auto v = values_.values();
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

namespace {

void check_conv_shapes(const ConvFilter& filter, std::size_t rows, std::size_t channels) {
  if (filter.in_channels() != channels)
    throw ShapeError("filter " + filter.shape_string() + " applied to feature map " + std::to_string(rows) + "x" +
                     std::to_string(channels));
  if (filter.size() > rows)
    throw ShapeError("filter " + filter.shape_string() + " longer than feature map rows " + std::to_string(rows));
}

}  // namespace

FeatureMap convolve_reference(const ConvFilter& filter, const FeatureMap& input) {
  check_conv_shapes(filter, input.rows(), input.channels());
  const std::size_t D = input.rows(), C = input.channels(), Co = filter.out_channels(), K = filter.size();
  const std::vector<double> w = filter.to_dense();
  FeatureMap y(D, Co);
  for (std::size_t i = 0; i < D; ++i)
    for (std::size_t j = 0; j < Co; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t l = 0; l < C; ++l) {
          double z = i + k < D ? input(i + k, l) : 0.0;
          acc += w[(j * K + k) * C + l] * z;
        }
      y(i, j) = acc;
    }
  return y;
}

FeatureMap convolve(const ConvFilter& filter, const FeatureMap& input) {
  check_conv_shapes(filter, input.rows(), input.channels());
  const std::size_t D = input.rows();
  FeatureMap y(D, filter.out_channels());
  for (const auto& e : filter.entries())
    for (std::size_t i = 0; i + e.tap < D; ++i) y(i, e.out) += e.weight * input(i + e.tap, e.in);
  return y;
}

FeatureMap relu(FeatureMap input) {
  for (double& v : input.values()) v = v > 0.0 ? v : 0.0;
  return input;
}

FeatureMap add(const FeatureMap& a, const FeatureMap& b) {
  if (a.rows() != b.rows() || a.channels() != b.channels())
    throw ShapeError("cannot add " + a.shape_string() + " and " + b.shape_string());
  FeatureMap y = a;
  auto yv = y.values();
  auto bv = b.values();
  for (std::size_t n = 0; n < yv.size(); ++n) yv[n] += bv[n];
  return y;
}

namespace {

FeatureMap layer_apply(const ConvFilter& filter, const BiasMatrix& bias, const FeatureMap& z) {
  FeatureMap y = convolve(filter, z);
  if (bias.rows() != y.rows() || bias.channels() != y.channels())
    throw ShapeError("bias " + bias.values().shape_string() + " does not match convolution output " +
                     y.shape_string());
  auto yv = y.values();
  auto bv = bias.values().values();
  for (std::size_t n = 0; n < yv.size(); ++n) {
    double v = yv[n] + bv[n];
    yv[n] = v > 0.0 ? v : 0.0;
  }
  return y;
}

}  // namespace

FeatureMap conv_block_apply(std::span<const ConvFilter> filters, std::span<const BiasMatrix> biases,
                            const FeatureMap& input) {
  if (filters.size() != biases.size())
    throw ShapeError(std::to_string(filters.size()) + " filters but " + std::to_string(biases.size()) + " biases");
  FeatureMap z = input;
  for (std::size_t n = 0; n < filters.size(); ++n) z = layer_apply(filters[n], biases[n], z);
  return z;
}

FeatureMap conv_block_apply(std::span<const ConvLayer> layers, const FeatureMap& input) {
  FeatureMap z = input;
  for (const auto& layer : layers) z = layer_apply(layer.filter, layer.bias, z);
  return z;
}

double readout(const FeatureMap& w, double b, const FeatureMap& q) {
  if (w.rows() != q.rows() || w.channels() != q.channels())
    throw ShapeError("readout " + w.shape_string() + " against feature map " + q.shape_string());
  double acc = 0.0;
  auto wv = w.values();
  auto qv = q.values();
  for (std::size_t n = 0; n < wv.size(); ++n)
    if (wv[n] != 0.0) acc += wv[n] * qv[n];
  return acc + b;
}

FeatureBatch::FeatureBatch(std::size_t batch, std::size_t rows, std::size_t channels)
    : batch_(batch), rows_(rows), channels_(channels), values_(batch * rows * channels, 0.0) {
  if (rows == 0 || channels == 0) throw ShapeError("feature batch needs positive shape");
}

FeatureBatch FeatureBatch::columns(std::span<const double> points, std::size_t dim) {
  if (dim == 0 || points.size() % dim != 0) throw ShapeError("point buffer not a multiple of dimension");
  std::size_t n = points.size() / dim;
  FeatureBatch b(n, dim, 1);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < dim; ++i) b.values_[i * n + p] = points[p * dim + i];
  return b;
}

FeatureMap FeatureBatch::item(std::size_t n) const {
  FeatureMap m(rows_, channels_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t c = 0; c < channels_; ++c) m(i, c) = at(n, i, c);
  return m;
}

FeatureBatch FeatureBatch::padded(std::size_t channels) const {
  if (channels < channels_) throw ShapeError("cannot pad batch down");
  FeatureBatch b(batch_, rows_, channels);
  std::copy(values_.begin(), values_.end(), b.values_.begin());
  return b;
}

void FeatureBatch::add_inplace(const FeatureBatch& other) {
  if (other.batch_ != batch_ || other.rows_ != rows_ || other.channels_ != channels_)
    throw ShapeError("batch shapes differ in add");
  for (std::size_t n = 0; n < values_.size(); ++n) values_[n] += other.values_[n];
}

FeatureBatch conv_layer_apply(const ConvLayer& layer, const FeatureBatch& input) {
  const ConvFilter& f = layer.filter;
  check_conv_shapes(f, input.rows(), input.channels());
  const std::size_t B = input.batch(), D = input.rows();
  if (layer.bias.rows() != D || layer.bias.channels() != f.out_channels())
    throw ShapeError("bias " + layer.bias.values().shape_string() + " does not match layer output");
  FeatureBatch y(B, D, f.out_channels());
  for (const auto& e : f.entries()) {
    double* dst = y.channel(e.out);
    const double* src = input.channel(e.in) + e.tap * B;
    const std::size_t len = (D - e.tap) * B;
    const double w = e.weight;
    for (std::size_t t = 0; t < len; ++t) dst[t] += w * src[t];
  }
  for (std::size_t c = 0; c < f.out_channels(); ++c) {
    double* dst = y.channel(c);
    for (std::size_t i = 0; i < D; ++i) {
      const double b = layer.bias(i, c);
      double* row = dst + i * B;
      for (std::size_t n = 0; n < B; ++n) {
        double v = row[n] + b;
        row[n] = v > 0.0 ? v : 0.0;
      }
    }
  }
  return y;
}

FeatureBatch conv_block_apply(std::span<const ConvLayer> layers, FeatureBatch input) {
  for (const auto& layer : layers) input = conv_layer_apply(layer, input);
  return input;
}

std::vector<double> readout(const FeatureMap& w, double b, const FeatureBatch& q) {
  if (w.rows() != q.rows() || w.channels() != q.channels()) throw ShapeError("readout shape differs from batch");
  const std::size_t B = q.batch();
  std::vector<double> acc(B, 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t c = 0; c < w.channels(); ++c) {
      double wv = w(i, c);
      if (wv == 0.0) continue;
      const double* src = q.channel(c) + i * B;
      for (std::size_t n = 0; n < B; ++n) acc[n] += wv * src[n];
    }
  for (double& v : acc) v += b;
  return acc;
}

}  // namespace besovnet
