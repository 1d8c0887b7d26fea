#pragma once
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "besovnet/error.hpp"

namespace besovnet {

// D x C array, row-major: value (i, c) at i * C + c.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t rows, std::size_t channels);
  FeatureMap(std::size_t rows, std::size_t channels, std::vector<double> values);
  static FeatureMap column(std::span<const double> x);

  std::size_t rows() const { return rows_; }
  std::size_t channels() const { return channels_; }
  double operator()(std::size_t i, std::size_t c) const { return values_[i * channels_ + c]; }
  double& operator()(std::size_t i, std::size_t c) { return values_[i * channels_ + c]; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool all_finite() const;
  double norm_inf() const;
  std::string shape_string() const;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> values_;
};

// Weights W[j,k,l] (out channel, tap, in channel). Stored sparsely, sorted by
// (j,k,l), zeros dropped; at() reads missing entries as 0.
class ConvFilter {
 public:
  struct Entry {
    std::uint32_t out;
    std::uint32_t tap;
    std::uint32_t in;
    double weight;
  };

  ConvFilter() = default;
  ConvFilter(std::size_t out_channels, std::size_t size, std::size_t in_channels);
  ConvFilter(std::size_t out_channels, std::size_t size, std::size_t in_channels,
             std::vector<Entry> entries);
  // weights laid out as [j][k][l]
  static ConvFilter dense(std::size_t out_channels, std::size_t size, std::size_t in_channels,
                          std::span<const double> weights);
  static ConvFilter identity(std::size_t channels);

  std::size_t out_channels() const { return out_; }
  std::size_t size() const { return size_; }
  std::size_t in_channels() const { return in_; }
  std::span<const Entry> entries() const { return entries_; }

  double at(std::size_t j, std::size_t k, std::size_t l) const;
  void set(std::size_t j, std::size_t k, std::size_t l, double w);
  std::vector<double> to_dense() const;
  double norm_inf() const;
  ConvFilter scaled(double a) const;
  // zero-pad to a larger shape; existing entries keep their indices
  ConvFilter padded(std::size_t out_channels, std::size_t size, std::size_t in_channels) const;
  std::string shape_string() const;

  friend bool operator==(const ConvFilter& a, const ConvFilter& b);

 private:
  std::size_t out_ = 0, size_ = 0, in_ = 0;
  std::vector<Entry> entries_;
};

class BiasMatrix {
 public:
  BiasMatrix() = default;
  BiasMatrix(std::size_t rows, std::size_t channels) : values_(rows, channels) {}
  explicit BiasMatrix(FeatureMap values) : values_(std::move(values)) {}
  static BiasMatrix per_channel(std::size_t rows, std::span<const double> b);
  static BiasMatrix first_row(std::size_t rows, std::span<const double> b);

  std::size_t rows() const { return values_.rows(); }
  std::size_t channels() const { return values_.channels(); }
  double operator()(std::size_t i, std::size_t c) const { return values_(i, c); }
  double& operator()(std::size_t i, std::size_t c) { return values_(i, c); }
  const FeatureMap& values() const { return values_; }
  double norm_inf() const { return values_.norm_inf(); }
  BiasMatrix scaled(double a) const;
  BiasMatrix padded(std::size_t channels) const;
  bool is_zero() const;

  friend bool operator==(const BiasMatrix&, const BiasMatrix&) = default;

 private:
  FeatureMap values_;
};

struct ConvLayer {
  ConvFilter filter;
  BiasMatrix bias;
  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

// Literal triple loop over a dense copy of the weights. Reference only.
FeatureMap convolve_reference(const ConvFilter& filter, const FeatureMap& input);
FeatureMap convolve(const ConvFilter& filter, const FeatureMap& input);
FeatureMap relu(FeatureMap input);
FeatureMap add(const FeatureMap& a, const FeatureMap& b);
FeatureMap conv_block_apply(std::span<const ConvFilter> filters, std::span<const BiasMatrix> biases,
                            const FeatureMap& input);
FeatureMap conv_block_apply(std::span<const ConvLayer> layers, const FeatureMap& input);
double readout(const FeatureMap& w, double b, const FeatureMap& q);

// Many feature maps of equal shape, stored channel-major so one filter tap is a
// contiguous axpy over (rows x batch). Value (n, i, c) at c*D*B + i*B + n.
class FeatureBatch {
 public:
  FeatureBatch() = default;
  FeatureBatch(std::size_t batch, std::size_t rows, std::size_t channels);
  static FeatureBatch columns(std::span<const double> points, std::size_t dim);

  std::size_t batch() const { return batch_; }
  std::size_t rows() const { return rows_; }
  std::size_t channels() const { return channels_; }
  double* channel(std::size_t c) { return values_.data() + c * rows_ * batch_; }
  const double* channel(std::size_t c) const { return values_.data() + c * rows_ * batch_; }
  double at(std::size_t n, std::size_t i, std::size_t c) const {
    return values_[(c * rows_ + i) * batch_ + n];
  }
  FeatureMap item(std::size_t n) const;
  FeatureBatch padded(std::size_t channels) const;
  void add_inplace(const FeatureBatch& other);

 private:
  std::size_t batch_ = 0, rows_ = 0, channels_ = 0;
  std::vector<double> values_;
};

FeatureBatch conv_layer_apply(const ConvLayer& layer, const FeatureBatch& input);
FeatureBatch conv_block_apply(std::span<const ConvLayer> layers, FeatureBatch input);
std::vector<double> readout(const FeatureMap& w, double b, const FeatureBatch& q);

}  // namespace besovnet
