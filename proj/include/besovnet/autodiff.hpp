#pragma once
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "besovnet/tensor.hpp"

namespace besovnet {

struct NodeId {
  std::size_t index;
};
struct ParamId {
  std::size_t index;
};

// Named flat parameter blocks. Filters use shape {C', K, C} laid out [j][k][l],
// biases and readout weights {D, C}, scalars {1}.
class ParameterSet {
 public:
  ParamId add(std::string name, std::vector<std::size_t> shape, std::vector<double> values);
  std::size_t count() const { return blocks_.size(); }
  std::size_t total_size() const;
  const std::string& name(ParamId p) const { return blocks_.at(p.index).name; }
  const std::vector<std::size_t>& shape(ParamId p) const { return blocks_.at(p.index).shape; }
  std::span<const double> values(ParamId p) const { return blocks_.at(p.index).values; }
  std::span<double> values(ParamId p) { return blocks_.at(p.index).values; }
  std::vector<double> flat() const;
  void set_flat(std::span<const double> v);

 private:
  struct Block {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;
  };
  std::vector<Block> blocks_;
};

// Single-use recording of one forward pass.
class Tape {
 public:
  explicit Tape(const ParameterSet& params) : params_(&params) {}

  NodeId input(FeatureMap x);
  NodeId conv(ParamId filter, NodeId z);
  NodeId add_bias(NodeId z, ParamId bias);
  NodeId relu(NodeId z);
  NodeId add(NodeId a, NodeId b);
  NodeId pad_channels(NodeId z, std::size_t channels);
  NodeId readout(ParamId w, ParamId b, NodeId q);
  NodeId affine(NodeId z, double scale, double shift);

  const FeatureMap& value(NodeId n) const { return nodes_.at(n.index).value; }
  std::size_t size() const { return nodes_.size(); }

  // d(output)/d(parameter) for every block of the parameter set; output must be 1x1
  std::vector<std::vector<double>> backward(NodeId output) const;
  // recompute every node from the recorded inputs; throws ConsistencyError on any bit difference
  void replay() const;

 private:
  enum class Op { Input, Conv, AddBias, Relu, Add, Pad, Readout, Affine };
  struct Node {
    Op op;
    std::size_t a = 0, b = 0;  // operand nodes
    std::size_t p = 0, q = 0;  // parameter blocks
    double scale = 0.0, shift = 0.0;
    FeatureMap value;
  };
  FeatureMap compute(const Node& n) const;
  NodeId push(Node n);

  const ParameterSet* params_;
  std::vector<Node> nodes_;
};

struct Gradient {
  double value = 0.0;
  std::vector<std::vector<double>> per_parameter;
};

using ForwardFn = std::function<NodeId(Tape&, NodeId)>;

Gradient grad(const ForwardFn& forward, const FeatureMap& input, const ParameterSet& params);

}  // namespace besovnet
