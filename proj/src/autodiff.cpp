#include "besovnet/autodiff.hpp"

#include <cstring>
#include <numeric>

namespace besovnet {

ParamId ParameterSet::add(std::string name, std::vector<std::size_t> shape, std::vector<double> values) {
  std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (n != values.size()) throw ShapeError("parameter " + name + " shape does not match value count");
  blocks_.push_back({std::move(name), std::move(shape), std::move(values)});
  return {blocks_.size() - 1};
}

std::size_t ParameterSet::total_size() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.values.size();
  return n;
}

std::vector<double> ParameterSet::flat() const {
  std::vector<double> v;
  v.reserve(total_size());
  for (const auto& b : blocks_) v.insert(v.end(), b.values.begin(), b.values.end());
  return v;
}

void ParameterSet::set_flat(std::span<const double> v) {
  if (v.size() != total_size()) throw ShapeError("flat parameter vector has wrong length");
  std::size_t off = 0;
  for (auto& b : blocks_) {
    std::copy(v.begin() + off, v.begin() + off + b.values.size(), b.values.begin());
    off += b.values.size();
  }
}

NodeId Tape::push(Node n) {
  n.value = compute(n);
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

NodeId Tape::input(FeatureMap x) {
  Node n{Op::Input};
  n.value = std::move(x);
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

NodeId Tape::conv(ParamId filter, NodeId z) {
  const auto& s = params_->shape(filter);
  if (s.size() != 3) throw ShapeError("conv parameter " + params_->name(filter) + " is not a filter");
  Node n{Op::Conv};
  n.a = z.index;
  n.p = filter.index;
  return push(std::move(n));
}

NodeId Tape::add_bias(NodeId z, ParamId bias) {
  Node n{Op::AddBias};
  n.a = z.index;
  n.p = bias.index;
  return push(std::move(n));
}

NodeId Tape::relu(NodeId z) {
  Node n{Op::Relu};
  n.a = z.index;
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  Node n{Op::Add};
  n.a = a.index;
  n.b = b.index;
  return push(std::move(n));
}

NodeId Tape::pad_channels(NodeId z, std::size_t channels) {
  Node n{Op::Pad};
  n.a = z.index;
  n.q = channels;
  return push(std::move(n));
}

NodeId Tape::readout(ParamId w, ParamId b, NodeId q) {
  Node n{Op::Readout};
  n.a = q.index;
  n.p = w.index;
  n.q = b.index;
  return push(std::move(n));
}

NodeId Tape::affine(NodeId z, double scale, double shift) {
  Node n{Op::Affine};
  n.a = z.index;
  n.scale = scale;
  n.shift = shift;
  return push(std::move(n));
}

FeatureMap Tape::compute(const Node& n) const {
  switch (n.op) {
    case Op::Input:
      return n.value;
    case Op::Conv: {
      const auto& s = params_->shape({n.p});
      auto w = params_->values({n.p});
      ConvFilter f = ConvFilter::dense(s[0], s[1], s[2], w);
      return convolve(f, nodes_[n.a].value);
    }
    case Op::AddBias: {
      const auto& z = nodes_[n.a].value;
      const auto& s = params_->shape({n.p});
      if (s.size() != 2 || s[0] != z.rows() || s[1] != z.channels())
        throw ShapeError("bias " + params_->name({n.p}) + " does not match " + z.shape_string());
      auto b = params_->values({n.p});
      return besovnet::add(z, FeatureMap(s[0], s[1], std::vector<double>(b.begin(), b.end())));
    }
    case Op::Relu:
      return besovnet::relu(nodes_[n.a].value);
    case Op::Add:
      return besovnet::add(nodes_[n.a].value, nodes_[n.b].value);
    case Op::Pad: {
      const auto& z = nodes_[n.a].value;
      if (n.q < z.channels()) throw ShapeError("cannot pad channels down");
      FeatureMap y(z.rows(), n.q);
      for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t c = 0; c < z.channels(); ++c) y(i, c) = z(i, c);
      return y;
    }
    case Op::Readout: {
      const auto& z = nodes_[n.a].value;
      const auto& s = params_->shape({n.p});
      if (s.size() != 2) throw ShapeError("readout weights must be a matrix");
      auto w = params_->values({n.p});
      double b = params_->values({n.q})[0];
      FeatureMap wm(s[0], s[1], std::vector<double>(w.begin(), w.end()));
      return FeatureMap(1, 1, {besovnet::readout(wm, b, z)});
    }
    case Op::Affine: {
      FeatureMap y = nodes_[n.a].value;
      for (double& v : y.values()) v = n.scale * v + n.shift;
      return y;
    }
  }
  throw ConsistencyError("unknown tape op");
}

std::vector<std::vector<double>> Tape::backward(NodeId output) const {
  const auto& out = nodes_.at(output.index).value;
  if (out.rows() != 1 || out.channels() != 1) throw ShapeError("backward needs a scalar output");
  std::vector<std::vector<double>> gp(params_->count());
  for (std::size_t p = 0; p < gp.size(); ++p) gp[p].assign(params_->values({p}).size(), 0.0);
  std::vector<FeatureMap> g(output.index + 1);
  g[output.index] = FeatureMap(1, 1, {1.0});
  auto accumulate = [&](std::size_t idx, const FeatureMap& d) {
    if (g[idx].values().empty()) {
      g[idx] = d;
    } else {
      auto gv = g[idx].values();
      auto dv = d.values();
      for (std::size_t t = 0; t < gv.size(); ++t) gv[t] += dv[t];
    }
  };
  for (std::size_t idx = output.index + 1; idx-- > 0;) {
    if (g[idx].values().empty()) continue;
    const Node& n = nodes_[idx];
    const FeatureMap& gy = g[idx];
    switch (n.op) {
      case Op::Input:
        break;
      case Op::Conv: {
        const auto& z = nodes_[n.a].value;
        const auto& s = params_->shape({n.p});
        const std::size_t Co = s[0], K = s[1], C = s[2], D = z.rows();
        auto w = params_->values({n.p});
        auto& dw = gp[n.p];
        FeatureMap dz(D, C);
        for (std::size_t i = 0; i < D; ++i)
          for (std::size_t j = 0; j < Co; ++j) {
            double gij = gy(i, j);
            if (gij == 0.0) continue;
            for (std::size_t k = 0; k < K && i + k < D; ++k)
              for (std::size_t l = 0; l < C; ++l) {
                std::size_t widx = (j * K + k) * C + l;
                dw[widx] += gij * z(i + k, l);
                dz(i + k, l) += gij * w[widx];
              }
          }
        accumulate(n.a, dz);
        break;
      }
      case Op::AddBias: {
        auto gv = gy.values();
        auto& db = gp[n.p];
        for (std::size_t t = 0; t < gv.size(); ++t) db[t] += gv[t];
        accumulate(n.a, gy);
        break;
      }
      case Op::Relu: {
        const auto& z = nodes_[n.a].value;
        FeatureMap dz = gy;
        auto dv = dz.values();
        auto zv = z.values();
        for (std::size_t t = 0; t < dv.size(); ++t)
          if (!(zv[t] > 0.0)) dv[t] = 0.0;
        accumulate(n.a, dz);
        break;
      }
      case Op::Add:
        accumulate(n.a, gy);
        accumulate(n.b, gy);
        break;
      case Op::Pad: {
        const auto& z = nodes_[n.a].value;
        FeatureMap dz(z.rows(), z.channels());
        for (std::size_t i = 0; i < z.rows(); ++i)
          for (std::size_t c = 0; c < z.channels(); ++c) dz(i, c) = gy(i, c);
        accumulate(n.a, dz);
        break;
      }
      case Op::Readout: {
        const auto& z = nodes_[n.a].value;
        double gs = gy(0, 0);
        auto w = params_->values({n.p});
        auto& dw = gp[n.p];
        auto zv = z.values();
        FeatureMap dz(z.rows(), z.channels());
        auto dzv = dz.values();
        for (std::size_t t = 0; t < zv.size(); ++t) {
          dw[t] += gs * zv[t];
          dzv[t] = gs * w[t];
        }
        gp[n.q][0] += gs;
        accumulate(n.a, dz);
        break;
      }
      case Op::Affine: {
        FeatureMap dz = gy;
        for (double& v : dz.values()) v *= n.scale;
        accumulate(n.a, dz);
        break;
      }
    }
  }
  return gp;
}

void Tape::replay() const {
  for (std::size_t idx = 0; idx < nodes_.size(); ++idx) {
    FeatureMap v = compute(nodes_[idx]);
    const auto& rec = nodes_[idx].value;
    if (v.rows() != rec.rows() || v.channels() != rec.channels() ||
        std::memcmp(v.values().data(), rec.values().data(), v.values().size() * sizeof(double)) != 0)
      throw ConsistencyError("tape replay diverged at node " + std::to_string(idx));
  }
}

Gradient grad(const ForwardFn& forward, const FeatureMap& input, const ParameterSet& params) {
  Tape tape(params);
  NodeId in = tape.input(input);
  NodeId out = forward(tape, in);
  tape.replay();
  Gradient g;
  g.value = tape.value(out)(0, 0);
  g.per_parameter = tape.backward(out);
  return g;
}

}  // namespace besovnet
