#include "besovnet/serialize.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace besovnet {

using nlohmann::json;

std::string format_real(double v) {
  if (!std::isfinite(v)) throw DomainError("cannot serialize non-finite weight");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const json& j, const std::string& path) {
  if (!j.is_string()) throw SchemaError(path, "expected a decimal string");
  const std::string& s = j.get_ref<const std::string&>();
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
    throw SchemaError(path, "not a finite decimal: '" + s + "'");
  return v;
}

namespace {

const json& need(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(path + "/" + key, "missing");
  return *it;
}

std::size_t need_size(const json& j, const char* key, const std::string& path) {
  const json& v = need(j, key, path);
  if (!v.is_number_unsigned()) throw SchemaError(path + "/" + key, "expected a nonnegative integer");
  return v.get<std::size_t>();
}

std::vector<std::size_t> need_shape(const json& j, std::size_t rank, const std::string& path) {
  const json& s = need(j, "shape", path);
  if (!s.is_array() || s.size() != rank) throw SchemaError(path + "/shape", "expected " + std::to_string(rank) + " extents");
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < rank; ++n) {
    if (!s[n].is_number_unsigned() || s[n].get<std::size_t>() == 0)
      throw SchemaError(path + "/shape/" + std::to_string(n), "expected a positive integer");
    out.push_back(s[n].get<std::size_t>());
  }
  return out;
}

json write_filter(const ConvFilter& f) {
  json entries = json::array();
  for (const auto& e : f.entries()) entries.push_back({e.out, e.tap, e.in, format_real(e.weight)});
  return {{"shape", {f.out_channels(), f.size(), f.in_channels()}}, {"entries", entries}};
}

ConvFilter read_filter(const json& j, const std::string& path) {
  auto shape = need_shape(j, 3, path);
  const json& entries = need(j, "entries", path);
  if (!entries.is_array()) throw SchemaError(path + "/entries", "expected an array");
  std::vector<ConvFilter::Entry> out;
  for (std::size_t n = 0; n < entries.size(); ++n) {
    std::string p = path + "/entries/" + std::to_string(n);
    const json& e = entries[n];
    if (!e.is_array() || e.size() != 4) throw SchemaError(p, "expected [out, tap, in, weight]");
    for (int t = 0; t < 3; ++t)
      if (!e[t].is_number_unsigned() || e[t].get<std::size_t>() >= shape[t])
        throw SchemaError(p + "/" + std::to_string(t), "index outside filter shape");
    out.push_back({e[0].get<std::uint32_t>(), e[1].get<std::uint32_t>(), e[2].get<std::uint32_t>(),
                   parse_real(e[3], p + "/3")});
  }
  return ConvFilter(shape[0], shape[1], shape[2], std::move(out));
}

json write_matrix(const FeatureMap& m) {
  json entries = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t c = 0; c < m.channels(); ++c)
      if (m(i, c) != 0.0) entries.push_back({i, c, format_real(m(i, c))});
  return {{"shape", {m.rows(), m.channels()}}, {"entries", entries}};
}

FeatureMap read_matrix(const json& j, const std::string& path) {
  auto shape = need_shape(j, 2, path);
  FeatureMap m(shape[0], shape[1]);
  const json& entries = need(j, "entries", path);
  if (!entries.is_array()) throw SchemaError(path + "/entries", "expected an array");
  for (std::size_t n = 0; n < entries.size(); ++n) {
    std::string p = path + "/entries/" + std::to_string(n);
    const json& e = entries[n];
    if (!e.is_array() || e.size() != 3) throw SchemaError(p, "expected [row, channel, value]");
    for (int t = 0; t < 2; ++t)
      if (!e[t].is_number_unsigned() || e[t].get<std::size_t>() >= shape[t])
        throw SchemaError(p + "/" + std::to_string(t), "index outside matrix shape");
    m(e[0].get<std::size_t>(), e[1].get<std::size_t>()) = parse_real(e[2], p + "/2");
  }
  return m;
}

json write_layers(const std::vector<ConvLayer>& layers) {
  json out = json::array();
  for (const auto& l : layers) out.push_back({{"filter", write_filter(l.filter)}, {"bias", write_matrix(l.bias.values())}});
  return out;
}

std::vector<ConvLayer> read_layers(const json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected an array of layers");
  std::vector<ConvLayer> out;
  for (std::size_t n = 0; n < j.size(); ++n) {
    std::string p = path + "/" + std::to_string(n);
    out.push_back({read_filter(need(j[n], "filter", p), p + "/filter"),
                   BiasMatrix(read_matrix(need(j[n], "bias", p), p + "/bias"))});
  }
  return out;
}

json write_provenance(const Provenance& p) { return {{"step", p.step}, {"parameters", p.parameters}}; }

Provenance read_provenance(const json& j, const std::string& path) {
  const json& step = need(j, "step", path);
  if (!step.is_string()) throw SchemaError(path + "/step", "expected a string");
  Provenance p{step.get<std::string>()};
  if (j.contains("parameters")) p.parameters = j["parameters"];
  return p;
}

json write_provenance_list(const std::vector<Provenance>& ps) {
  json out = json::array();
  for (const auto& p : ps) out.push_back(write_provenance(p));
  return out;
}

std::vector<Provenance> read_provenance_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw SchemaError(path, "expected an array");
  std::vector<Provenance> out;
  for (std::size_t n = 0; n < j.size(); ++n) out.push_back(read_provenance(j[n], path + "/" + std::to_string(n)));
  return out;
}

json header(const char* kind) { return {{"schema", "besovnet.network"}, {"version", kDocumentVersion}, {"kind", kind}}; }

void check_header(const json& doc, const char* kind) {
  if (!doc.is_object()) throw SchemaError("", "document must be an object");
  const json& schema = need(doc, "schema", "");
  if (schema != "besovnet.network") throw SchemaError("/schema", "unknown schema");
  const json& version = need(doc, "version", "");
  if (!version.is_number_integer() || version.get<int>() != kDocumentVersion)
    throw SchemaError("/version", "unsupported version " + version.dump());
  const json& k = need(doc, "kind", "");
  if (kind && k != kind) throw SchemaError("/kind", std::string("expected ") + kind);
}

double envelope_real(const json& e, const char* key) { return parse_real(need(e, key, "/envelope"), std::string("/envelope/") + key); }

// structural envelope fields are enforced at load time; magnitudes are left to audit
void enforce_structure(const SizeAudit& a, const char* const* names) {
  for (; *names; ++names) {
    const auto& f = a.field(*names);
    if (!f.pass)
      throw SchemaError("/envelope/" + f.name, "document exceeds declared " + f.name + " (" +
                                                   std::to_string(f.measured) + " > " + std::to_string(f.declared) + ")");
  }
}

}  // namespace

json serialize(const MlpNetwork& net) {
  json doc = header("mlp");
  const auto& e = net.envelope();
  doc["envelope"] = {{"L", e.depth}, {"J", e.width}, {"kappa", format_real(e.bound)}};
  if (e.clip) doc["envelope"]["R"] = format_real(*e.clip);
  json layers = json::array();
  for (const auto& l : net.layers()) {
    json w = json::array(), b = json::array();
    for (double v : l.weights) w.push_back(format_real(v));
    for (double v : l.bias) b.push_back(format_real(v));
    layers.push_back({{"shape", {l.out, l.in}}, {"weights", w}, {"bias", b}});
  }
  doc["blocks"] = json::array({{{"layers", layers}, {"provenance", write_provenance(net.provenance())}}});
  doc["readout"] = {{"output_dim", net.output_dim()}};
  doc["provenance"] = json::array({write_provenance(net.provenance())});
  return doc;
}

json serialize(const CnnNetwork& net) {
  json doc = header("cnn");
  const auto& e = net.envelope();
  doc["input"] = {{"rows", net.input_rows()}, {"channels", net.input_channels()}};
  doc["envelope"] = {{"L", e.depth},
                     {"J", e.channels},
                     {"K", e.filter_size},
                     {"kappa1", format_real(e.conv_bound)},
                     {"kappa2", format_real(e.readout_bound)}};
  doc["blocks"] = json::array({{{"layers", write_layers(net.layers())}}});
  doc["readout"] = {{"weights", write_matrix(net.readout_weights())},
                    {"bias", format_real(net.readout_bias())},
                    {"first_row_only", net.first_row_only()}};
  doc["provenance"] = write_provenance_list(net.provenance());
  return doc;
}

json serialize(const ConvResNet& net) {
  json doc = header("resnet");
  const auto& e = net.envelope();
  doc["input"] = {{"rows", net.input_rows()}, {"padded_channels", net.padded_channels()}};
  doc["envelope"] = {{"M", e.blocks},
                     {"L", e.depth},
                     {"J", e.channels},
                     {"K", e.filter_size},
                     {"kappa1", format_real(e.conv_bound)},
                     {"kappa2", format_real(e.readout_bound)}};
  if (e.output_bound) doc["envelope"]["R"] = format_real(*e.output_bound);
  json blocks = json::array();
  for (const auto& b : net.blocks())
    blocks.push_back({{"layers", write_layers(b.layers)}, {"provenance", write_provenance(b.provenance)}});
  doc["blocks"] = std::move(blocks);
  doc["readout"] = {{"weights", write_matrix(net.readout_weights())}, {"bias", format_real(net.readout_bias())}};
  doc["provenance"] = write_provenance_list(net.provenance());
  return doc;
}

MlpNetwork deserialize_mlp(const json& doc) {
  check_header(doc, "mlp");
  const json& env = need(doc, "envelope", "");
  MlpEnvelope e{need_size(env, "L", "/envelope"), need_size(env, "J", "/envelope"), envelope_real(env, "kappa")};
  if (env.contains("R")) e.clip = envelope_real(env, "R");
  const json& blocks = need(doc, "blocks", "");
  if (!blocks.is_array() || blocks.size() != 1) throw SchemaError("/blocks", "mlp has exactly one block");
  const json& layers = need(blocks[0], "layers", "/blocks/0");
  if (!layers.is_array()) throw SchemaError("/blocks/0/layers", "expected an array");
  std::vector<DenseLayer> out;
  for (std::size_t n = 0; n < layers.size(); ++n) {
    std::string p = "/blocks/0/layers/" + std::to_string(n);
    auto shape = need_shape(layers[n], 2, p);
    DenseLayer l{shape[0], shape[1]};
    const json& w = need(layers[n], "weights", p);
    const json& b = need(layers[n], "bias", p);
    if (!w.is_array() || w.size() != l.out * l.in) throw SchemaError(p + "/weights", "wrong length");
    if (!b.is_array() || b.size() != l.out) throw SchemaError(p + "/bias", "wrong length");
    for (std::size_t t = 0; t < w.size(); ++t) l.weights.push_back(parse_real(w[t], p + "/weights/" + std::to_string(t)));
    for (std::size_t t = 0; t < b.size(); ++t) l.bias.push_back(parse_real(b[t], p + "/bias/" + std::to_string(t)));
    out.push_back(std::move(l));
  }
  Provenance prov = read_provenance(need(blocks[0], "provenance", "/blocks/0"), "/blocks/0/provenance");
  try {
    MlpNetwork net(std::move(out), e, std::move(prov));
    static const char* const names[] = {"L", "J", nullptr};
    enforce_structure(audit(net), names);
    return net;
  } catch (const ShapeError& err) {
    throw SchemaError("/blocks", err.what());
  }
}

CnnNetwork deserialize_cnn(const json& doc) {
  check_header(doc, "cnn");
  const json& env = need(doc, "envelope", "");
  CnnEnvelope e{need_size(env, "L", "/envelope"), need_size(env, "J", "/envelope"), need_size(env, "K", "/envelope"),
                envelope_real(env, "kappa1"), envelope_real(env, "kappa2")};
  const json& input = need(doc, "input", "");
  std::size_t rows = need_size(input, "rows", "/input"), channels = need_size(input, "channels", "/input");
  const json& blocks = need(doc, "blocks", "");
  if (!blocks.is_array() || blocks.size() != 1) throw SchemaError("/blocks", "cnn has exactly one block");
  auto layers = read_layers(need(blocks[0], "layers", "/blocks/0"), "/blocks/0/layers");
  for (std::size_t n = 0; n < layers.size(); ++n)
    if (layers[n].filter.size() > e.filter_size)
      throw SchemaError("/blocks/0/layers/" + std::to_string(n) + "/filter/shape/1",
                        "filter size " + std::to_string(layers[n].filter.size()) + " exceeds declared K=" +
                            std::to_string(e.filter_size));
  const json& ro = need(doc, "readout", "");
  FeatureMap w = read_matrix(need(ro, "weights", "/readout"), "/readout/weights");
  double b = parse_real(need(ro, "bias", "/readout"), "/readout/bias");
  const json& fro = need(ro, "first_row_only", "/readout");
  if (!fro.is_boolean()) throw SchemaError("/readout/first_row_only", "expected a boolean");
  auto prov = read_provenance_list(need(doc, "provenance", ""), "/provenance");
  try {
    CnnNetwork net(rows, channels, std::move(layers), std::move(w), b, fro.get<bool>(), e, std::move(prov));
    static const char* const names[] = {"L", "J", "K", nullptr};
    enforce_structure(audit(net), names);
    return net;
  } catch (const ShapeError& err) {
    throw SchemaError("/blocks", err.what());
  }
}

ConvResNet deserialize_resnet(const json& doc) {
  check_header(doc, "resnet");
  const json& env = need(doc, "envelope", "");
  ResNetEnvelope e{need_size(env, "M", "/envelope"),         need_size(env, "L", "/envelope"),
                   need_size(env, "J", "/envelope"),         need_size(env, "K", "/envelope"),
                   envelope_real(env, "kappa1"),             envelope_real(env, "kappa2")};
  if (env.contains("R")) e.output_bound = envelope_real(env, "R");
  const json& input = need(doc, "input", "");
  std::size_t rows = need_size(input, "rows", "/input"), channels = need_size(input, "padded_channels", "/input");
  const json& blocks = need(doc, "blocks", "");
  if (!blocks.is_array()) throw SchemaError("/blocks", "expected an array");
  std::vector<ResidualBlock> out;
  for (std::size_t m = 0; m < blocks.size(); ++m) {
    std::string p = "/blocks/" + std::to_string(m);
    ResidualBlock b{read_layers(need(blocks[m], "layers", p), p + "/layers"),
                    read_provenance(need(blocks[m], "provenance", p), p + "/provenance")};
    for (std::size_t n = 0; n < b.layers.size(); ++n)
      if (b.layers[n].filter.size() > e.filter_size)
        throw SchemaError(p + "/layers/" + std::to_string(n) + "/filter/shape/1",
                          "filter size exceeds declared K=" + std::to_string(e.filter_size));
    out.push_back(std::move(b));
  }
  const json& ro = need(doc, "readout", "");
  FeatureMap w = read_matrix(need(ro, "weights", "/readout"), "/readout/weights");
  double b = parse_real(need(ro, "bias", "/readout"), "/readout/bias");
  auto prov = read_provenance_list(need(doc, "provenance", ""), "/provenance");
  try {
    ConvResNet net(rows, channels, std::move(out), std::move(w), b, e, std::move(prov));
    static const char* const names[] = {"M", "L", "J", "K", nullptr};
    enforce_structure(audit(net), names);
    return net;
  } catch (const ShapeError& err) {
    throw SchemaError("/blocks", err.what());
  }
}

AnyNetwork deserialize(const json& doc) {
  check_header(doc, nullptr);
  const std::string kind = doc["kind"].is_string() ? doc["kind"].get<std::string>() : "";
  if (kind == "mlp") return deserialize_mlp(doc);
  if (kind == "cnn") return deserialize_cnn(doc);
  if (kind == "resnet") return deserialize_resnet(doc);
  throw SchemaError("/kind", "unknown network kind");
}

}  // namespace besovnet
