#include "config.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

#include "besovnet/error.hpp"

namespace besovnet::cli {

using nlohmann::json;

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> v{"build", "verify", "audit", "classify", "cover", "calculus-fuzz"};
  return v;
}

namespace {

enum class Kind { number, integer, string, boolean, object, int_array, free_object };

struct Field {
  Kind kind = Kind::number;
  double lo = -INFINITY, hi = INFINITY;
  bool lo_open = false;
  std::vector<std::string> choices;
  std::map<std::string, Field> children;
  std::string doc;
};

Field num(double lo = -INFINITY, bool open = false, double hi = INFINITY, std::string doc = "") {
  Field f;
  f.lo = lo;
  f.lo_open = open;
  f.hi = hi;
  f.doc = std::move(doc);
  return f;
}
Field positive(std::string doc = "") { return num(0, true, INFINITY, std::move(doc)); }
Field integer(double lo, std::string doc = "") {
  Field f = num(lo, false, INFINITY, std::move(doc));
  f.kind = Kind::integer;
  return f;
}
Field str(std::vector<std::string> choices = {}, std::string doc = "") {
  Field f;
  f.kind = Kind::string;
  f.choices = std::move(choices);
  f.doc = std::move(doc);
  return f;
}
Field obj(std::map<std::string, Field> children, std::string doc = "") {
  Field f;
  f.kind = Kind::object;
  f.children = std::move(children);
  f.doc = std::move(doc);
  return f;
}

const std::map<std::string, std::vector<std::string>>& family_params() {
  static const std::map<std::string, std::vector<std::string>> m{
      {"constant", {"value"}},
      {"trig", {"amplitude", "frequency", "offset", "phase"}},
      {"bump-sum", {"count", "width"}},
      {"lipschitz-kink", {}}};
  return m;
}

Field function_spec(const std::string& doc) {
  std::vector<std::string> fam;
  for (const auto& [k, v] : family_params()) fam.push_back(k);
  Field params;
  params.kind = Kind::free_object;
  params.doc = "family parameters (numbers)";
  return obj({{"family", str(fam)}, {"params", params}}, doc);
}

const Field& schema() {
  static const Field root = [] {
    std::vector<std::string> suites = suite_names();
    suites.push_back("all");
    Field n;
    n.kind = Kind::int_array;
    n.lo = 2;
    n.doc = "training-set sizes";
    return obj({
        {"command", str(command_names())},
        {"seed", integer(0, "global 64-bit seed")},
        {"eps", num(0, true, 1, "target accuracy, in (0,1)")},
        {"F", positive("output truncation level of the classifier")},
        {"manifold", obj({{"kind", str({"circle", "sphere", "torus", "patch"})},
                          {"D", integer(1, "ambient dimension")},
                          {"radius", positive()},
                          {"major", positive()},
                          {"side", positive()},
                          {"d", integer(1, "patch dimension")}})},
        {"target", function_spec("regression target (build)")},
        {"eta", function_spec("conditional class probability (classify)")},
        {"constants", obj({{"C", positive()},
                           {"c", positive()},
                           {"c1", positive()},
                           {"lambda", positive()},
                           {"omega", positive()},
                           {"K", integer(1, "filter size")},
                           {"cap_constant", positive()},
                           {"kappa1_rule", str({"unit", "bfijcnn"})},
                           {"C_prime", positive()}})},
        {"samples", integer(1, "verification samples")},
        {"collar_samples", integer(0, "extra collar samples per chart")},
        {"risk_points", integer(1, "Monte Carlo points for excess-risk estimates")},
        {"suite", str(suites)},
        {"calculus", obj({{"instances", integer(1)},
                          {"inputs", integer(1)},
                          {"max_D", integer(2)},
                          {"max_layers", integer(1)},
                          {"max_channels", integer(1)}})},
        {"network", str({}, "network document to audit")},
        {"covering", obj({{"M", positive()},
                          {"L", positive()},
                          {"J", positive()},
                          {"K", positive()},
                          {"kappa1", positive()},
                          {"kappa2", positive()},
                          {"D", positive()},
                          {"delta", positive()}})},
        {"erm", obj({{"n", n},
                     {"seeds", integer(1)},
                     {"layers", integer(1)},
                     {"channels", integer(1)},
                     {"K", integer(1)},
                     {"init_scale", positive()},
                     {"epochs", integer(1)},
                     {"batch", integer(1)},
                     {"lr", positive()},
                     {"decay", positive()},
                     {"test_points", integer(1)}})},
        {"out", str({}, "output directory")},
    });
  }();
  return root;
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void check(const Field& f, const json& v, const std::string& path) {
  const std::string where = path.empty() ? "$" : path;
  switch (f.kind) {
    case Kind::number:
    case Kind::integer: {
      if (!v.is_number()) throw SchemaError(where, "expected a number");
      if (f.kind == Kind::integer && !v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw SchemaError(where, "expected a nonnegative integer");
      const double x = v.get<double>();
      if (!std::isfinite(x)) throw SchemaError(where, "expected a finite number");
      if (x < f.lo || (f.lo_open && x == f.lo) || x > f.hi || (f.hi < INFINITY && f.lo_open && x == f.hi)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%g outside %s%g, %g%s", x, f.lo_open ? "(" : "[", f.lo, f.hi,
                      f.lo_open && f.hi < INFINITY ? ")" : "]");
        throw SchemaError(where, buf);
      }
      return;
    }
    case Kind::string: {
      if (!v.is_string()) throw SchemaError(where, "expected a string");
      if (!f.choices.empty()) {
        const auto s = v.get<std::string>();
        bool ok = false;
        for (const auto& c : f.choices) ok = ok || c == s;
        if (!ok) {
          std::string list;
          for (const auto& c : f.choices) list += (list.empty() ? "" : ", ") + c;
          throw SchemaError(where, "'" + s + "' is not one of {" + list + "}");
        }
      }
      return;
    }
    case Kind::boolean:
      if (!v.is_boolean()) throw SchemaError(where, "expected true or false");
      return;
    case Kind::int_array:
      if (!v.is_array() || v.empty()) throw SchemaError(where, "expected a nonempty array of integers");
      for (std::size_t i = 0; i < v.size(); ++i) {
        Field e = integer(f.lo);
        check(e, v[i], path + "[" + std::to_string(i) + "]");
      }
      return;
    case Kind::free_object:
      if (!v.is_object()) throw SchemaError(where, "expected an object");
      for (const auto& [k, x] : v.items())
        if (!x.is_number()) throw SchemaError(join(path, k), "expected a number");
      return;
    case Kind::object:
      if (!v.is_object()) throw SchemaError(where, "expected an object");
      for (const auto& [k, x] : v.items()) {
        auto it = f.children.find(k);
        if (it == f.children.end()) throw SchemaError(join(path, k), "unknown key");
        check(it->second, x, join(path, k));
      }
      return;
  }
}

void check_function(const json& doc, const char* key) {
  if (!doc.contains(key)) return;
  const json& t = doc.at(key);
  const std::string fam = t.value("family", std::string("trig"));
  if (!t.contains("params")) return;
  const auto& allowed = family_params().at(fam);
  for (const auto& [k, v] : t.at("params").items()) {
    bool ok = false;
    for (const auto& a : allowed) ok = ok || a == k;
    if (!ok) throw SchemaError(std::string(key) + ".params." + k, "unknown parameter for family '" + fam + "'");
  }
}

template <class T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}
template <class T>
void take(const json& j, const char* key, std::optional<T>& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

json schema_json(const Field& f) {
  json s;
  switch (f.kind) {
    case Kind::number:
    case Kind::integer:
      s["type"] = f.kind == Kind::integer ? "integer" : "number";
      if (std::isfinite(f.lo)) s[f.lo_open ? "exclusiveMinimum" : "minimum"] = f.lo;
      if (std::isfinite(f.hi)) s[f.lo_open ? "exclusiveMaximum" : "maximum"] = f.hi;
      break;
    case Kind::string:
      s["type"] = "string";
      if (!f.choices.empty()) s["enum"] = f.choices;
      break;
    case Kind::boolean:
      s["type"] = "boolean";
      break;
    case Kind::int_array:
      s = {{"type", "array"}, {"minItems", 1}, {"items", {{"type", "integer"}, {"minimum", f.lo}}}};
      break;
    case Kind::free_object:
      s = {{"type", "object"}, {"additionalProperties", {{"type", "number"}}}};
      break;
    case Kind::object: {
      s = {{"type", "object"}, {"additionalProperties", false}};
      json props = json::object();
      for (const auto& [k, c] : f.children) props[k] = schema_json(c);
      s["properties"] = props;
      break;
    }
  }
  if (!f.doc.empty()) s["description"] = f.doc;
  return s;
}

}  // namespace

json config_schema() {
  json s = schema_json(schema());
  s["$schema"] = "https://json-schema.org/draft/2020-12/schema";
  s["title"] = "besovnet run configuration";
  return s;
}

RunConfig parse_config(const json& doc) {
  check(schema(), doc, "");
  check_function(doc, "target");
  check_function(doc, "eta");
  RunConfig c;
  if (!doc.contains("command")) throw SchemaError("command", "missing; give a subcommand or a \"command\" key");
  c.command = doc.at("command").get<std::string>();
  take(doc, "seed", c.seed);
  c.eps = c.command == "classify" ? 1e-2 : 0.1;
  take(doc, "eps", c.eps);
  take(doc, "F", c.F);
  if (c.command == "classify" && !(4 * std::exp(c.F) * c.eps < 1))
    throw SchemaError(doc.contains("eps") ? "eps" : "F", "classifier needs 4 e^F eps < 1");
  c.eta = {"trig", {{"amplitude", 0.4}, {"offset", 0.5}, {"phase", std::numbers::pi / 2}}};
  if (c.command == "classify") c.D = 2;
  if (doc.contains("manifold")) {
    const json& m = doc.at("manifold");
    take(m, "kind", c.manifold);
    take(m, "D", c.D);
    take(m, "radius", c.manifold_params.radius);
    take(m, "major", c.manifold_params.major);
    take(m, "side", c.manifold_params.side);
    take(m, "d", c.manifold_params.d);
  }
  for (auto [key, spec] : {std::pair{"target", &c.target}, std::pair{"eta", &c.eta}})
    if (doc.contains(key)) {
      const json& t = doc.at(key);
      if (t.contains("family") && t.at("family") != spec->family) spec->params = json::object();
      take(t, "family", spec->family);
      if (t.contains("params"))
        for (const auto& [k, v] : t.at("params").items()) spec->params[k] = v;
    }
  if (doc.contains("constants")) {
    const json& k = doc.at("constants");
    take(k, "C", c.C);
    take(k, "c", c.c);
    take(k, "c1", c.c1);
    take(k, "lambda", c.lambda);
    take(k, "omega", c.omega);
    take(k, "K", c.K);
    take(k, "cap_constant", c.cap_constant);
    take(k, "kappa1_rule", c.kappa1_rule);
    take(k, "C_prime", c.C_prime);
  }
  take(doc, "samples", c.samples);
  take(doc, "collar_samples", c.collar_samples);
  take(doc, "risk_points", c.risk_points);
  take(doc, "suite", c.suite);
  if (doc.contains("calculus")) {
    const json& k = doc.at("calculus");
    take(k, "instances", c.calculus.instances);
    take(k, "inputs", c.calculus.inputs);
    take(k, "max_D", c.calculus.max_D);
    take(k, "max_layers", c.calculus.max_layers);
    take(k, "max_channels", c.calculus.max_channels);
  }
  take(doc, "network", c.network);
  if (c.command == "audit" && c.network.empty()) throw SchemaError("network", "audit needs a network document path");
  if (doc.contains("covering")) {
    const json& k = doc.at("covering");
    take(k, "M", c.covering.M);
    take(k, "L", c.covering.L);
    take(k, "J", c.covering.J);
    take(k, "K", c.covering.K);
    take(k, "kappa1", c.covering.kappa1);
    take(k, "kappa2", c.covering.kappa2);
    take(k, "D", c.covering.D);
    take(k, "delta", c.covering.delta);
  }
  if (doc.contains("erm")) {
    const json& k = doc.at("erm");
    ErmSpec e;
    take(k, "n", e.n);
    take(k, "seeds", e.seeds);
    take(k, "layers", e.arch.layers);
    take(k, "channels", e.arch.channels);
    take(k, "K", e.arch.K);
    take(k, "init_scale", e.arch.init_scale);
    take(k, "epochs", e.sgd.epochs);
    take(k, "batch", e.sgd.batch);
    take(k, "lr", e.sgd.lr);
    take(k, "decay", e.sgd.decay);
    take(k, "test_points", e.test_points);
    e.arch.F = c.F;
    c.erm = e;
  }
  take(doc, "out", c.out);
  return c;
}

json RunConfig::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j = {{"command", command},
            {"seed", seed},
            {"eps", eps},
            {"F", F},
            {"manifold",
             {{"kind", manifold},
              {"D", D},
              {"radius", manifold_params.radius},
              {"major", manifold_params.major},
              {"side", manifold_params.side},
              {"d", manifold_params.d}}},
            {"target", {{"family", target.family}, {"params", target.params}}},
            {"eta", {{"family", eta.family}, {"params", eta.params}}},
            {"constants",
             {{"C", C},
              {"c", opt(c)},
              {"c1", opt(c1)},
              {"lambda", opt(lambda)},
              {"omega", opt(omega)},
              {"K", K},
              {"cap_constant", cap_constant},
              {"kappa1_rule", kappa1_rule},
              {"C_prime", C_prime}}},
            {"samples", samples},
            {"collar_samples", collar_samples},
            {"risk_points", risk_points},
            {"suite", suite},
            {"calculus",
             {{"instances", calculus.instances},
              {"inputs", calculus.inputs},
              {"max_D", calculus.max_D},
              {"max_layers", calculus.max_layers},
              {"max_channels", calculus.max_channels}}},
            {"network", network},
            {"covering",
             {{"M", covering.M},
              {"L", covering.L},
              {"J", covering.J},
              {"K", covering.K},
              {"kappa1", covering.kappa1},
              {"kappa2", covering.kappa2},
              {"D", covering.D},
              {"delta", covering.delta}}}};
  if (erm)
    j["erm"] = {{"n", erm->n},
                {"seeds", erm->seeds},
                {"layers", erm->arch.layers},
                {"channels", erm->arch.channels},
                {"K", erm->arch.K},
                {"init_scale", erm->arch.init_scale},
                {"epochs", erm->sgd.epochs},
                {"batch", erm->sgd.batch},
                {"lr", erm->sgd.lr},
                {"decay", erm->sgd.decay},
                {"test_points", erm->test_points}};
  return j;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json().dump()) h = (h ^ ch) * 0x100000001b3ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace besovnet::cli
