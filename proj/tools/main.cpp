// besovnet command-line driver: build | verify | audit | classify | cover | calculus-fuzz
#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "besovnet/approx.hpp"
#include "besovnet/classifier.hpp"
#include "besovnet/error.hpp"
#include "besovnet/rng.hpp"
#include "besovnet/serialize.hpp"
#include "besovnet/suites.hpp"
#include "config.hpp"

using namespace besovnet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Certificate {
  std::string name;
  bool pass = true;
  std::string detail;
};

using Table = std::vector<std::vector<std::string>>;

struct Outcome {
  json results = json::object();
  std::vector<Certificate> certificates;
  std::vector<std::pair<std::string, std::string>> files;  // name, contents
  json timings = json::object();
};

std::string cell(double v) { return format_real(v); }
std::string cell(std::size_t v) { return std::to_string(v); }
std::string cell(bool v) { return v ? "true" : "false"; }
std::string cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string csv(const Table& t) {
  std::ostringstream os;
  for (const auto& row : t) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << "\n";
  }
  return os.str();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

Certificate bound_check(const std::string& name, double measured, double budget) {
  return {name, measured <= budget, fmt(measured) + " <= " + fmt(budget)};
}

BuildOptions build_options(const cli::RunConfig& c) {
  BuildOptions o;
  o.eps = c.eps;
  o.K = c.K;
  o.omega = c.omega;
  o.C = c.C;
  o.c = c.c;
  o.c1 = c.c1;
  o.lambda = c.lambda;
  o.cap_constant = c.cap_constant;
  o.kappa1_rule = c.kappa1_rule;
  o.C_prime = c.C_prime;
  o.seed = c.seed;
  o.samples = c.samples;
  o.collar_samples = c.collar_samples;
  o.strict = false;
  return o;
}

SyntheticManifold manifold_of(const cli::RunConfig& c) {
  return make_manifold(parse_manifold_kind(c.manifold), c.D, c.manifold_params);
}

Table stage_table(const std::vector<StageCheck>& stages) {
  Table t{{"stage", "measured", "budget", "ratio", "pass"}};
  for (const auto& s : stages)
    t.push_back({cell(s.name), cell(s.measured), cell(s.budget), cell(s.budget > 0 ? s.measured / s.budget : 0.0),
                 cell(s.pass)});
  return t;
}

Outcome run_build(const cli::RunConfig& c) {
  Outcome out;
  const auto M = manifold_of(c);
  const auto f = make_target(M, c.target.family, c.target.params, derive_seed(c.seed, "target"));
  const auto r = build_theorem1_network(f, M, build_options(c));
  out.files.push_back({"network.json", serialize(r.network).dump() + "\n"});
  out.results = {{"manifold", to_json(M)}, {"atlas", to_json(r.atlas)}, {"verification", r.report.to_json()}};
  out.files.push_back({"errors.csv", csv(stage_table(r.report.stages))});
  Table charts{{"chart", "terms", "A1", "A2", "A3", "spline_fit", "spline_cnn", "lipschitz", "norm", "S", "eps1"}};
  for (const auto& L : r.report.charts)
    charts.push_back({cell(L.chart), cell(L.terms), cell(L.A1), cell(L.A2), cell(L.A3), cell(L.spline_fit),
                      cell(L.spline_cnn), cell(L.lipschitz), cell(L.norm), cell(L.S), cell(L.eps1)});
  out.files.push_back({"charts.csv", csv(charts)});
  for (const auto& s : r.report.stages) out.certificates.push_back({s.name, s.pass, fmt(s.measured) + " <= " + fmt(s.budget)});
  for (const auto& a : r.report.audit.fields)
    out.certificates.push_back({"audit:" + a.name, a.pass, fmt(a.measured) + " <= " + fmt(a.declared)});
  out.timings["build_seconds"] = r.report.seconds;
  return out;
}

Table suite_table(const std::vector<SuiteResult>& rs) {
  Table t{{"suite", "check", "measured", "tolerance", "trials", "pass"}};
  for (const auto& r : rs)
    for (const auto& row : r.rows)
      t.push_back({cell(r.name), cell(row.check), cell(row.measured), cell(row.tolerance), cell(row.trials), cell(row.pass)});
  return t;
}

Outcome suites_outcome(const std::vector<SuiteResult>& rs) {
  Outcome out;
  json arr = json::array();
  for (const auto& r : rs) {
    arr.push_back(r.to_json());
    for (const auto& row : r.rows)
      out.certificates.push_back({r.name + "/" + row.check, row.pass, fmt(row.measured) + " <= " + fmt(row.tolerance)});
    out.timings[r.name + "_seconds"] = r.seconds;
  }
  out.results = {{"suites", arr}};
  out.files.push_back({"suites.csv", csv(suite_table(rs))});
  return out;
}

Outcome run_verify(const cli::RunConfig& c) {
  std::vector<std::string> names = c.suite == "all" ? suite_names() : std::vector<std::string>{c.suite};
  std::vector<SuiteResult> rs;
  for (const auto& n : names)
    rs.push_back(n == "calculus" ? run_calculus_suite(c.seed, c.calculus) : run_suite(n, c.seed));
  return suites_outcome(rs);
}

Outcome run_calculus_fuzz(const cli::RunConfig& c) { return suites_outcome({run_calculus_suite(c.seed, c.calculus)}); }

Outcome run_audit(const cli::RunConfig& c) {
  Outcome out;
  std::ifstream in(c.network);
  if (!in) throw SchemaError("network", "cannot open '" + c.network + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("network", std::string("not valid JSON: ") + e.what());
  }
  const AnyNetwork net = deserialize(doc);
  const SizeAudit a = std::visit([](const auto& n) { return audit(n); }, net);
  static const char* kinds[] = {"mlp", "cnn", "resnet"};
  Table t{{"field", "measured", "declared", "pass"}};
  json fields = json::array();
  for (const auto& f : a.fields) {
    t.push_back({cell(f.name), cell(f.measured), cell(f.declared), cell(f.pass)});
    fields.push_back({{"field", f.name}, {"measured", f.measured}, {"declared", f.declared}, {"pass", f.pass}});
    out.certificates.push_back({"audit:" + f.name, f.pass, fmt(f.measured) + " <= " + fmt(f.declared)});
  }
  out.results = {{"kind", kinds[net.index()]}, {"audit", fields}};
  out.files.push_back({"audit.csv", csv(t)});
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome run_classify(const cli::RunConfig& c) {
  Outcome out;
  const auto M = manifold_of(c);
  const auto eta = make_target(M, c.eta.family, c.eta.params, derive_seed(c.seed, "eta"));
  const LabelModel model = make_label_model(M, eta);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = build_classifier_network(model, c.F, c.eps, build_options(c), false);
  out.timings["build_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.files.push_back({"network.json", serialize(r.network).dump() + "\n"});
  std::vector<StageCheck> st;
  for (const auto& s : r.certificate.stages) {
    st.push_back({s.name, s.measured, s.budget, s.pass});
    out.certificates.push_back({s.name, s.pass, fmt(s.measured) + " <= " + fmt(s.budget)});
  }
  out.certificates.push_back({"sign_violations", r.certificate.sign_violations == 0,
                              std::to_string(r.certificate.sign_violations) + " == 0"});
  out.files.push_back({"errors.csv", csv(stage_table(st))});

  const auto risk = estimate_excess_risk(
      model, [&](std::span<const double> x) { return eval_resnet_batch(r.network, x); }, c.risk_points,
      derive_seed(c.seed, "classify-risk"));
  const double F = c.F, budget = 4 * std::exp(F) * c.eps + 8 * F * std::exp(-F) + 3 * risk.se;
  out.certificates.push_back(bound_check("constructed_excess_risk", risk.excess, budget));
  out.results = {{"manifold", to_json(M)},
                 {"certificate", r.certificate.to_json()},
                 {"dominating_stage", r.certificate.dominating_stage()},
                 {"eta_network", r.eta_report.to_json()},
                 {"constructed_risk",
                  {{"risk", risk.risk}, {"bayes_risk", risk.bayes_risk}, {"excess", risk.excess}, {"se", risk.se},
                   {"points", risk.points}, {"budget", budget}}}};

  if (c.erm) {
    Table t{{"n", "seed_index", "train_risk", "test_risk", "excess_risk", "excess_se", "weight_max"}};
    json runs = json::array(), med = json::array();
    std::vector<double> medians;
    const auto t1 = std::chrono::steady_clock::now();
    for (std::size_t n : c.erm->n) {
      std::vector<double> ex;
      for (std::size_t s = 0; s < c.erm->seeds; ++s) {
        const std::uint64_t key = n * 1000003ULL + s;
        const LabeledSample train = model.draw(n, derive_seed(c.seed, "erm-sample", key));
        SgdConfig cfg = c.erm->sgd;
        cfg.seed = derive_seed(c.seed, "erm-run", key);
        const ErmResult e = train_erm(model, c.erm->arch, train, cfg, c.erm->test_points);
        ex.push_back(e.test.excess);
        t.push_back({cell(n), cell(s), cell(e.train_risk), cell(e.test.risk), cell(e.test.excess), cell(e.test.se),
                     cell(e.weight_max)});
        json j = e.to_json();
        j["n"] = n;
        j["seed_index"] = s;
        runs.push_back(j);
      }
      medians.push_back(median(ex));
      med.push_back({{"n", n}, {"median_excess", medians.back()}});
    }
    out.timings["erm_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    bool decreasing = true;
    std::string trend;
    for (std::size_t i = 0; i < medians.size(); ++i) {
      if (i && !(medians[i] < medians[i - 1])) decreasing = false;
      trend += (i ? " > " : "") + fmt(medians[i]);
    }
    out.certificates.push_back({"erm_median_decreasing", decreasing, trend});
    out.results["erm"] = {{"runs", runs}, {"medians", med}};
    out.files.push_back({"erm.csv", csv(t)});
  }
  return out;
}

Outcome run_cover(const cli::RunConfig& c) {
  Outcome out;
  const CoveringBound b = covering_bound(c.covering);
  const auto& in = c.covering;
  Table t{{"M", "L", "J", "K", "kappa1", "kappa2", "D", "delta", "Lambda2", "log_Lambda1", "log_bound"},
          {cell(in.M), cell(in.L), cell(in.J), cell(in.K), cell(in.kappa1), cell(in.kappa2), cell(in.D), cell(in.delta),
           cell(b.Lambda2), cell(b.log_Lambda1), cell(b.log_bound)}};
  out.files.push_back({"cover.csv", csv(t)});
  out.results = {{"covering", b.to_json()}};
  out.certificates.push_back({"finite_bound", std::isfinite(b.log_bound) && std::isfinite(b.Lambda2), fmt(b.log_bound)});
  return out;
}

Outcome dispatch(const cli::RunConfig& c) {
  if (c.command == "build") return run_build(c);
  if (c.command == "verify") return run_verify(c);
  if (c.command == "audit") return run_audit(c);
  if (c.command == "classify") return run_classify(c);
  if (c.command == "cover") return run_cover(c);
  return run_calculus_fuzz(c);
}

void write_file(const fs::path& p, const std::string& s) {
  std::ofstream f(p, std::ios::binary);
  f << s;
  if (!f) throw Error("cannot write " + p.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"besovnet: constructive ConvResNet approximation on manifolds"};
  app.option_defaults()->always_capture_default();
  std::string config_path, manifold, out_dir, suite, network;
  std::uint64_t seed = 0;
  double eps = 0;
  bool print_schema = false;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "global seed (overrides the config)");
  auto* eps_opt = app.add_option("--eps", eps, "target accuracy (overrides the config)");
  app.add_option("--manifold", manifold, "circle, sphere, torus or patch");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--suite", suite, "verify suite, or all");
  app.add_flag("--print-schema", print_schema, "print the config JSON Schema and exit");
  for (const auto& name : cli::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->fallthrough();
    if (name == "audit") sub->add_option("network", network, "network document");
  }
  app.require_subcommand(0, 1);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (print_schema) {
    std::cout << cli::config_schema().dump(2) << "\n";
    return 0;
  }

  cli::RunConfig cfg;
  try {
    json doc = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      try {
        doc = json::parse(in);
      } catch (const json::parse_error& e) {
        throw SchemaError("$", std::string("not valid JSON: ") + e.what());
      }
      if (!doc.is_object()) throw SchemaError("$", "expected an object");
    }
    if (!app.get_subcommands().empty()) {
      const std::string cmd = app.get_subcommands().front()->get_name();
      if (doc.contains("command") && doc["command"] != cmd)
        throw SchemaError("command", "config asks for '" + doc["command"].dump() + "' but the subcommand is '" + cmd + "'");
      doc["command"] = cmd;
    }
    if (seed_opt->count()) doc["seed"] = seed;
    if (eps_opt->count()) doc["eps"] = eps;
    if (!manifold.empty()) doc["manifold"]["kind"] = manifold;
    if (!out_dir.empty()) doc["out"] = out_dir;
    if (!suite.empty()) doc["suite"] = suite;
    if (!network.empty()) doc["network"] = network;
    cfg = cli::parse_config(doc);
  } catch (const SchemaError& e) {
    std::cerr << "config error at " << e.what() << "\n";
    return 2;
  }

  Outcome res;
  try {
    res = dispatch(cfg);
  } catch (const SchemaError& e) {
    std::cerr << "schema error at " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << cfg.command << " failed: " << e.what() << "\n";
    return 1;
  }

  bool pass = true;
  json certs = json::array();
  Table summary{{"certificate", "pass", "detail"}};
  for (const auto& c : res.certificates) {
    pass = pass && c.pass;
    certs.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    summary.push_back({cell(c.name), cell(c.pass), cell(c.detail)});
  }
  json report = {{"tool", "besovnet"},   {"command", cfg.command},    {"config", cfg.to_json()},
                 {"config_hash", cfg.hash()}, {"seed", cfg.seed},   {"certificates", certs},
                 {"results", res.results}, {"pass", pass}};
  try {
    fs::create_directories(cfg.out);
    write_file(fs::path(cfg.out) / "report.json", report.dump(1) + "\n");
    write_file(fs::path(cfg.out) / "certificates.csv", csv(summary));
    for (const auto& [name, body] : res.files) write_file(fs::path(cfg.out) / name, body);
    write_file(fs::path(cfg.out) / "timings.json", res.timings.dump(1) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "cannot write reports: " << e.what() << "\n";
    return 1;
  }
  for (const auto& c : res.certificates)
    if (!c.pass) std::cerr << "FAILED " << c.name << ": " << c.detail << "\n";
  std::cout << cfg.command << ": " << (pass ? "pass" : "FAIL") << " (" << res.certificates.size() << " certificates, config "
            << cfg.hash() << ", seed " << cfg.seed << ") -> " << cfg.out << "\n";
  return pass ? 0 : 1;
}
