#pragma once
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "besovnet/classifier.hpp"
#include "besovnet/manifold.hpp"
#include "besovnet/suites.hpp"

namespace besovnet::cli {

const std::vector<std::string>& command_names();

struct FunctionSpec {
  std::string family;
  nlohmann::json params = nlohmann::json::object();
};

struct ErmSpec {
  std::vector<std::size_t> n{500, 2000, 8000};
  std::size_t seeds = 5;
  ArchitectureTemplate arch;
  SgdConfig sgd;
  std::size_t test_points = 100000;
};

struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  double eps = 0.1;
  double F = 2.0;
  std::string manifold = "circle";
  std::size_t D = 3;
  ManifoldParams manifold_params;
  FunctionSpec target{"trig", {{"amplitude", 1.0}, {"frequency", 1.0}}};
  FunctionSpec eta;
  // constant overrides
  double C = 1.0;
  std::optional<double> c, c1, lambda, omega;
  std::size_t K = 2;
  double cap_constant = 16.0;
  std::string kappa1_rule = "unit";
  double C_prime = 1.0;
  std::size_t samples = 10000, collar_samples = 24;
  std::size_t risk_points = 20000;
  std::string suite = "all";
  CalculusSuiteOptions calculus;
  std::string network;
  CoveringInputs covering;
  std::optional<ErmSpec> erm;
  std::string out = "out";  // not part of the experiment: left out of to_json and the hash

  nlohmann::json to_json() const;  // every field, defaults filled in
  std::string hash() const;        // FNV-1a over the canonical dump
};

// throws SchemaError with the dotted path of the first violation
RunConfig parse_config(const nlohmann::json& doc);
// JSON Schema description of the accepted document
nlohmann::json config_schema();

}  // namespace besovnet::cli
