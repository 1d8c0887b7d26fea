#pragma once
#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

namespace besovnet {

struct SuiteRow {
  std::string check;
  double measured = 0, tolerance = 0;
  std::size_t trials = 0;
  bool pass = true;
};

struct SuiteResult {
  std::string name;
  std::vector<SuiteRow> rows;
  double seconds = 0;
  bool pass() const;
  std::string first_failure() const;
  nlohmann::json to_json() const;  // timings excluded
};

struct CalculusSuiteOptions {
  std::size_t instances = 20;
  std::size_t inputs = 100;
  std::size_t max_D = 16, max_layers = 6, max_channels = 8;
};

// constructed network vs direct evaluation of its parts
SuiteResult run_calculus_suite(std::uint64_t seed, const CalculusSuiteOptions& opt = {});
// eta in {1e-2, 1e-3} on a 200 x 200 grid of [-1,1]^2
SuiteResult run_multiplication_suite(std::uint64_t seed);
// (d, m) in {(1,3), (2,3)}, eps1 in {1e-2, 1e-3}
SuiteResult run_bspline_suite(std::uint64_t seed);
// squared distance and indicator on circle samples
SuiteResult run_indicator_suite(std::uint64_t seed, std::size_t samples = 10000);
// reverse mode vs central differences on random conv networks
SuiteResult run_gradient_suite(std::uint64_t seed, std::size_t networks = 20);

const std::vector<std::string>& suite_names();
SuiteResult run_suite(const std::string& name, std::uint64_t seed);

}  // namespace besovnet
