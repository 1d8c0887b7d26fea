#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace besovnet {

enum class ManifoldKind { circle, sphere, torus, patch };

std::string to_string(ManifoldKind k);
ManifoldKind parse_manifold_kind(const std::string& s);

using Point = std::vector<double>;

struct ManifoldParams {
  double radius = 1.0;  // circle / sphere radius, torus tube radius
  double major = 2.0;   // torus centre-line radius
  double side = 1.0;    // patch edge length
  std::size_t d = 2;    // patch only
};

struct SyntheticManifold {
  ManifoldKind kind = ManifoldKind::circle;
  std::size_t d = 1, D = 2;
  ManifoldParams params;
  double tau = 0, B = 0, area = 0;

  // intrinsic coordinates: angles for circle/torus, (polar, azimuth) for the sphere, offsets for the patch
  Point embed(std::span<const double> t) const;
  std::vector<double> intrinsic(std::span<const double> x) const;
  Eigen::MatrixXd embed_jacobian(std::span<const double> t) const;  // D x d
  Eigen::MatrixXd tangent(std::span<const double> x) const;          // D x d, orthonormal columns
};

SyntheticManifold make_manifold(ManifoldKind kind, std::size_t D, const ManifoldParams& p = {});

std::vector<Point> sample(const SyntheticManifold& M, std::size_t n, std::uint64_t seed);

struct Chart {
  Point center;
  double omega = 0;
  Eigen::MatrixXd V;  // D x d
  double a = 1;
  std::vector<double> b;
};

std::vector<double> chart_map(const Chart& c, std::span<const double> x);
bool in_chart(const Chart& c, std::span<const double> x);
// the point of U_i mapped to z, if any
std::optional<Point> chart_inverse(const SyntheticManifold& M, const Chart& c, std::span<const double> z);

struct Atlas {
  std::vector<Chart> charts;
  double omega = 0;
  std::size_t dense_samples = 0;
  double multiplicity_mean = 0;  // measured T_d
  std::size_t multiplicity_max = 0;
  double count_bound = 0;        // ceil(SA / omega^d * T_d)
  std::size_t size() const { return charts.size(); }
};

Atlas build_atlas(const SyntheticManifold& M, double omega, std::uint64_t seed);

std::vector<double> partition_weights(const Atlas& atlas, std::span<const double> x);

struct TargetFunction {
  std::string family;
  std::function<double(std::span<const double>)> f;
  double s = 2, p = 2, q = 2;  // nominal smoothness tag
  double c0 = 1;               // norm proxy
  double R = 1;                // sup bound
  double operator()(std::span<const double> x) const { return f(x); }
};

TargetFunction make_target(const SyntheticManifold& M, const std::string& family, const nlohmann::json& params = {},
                           std::uint64_t seed = 0);

nlohmann::json to_json(const SyntheticManifold& M);
nlohmann::json to_json(const Atlas& a);

}  // namespace besovnet
