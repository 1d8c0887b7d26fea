#pragma once
#include <functional>
#include <json.hpp>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace besovnet {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

double eval_psi(int m, double x);
// max |psi_m''| over the support, m >= 2 (m = 1 returns 0: piecewise linear)
double psi_second_derivative_bound(int m);

struct BSplineIndex {
  int k = 0;
  std::vector<int> j;
  int m = 0;
  std::size_t d() const { return j.size(); }
  friend bool operator==(const BSplineIndex&, const BSplineIndex&) = default;
};

double eval_tensor_bspline(const BSplineIndex& idx, std::span<const double> x);
// true iff x lies in the closed support box 2^-k [j, j+m+1]
bool in_support(const BSplineIndex& idx, std::span<const double> x);

struct SparseGridPlan {
  std::size_t N = 0;
  std::size_t d = 1;
  double s = 0, p = kInf, q = kInf;
  int m = 0;
  int H = 0, Hstar = 0;
  std::vector<std::size_t> n_k;  // counts for k = H+1..Hstar
  double c1 = 0, lambda = 0, nu = 0, u = 0;
  std::size_t dense_count() const;
  std::size_t basis_count() const;
  // every shift at scale k whose support meets [0,1]^d
  std::vector<BSplineIndex> level(int k) const;
};

// c1 unset: the largest H whose dense grid fits the budget; lambda unset: the largest value that fits
SparseGridPlan make_plan(std::size_t N, std::size_t d, double s, double p, double q, int m,
                         std::optional<double> c1 = std::nullopt, std::optional<double> lambda = std::nullopt);

struct SplineTerm {
  BSplineIndex index;
  double alpha = 0.0;
};

struct SplineApproximant {
  std::size_t d = 1;
  int m = 0;
  std::vector<SplineTerm> terms;
  double quasi_norm = 0.0;
  double residual_rms = 0.0;
  double sup_error = 0.0;  // on a validation grid finer than the fit grid
  std::size_t rank = 0;
  std::size_t samples = 0;
};

struct FitOptions {
  double oversampling = 4.0;
  double c0 = 1.0;             // target norm proxy
  double cap_constant = 16.0;  // multiplies the coefficient cap
  std::size_t validation_per_dim = 0;  // 0: 8x the fit grid in 1-d, 3x otherwise
};

using Target = std::function<double(std::span<const double>)>;

double coefficient_cap(const SparseGridPlan& plan, const FitOptions& opt);
SplineApproximant fit_coefficients(const Target& target, const SparseGridPlan& plan, const FitOptions& opt = {});
double eval_approximant(const SplineApproximant& a, std::span<const double> x);
double quasi_norm(const SplineApproximant& a, double s, double p, double q);

nlohmann::json to_json(const SplineApproximant& a);

}  // namespace besovnet
