#include "besovnet/bspline.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "besovnet/error.hpp"
#include "besovnet/serialize.hpp"

namespace besovnet {

double eval_psi(int m, double x) {
  if (m < 0) throw DomainError("spline order must be nonnegative");
  if (!(x >= 0.0) || x >= m + 1) return 0.0;
  // Cox-de Boor on integer knots 0..m+1
  const int cell = static_cast<int>(std::floor(x));
  double N[32] = {};
  if (m + 1 > 31) throw DomainError("spline order too large");
  N[cell] = 1.0;
  for (int r = 1; r <= m; ++r)
    for (int i = 0; i + r <= m; ++i) N[i] = ((x - i) * N[i] + (i + r + 1 - x) * N[i + 1]) / r;
  return N[0];
}

double psi_second_derivative_bound(int m) {
  if (m < 1) throw DomainError("second derivative bound needs m >= 1");
  if (m == 1) return 0.0;
  auto second = [m](double x) { return eval_psi(m - 2, x) - 2 * eval_psi(m - 2, x - 1) + eval_psi(m - 2, x - 2); };
  double best = 0.0;
  const int n = 20000;
  for (int i = 0; i <= n; ++i) best = std::max(best, std::abs(second((m + 1.0) * i / n)));
  for (int i = 0; i <= m + 1; ++i) best = std::max(best, std::abs(second(static_cast<double>(i))));
  // sampled maximum of a piecewise polynomial of degree m-2; exact for m <= 3
  return m <= 3 ? best : best * 1.001;
}

double eval_tensor_bspline(const BSplineIndex& idx, std::span<const double> x) {
  if (x.size() != idx.d()) throw ShapeError("spline index and point dimensions differ");
  double v = 1.0;
  for (std::size_t i = 0; i < x.size() && v != 0.0; ++i) v *= eval_psi(idx.m, std::ldexp(x[i], idx.k) - idx.j[i]);
  return v;
}

bool in_support(const BSplineIndex& idx, std::span<const double> x) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    double t = std::ldexp(x[i], idx.k) - idx.j[i];
    if (t < 0.0 || t > idx.m + 1) return false;
  }
  return true;
}

namespace {

std::size_t ipow(std::size_t b, std::size_t e) {
  std::size_t r = 1;
  while (e--) r *= b;
  return r;
}

std::size_t level_size(int k, int m, std::size_t d) { return ipow((std::size_t{1} << k) + m, d); }

std::size_t dense_upto(int H, int m, std::size_t d) {
  std::size_t n = 0;
  for (int k = 0; k <= H; ++k) n += level_size(k, m, d);
  return n;
}

struct Tail {
  int Hstar;
  std::vector<std::size_t> n;
};

Tail tail_counts(double lambda, std::size_t N, double nu, int H) {
  Tail t{H, {}};
  double ln = lambda * static_cast<double>(N);
  if (!(ln > 1.0) || nu <= 0.0) return t;
  t.Hstar = static_cast<int>(std::ceil(std::log(ln) / nu)) + H + 1;
  for (int k = H + 1; k <= t.Hstar; ++k) t.n.push_back(static_cast<std::size_t>(std::ceil(ln * std::exp2(-nu * (k - H)))));
  return t;
}

}  // namespace

std::size_t SparseGridPlan::dense_count() const { return dense_upto(H, m, d); }

std::size_t SparseGridPlan::basis_count() const {
  return dense_count() + std::accumulate(n_k.begin(), n_k.end(), std::size_t{0});
}

std::vector<BSplineIndex> SparseGridPlan::level(int k) const {
  const int lo = -m, hi = (1 << k) - 1;
  const std::size_t per = static_cast<std::size_t>(hi - lo + 1);
  std::vector<BSplineIndex> out;
  const std::size_t total = ipow(per, d);
  out.reserve(total);
  for (std::size_t n = 0; n < total; ++n) {
    BSplineIndex idx{k, std::vector<int>(d), m};
    std::size_t r = n;
    for (std::size_t i = 0; i < d; ++i) {
      idx.j[i] = lo + static_cast<int>(r % per);
      r /= per;
    }
    out.push_back(std::move(idx));
  }
  return out;
}

SparseGridPlan make_plan(std::size_t N, std::size_t d, double s, double p, double q, int m, std::optional<double> c1,
                         std::optional<double> lambda) {
  if (N < 1 || d < 1) throw DomainError("plan needs a positive budget and dimension");
  if (!(p > 0) || !(q > 0)) throw DomainError("p and q must be positive");
  if (m < 0) throw DomainError("spline order must be nonnegative");
  const double inv_p = std::isinf(p) ? 0.0 : 1.0 / p;
  SparseGridPlan plan;
  plan.N = N;
  plan.d = d;
  plan.s = s;
  plan.p = p;
  plan.q = q;
  plan.m = m;
  plan.u = static_cast<double>(d) * inv_p;
  if (!(s > plan.u))
    throw DomainError("smoothness s=" + std::to_string(s) + " must exceed d/p=" + std::to_string(plan.u));
  if (!(s > 0) || !(s < std::min<double>(m, m - 1 + inv_p)))
    throw DomainError("smoothness s=" + std::to_string(s) + " outside (0, min(m, m-1+1/p)) for m=" + std::to_string(m));
  plan.nu = plan.u > 0 ? (s - plan.u) / (2 * plan.u) : 0.0;
  const double logN = std::log(static_cast<double>(N));
  if (dense_upto(0, m, d) > N) throw DomainError("budget N=" + std::to_string(N) + " cannot hold the coarsest level");
  int Hfit = 0;
  while (dense_upto(Hfit + 1, m, d) <= N) ++Hfit;
  if (c1) {
    plan.c1 = *c1;
    plan.H = static_cast<int>(std::ceil(*c1 * logN / d));
    if (plan.H < 0 || dense_upto(plan.H, m, d) > N)
      throw DomainError("c1=" + std::to_string(*c1) + " gives H=" + std::to_string(plan.H) +
                        " whose dense grid exceeds N=" + std::to_string(N));
  } else {
    plan.H = std::min(static_cast<int>(std::ceil(logN)), Hfit);
    plan.c1 = logN > 0 ? plan.H * static_cast<double>(d) / logN : static_cast<double>(d);
  }
  const std::size_t dense = dense_upto(plan.H, m, d);
  plan.Hstar = plan.H;
  if (plan.nu > 0 && dense < N) {
    auto total = [&](double lam) {
      Tail t = tail_counts(lam, N, plan.nu, plan.H);
      return dense + std::accumulate(t.n.begin(), t.n.end(), std::size_t{0});
    };
    double lo = 0.0, hi = 1.0;
    if (lambda) {
      if (!(*lambda > 0)) throw DomainError("lambda must be positive");
      if (total(*lambda) > N)
        throw DomainError("lambda=" + std::to_string(*lambda) + " overruns the budget N=" + std::to_string(N));
      lo = *lambda;
    } else {
      while (total(hi) <= N && hi < 1e6) hi *= 2;
      for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        (total(mid) <= N ? lo : hi) = mid;
      }
    }
    plan.lambda = lo;
    Tail t = tail_counts(lo, N, plan.nu, plan.H);
    plan.Hstar = t.Hstar;
    plan.n_k = t.n;
  }
  return plan;
}

double coefficient_cap(const SparseGridPlan& plan, const FitOptions& opt) {
  const double inv_p = std::isinf(plan.p) ? 0.0 : 1.0 / plan.p;
  const double excess = std::max(0.0, plan.d * inv_p - plan.s);
  double expo = 0.0;
  if (excess > 0)
    expo = std::log(2.0) * ((plan.nu > 0 ? 1.0 / plan.nu : 0.0) + plan.c1 / plan.d) * excess;
  return opt.cap_constant * opt.c0 * std::pow(static_cast<double>(plan.N), expo);
}

namespace {

struct Grid {
  std::size_t per_dim = 0, d = 0;
  std::vector<std::vector<double>> pts;

  Grid(std::size_t per, std::size_t dim) : per_dim(per), d(dim), pts(ipow(per, dim), std::vector<double>(dim)) {
    for (std::size_t n = 0; n < pts.size(); ++n) {
      std::size_t r = n;
      for (std::size_t i = 0; i < d; ++i) {
        pts[n][i] = coord(r % per_dim);
        r /= per_dim;
      }
    }
  }
  double coord(std::size_t i) const { return per_dim == 1 ? 0.5 : static_cast<double>(i) / (per_dim - 1); }
};

struct SparseColumn {
  std::vector<std::size_t> rows;
  std::vector<double> vals;
};

// only grid points inside the support box are visited
SparseColumn column(const Grid& g, const BSplineIndex& b) {
  std::vector<std::size_t> lo(g.d), hi(g.d);
  for (std::size_t i = 0; i < g.d; ++i) {
    double a = std::ldexp(static_cast<double>(b.j[i]), -b.k), e = std::ldexp(static_cast<double>(b.j[i] + b.m + 1), -b.k);
    double scale = static_cast<double>(g.per_dim - 1);
    long l = static_cast<long>(std::floor(a * scale)) - 1, h = static_cast<long>(std::ceil(e * scale)) + 1;
    lo[i] = static_cast<std::size_t>(std::max(0L, l));
    hi[i] = static_cast<std::size_t>(std::clamp(h, 0L, static_cast<long>(g.per_dim) - 1));
    if (l > static_cast<long>(g.per_dim) - 1 || h < 0) return {};
  }
  SparseColumn c;
  std::vector<std::size_t> cur = lo;
  while (true) {
    std::size_t n = 0, stride = 1;
    for (std::size_t i = 0; i < g.d; ++i) n += cur[i] * stride, stride *= g.per_dim;
    double v = eval_tensor_bspline(b, g.pts[n]);
    if (v != 0.0) c.rows.push_back(n), c.vals.push_back(v);
    std::size_t i = 0;
    while (i < g.d && cur[i] == hi[i]) cur[i] = lo[i], ++i;
    if (i == g.d) break;
    ++cur[i];
  }
  return c;
}

}  // namespace

SplineApproximant fit_coefficients(const Target& target, const SparseGridPlan& plan, const FitOptions& opt) {
  const std::size_t d = plan.d;
  // levels 0..H span the same space as level H alone; fitting on level H keeps the system full rank
  std::vector<BSplineIndex> basis = plan.level(plan.H);
  std::size_t per_dim = static_cast<std::size_t>(std::ceil(std::pow(opt.oversampling * plan.basis_count(), 1.0 / d)));
  per_dim = std::max<std::size_t>(per_dim, 2);
  Grid grid(per_dim, d);
  const std::size_t ns = grid.pts.size();
  Eigen::VectorXd y(ns);
  for (std::size_t r = 0; r < ns; ++r) {
    y(r) = target(grid.pts[r]);
    if (!std::isfinite(y(r))) throw DomainError("target is not finite on the fit grid");
  }

  std::vector<SparseColumn> cols;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(ns, basis.size());
  for (std::size_t c = 0; c < basis.size(); ++c) {
    cols.push_back(column(grid, basis[c]));
    for (std::size_t t = 0; t < cols[c].rows.size(); ++t) A(cols[c].rows[t], c) = cols[c].vals[t];
  }
  {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(1e-9);
    cod.compute(A);
    if (static_cast<std::size_t>(cod.rank()) < basis.size())
      throw DomainError("rank-deficient fit at scale " + std::to_string(plan.H) + ": rank " +
                        std::to_string(cod.rank()) + " < " + std::to_string(basis.size()));
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  const Eigen::Index n0 = static_cast<Eigen::Index>(basis.size());
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(ns, n0);
  Eigen::MatrixXd R = qr.matrixQR().topRows(n0).triangularView<Eigen::Upper>();
  Eigen::VectorXd r = y - Q * (Q.transpose() * y);

  // fine-scale tail: candidates ranked by the residual reduction of their component off the current span;
  // a pick that only reproduces functions already present is skipped
  for (std::size_t t = 0; t < plan.n_k.size(); ++t) {
    const int k = plan.H + 1 + static_cast<int>(t);
    // interior shifts only: a fine spline clipped by the boundary is nearly in the coarse span
    std::vector<BSplineIndex> cand;
    for (auto& b : plan.level(k))
      if (std::all_of(b.j.begin(), b.j.end(), [&](int j) { return j >= 0 && j + plan.m + 1 <= (1 << k); }))
        cand.push_back(std::move(b));
    std::vector<std::pair<double, std::size_t>> score;
    std::vector<SparseColumn> ccols(cand.size());
    for (std::size_t c = 0; c < cand.size(); ++c) {
      ccols[c] = column(grid, cand[c]);
      const auto& sc = ccols[c];
      double cr = 0, cc = 0;
      Eigen::VectorXd g = Eigen::VectorXd::Zero(Q.cols());
      for (std::size_t e = 0; e < sc.rows.size(); ++e) {
        cr += sc.vals[e] * r(sc.rows[e]);
        cc += sc.vals[e] * sc.vals[e];
        g += sc.vals[e] * Q.row(sc.rows[e]).transpose();
      }
      double perp = cc - g.squaredNorm();
      if (cc > 0 && perp > 1e-8 * cc) score.push_back({cr * cr / perp, c});
    }
    std::stable_sort(score.begin(), score.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::size_t taken = 0;
    for (auto [sc_value, c] : score) {
      if (taken == plan.n_k[t]) break;
      const auto& sc = ccols[c];
      Eigen::VectorXd v = Eigen::VectorXd::Zero(ns);
      for (std::size_t e = 0; e < sc.rows.size(); ++e) v(sc.rows[e]) = sc.vals[e];
      double cc = v.squaredNorm();
      Eigen::VectorXd g = Q.transpose() * v;
      v -= Q * g;
      Eigen::VectorXd g2 = Q.transpose() * v;
      v -= Q * g2;
      g += g2;
      double nrm = v.norm();
      if (!(nrm * nrm > 1e-8 * cc)) continue;
      v /= nrm;
      const Eigen::Index n = Q.cols();
      Q.conservativeResize(Eigen::NoChange, n + 1);
      Q.col(n) = v;
      R.conservativeResize(n + 1, n + 1);
      R.row(n).setZero();
      R.col(n).head(n) = g;
      R(n, n) = nrm;
      r -= v * v.dot(r);
      basis.push_back(cand[c]);
      cols.push_back(sc);
      ++taken;
    }
  }

  Eigen::VectorXd alpha = R.triangularView<Eigen::Upper>().solve(Q.transpose() * y);
  SplineApproximant out;
  out.d = d;
  out.m = plan.m;
  out.rank = basis.size();
  out.samples = ns;
  Eigen::VectorXd res = y;
  for (std::size_t c = 0; c < basis.size(); ++c) {
    out.terms.push_back({basis[c], alpha(static_cast<Eigen::Index>(c))});
    for (std::size_t e = 0; e < cols[c].rows.size(); ++e) res(cols[c].rows[e]) -= alpha(c) * cols[c].vals[e];
  }
  out.residual_rms = std::sqrt(res.squaredNorm() / static_cast<double>(ns));
  std::size_t vdim = opt.validation_per_dim ? opt.validation_per_dim : (d == 1 ? 8 * per_dim : 3 * per_dim);
  while (vdim > 2 && ipow(vdim, d) > 1000000) --vdim;
  Grid vg(vdim, d);
  for (const auto& x : vg.pts) out.sup_error = std::max(out.sup_error, std::abs(eval_approximant(out, x) - target(x)));
  out.quasi_norm = quasi_norm(out, plan.s, plan.p, plan.q);
  const double cap = coefficient_cap(plan, opt);
  for (const auto& t : out.terms)
    if (std::abs(t.alpha) > cap)
      throw DomainError("coefficient " + std::to_string(t.alpha) + " at scale " + std::to_string(t.index.k) +
                        " exceeds cap " + std::to_string(cap));
  return out;
}

double eval_approximant(const SplineApproximant& a, std::span<const double> x) {
  double v = 0.0;
  for (const auto& t : a.terms)
    if (t.alpha != 0.0) v += t.alpha * eval_tensor_bspline(t.index, x);
  return v;
}

double quasi_norm(const SplineApproximant& a, double s, double p, double q) {
  std::map<int, double> inner;  // scale -> (sum |alpha|^p) or max
  for (const auto& t : a.terms) {
    double v = std::abs(t.alpha);
    auto& acc = inner[t.index.k];
    acc = std::isinf(p) ? std::max(acc, v) : acc + std::pow(v, p);
  }
  const double inv_p = std::isinf(p) ? 0.0 : 1.0 / p;
  double outer = 0.0;
  for (auto [k, acc] : inner) {
    double lvl = std::exp2(k * (s - static_cast<double>(a.d) * inv_p)) * (std::isinf(p) ? acc : std::pow(acc, inv_p));
    outer = std::isinf(q) ? std::max(outer, lvl) : outer + std::pow(lvl, q);
  }
  return std::isinf(q) ? outer : std::pow(outer, 1.0 / q);
}

nlohmann::json to_json(const SplineApproximant& a) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : a.terms) terms.push_back({t.index.k, t.index.j, format_real(t.alpha)});
  return {{"d", a.d},
          {"m", a.m},
          {"terms", terms},
          {"quasi_norm", a.quasi_norm},
          {"residual_rms", a.residual_rms},
          {"sup_error", a.sup_error}};
}

}  // namespace besovnet
