#include "besovnet/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "besovnet/error.hpp"
#include "besovnet/rng.hpp"

namespace besovnet {

namespace {
constexpr double kPi = std::numbers::pi;

double sqdist(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}
}  // namespace

std::string to_string(ManifoldKind k) {
  switch (k) {
    case ManifoldKind::circle: return "circle";
    case ManifoldKind::sphere: return "sphere";
    case ManifoldKind::torus: return "torus";
    case ManifoldKind::patch: return "patch";
  }
  return "?";
}

ManifoldKind parse_manifold_kind(const std::string& s) {
  if (s == "circle") return ManifoldKind::circle;
  if (s == "sphere" || s == "sphere-2") return ManifoldKind::sphere;
  if (s == "torus") return ManifoldKind::torus;
  if (s == "patch" || s == "flat-patch") return ManifoldKind::patch;
  throw DomainError("unknown manifold kind '" + s + "'");
}

SyntheticManifold make_manifold(ManifoldKind kind, std::size_t D, const ManifoldParams& p) {
  SyntheticManifold M;
  M.kind = kind;
  M.D = D;
  M.params = p;
  switch (kind) {
    case ManifoldKind::circle:
      if (D < 2) throw DomainError("circle needs D >= 2");
      if (!(p.radius > 0)) throw DomainError("radius must be positive");
      M.d = 1;
      M.tau = M.B = p.radius;
      M.area = 2 * kPi * p.radius;
      break;
    case ManifoldKind::sphere:
      if (D < 3) throw DomainError("sphere needs D >= 3");
      if (!(p.radius > 0)) throw DomainError("radius must be positive");
      M.d = 2;
      M.tau = M.B = p.radius;
      M.area = 4 * kPi * p.radius * p.radius;
      break;
    case ManifoldKind::torus:
      if (D < 3) throw DomainError("torus needs D >= 3");
      if (!(p.radius > 0) || !(p.major > p.radius)) throw DomainError("torus needs 0 < tube radius < major radius");
      M.d = 2;
      M.tau = std::min(p.radius, p.major - p.radius);
      M.B = p.major + p.radius;
      M.area = 4 * kPi * kPi * p.major * p.radius;
      break;
    case ManifoldKind::patch:
      if (p.d < 1 || D < p.d) throw DomainError("patch needs 1 <= d <= D");
      if (!(p.side > 0)) throw DomainError("side must be positive");
      M.d = p.d;
      M.tau = std::numeric_limits<double>::infinity();
      M.B = p.side / 2;
      M.area = std::pow(p.side, static_cast<double>(p.d));
      break;
  }
  return M;
}

Point SyntheticManifold::embed(std::span<const double> t) const {
  if (t.size() != d) throw ShapeError("intrinsic coordinate has wrong length");
  Point x(D, 0.0);
  const double r = params.radius;
  switch (kind) {
    case ManifoldKind::circle:
      x[0] = r * std::cos(t[0]);
      x[1] = r * std::sin(t[0]);
      break;
    case ManifoldKind::sphere:
      x[0] = r * std::sin(t[0]) * std::cos(t[1]);
      x[1] = r * std::sin(t[0]) * std::sin(t[1]);
      x[2] = r * std::cos(t[0]);
      break;
    case ManifoldKind::torus: {
      double w = params.major + r * std::cos(t[1]);
      x[0] = w * std::cos(t[0]);
      x[1] = w * std::sin(t[0]);
      x[2] = r * std::sin(t[1]);
      break;
    }
    case ManifoldKind::patch:
      for (std::size_t i = 0; i < d; ++i) x[i] = t[i];
      break;
  }
  return x;
}

std::vector<double> SyntheticManifold::intrinsic(std::span<const double> x) const {
  if (x.size() != D) throw ShapeError("ambient point has wrong length");
  switch (kind) {
    case ManifoldKind::circle: return {std::atan2(x[1], x[0])};
    case ManifoldKind::sphere: {
      double n = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
      return {std::acos(std::clamp(x[2] / n, -1.0, 1.0)), std::atan2(x[1], x[0])};
    }
    case ManifoldKind::torus: {
      double w = std::hypot(x[0], x[1]);
      return {std::atan2(x[1], x[0]), std::atan2(x[2], w - params.major)};
    }
    case ManifoldKind::patch: return std::vector<double>(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(d));
  }
  return {};
}

Eigen::MatrixXd SyntheticManifold::embed_jacobian(std::span<const double> t) const {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(D, d);
  const double r = params.radius;
  switch (kind) {
    case ManifoldKind::circle:
      J(0, 0) = -r * std::sin(t[0]);
      J(1, 0) = r * std::cos(t[0]);
      break;
    case ManifoldKind::sphere:
      J(0, 0) = r * std::cos(t[0]) * std::cos(t[1]);
      J(1, 0) = r * std::cos(t[0]) * std::sin(t[1]);
      J(2, 0) = -r * std::sin(t[0]);
      J(0, 1) = -r * std::sin(t[0]) * std::sin(t[1]);
      J(1, 1) = r * std::sin(t[0]) * std::cos(t[1]);
      break;
    case ManifoldKind::torus: {
      double w = params.major + r * std::cos(t[1]);
      J(0, 0) = -w * std::sin(t[0]);
      J(1, 0) = w * std::cos(t[0]);
      J(0, 1) = -r * std::sin(t[1]) * std::cos(t[0]);
      J(1, 1) = -r * std::sin(t[1]) * std::sin(t[0]);
      J(2, 1) = r * std::cos(t[1]);
      break;
    }
    case ManifoldKind::patch:
      for (std::size_t i = 0; i < d; ++i) J(i, i) = 1.0;
      break;
  }
  return J;
}

Eigen::MatrixXd SyntheticManifold::tangent(std::span<const double> x) const {
  if (kind == ManifoldKind::sphere) {
    // the polar parameterization degenerates at the poles; complete the normal instead
    Eigen::Vector3d n(x[0], x[1], x[2]);
    n.normalize();
    Eigen::Index k = 0;
    n.cwiseAbs().minCoeff(&k);
    Eigen::Vector3d e = Eigen::Vector3d::Unit(k);
    Eigen::Vector3d t1 = (e - n * n.dot(e)).normalized();
    Eigen::Vector3d t2 = n.cross(t1);
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(D, 2);
    V.block(0, 0, 3, 1) = t1;
    V.block(0, 1, 3, 1) = t2;
    return V;
  }
  auto t = intrinsic(x);
  Eigen::MatrixXd J = embed_jacobian(t);
  // circle, torus and patch Jacobians have orthogonal columns
  for (Eigen::Index c = 0; c < J.cols(); ++c) J.col(c).normalize();
  return J;
}

std::vector<Point> sample(const SyntheticManifold& M, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw DomainError("sample count must be positive");
  auto rng = make_stream(seed, "manifold-sample");
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> G;
  std::vector<Point> out;
  out.reserve(n);
  const double r = M.params.radius;
  for (std::size_t i = 0; i < n; ++i) {
    switch (M.kind) {
      case ManifoldKind::circle: {
        double t = 2 * kPi * U(rng);
        out.push_back(M.embed(std::vector<double>{t}));
        break;
      }
      case ManifoldKind::sphere: {
        double a = G(rng), b = G(rng), c = G(rng);
        double nn = std::sqrt(a * a + b * b + c * c);
        Point x(M.D, 0.0);
        x[0] = r * a / nn;
        x[1] = r * b / nn;
        x[2] = r * c / nn;
        out.push_back(std::move(x));
        break;
      }
      case ManifoldKind::torus: {
        double u = 2 * kPi * U(rng), v = 0;
        // area element is proportional to R + r cos v
        do v = 2 * kPi * U(rng);
        while (U(rng) * (M.params.major + r) > M.params.major + r * std::cos(v));
        out.push_back(M.embed(std::vector<double>{u, v}));
        break;
      }
      case ManifoldKind::patch: {
        std::vector<double> t(M.d);
        for (auto& v : t) v = M.params.side * (U(rng) - 0.5);
        out.push_back(M.embed(t));
        break;
      }
    }
  }
  return out;
}

std::vector<double> chart_map(const Chart& c, std::span<const double> x) {
  if (x.size() != c.center.size()) throw ShapeError("point and chart dimensions differ");
  std::vector<double> z(c.b);
  for (Eigen::Index j = 0; j < c.V.cols(); ++j) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += c.V(static_cast<Eigen::Index>(i), j) * (x[i] - c.center[i]);
    z[j] += c.a * s;
  }
  return z;
}

bool in_chart(const Chart& c, std::span<const double> x) { return sqdist(x, c.center) <= c.omega * c.omega; }

std::optional<Point> chart_inverse(const SyntheticManifold& M, const Chart& c, std::span<const double> z) {
  const std::size_t d = M.d;
  if (z.size() != d) throw ShapeError("chart coordinate has wrong length");
  Eigen::VectorXd s(d);
  for (std::size_t i = 0; i < d; ++i) s(i) = (z[i] - c.b[i]) / c.a;
  Point x;
  switch (M.kind) {
    case ManifoldKind::patch: {
      x = c.center;
      for (std::size_t i = 0; i < M.D; ++i) x[i] += (c.V.row(i) * s)(0);
      break;
    }
    case ManifoldKind::circle:
    case ManifoldKind::sphere: {
      const double r = M.params.radius;
      double rem = r * r - s.squaredNorm();
      if (rem < 0) return std::nullopt;
      double h = std::sqrt(rem) / r;
      x.assign(M.D, 0.0);
      for (std::size_t i = 0; i < M.D; ++i) x[i] = c.center[i] * h + (c.V.row(i) * s)(0);
      break;
    }
    case ManifoldKind::torus: {
      // damped Newton on the intrinsic angles, started at the chart centre
      auto t = M.intrinsic(c.center);
      Eigen::Map<const Eigen::VectorXd> cen(c.center.data(), M.D);
      bool ok = false;
      for (int it = 0; it < 80; ++it) {
        Point p = M.embed(t);
        Eigen::Map<const Eigen::VectorXd> pv(p.data(), M.D);
        Eigen::VectorXd F = c.V.transpose() * (pv - cen) - s;
        if (F.cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, M.B)) {
          ok = true;
          break;
        }
        Eigen::MatrixXd J = c.V.transpose() * M.embed_jacobian(t);
        Eigen::VectorXd step = J.fullPivLu().solve(F);
        double nrm = step.norm();
        if (!std::isfinite(nrm)) break;
        if (nrm > 0.25) step *= 0.25 / nrm;
        for (std::size_t i = 0; i < d; ++i) t[i] -= step(i);
      }
      if (!ok) {
        Point p = M.embed(t);
        Eigen::Map<const Eigen::VectorXd> pv(p.data(), M.D);
        if ((c.V.transpose() * (pv - cen) - s).cwiseAbs().maxCoeff() > 1e-10) return std::nullopt;
      }
      x = M.embed(t);
      break;
    }
  }
  if (sqdist(x, c.center) >= c.omega * c.omega) return std::nullopt;
  return x;
}

Atlas build_atlas(const SyntheticManifold& M, double omega, std::uint64_t seed) {
  if (!(omega > 0) || !(omega < M.tau / 2))
    throw DomainError("chart radius " + std::to_string(omega) + " must lie in (0, tau/2) with tau=" + std::to_string(M.tau));
  const double want = std::ceil(M.area / std::pow(0.05 * omega, static_cast<double>(M.d)));
  const std::size_t n = static_cast<std::size_t>(std::clamp(want, 20000.0, 400000.0));
  auto pts = sample(M, n, derive_seed(seed, "atlas"));
  Atlas atlas;
  atlas.omega = omega;
  atlas.dense_samples = n;
  // start next to the sample mean, then farthest-point traversal until every sample sits within 0.9 omega
  Point mean(M.D, 0.0);
  for (auto& p : pts)
    for (std::size_t i = 0; i < M.D; ++i) mean[i] += p[i] / static_cast<double>(n);
  std::size_t next = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (double q = sqdist(pts[i], mean); q < best) best = q, next = i;
  std::vector<double> mind(n, std::numeric_limits<double>::infinity());
  const double stop = 0.81 * omega * omega;
  while (true) {
    Chart c;
    c.center = pts[next];
    c.omega = omega;
    c.V = M.tangent(c.center);
    c.a = 0.45 / omega;
    c.b.assign(M.d, 0.5);
    atlas.charts.push_back(c);
    double far = -1;
    for (std::size_t i = 0; i < n; ++i) {
      mind[i] = std::min(mind[i], sqdist(pts[i], c.center));
      if (mind[i] > far) far = mind[i], next = i;
    }
    if (far <= stop) break;
  }
  std::size_t total = 0;
  for (auto& p : pts) {
    std::size_t m = 0;
    for (auto& c : atlas.charts) m += in_chart(c, p);
    total += m;
    atlas.multiplicity_max = std::max(atlas.multiplicity_max, m);
  }
  atlas.multiplicity_mean = static_cast<double>(total) / static_cast<double>(n);
  atlas.count_bound = std::ceil(M.area / std::pow(omega, static_cast<double>(M.d)) * atlas.multiplicity_mean);
  return atlas;
}

std::vector<double> partition_weights(const Atlas& atlas, std::span<const double> x) {
  const std::size_t n = atlas.size();
  std::vector<double> logb(n, -std::numeric_limits<double>::infinity());
  double top = -std::numeric_limits<double>::infinity(), nearest = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = atlas.charts[i];
    double dist2 = sqdist(x, c.center);
    nearest = std::min(nearest, std::sqrt(dist2));
    double t = dist2 / (c.omega * c.omega);
    if (t < 1) {
      logb[i] = -1.0 / (1.0 - t);
      top = std::max(top, logb[i]);
    }
  }
  if (!std::isfinite(top))
    throw DomainError("point not covered by any chart; nearest centre at distance " + std::to_string(nearest) +
                      " with radius " + std::to_string(atlas.omega));
  std::vector<double> rho(n, 0.0);
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (std::isfinite(logb[i])) sum += rho[i] = std::exp(logb[i] - top);
  for (auto& v : rho) v /= sum;
  return rho;
}

TargetFunction make_target(const SyntheticManifold& M, const std::string& family, const nlohmann::json& params,
                           std::uint64_t seed) {
  auto num = [&](const char* key, double dflt) {
    return params.is_object() && params.contains(key) ? params.at(key).get<double>() : dflt;
  };
  TargetFunction T;
  T.family = family;
  if (family == "constant") {
    double v = num("value", 1.0);
    T.f = [v](std::span<const double>) { return v; };
    T.R = std::abs(v);
    T.c0 = std::abs(v);
    return T;
  }
  if (family == "trig") {
    // A cos(k t - phase) + offset along the first intrinsic angle (first coordinate for the patch)
    const double A = num("amplitude", 1.0), k = num("frequency", 1.0);
    const double off = num("offset", 0.0), ph = num("phase", 0.0);
    T.R = std::abs(A) + std::abs(off);
    T.c0 = std::abs(A) * (1 + k) * (1 + k) + std::abs(off);
    const SyntheticManifold m = M;
    switch (M.kind) {
      case ManifoldKind::circle:
        T.f = [A, k, off, ph](std::span<const double> x) { return A * std::cos(k * std::atan2(x[1], x[0]) - ph) + off; };
        break;
      case ManifoldKind::sphere:
        // cos(k * polar angle): a polynomial in x_3 for integer k and zero phase
        T.f = [m, A, k, off, ph](std::span<const double> x) { return A * std::cos(k * m.intrinsic(x)[0] - ph) + off; };
        break;
      case ManifoldKind::torus:
        T.f = [m, A, k, off, ph](std::span<const double> x) {
          auto t = m.intrinsic(x);
          return A * std::cos(k * t[0] - ph) * std::cos(k * t[1]) + off;
        };
        break;
      case ManifoldKind::patch:
        T.f = [m, A, k, off, ph](std::span<const double> x) {
          double v = A * std::cos(2 * kPi * k * x[0] / m.params.side - ph);
          for (std::size_t i = 1; i < m.d; ++i) v *= std::cos(2 * kPi * k * x[i] / m.params.side);
          return v + off;
        };
        break;
    }
    return T;
  }
  if (family == "bump-sum") {
    const std::size_t count = static_cast<std::size_t>(num("count", 3));
    const double h = num("width", 0.75 * M.B);
    if (count < 1 || !(h > 0)) throw DomainError("bump-sum needs count >= 1 and width > 0");
    auto centres = sample(M, count, derive_seed(seed, "bump-centres"));
    auto rng = make_stream(seed, "bump-weights");
    std::uniform_real_distribution<double> W(0.5, 1.0);
    std::vector<double> w(count);
    double R = 0;
    for (auto& v : w) R += v = W(rng);
    T.R = R;
    T.c0 = R / (h * h);
    T.f = [centres, w, h](std::span<const double> x) {
      double v = 0;
      for (std::size_t i = 0; i < centres.size(); ++i) {
        double t = sqdist(x, centres[i]) / (h * h);
        if (t < 1) v += w[i] * std::exp(1.0 - 1.0 / (1.0 - t));
      }
      return v;
    };
    return T;
  }
  if (family == "lipschitz-kink") {
    T.s = 1;
    T.R = 1;
    T.c0 = 1;
    const SyntheticManifold m = M;
    switch (M.kind) {
      case ManifoldKind::circle:
      case ManifoldKind::torus:
        T.f = [](std::span<const double> x) { return std::abs(std::sin(std::atan2(x[1], x[0]))); };
        break;
      case ManifoldKind::sphere:
        T.f = [m](std::span<const double> x) { return std::abs(x[2]) / m.params.radius; };
        break;
      case ManifoldKind::patch:
        T.f = [m](std::span<const double> x) { return std::abs(x[0]) / m.B; };
        break;
    }
    return T;
  }
  throw DomainError("unknown target family '" + family + "'");
}

nlohmann::json to_json(const SyntheticManifold& M) {
  return {{"kind", to_string(M.kind)}, {"d", M.d},           {"D", M.D},
          {"radius", M.params.radius}, {"major", M.params.major}, {"side", M.params.side},
          {"tau", std::isinf(M.tau) ? nlohmann::json("inf") : nlohmann::json(M.tau)},
          {"B", M.B},                  {"area", M.area}};
}

nlohmann::json to_json(const Atlas& a) {
  nlohmann::json centres = nlohmann::json::array();
  for (auto& c : a.charts) centres.push_back(c.center);
  return {{"count", a.size()},
          {"omega", a.omega},
          {"dense_samples", a.dense_samples},
          {"multiplicity_mean", a.multiplicity_mean},
          {"multiplicity_max", a.multiplicity_max},
          {"count_bound", a.count_bound},
          {"centres", centres}};
}

}  // namespace besovnet
