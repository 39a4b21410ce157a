#include "hypm/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hypm {

namespace detail {

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

namespace {

void require_finite(std::span<const double> v, const char* who) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(who) + ": non-finite input");
}

void require_same_dim(const BallPoint& a, const BallPoint& b, const char* who) {
  if (a.dim() != b.dim())
    throw std::invalid_argument(std::string(who) + ": dimension mismatch (" +
                                std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
}

}  // namespace

double BallConfig::radius() const { return 1.0 / std::sqrt(gamma); }

void BallConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw std::invalid_argument("BallConfig: gamma must be positive");
  if (!(eps_scale > 0.0) || !(eps_scale < 1.0))
    throw std::invalid_argument("BallConfig: eps must be in (0, radius)");
  if (!(lambda_scale > 0.0) || !std::isfinite(lambda_scale))
    throw std::invalid_argument("BallConfig: lambda_scale must be positive");
}

BallPoint project_to_ball(std::span<const double> v, const BallConfig& cfg) {
  require_finite(v, "project_to_ball");
  const double r = cfg.radius();
  const double limit = r - cfg.eps();
  const double norm = std::sqrt(detail::squared_norm(v));
  BallPoint p{std::vector<double>(v.begin(), v.end())};
  if (norm <= limit || norm == 0.0) return p;
  const double scale = limit / norm;
  for (double& x : p.coords) x *= scale;
  return p;
}

BallPoint mobius_add(const BallPoint& a, const BallPoint& b, const BallConfig& cfg) {
  require_same_dim(a, b, "mobius_add");
  require_finite(a.coords, "mobius_add");
  require_finite(b.coords, "mobius_add");
  const double g = cfg.gamma;
  const double ab = detail::dot(a.coords, b.coords);
  const double na2 = detail::squared_norm(a.coords);
  const double nb2 = detail::squared_norm(b.coords);
  const double ca = 1.0 + 2.0 * g * ab + g * nb2;
  const double cb = 1.0 - g * na2;
  const double den = 1.0 + 2.0 * g * ab + g * g * na2 * nb2;
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (ca * a.coords[i] + cb * b.coords[i]) / den;
  return project_to_ball(out, cfg);
}

double hyperbolic_distance(const BallPoint& a, const BallPoint& b, const BallConfig& cfg) {
  require_same_dim(a, b, "hyperbolic_distance");
  const double r = cfg.radius();
  const double r2 = r * r;
  if (detail::squared_norm(a.coords) >= r2 || detail::squared_norm(b.coords) >= r2)
    throw std::domain_error("hyperbolic_distance: point at or beyond the ball boundary");
  BallPoint neg_a{a.coords};
  for (double& x : neg_a.coords) x = -x;
  const BallPoint m = mobius_add(neg_a, b, cfg);
  const double arg = std::sqrt(detail::squared_norm(m.coords)) / r;
  if (arg >= 1.0)
    throw std::domain_error("hyperbolic_distance: point at or beyond the ball boundary");
  return 2.0 * r * std::atanh(arg);
}

BallPoint exp_map(std::span<const double> v, const BallConfig& cfg) {
  require_finite(v, "exp_map");
  const double norm = std::sqrt(detail::squared_norm(v));
  if (norm == 0.0) return BallPoint{std::vector<double>(v.size(), 0.0)};
  const double sqrt_g = std::sqrt(cfg.gamma);
  const double half = cfg.lambda_scale * norm / 2.0;
  const double t = cfg.exp_map_variant == ExpMapVariant::paper ? std::tanh(half / sqrt_g)
                                                               : std::tanh(half * sqrt_g);
  const double scale = t / (sqrt_g * norm);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * v[i];
  return project_to_ball(out, cfg);
}

BallPoint hyperbolic_mean(const std::vector<BallPoint>& points, const BallConfig& cfg) {
  if (points.empty()) throw std::invalid_argument("hyperbolic_mean: empty point list");
  const std::size_t dim = points.front().dim();
  std::vector<double> acc(dim, 0.0);
  for (const BallPoint& p : points) {
    if (p.dim() != dim) throw std::invalid_argument("hyperbolic_mean: dimension mismatch");
    for (std::size_t i = 0; i < dim; ++i) acc[i] += p.coords[i];
  }
  for (double& x : acc) x /= static_cast<double>(points.size());
  return project_to_ball(acc, cfg);
}

}  // namespace hypm
