#pragma once

#include <span>
#include <vector>

namespace hypm {

enum class ExpMapVariant {
  /// tanh((1/sqrt(gamma)) * lambda*|z|/2), as printed in the source method.
  /// With very small gamma this saturates quickly and embeddings land close
  /// to the boundary shell; still usable because distances stay monotone.
  paper,
  /// tanh(sqrt(gamma) * lambda*|z|/2); the numerically tame alternative.
  standard,
};

/// Parameters of the Poincare ball of radius r = 1/sqrt(gamma).
struct BallConfig {
  double gamma = 2e-5;           // curvature magnitude, gamma = 1/r^2
  double eps_scale = 1e-5;       // boundary margin as a fraction of r
  double lambda_scale = 2.0;     // scale factor of the exponential map
  ExpMapVariant exp_map_variant = ExpMapVariant::paper;

  double radius() const;
  double eps() const { return eps_scale * radius(); }
  void validate() const;  // throws std::invalid_argument on bad values
};

/// A point strictly inside the ball. Constructed via project_to_ball /
/// exp_map, or directly when the caller guarantees membership.
struct BallPoint {
  std::vector<double> coords;

  std::size_t dim() const { return coords.size(); }
};

/// Mobius gyrovector addition on the ball (curvature gamma). Result is
/// projected back inside the ball if rounding pushes it to or over the
/// boundary. Throws on dimension mismatch or non-finite input.
BallPoint mobius_add(const BallPoint& a, const BallPoint& b, const BallConfig& cfg);

/// Geodesic distance 2r * atanh(|(-a) (+) b| / r). Symmetric, zero iff a == b
/// up to floating point. Throws if the atanh argument reaches 1 after
/// projection (signals an invalid or boundary point).
double hyperbolic_distance(const BallPoint& a, const BallPoint& b, const BallConfig& cfg);

/// Map a Euclidean vector into the ball at base point 0. The zero vector maps
/// to the origin (removable singularity). Output is strictly inside the ball.
BallPoint exp_map(std::span<const double> v, const BallConfig& cfg);

/// Identity inside radius r - eps, rescale onto that shell otherwise.
BallPoint project_to_ball(std::span<const double> v, const BallConfig& cfg);

/// Arithmetic mean of coordinates followed by projection. Throws on an empty
/// list or mixed dimensions.
BallPoint hyperbolic_mean(const std::vector<BallPoint>& points, const BallConfig& cfg);

namespace detail {
double squared_norm(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);
}  // namespace detail

}  // namespace hypm
