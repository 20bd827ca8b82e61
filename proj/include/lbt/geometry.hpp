#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "lbt/errors.hpp"
#include "lbt/rng.hpp"
#include "lbt/vec3.hpp"

namespace lbt::geometry {

/// Rays with incidence factor N below this cutoff count as grazing; the
/// 1/N gradient formulas are rejected there instead of returning huge values.
inline constexpr double kGrazingCutoff = 1e-8;

enum class Shape { Sphere, Ellipsoid };

/// Sphere or axis-aligned ellipsoid. Both have C^2 boundary with strictly
/// positive Gaussian curvature, so the chord bound |z-q| <= C(Omega) N holds.
class ConvexDomain {
 public:
  static ConvexDomain sphere(double radius, const Vec3& center = {}) {
    if (!(radius > 0.0)) throw std::invalid_argument("sphere radius must be positive");
    return ConvexDomain(Shape::Sphere, {radius, radius, radius}, center);
  }

  static ConvexDomain ellipsoid(const Vec3& semi_axes, const Vec3& center = {}) {
    if (!(semi_axes.x > 0.0 && semi_axes.y > 0.0 && semi_axes.z > 0.0))
      throw std::invalid_argument("ellipsoid semi-axes must be positive");
    return ConvexDomain(Shape::Ellipsoid, semi_axes, center);
  }

  Shape shape() const { return shape_; }
  const Vec3& center() const { return center_; }
  const Vec3& semi_axes() const { return axes_; }
  bool is_sphere() const { return shape_ == Shape::Sphere; }
  double radius() const { return axes_.x; }  // meaningful for spheres

  double diameter() const { return 2.0 * axes_.max_component(); }
  double volume() const { return 4.0 / 3.0 * 3.14159265358979323846 * axes_.x * axes_.y * axes_.z; }

  /// Scaled coordinates u = (x - c) / a map the body onto the unit ball.
  Vec3 to_unit(const Vec3& x) const { return (x - center_).cwise_div(axes_); }
  Vec3 from_unit(const Vec3& u) const { return center_ + u.cwise_mul(axes_); }

  /// Approximate signed distance to the boundary (exact for spheres).
  double boundary_distance(const Vec3& x) const {
    Vec3 u = to_unit(x);
    double r = u.norm();
    if (r == 0.0) return -axes_.min_component();
    // (|u|-1) rescaled by the local physical radius |x-c|/|u|.
    return (r - 1.0) * (x - center_).norm() / r;
  }

  bool contains(const Vec3& x, double tol = 0.0) const { return boundary_distance(x) <= tol; }

  bool on_boundary(const Vec3& z, double tol) const { return std::abs(boundary_distance(z)) <= tol; }

  /// Outward unit normal, the normalized gradient of the quadratic level function.
  Vec3 outward_normal(const Vec3& z) const {
    double tol = 1e-8 * diameter();
    if (!on_boundary(z, tol))
      throw NotOnBoundary("point is not on the boundary (residual " +
                          std::to_string(boundary_distance(z)) + ")");
    return normal_unchecked(z);
  }

  Vec3 normal_unchecked(const Vec3& z) const {
    Vec3 g = (z - center_).cwise_div(axes_.cwise_mul(axes_));
    return g.hat();
  }

  ConvexDomain scaled(double kappa) const {
    return ConvexDomain(shape_, axes_ * kappa, center_ * kappa);
  }

 private:
  ConvexDomain(Shape s, const Vec3& axes, const Vec3& center)
      : shape_(s), axes_(axes), center_(center) {}

  Shape shape_;
  Vec3 axes_;
  Vec3 center_;
};

/// Backward exit data for the ray s -> x - s v, s >= 0.
struct ExitRecord {
  double tau = 0.0;  // backward exit time
  Vec3 q;            // exit point x - tau v, on the boundary
  Vec3 n_q;          // outward unit normal at q
  double incidence = 0.0;  // N = -n(q).v/|v|, in [0,1] for x in the closure
};

/// Solves |u - s w|^2 = 1 for the smallest s >= 0 lying outside, where
/// (u, w) are the affinely rescaled point and velocity. The root is evaluated
/// in the cancellation-free branch.
inline ExitRecord backward_exit(const ConvexDomain& domain, const Vec3& x, const Vec3& v) {
  if (v.norm2() == 0.0) throw ZeroVelocity();
  const double tol = 1e-10 * domain.diameter();
  if (domain.boundary_distance(x) > tol)
    throw OutsideDomain("ray origin lies outside the domain closure");

  Vec3 u = domain.to_unit(x);
  Vec3 w = v.cwise_div(domain.semi_axes());
  const double w2 = w.norm2();
  const double uw = u.dot(w);
  double c = 1.0 - u.norm2();  // >= 0 inside, can be ~ -1e-16 on the boundary
  if (c < 0.0) c = 0.0;
  const double disc = std::sqrt(uw * uw + w2 * c);

  double tau;
  if (uw >= 0.0) {
    tau = (uw + disc) / w2;
  } else {
    double denom = disc - uw;  // > 0
    tau = denom > 0.0 ? c / denom : 0.0;
  }
  if (tau < 0.0) tau = 0.0;

  ExitRecord rec;
  rec.tau = tau;
  rec.q = x - tau * v;
  rec.n_q = domain.normal_unchecked(rec.q);
  rec.incidence = -rec.n_q.dot(v) / v.norm();
  if (rec.incidence < 0.0 && rec.incidence > -1e-12) rec.incidence = 0.0;
  return rec;
}

inline Vec3 outward_normal(const ConvexDomain& domain, const Vec3& z) {
  return domain.outward_normal(z);
}

inline double diameter(const ConvexDomain& domain) { return domain.diameter(); }

/// grad_x tau = -n(q(x,v)) / (N(x,v) |v|). Undefined on grazing rays.
inline Vec3 grad_x_tau(const ConvexDomain& domain, const Vec3& x, const Vec3& v,
                       double grazing_cutoff = kGrazingCutoff) {
  ExitRecord rec = backward_exit(domain, x, v);
  if (rec.incidence <= grazing_cutoff)
    throw GrazingRay("N(x,v) = " + std::to_string(rec.incidence) + " below grazing cutoff");
  return rec.n_q * (-1.0 / (rec.incidence * v.norm()));
}

/// Exact velocity gradient grad_v tau = tau n(q) / (N |v|); its magnitude
/// equals the bound |x - q| / (|v|^2 N).
inline Vec3 grad_v_tau(const ConvexDomain& domain, const Vec3& x, const Vec3& v,
                       double grazing_cutoff = kGrazingCutoff) {
  ExitRecord rec = backward_exit(domain, x, v);
  if (rec.tau == 0.0) return {};
  if (rec.incidence <= grazing_cutoff)
    throw GrazingRay("N(x,v) = " + std::to_string(rec.incidence) + " below grazing cutoff");
  return rec.n_q * (rec.tau / (rec.incidence * v.norm()));
}

/// Upper bound |grad_v tau| <= |x-q| / (|v|^2 N); zero for incoming boundary points.
inline double grad_v_tau_bound(const ConvexDomain& domain, const Vec3& x, const Vec3& v,
                               double grazing_cutoff = kGrazingCutoff) {
  ExitRecord rec = backward_exit(domain, x, v);
  if (rec.tau == 0.0) return 0.0;
  if (rec.incidence <= grazing_cutoff)
    throw GrazingRay("N(x,v) = " + std::to_string(rec.incidence) + " below grazing cutoff");
  return (x - rec.q).norm() / (v.norm2() * rec.incidence);
}

/// Smallest constant with |z - q(z,v)| <= C N(z,v) over the boundary.
/// Spheres admit the exact chord identity |z-q| = 2R N; other shapes are
/// estimated by a sampled supremum (deterministic under the seed).
inline double curvature_constant(const ConvexDomain& domain, std::size_t samples,
                                 std::uint64_t seed = 0) {
  if (samples < 1000) throw std::invalid_argument("curvature_constant needs samples >= 1000");
  if (domain.is_sphere()) return 2.0 * domain.radius();

  auto rng = make_rng(seed, "curvature-constant");
  double sup = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    // Boundary point from the spherical parametrization (sup estimates do not
    // require area-uniform sampling).
    double mu = uniform(rng, -1.0, 1.0);
    double phi = uniform(rng, 0.0, 2.0 * 3.14159265358979323846);
    double s = std::sqrt(1.0 - mu * mu);
    Vec3 z = domain.from_unit({s * std::cos(phi), s * std::sin(phi), mu});
    Vec3 v = random_unit_vector(rng);
    if (domain.normal_unchecked(z).dot(v) < 0.0) v = -v;  // use the chord-carrying direction
    ExitRecord rec = backward_exit(domain, z, v);
    if (rec.incidence <= kGrazingCutoff) continue;
    double ratio = (z - rec.q).norm() / rec.incidence;
    if (ratio > sup) sup = ratio;
  }
  return sup;
}

}  // namespace lbt::geometry
