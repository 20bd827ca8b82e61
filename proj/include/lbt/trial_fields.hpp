#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lbt/geometry.hpp"
#include "lbt/grids.hpp"
#include "lbt/rng.hpp"
#include "lbt/vec3.hpp"

namespace lbt::trial_fields {

/// Smooth separable trial field
///   h(x, v) = sum_t a_t cos(k_t . u(x) + phi_t) (c_t + d_t . v + e_t |v|^2) exp(-b_t |v|^2),
/// with u(x) the domain-normalized coordinate. C-infinity, H^1 by construction,
/// with analytic x- and v-gradients; velocity factors decay inside the
/// truncation ball. The separable form lets operator applications reuse
/// K-transformed velocity profiles.
struct SeparableField {
  struct Term {
    double a = 1.0;     // amplitude
    Vec3 k;             // spatial wave vector (in normalized coordinates)
    double phase = 0.0;
    double c0 = 1.0;    // velocity polynomial: c0 + d.v + e |v|^2
    Vec3 d;
    double e = 0.0;
    double b = 0.5;     // Gaussian decay
  };

  Vec3 center;
  Vec3 inv_scale{1, 1, 1};
  std::vector<Term> terms;

  double spatial(const Term& t, const Vec3& x) const {
    Vec3 u = (x - center).cwise_mul(inv_scale);
    return std::cos(t.k.dot(u) + t.phase);
  }

  Vec3 spatial_grad(const Term& t, const Vec3& x) const {
    Vec3 u = (x - center).cwise_mul(inv_scale);
    double s = -std::sin(t.k.dot(u) + t.phase);
    return Vec3{t.k.x * inv_scale.x, t.k.y * inv_scale.y, t.k.z * inv_scale.z} * s;
  }

  double velocity(const Term& t, const Vec3& v) const {
    double n2 = v.norm2();
    return (t.c0 + t.d.dot(v) + t.e * n2) * std::exp(-t.b * n2);
  }

  Vec3 velocity_grad(const Term& t, const Vec3& v) const {
    double n2 = v.norm2();
    double gauss = std::exp(-t.b * n2);
    double poly = t.c0 + t.d.dot(v) + t.e * n2;
    return (t.d + v * (2.0 * t.e)) * gauss - v * (2.0 * t.b * poly * gauss);
  }

  double operator()(const Vec3& x, const Vec3& v) const {
    double acc = 0.0;
    for (const auto& t : terms) acc += t.a * spatial(t, x) * velocity(t, v);
    return acc;
  }

  Vec3 grad_x(const Vec3& x, const Vec3& v) const {
    Vec3 acc;
    for (const auto& t : terms) acc += spatial_grad(t, x) * (t.a * velocity(t, v));
    return acc;
  }

  Vec3 grad_v(const Vec3& x, const Vec3& v) const {
    Vec3 acc;
    for (const auto& t : terms) acc += velocity_grad(t, v) * (t.a * spatial(t, x));
    return acc;
  }

  grids::Field as_field() const {
    SeparableField copy = *this;
    return grids::Field([copy](const Vec3& x, const Vec3& v) { return copy(x, v); });
  }

  static SeparableField random(const geometry::ConvexDomain& domain, std::mt19937_64& rng,
                               int n_terms = 6) {
    SeparableField f;
    f.center = domain.center();
    Vec3 a = domain.semi_axes();
    f.inv_scale = {1.0 / a.x, 1.0 / a.y, 1.0 / a.z};
    f.terms.resize(n_terms);
    for (auto& t : f.terms) {
      t.a = uniform(rng, -1.0, 1.0);
      t.k = {uniform(rng, -3.0, 3.0), uniform(rng, -3.0, 3.0), uniform(rng, -3.0, 3.0)};
      t.phase = uniform(rng, 0.0, 6.28318530717958648);
      t.c0 = uniform(rng, -1.0, 1.0);
      t.d = {uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5)};
      t.e = uniform(rng, -0.25, 0.25);
      t.b = uniform(rng, 0.3, 0.8);
    }
    return f;
  }
};

/// Fixed smooth field used as the manufactured H^1 solution.
inline SeparableField manufactured_field(const geometry::ConvexDomain& domain) {
  SeparableField f;
  f.center = domain.center();
  Vec3 a = domain.semi_axes();
  f.inv_scale = {1.0 / a.x, 1.0 / a.y, 1.0 / a.z};
  f.terms.push_back({.a = 1.0, .k = {1.3, 0.0, 0.0}, .phase = 0.4,
                     .c0 = 1.0, .d = {0.2, 0.0, 0.1}, .e = 0.0, .b = 0.5});
  f.terms.push_back({.a = 0.5, .k = {0.0, 2.1, 0.7}, .phase = 1.1,
                     .c0 = 0.5, .d = {0.0, -0.3, 0.0}, .e = 0.1, .b = 0.6});
  return f;
}

}  // namespace lbt::trial_fields
