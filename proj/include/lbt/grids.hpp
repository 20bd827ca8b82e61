#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lbt/errors.hpp"
#include "lbt/geometry.hpp"
#include "lbt/parallel.hpp"
#include "lbt/quadrature.hpp"
#include "lbt/vec3.hpp"

namespace lbt::grids {

struct Resolution {
  int n_r = 8;
  int n_theta = 8;
  int n_phi = 16;
  int n_v = 8;  // per axis, must be even so no node sits at v = 0

  bool operator==(const Resolution&) const = default;
};

/// Quadrature nodes for Omega, its boundary, and the truncated velocity cube.
///
/// Spatial rule: Gauss-Legendre in radius and polar cosine, uniform azimuth,
/// mapped through the domain's affine chart. Velocity rule: per-axis
/// Gauss-Legendre on [-v_max, v_max], tensorized.
class PhaseGrid {
 public:
  struct Node {
    Vec3 p;
    double w = 0.0;
  };

  PhaseGrid(const geometry::ConvexDomain& domain, Resolution res, double v_max)
      : domain_(domain), res_(res), v_max_(v_max) {}

  const geometry::ConvexDomain& domain() const { return domain_; }
  const Resolution& resolution() const { return res_; }
  double v_max() const { return v_max_; }

  std::vector<Node> spatial;
  std::vector<Node> boundary;
  std::vector<Node> velocity;
  std::vector<double> v_axis_nodes;    // ascending
  std::vector<double> v_axis_weights;

  double h_x = 0.0;  // finite-difference step in x
  double h_v = 0.0;  // finite-difference step in v

  int nearest_axis_index(double c) const {
    int best = 0;
    double dist = std::abs(c - v_axis_nodes[0]);
    for (std::size_t i = 1; i < v_axis_nodes.size(); ++i) {
      double d = std::abs(c - v_axis_nodes[i]);
      if (d < dist) {
        dist = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  std::size_t nearest_velocity_index(const Vec3& v) const {
    std::size_t n = v_axis_nodes.size();
    return (static_cast<std::size_t>(nearest_axis_index(v.x)) * n +
            nearest_axis_index(v.y)) * n + nearest_axis_index(v.z);
  }

  bool inside_velocity_cube(const Vec3& v) const {
    return std::abs(v.x) <= v_max_ && std::abs(v.y) <= v_max_ && std::abs(v.z) <= v_max_;
  }

  /// Per-axis Voronoi interval of axis node i (midpoints, cube edges at the ends).
  std::pair<double, double> axis_cell_bounds(int i) const {
    double lo = i == 0 ? -v_max_ : 0.5 * (v_axis_nodes[i - 1] + v_axis_nodes[i]);
    double hi = i + 1 == static_cast<int>(v_axis_nodes.size())
                    ? v_max_
                    : 0.5 * (v_axis_nodes[i] + v_axis_nodes[i + 1]);
    return {lo, hi};
  }

 private:
  geometry::ConvexDomain domain_;
  Resolution res_;
  double v_max_;
};

inline PhaseGrid build_phase_grid(const geometry::ConvexDomain& domain, Resolution res,
                                  double v_max) {
  if (res.n_r < 2 || res.n_theta < 2 || res.n_phi < 2 || res.n_v < 2)
    throw BadResolution("all resolution counts must be >= 2");
  if (res.n_v % 2 != 0) throw BadResolution("n_v must be even (no velocity node at v = 0)");
  if (!(v_max > 0.0)) throw BadResolution("v_max must be positive");

  constexpr double kPi = 3.14159265358979323846;
  PhaseGrid grid(domain, res, v_max);
  const Vec3 a = domain.semi_axes();
  const double abc = a.x * a.y * a.z;

  const auto& rad = quadrature::cached_gauss_legendre(res.n_r);
  const auto& pol = quadrature::cached_gauss_legendre(res.n_theta);
  const double dphi = 2.0 * kPi / res.n_phi;

  grid.spatial.reserve(static_cast<std::size_t>(res.n_r) * res.n_theta * res.n_phi);
  for (int i = 0; i < res.n_r; ++i) {
    double r = 0.5 * (rad.nodes[i] + 1.0);
    double wr = 0.5 * rad.weights[i] * r * r;
    for (int j = 0; j < res.n_theta; ++j) {
      double mu = pol.nodes[j];
      double smu = std::sqrt(1.0 - mu * mu);
      for (int k = 0; k < res.n_phi; ++k) {
        double phi = dphi * (k + 0.5);
        Vec3 u{r * smu * std::cos(phi), r * smu * std::sin(phi), r * mu};
        grid.spatial.push_back({domain.from_unit(u), abc * wr * pol.weights[j] * dphi});
      }
    }
  }

  grid.boundary.reserve(static_cast<std::size_t>(res.n_theta) * res.n_phi);
  for (int j = 0; j < res.n_theta; ++j) {
    double mu = pol.nodes[j];
    double smu = std::sqrt(1.0 - mu * mu);
    for (int k = 0; k < res.n_phi; ++k) {
      double phi = dphi * (k + 0.5);
      Vec3 s{smu * std::cos(phi), smu * std::sin(phi), mu};
      // area element of the affine image of the unit sphere
      double metric = std::sqrt(s.x * s.x / (a.x * a.x) + s.y * s.y / (a.y * a.y) +
                                s.z * s.z / (a.z * a.z));
      grid.boundary.push_back({domain.from_unit(s), abc * metric * pol.weights[j] * dphi});
    }
  }

  const auto& vel = quadrature::cached_gauss_legendre(res.n_v);
  grid.v_axis_nodes.resize(res.n_v);
  grid.v_axis_weights.resize(res.n_v);
  for (int i = 0; i < res.n_v; ++i) {
    grid.v_axis_nodes[i] = v_max * vel.nodes[i];
    grid.v_axis_weights[i] = v_max * vel.weights[i];
  }
  grid.velocity.reserve(static_cast<std::size_t>(res.n_v) * res.n_v * res.n_v);
  for (int i = 0; i < res.n_v; ++i)
    for (int j = 0; j < res.n_v; ++j)
      for (int k = 0; k < res.n_v; ++k)
        grid.velocity.push_back(
            {{grid.v_axis_nodes[i], grid.v_axis_nodes[j], grid.v_axis_nodes[k]},
             grid.v_axis_weights[i] * grid.v_axis_weights[j] * grid.v_axis_weights[k]});

  grid.h_x = 1e-4 * domain.diameter();
  grid.h_v = 1e-3;
  return grid;
}

// ---------------------------------------------------------------------------
// Fields
// ---------------------------------------------------------------------------

/// A distribution f(x, v): an evaluable operator composition plus an optional
/// sample cache on a PhaseGrid. The cache holds exactly the evaluator's values
/// at the grid nodes, so it is semantically transparent.
class Field {
 public:
  using Evaluator = std::function<double(const Vec3&, const Vec3&)>;

  Field() : eval_([](const Vec3&, const Vec3&) { return 0.0; }) {}
  explicit Field(Evaluator e) : eval_(std::move(e)) {}

  double operator()(const Vec3& x, const Vec3& v) const { return eval_(x, v); }

  static Field zero() { return Field(); }
  static Field constant(double c) {
    return Field([c](const Vec3&, const Vec3&) { return c; });
  }

  /// Samples the evaluator at all (spatial x velocity) nodes of `grid`.
  void memoize(const PhaseGrid& grid) {
    auto cache = std::make_shared<Cache>();
    cache->grid = &grid;
    const std::size_t nx = grid.spatial.size(), nv = grid.velocity.size();
    cache->values.resize(nx * nv);
    auto& vals = cache->values;
    const auto& eval = eval_;
    parallel_for(nx, [&](std::size_t i) {
      for (std::size_t j = 0; j < nv; ++j)
        vals[i * nv + j] = eval(grid.spatial[i].p, grid.velocity[j].p);
    });
    cache_ = std::move(cache);
  }

  /// Installs precomputed node samples; values must equal evaluator output.
  void attach_cache(const PhaseGrid& grid, std::vector<double> values) {
    auto cache = std::make_shared<Cache>();
    cache->grid = &grid;
    cache->values = std::move(values);
    cache_ = std::move(cache);
  }

  const std::vector<double>* cached_values(const PhaseGrid& grid) const {
    if (cache_ && cache_->grid == &grid) return &cache_->values;
    return nullptr;
  }

 private:
  struct Cache {
    const PhaseGrid* grid = nullptr;
    std::vector<double> values;
  };

  Evaluator eval_;
  std::shared_ptr<const Cache> cache_;
};

inline Field field_add(const Field& f, const Field& g) {
  return Field([f, g](const Vec3& x, const Vec3& v) { return f(x, v) + g(x, v); });
}

inline Field field_scale(double c, const Field& f) {
  return Field([c, f](const Vec3& x, const Vec3& v) { return c * f(x, v); });
}

inline Field field_axpy(double alpha, const Field& f, double beta, const Field& g) {
  return Field(
      [=](const Vec3& x, const Vec3& v) { return alpha * f(x, v) + beta * g(x, v); });
}

// ---------------------------------------------------------------------------
// Boundary data on the incoming set Gamma^-
// ---------------------------------------------------------------------------

/// Prescribed data g(z, v) where n(z).v < 0. Evaluation elsewhere is a
/// contract violation and raises UndefinedOnGammaMinus.
struct BoundaryData {
  std::function<double(const Vec3&, const Vec3&)> value;
  double decay_a = 0.0;    // Gaussian class decay parameter (0 = unknown)
  double lipschitz = 0.0;  // spatial Lipschitz constant

  // Optional analytic derivatives used by the boundary-data diagnostics.
  std::function<Vec3(const Vec3&, const Vec3&)> grad_v;
  std::function<Vec3(const Vec3&, const Vec3&)> grad_x_ambient;

  double evaluate(const geometry::ConvexDomain& domain, const Vec3& z, const Vec3& v) const {
    double vn = v.norm();
    if (domain.normal_unchecked(z).dot(v) > 1e-9 * vn)
      throw UndefinedOnGammaMinus("boundary data queried at an outgoing phase point");
    return value(z, v);
  }

  static BoundaryData zero() {
    BoundaryData g;
    g.value = [](const Vec3&, const Vec3&) { return 0.0; };
    g.grad_v = [](const Vec3&, const Vec3&) { return Vec3{}; };
    g.grad_x_ambient = [](const Vec3&, const Vec3&) { return Vec3{}; };
    return g;
  }

  /// g(z, v) = exp(-a |v|^2)
  static BoundaryData gaussian(double a) {
    BoundaryData g;
    g.decay_a = a;
    g.lipschitz = 0.0;
    g.value = [a](const Vec3&, const Vec3& v) { return std::exp(-a * v.norm2()); };
    g.grad_v = [a](const Vec3&, const Vec3& v) {
      return v * (-2.0 * a * std::exp(-a * v.norm2()));
    };
    g.grad_x_ambient = [](const Vec3&, const Vec3&) { return Vec3{}; };
    return g;
  }

  /// g(z, v) = z_1 exp(-a |v|^2)
  static BoundaryData gaussian_x1(double a) {
    BoundaryData g;
    g.decay_a = a;
    g.lipschitz = 1.0;
    g.value = [a](const Vec3& z, const Vec3& v) { return z.x * std::exp(-a * v.norm2()); };
    g.grad_v = [a](const Vec3& z, const Vec3& v) {
      return v * (-2.0 * a * z.x * std::exp(-a * v.norm2()));
    };
    g.grad_x_ambient = [a](const Vec3&, const Vec3& v) {
      return Vec3{std::exp(-a * v.norm2()), 0.0, 0.0};
    };
    return g;
  }
};

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

enum class NormKind { L2, H1, TraceL2 };

namespace detail {

/// Central differences, falling back to one-sided second order when the
/// stencil would leave the domain.
inline double fd_partial_x(const Field& f, const geometry::ConvexDomain& dom, const Vec3& x,
                           const Vec3& v, int axis, double h) {
  Vec3 e{};
  e[axis] = h;
  bool plus = dom.contains(x + e, 0.0);
  bool minus = dom.contains(x - e, 0.0);
  if (plus && minus) return (f(x + e, v) - f(x - e, v)) / (2.0 * h);
  if (plus)
    return (-3.0 * f(x, v) + 4.0 * f(x + e, v) - f(x + e + e, v)) / (2.0 * h);
  return (3.0 * f(x, v) - 4.0 * f(x - e, v) + f(x - e - e, v)) / (2.0 * h);
}

inline double fd_partial_v(const Field& f, const Vec3& x, const Vec3& v, int axis, double h) {
  Vec3 e{};
  e[axis] = h;
  return (f(x, v + e) - f(x, v - e)) / (2.0 * h);
}

}  // namespace detail

inline double norm(const Field& f, const PhaseGrid& grid, NormKind kind) {
  const std::size_t nv = grid.velocity.size();
  switch (kind) {
    case NormKind::L2: {
      const std::size_t nx = grid.spatial.size();
      const std::vector<double>* cached = f.cached_values(grid);
      double total = parallel_sum(nx, [&](std::size_t i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < nv; ++j) {
          double val = cached ? (*cached)[i * nv + j] : f(grid.spatial[i].p, grid.velocity[j].p);
          acc += grid.velocity[j].w * val * val;
        }
        return grid.spatial[i].w * acc;
      });
      return std::sqrt(total);
    }
    case NormKind::TraceL2: {
      const std::size_t nb = grid.boundary.size();
      double total = parallel_sum(nb, [&](std::size_t i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < nv; ++j) {
          double val = f(grid.boundary[i].p, grid.velocity[j].p);
          acc += grid.velocity[j].w * val * val;
        }
        return grid.boundary[i].w * acc;
      });
      return std::sqrt(total);
    }
    case NormKind::H1: {
      const std::size_t nx = grid.spatial.size();
      const auto& dom = grid.domain();
      const std::vector<double>* cached = f.cached_values(grid);
      double total = parallel_sum(nx, [&](std::size_t i) {
        const Vec3& x = grid.spatial[i].p;
        double acc = 0.0;
        for (std::size_t j = 0; j < nv; ++j) {
          const Vec3& v = grid.velocity[j].p;
          double val = cached ? (*cached)[i * nv + j] : f(x, v);
          double g2 = val * val;
          for (int axis = 0; axis < 3; ++axis) {
            double dx = detail::fd_partial_x(f, dom, x, v, axis, grid.h_x);
            double dv = detail::fd_partial_v(f, x, v, axis, grid.h_v);
            g2 += dx * dx + dv * dv;
          }
          acc += grid.velocity[j].w * g2;
        }
        return grid.spatial[i].w * acc;
      });
      return std::sqrt(total);
    }
  }
  throw EvaluationFailure("unknown norm kind");
}

/// Field samples at the boundary nodes (inside-limit trace values).
struct BoundaryRestriction {
  std::size_t n_boundary = 0;
  std::size_t n_velocity = 0;
  std::vector<double> values;  // row-major (boundary, velocity)

  double at(std::size_t b, std::size_t j) const { return values[b * n_velocity + j]; }
};

inline BoundaryRestriction restrict_to_boundary(const Field& f, const PhaseGrid& grid) {
  BoundaryRestriction r;
  r.n_boundary = grid.boundary.size();
  r.n_velocity = grid.velocity.size();
  r.values.resize(r.n_boundary * r.n_velocity);
  auto& vals = r.values;
  parallel_for(r.n_boundary, [&](std::size_t i) {
    for (std::size_t j = 0; j < r.n_velocity; ++j)
      vals[i * r.n_velocity + j] = f(grid.boundary[i].p, grid.velocity[j].p);
  });
  return r;
}

}  // namespace lbt::grids
