#pragma once

#include <array>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <unordered_map>
#include <vector>

#include "lbt/errors.hpp"
#include "lbt/geometry.hpp"
#include "lbt/grids.hpp"
#include "lbt/kernel.hpp"
#include "lbt/quadrature.hpp"
#include "lbt/vec3.hpp"

namespace lbt::operators {

/// Gauss-Legendre rule along each backward characteristic. When nu tau > threshold
/// the interval is split once at s = threshold/nu so the exponential is resolved.
struct LineQuadratureSpec {
  int order = 16;
  bool split_exponential = true;
  double split_threshold = 4.0;
};

struct LineNodes {
  int count = 0;
  std::array<double, 64> s{};
  std::array<double, 64> w{};
};

inline void line_nodes(const LineQuadratureSpec& spec, double nu_v, double tau,
                       LineNodes& out) {
  const auto& rule = quadrature::cached_gauss_legendre(spec.order);
  out.count = 0;
  auto push_segment = [&](double a, double b) {
    double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int i = 0; i < spec.order; ++i) {
      out.s[out.count] = mid + half * rule.nodes[i];
      out.w[out.count] = half * rule.weights[i];
      ++out.count;
    }
  };
  if (spec.split_exponential && nu_v * tau > spec.split_threshold) {
    double cut = spec.split_threshold / nu_v;
    push_segment(0.0, cut);
    push_segment(cut, tau);
  } else {
    push_segment(0.0, tau);
  }
}

/// One row of the discretized collision operator at velocity v:
///   K f (x, v) ~= sum_j node_w[j] f(x, v_j) + sum_d ball_w[d] f(x, ball_p[d]).
/// The node nearest to v is excluded from the plain sum; its cell is replaced
/// by the analytic integral of the 1/|v - v*| factor over the equal-volume
/// ball, with the smooth kernel part and f co-sampled on a symmetric
/// direction set at the |w|^{-1}-weighted mean radius.
struct KernelRow {
  std::vector<double> node_w;
  std::vector<Vec3> ball_p;    // ball sample positions around v
  std::vector<double> ball_w;  // kernel-weighted ball quadrature weights
};

/// Binds domain, kernel parameters, phase grid and line quadrature. Cheap to
/// copy; all derived tables are shared and built lazily.
class OperatorContext {
 public:
  OperatorContext(const geometry::ConvexDomain& domain, const kernel::KernelParams& params,
                  std::shared_ptr<const grids::PhaseGrid> grid, LineQuadratureSpec line = {})
      : state_(std::make_shared<State>(domain, params, std::move(grid), line)) {
    params.validate();
    const auto& gdom = state_->grid->domain();
    if (gdom.shape() != domain.shape() || !(gdom.semi_axes() == domain.semi_axes()) ||
        !(gdom.center() == domain.center()))
      throw std::invalid_argument("grid was built for a different domain");
  }

  const geometry::ConvexDomain& domain() const { return state_->domain; }
  const kernel::KernelParams& params() const { return state_->params; }
  const grids::PhaseGrid& grid() const { return *state_->grid; }
  std::shared_ptr<const grids::PhaseGrid> grid_ptr() const { return state_->grid; }
  const LineQuadratureSpec& line() const { return state_->line; }

  /// Equal-volume ball radius for the velocity cell around v, and the
  /// |w|^{-1}-weighted mean sampling radius.
  std::pair<double, double> ball_radii(const Vec3& v) const {
    constexpr double kPi = 3.14159265358979323846;
    double w_cell = grid().velocity[grid().nearest_velocity_index(v)].w;
    double r_eq = std::cbrt(3.0 * w_cell / (4.0 * kPi));
    return {r_eq, r_eq * 2.0 / 3.0};
  }

  /// v-gradients of the ball-point kernel weights; both kernel arguments move
  /// with v, and the v*-derivative is obtained from the symmetry of k.
  std::vector<Vec3> ball_weight_grads(const Vec3& v) const {
    constexpr double kPi = 3.14159265358979323846;
    const auto& g = grid();
    if (!g.inside_velocity_cube(v)) return {};
    auto [r_eq, r_bar] = ball_radii(v);
    const auto& dirs = quadrature::symmetric_directions_cached();
    double scale = 2.0 * kPi * r_eq * r_eq * r_bar / static_cast<double>(dirs.size());
    std::vector<Vec3> grads(dirs.size());
    for (std::size_t d = 0; d < dirs.size(); ++d) {
      Vec3 vp = v + dirs[d] * r_bar;
      grads[d] = (kernel::grad_v_k(state_->params, v, vp) +
                  kernel::grad_v_k(state_->params, vp, v)) * scale;
    }
    return grads;
  }

  std::shared_ptr<const KernelRow> kernel_row(const Vec3& v) const {
    constexpr double kPi = 3.14159265358979323846;
    {
      std::lock_guard<std::mutex> lock(state_->row_mutex);
      auto it = state_->rows.find(RowKey(v));
      if (it != state_->rows.end()) return it->second;
    }
    auto row = std::make_shared<KernelRow>();
    const auto& nodes = grid().velocity;
    row->node_w.resize(nodes.size());
    bool corrected = grid().inside_velocity_cube(v);
    std::size_t skip = corrected ? grid().nearest_velocity_index(v) : nodes.size();
    for (std::size_t j = 0; j < nodes.size(); ++j)
      row->node_w[j] = (j == skip) ? 0.0 : nodes[j].w * kernel::k_eval(state_->params, v, nodes[j].p);
    if (corrected) {
      auto [r_eq, r_bar] = ball_radii(v);
      const auto& dirs = quadrature::symmetric_directions_cached();
      double scale = 2.0 * kPi * r_eq * r_eq * r_bar / static_cast<double>(dirs.size());
      row->ball_p.resize(dirs.size());
      row->ball_w.resize(dirs.size());
      for (std::size_t d = 0; d < dirs.size(); ++d) {
        Vec3 p = v + dirs[d] * r_bar;
        row->ball_w[d] = scale * kernel::k_eval(state_->params, v, p);
        row->ball_p[d] = p;
      }
    }
    std::lock_guard<std::mutex> lock(state_->row_mutex);
    auto [it, inserted] = state_->rows.emplace(RowKey(v), row);
    return it->second;  // concurrent identical insertion keeps the first copy
  }

 private:
  struct RowKey {
    std::uint64_t a, b, c;
    explicit RowKey(const Vec3& v) {
      std::memcpy(&a, &v.x, 8);
      std::memcpy(&b, &v.y, 8);
      std::memcpy(&c, &v.z, 8);
    }
    bool operator==(const RowKey&) const = default;
  };
  struct RowKeyHash {
    std::size_t operator()(const RowKey& k) const {
      std::uint64_t h = k.a * 0x9e3779b97f4a7c15ull;
      h ^= k.b + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      h ^= k.c + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      return static_cast<std::size_t>(h);
    }
  };

  struct State {
    State(const geometry::ConvexDomain& d, const kernel::KernelParams& p,
          std::shared_ptr<const grids::PhaseGrid> g, LineQuadratureSpec l)
        : domain(d), params(p), grid(std::move(g)), line(l) {}
    geometry::ConvexDomain domain;
    kernel::KernelParams params;
    std::shared_ptr<const grids::PhaseGrid> grid;
    LineQuadratureSpec line;
    mutable std::mutex row_mutex;
    mutable std::unordered_map<RowKey, std::shared_ptr<const KernelRow>, RowKeyHash> rows;
  };

  std::shared_ptr<State> state_;
};

/// Jg(x,v) = exp(-nu(v) tau_{x,v}) g(q(x,v), v). The backward exit point of an
/// interior x is an incoming boundary point, so g is only queried on Gamma^-.
inline grids::Field apply_J(const OperatorContext& ctx, const grids::BoundaryData& g) {
  return grids::Field([ctx, g](const Vec3& x, const Vec3& v) {
    if (v.norm2() == 0.0) throw ZeroVelocity();
    auto rec = geometry::backward_exit(ctx.domain(), x, v);
    double damping = std::exp(-kernel::nu(ctx.params(), v) * rec.tau);
    return damping * g.evaluate(ctx.domain(), rec.q, v);
  });
}

/// K f (x,v) = integral of k(v, v*) f(x, v*) dv* over the truncated cube,
/// via the per-velocity kernel row (local in x).
inline grids::Field apply_K(const OperatorContext& ctx, const grids::Field& f) {
  return grids::Field([ctx, f](const Vec3& x, const Vec3& v) {
    auto row = ctx.kernel_row(v);
    const auto& nodes = ctx.grid().velocity;
    double acc = 0.0;
    for (std::size_t j = 0; j < nodes.size(); ++j)
      if (row->node_w[j] != 0.0) acc += row->node_w[j] * f(x, nodes[j].p);
    for (std::size_t d = 0; d < row->ball_p.size(); ++d)
      acc += row->ball_w[d] * f(x, row->ball_p[d]);
    return acc;
  });
}

/// S_Omega h (x,v) = integral over [0, tau] of exp(-nu(v) s) h(x - s v, v) ds.
inline grids::Field apply_S(const OperatorContext& ctx, const grids::Field& h) {
  return grids::Field([ctx, h](const Vec3& x, const Vec3& v) {
    if (v.norm2() == 0.0) throw ZeroVelocity();
    auto rec = geometry::backward_exit(ctx.domain(), x, v);
    if (rec.tau == 0.0) return 0.0;
    double nu_v = kernel::nu(ctx.params(), v);
    LineNodes ln;
    line_nodes(ctx.line(), nu_v, rec.tau, ln);
    double acc = 0.0;
    for (int l = 0; l < ln.count; ++l)
      acc += ln.w[l] * std::exp(-nu_v * ln.s[l]) * h(x - ln.s[l] * v, v);
    return acc;
  });
}

/// S_Omega K f. The velocity integral at each characteristic node is memoized
/// per (ray, s-node); concurrent identical insertion is benign.
inline grids::Field apply_SK(const OperatorContext& ctx, const grids::Field& f) {
  struct Memo {
    std::mutex mutex;
    std::unordered_map<std::size_t, double> values;
  };
  auto memo = std::make_shared<Memo>();
  grids::Field kf = apply_K(ctx, f);
  return grids::Field([ctx, kf, memo](const Vec3& x, const Vec3& v) {
    if (v.norm2() == 0.0) throw ZeroVelocity();
    auto rec = geometry::backward_exit(ctx.domain(), x, v);
    if (rec.tau == 0.0) return 0.0;
    double nu_v = kernel::nu(ctx.params(), v);
    LineNodes ln;
    line_nodes(ctx.line(), nu_v, rec.tau, ln);
    double acc = 0.0;
    for (int l = 0; l < ln.count; ++l) {
      std::size_t key = 1469598103934665603ull;
      auto mix = [&key](double d) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        key = (key ^ bits) * 1099511628211ull;
      };
      mix(x.x); mix(x.y); mix(x.z); mix(v.x); mix(v.y); mix(v.z);
      mix(static_cast<double>(l));
      double kval;
      bool found = false;
      {
        std::lock_guard<std::mutex> lock(memo->mutex);
        auto it = memo->values.find(key);
        if (it != memo->values.end()) {
          kval = it->second;
          found = true;
        }
      }
      if (!found) {
        kval = kf(x - ln.s[l] * v, v);
        std::lock_guard<std::mutex> lock(memo->mutex);
        if (memo->values.size() < (1u << 22)) memo->values.emplace(key, kval);
      }
      acc += ln.w[l] * std::exp(-nu_v * ln.s[l]) * kval;
    }
    return acc;
  });
}

}  // namespace lbt::operators
