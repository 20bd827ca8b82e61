#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lbt/errors.hpp"
#include "lbt/parallel.hpp"
#include "lbt/quadrature.hpp"
#include "lbt/vec3.hpp"

namespace lbt::kernel {

/// Model collision kernel parameters. The kernel equals the Gaussian-damped
/// majorant with prefactor `amplitude`, and nu(v) = nu0 (1+|v|)^gamma, so the
/// structural bounds hold with equality and explicit constants.
struct KernelParams {
  double rho = 0.5;        // in (0, 1)
  double gamma = 1.0;      // in [0, 1]
  double amplitude = 1.0;  // > 0
  double nu0 = 1.0;        // > 0

  void validate() const {
    if (!(rho > 0.0 && rho < 1.0)) throw ParameterRange("rho must lie in (0,1)");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ParameterRange("gamma must lie in [0,1]");
    if (!(amplitude > 0.0)) throw ParameterRange("amplitude must be positive");
    if (!(nu0 > 0.0)) throw ParameterRange("nu0 must be positive");
  }

  double beta() const { return 0.25 * (1.0 - rho); }
};

inline double nu(const KernelParams& p, const Vec3& v) {
  return p.nu0 * std::pow(1.0 + v.norm(), p.gamma);
}

inline Vec3 grad_nu(const KernelParams& p, const Vec3& v) {
  if (p.gamma == 0.0) return {};
  double n = v.norm();
  if (n == 0.0) throw ZeroVelocity();
  return v * (p.nu0 * p.gamma * std::pow(1.0 + n, p.gamma - 1.0) / n);
}

/// (|v|^2 - |v*|^2) / |v - v*| through the cancellation-free form
/// (v - v*).(v + v*) / |v - v*|.
inline double relative_energy_term(const Vec3& v, const Vec3& vstar) {
  Vec3 w = v - vstar;
  return w.dot(v + vstar) / w.norm();
}

inline double k_eval(const KernelParams& p, const Vec3& v, const Vec3& vstar) {
  Vec3 w = v - vstar;
  double r = w.norm();
  if (r < 1e-14) throw CoincidentVelocities();
  double zeta = w.dot(v + vstar) / r;
  // grouped so that swapping v and v* reproduces the same bits
  double pref = 1.0 + (v.norm() + vstar.norm());
  return p.amplitude / r * std::pow(pref, p.gamma - 1.0) *
         std::exp(-p.beta() * (r * r + zeta * zeta));
}

/// Analytic velocity gradient of the model kernel. At |v| = 0 with gamma < 1
/// the (1+|v|) factor has a kink; the radial term is dropped there.
inline Vec3 grad_v_k(const KernelParams& p, const Vec3& v, const Vec3& vstar) {
  Vec3 w = v - vstar;
  double r = w.norm();
  if (r < 1e-14) throw CoincidentVelocities();
  double r2 = r * r;
  double zeta = w.dot(v + vstar) / r;
  double pref = 1.0 + (v.norm() + vstar.norm());
  double k = p.amplitude / r * std::pow(pref, p.gamma - 1.0) *
             std::exp(-p.beta() * (r2 + zeta * zeta));

  Vec3 log_grad = w * (-1.0 / r2);
  double vn = v.norm();
  if (vn > 0.0 && p.gamma != 1.0) log_grad += v * ((p.gamma - 1.0) / (pref * vn));
  log_grad -= (w * 2.0 + v * (4.0 * zeta / r) - w * (2.0 * zeta * zeta / r2)) * p.beta();
  return log_grad * k;
}

// ---------------------------------------------------------------------------
// Velocity-space quadrature with singular-cell corrections.
// ---------------------------------------------------------------------------

/// Integrable point singularity |v - point|^{-exponent}, exponent < 3.
struct SingularFactor {
  Vec3 point;
  double exponent = 0.0;
};

/// Composite rule over a cube: uniform cells, tensor Gauss-Legendre inside
/// each cell. A cell containing a singular point contributes the analytic
/// integral of |w|^{-p} over the equal-volume ball times the direction-averaged
/// smooth factor.
struct CubeSpec {
  Vec3 center{};
  double half_width = 6.0;
  int cells_per_axis = 24;
  int points_per_cell = 2;

  CubeSpec refined() const {
    CubeSpec s = *this;
    s.cells_per_axis *= 2;
    return s;
  }
};

namespace detail {

inline const std::vector<Vec3>& averaging_directions() {
  static const std::vector<Vec3> dirs = quadrature::symmetric_directions(16);
  return dirs;
}

inline double box_point_distance(const Vec3& lo, const Vec3& hi, const Vec3& p) {
  Vec3 c{std::clamp(p.x, lo.x, hi.x), std::clamp(p.y, lo.y, hi.y),
         std::clamp(p.z, lo.z, hi.z)};
  return (p - c).norm();
}

template <typename F>
double integrate_box(const Vec3& lo, const Vec3& hi, F&& f,
                     std::span<const SingularFactor> all_sing, int ppc, int depth) {
  constexpr double kPi = 3.14159265358979323846;
  const double diag = (hi - lo).norm();

  // Half-open ownership so a point on a shared face belongs to exactly one cell.
  auto owns = [&](const Vec3& p) {
    return p.x >= lo.x && p.x < hi.x && p.y >= lo.y && p.y < hi.y && p.z >= lo.z &&
           p.z < hi.z;
  };
  std::vector<const SingularFactor*> inside;
  bool near = false;
  for (const auto& s : all_sing) {
    if (owns(s.point))
      inside.push_back(&s);
    else if (box_point_distance(lo, hi, s.point) < diag)
      near = true;
  }

  auto split = [&]() {
    Vec3 mid = (lo + hi) * 0.5;
    double acc = 0.0;
    for (int oct = 0; oct < 8; ++oct) {
      Vec3 slo{oct & 1 ? mid.x : lo.x, oct & 2 ? mid.y : lo.y, oct & 4 ? mid.z : lo.z};
      Vec3 shi{oct & 1 ? hi.x : mid.x, oct & 2 ? hi.y : mid.y, oct & 4 ? hi.z : mid.z};
      acc += integrate_box(slo, shi, f, all_sing, ppc, depth + 1);
    }
    return acc;
  };

  if (inside.empty()) {
    // Near-singularity cells are refined a few levels; the integrand varies
    // on the scale of its distance to the singular point.
    if (near && depth < 3) return split();
    const auto& rule = quadrature::cached_gauss_legendre(ppc);
    double acc = 0.0;
    Vec3 mid = (lo + hi) * 0.5, half = (hi - lo) * 0.5;
    for (int i = 0; i < ppc; ++i)
      for (int j = 0; j < ppc; ++j)
        for (int k = 0; k < ppc; ++k) {
          Vec3 x{mid.x + half.x * rule.nodes[i], mid.y + half.y * rule.nodes[j],
                 mid.z + half.z * rule.nodes[k]};
          double w = half.x * rule.weights[i] * half.y * rule.weights[j] * half.z *
                     rule.weights[k];
          acc += w * f(x);
        }
    return acc;
  }

  bool coincident = true;
  for (const auto* s : inside)
    if ((s->point - inside.front()->point).norm() > 1e-12) coincident = false;

  // Containing cell: shrink it so the ball correction acts on a small cell.
  if ((!coincident || depth < 3) && depth < 6) return split();

  // Equal-volume-ball correction around the (merged) singular point.
  const Vec3 s0 = inside.front()->point;
  double p = 0.0;
  for (const auto* s : inside) p += s->exponent;
  if (p >= 3.0) throw ParameterRange("singular exponent must be < 3 for integrability");
  Vec3 ext = hi - lo;
  double vol = ext.x * ext.y * ext.z;
  double r_eq = std::cbrt(3.0 * vol / (4.0 * kPi));
  double r_bar = r_eq * (3.0 - p) / (4.0 - p);  // |w|^{-p}-weighted mean radius
  const auto& dirs = averaging_directions();
  double mean = 0.0;
  for (const Vec3& d : dirs) {
    Vec3 y = s0 + d * r_bar;
    double smooth = f(y);
    for (const auto* s : inside) smooth *= std::pow((y - s->point).norm(), s->exponent);
    mean += smooth;
  }
  mean /= static_cast<double>(dirs.size());
  return mean * 4.0 * kPi * std::pow(r_eq, 3.0 - p) / (3.0 - p);
}

}  // namespace detail

template <typename F>
double integrate_cube(const CubeSpec& spec, F&& f,
                      std::span<const SingularFactor> singular = {}) {
  const int n = spec.cells_per_axis;
  const double h = 2.0 * spec.half_width / n;
  const Vec3 origin = spec.center - Vec3{spec.half_width, spec.half_width, spec.half_width};

  const std::size_t total = static_cast<std::size_t>(n) * n * n;
  return parallel_sum(total, [&](std::size_t c) {
    int i = static_cast<int>(c / (static_cast<std::size_t>(n) * n));
    int j = static_cast<int>((c / n) % n);
    int k = static_cast<int>(c % n);
    Vec3 lo = origin + Vec3{i * h, j * h, k * h};
    Vec3 hi = lo + Vec3{h, h, h};
    return detail::integrate_box(lo, hi, f, singular, spec.points_per_cell, 0);
  });
}

// ---------------------------------------------------------------------------
// Integrability probes.
// ---------------------------------------------------------------------------

struct KernelMomentProbe {
  double mu1 = 0.0;
  double mu2 = 0.0;
  double sup_estimate = 0.0;
  std::string sample_grid;
};

/// sup over probe v* of the truncated integral of |v|^{-mu1} |k(v,v*)|^{mu2} dv.
inline KernelMomentProbe kernel_moment(const KernelParams& params, double mu1, double mu2,
                                       std::span<const Vec3> probe_vstars,
                                       const CubeSpec& spec = {}) {
  if (!(mu1 >= 0.0) || !(mu2 > 0.0) || !(mu1 + mu2 < 3.0))
    throw ParameterRange("kernel_moment requires mu1 >= 0, mu2 > 0, mu1 + mu2 < 3");
  KernelMomentProbe probe;
  probe.mu1 = mu1;
  probe.mu2 = mu2;
  probe.sample_grid = std::to_string(spec.cells_per_axis) + "^3 cells, half-width " +
                      std::to_string(spec.half_width) + ", " +
                      std::to_string(probe_vstars.size()) + " probe points";
  for (const Vec3& vstar : probe_vstars) {
    auto f = [&](const Vec3& v) {
      double val = std::pow(k_eval(params, v, vstar), mu2);
      if (mu1 > 0.0) val *= std::pow(v.norm(), -mu1);
      return val;
    };
    std::vector<SingularFactor> sing;
    if (mu1 > 0.0) sing.push_back({Vec3{}, mu1});
    sing.push_back({vstar, mu2});
    double I = integrate_cube(spec, f, sing);
    probe.sup_estimate = std::max(probe.sup_estimate, I);
  }
  return probe;
}

/// I(v) (1+|v|) for I(v) the truncated integral of
/// |v-v*|^{-mu} exp(-beta(|v-v*|^2 + zeta^2)) dv*; the integration cube is
/// centered on v so the singular point is always resolved.
inline std::vector<std::pair<double, double>> caflisch_decay_probe(
    const KernelParams& params, double mu, std::span<const double> v_magnitudes,
    const CubeSpec& spec = {}) {
  if (!(mu > 0.0 && mu < 3.0)) throw ParameterRange("caflisch probe requires 0 < mu < 3");
  std::vector<std::pair<double, double>> out;
  const double beta = params.beta();
  for (double m : v_magnitudes) {
    Vec3 v{m, 0.0, 0.0};
    auto f = [&](const Vec3& vstar) {
      Vec3 w = v - vstar;
      double r = w.norm();
      double zeta = w.dot(v + vstar) / r;
      return std::pow(r, -mu) * std::exp(-beta * (r * r + zeta * zeta));
    };
    CubeSpec centered = spec;
    centered.center = v;
    SingularFactor sing{v, mu};
    double I = integrate_cube(centered, f, std::span<const SingularFactor>(&sing, 1));
    out.emplace_back(m, I * (1.0 + m));
  }
  return out;
}

/// Truncated integral of |grad_v k(v,v*)|^mu dv*, normalized by (1+|v|)^{mu-1}.
inline std::vector<std::pair<double, double>> grad_k_moment(
    const KernelParams& params, double mu, std::span<const double> v_magnitudes,
    const CubeSpec& spec = {}) {
  if (!(mu > 0.0 && mu < 1.5)) throw ParameterRange("grad_k_moment requires 0 < mu < 3/2");
  std::vector<std::pair<double, double>> out;
  for (double m : v_magnitudes) {
    Vec3 v{m, 0.0, 0.0};
    auto f = [&](const Vec3& vstar) { return std::pow(grad_v_k(params, v, vstar).norm(), mu); };
    CubeSpec centered = spec;
    centered.center = v;
    SingularFactor sing{v, 2.0 * mu};  // |grad k| ~ |v-v*|^{-2} near the diagonal
    double I = integrate_cube(centered, f, std::span<const SingularFactor>(&sing, 1));
    out.emplace_back(m, I / std::pow(1.0 + m, mu - 1.0));
  }
  return out;
}

}  // namespace lbt::kernel
