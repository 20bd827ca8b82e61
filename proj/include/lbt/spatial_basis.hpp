#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "lbt/grids.hpp"
#include "lbt/vec3.hpp"

namespace lbt::solver {

/// Polynomial basis of total degree <= p in domain-normalized coordinates,
/// orthonormalized against the discrete spatial inner product of a PhaseGrid.
/// Fitting is a weighted projection followed by back substitution, yielding
/// monomial coefficients that evaluate anywhere in the domain.
///
/// The default degree is capped so the grid's product rule integrates all
/// basis products exactly, which keeps the projection well-conditioned.
class SpatialBasis {
 public:
  static int max_exact_degree(const grids::Resolution& res) {
    int by_radius = res.n_r - 2;
    int by_polar = res.n_theta - 1;
    int by_azimuth = (res.n_phi - 1) / 2;
    int p = std::min({by_radius, by_polar, by_azimuth});
    return std::clamp(p, 1, 10);
  }

  static SpatialBasis build(const grids::PhaseGrid& grid, int degree = -1) {
    SpatialBasis basis;
    if (degree < 0) degree = max_exact_degree(grid.resolution());
    basis.degree_ = degree;
    basis.center_ = grid.domain().center();
    Vec3 a = grid.domain().semi_axes();
    basis.inv_scale_ = {1.0 / a.x, 1.0 / a.y, 1.0 / a.z};

    for (int total = 0; total <= degree; ++total)
      for (int i = total; i >= 0; --i)
        for (int j = total - i; j >= 0; --j)
          basis.exps_.push_back({i, j, total - i - j});

    const std::size_t n = grid.spatial.size();
    const std::size_t m = basis.exps_.size();
    if (n < m) throw std::invalid_argument("spatial grid too coarse for basis degree");

    basis.weights_.resize(n);
    for (std::size_t i = 0; i < n; ++i) basis.weights_[i] = grid.spatial[i].w;

    // Monomial values at the nodes.
    std::vector<double> V(n * m);
    std::vector<double> mono(m);
    for (std::size_t i = 0; i < n; ++i) {
      basis.eval_monomials(grid.spatial[i].p, mono);
      for (std::size_t j = 0; j < m; ++j) V[i * m + j] = mono[j];
    }

    // Modified Gram-Schmidt in the weighted inner product, two passes.
    basis.Q_ = V;
    basis.R_.assign(m * m, 0.0);
    auto dot = [&](std::size_t c1, std::size_t c2) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        acc += basis.weights_[i] * basis.Q_[i * m + c1] * basis.Q_[i * m + c2];
      return acc;
    };
    for (std::size_t j = 0; j < m; ++j) {
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < j; ++i) {
          double r = dot(i, j);
          basis.R_[i * m + j] += r;
          for (std::size_t row = 0; row < n; ++row)
            basis.Q_[row * m + j] -= r * basis.Q_[row * m + i];
        }
      }
      double nrm = std::sqrt(dot(j, j));
      if (!(nrm > 0.0)) throw std::runtime_error("degenerate spatial basis");
      basis.R_[j * m + j] = nrm;
      for (std::size_t row = 0; row < n; ++row) basis.Q_[row * m + j] /= nrm;
    }
    return basis;
  }

  std::size_t size() const { return exps_.size(); }
  int degree() const { return degree_; }

  void eval_monomials(const Vec3& x, std::span<double> out) const {
    Vec3 u = (x - center_).cwise_mul(inv_scale_);
    std::array<double, 16> px{}, py{}, pz{};
    px[0] = py[0] = pz[0] = 1.0;
    for (int d = 1; d <= degree_; ++d) {
      px[d] = px[d - 1] * u.x;
      py[d] = py[d - 1] * u.y;
      pz[d] = pz[d - 1] * u.z;
    }
    for (std::size_t j = 0; j < exps_.size(); ++j)
      out[j] = px[exps_[j][0]] * py[exps_[j][1]] * pz[exps_[j][2]];
  }

  /// Weighted least-squares fit of node samples; returns monomial coefficients.
  void fit(std::span<const double> node_values, std::span<double> coeffs) const {
    const std::size_t n = weights_.size(), m = exps_.size();
    std::vector<double> c(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        acc += weights_[i] * Q_[i * m + j] * node_values[i];
      c[j] = acc;
    }
    // back substitution: R a = c
    for (int j = static_cast<int>(m) - 1; j >= 0; --j) {
      double acc = c[j];
      for (std::size_t k = j + 1; k < m; ++k) acc -= R_[j * m + k] * coeffs[k];
      coeffs[j] = acc / R_[j * m + j];
    }
  }

  double eval(std::span<const double> coeffs, const Vec3& x) const {
    std::vector<double> mono(exps_.size());
    eval_monomials(x, mono);
    double acc = 0.0;
    for (std::size_t j = 0; j < exps_.size(); ++j) acc += coeffs[j] * mono[j];
    return acc;
  }

 private:
  int degree_ = 0;
  Vec3 center_;
  Vec3 inv_scale_{1, 1, 1};
  std::vector<std::array<int, 3>> exps_;
  std::vector<double> weights_;  // spatial node weights
  std::vector<double> Q_;        // orthonormal basis values at nodes
  std::vector<double> R_;        // upper-triangular change of basis
};

}  // namespace lbt::solver
