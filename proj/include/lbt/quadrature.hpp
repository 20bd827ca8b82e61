#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <vector>

#include "lbt/vec3.hpp"

namespace lbt::quadrature {

struct Rule1D {
  std::vector<double> nodes;    // on [-1, 1], ascending
  std::vector<double> weights;  // sum to 2
};

/// Gauss-Legendre nodes/weights on [-1,1], Newton iteration on P_n.
inline Rule1D gauss_legendre(int n) {
  Rule1D rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double pi = 3.14159265358979323846;
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      // Legendre recurrence for P_n(x) and P'_n(x).
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  return rule;
}

/// Cached rule lookup; rules are immutable once built.
inline const Rule1D& cached_gauss_legendre(int n) {
  static std::map<int, Rule1D> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, gauss_legendre(n)).first;
  return it->second;
}

/// Nodes/weights mapped onto [a, b].
inline void map_to_interval(const Rule1D& rule, double a, double b,
                            std::vector<double>& nodes, std::vector<double>& weights) {
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  nodes.resize(rule.nodes.size());
  weights.resize(rule.nodes.size());
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    nodes[i] = mid + half * rule.nodes[i];
    weights[i] = half * rule.weights[i];
  }
}

template <typename F>
double integrate_interval(int order, double a, double b, F&& f) {
  const Rule1D& rule = cached_gauss_legendre(order);
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    acc += half * rule.weights[i] * f(mid + half * rule.nodes[i]);
  return acc;
}

/// Symmetric direction set on S^2 (Fibonacci hemisphere plus mirror images).
/// Used to average direction-dependent smooth factors around a singular point.
inline std::vector<Vec3> symmetric_directions(int half_count);

inline const std::vector<Vec3>& symmetric_directions_cached() {
  static const std::vector<Vec3> dirs = symmetric_directions(16);
  return dirs;
}

inline std::vector<Vec3> symmetric_directions(int half_count) {
  std::vector<Vec3> dirs;
  dirs.reserve(2 * half_count);
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  const double pi = 3.14159265358979323846;
  for (int i = 0; i < half_count; ++i) {
    double zc = (i + 0.5) / half_count;  // upper hemisphere
    double r = std::sqrt(1.0 - zc * zc);
    double phi = 2.0 * pi * std::fmod(i / golden, 1.0);
    Vec3 d{r * std::cos(phi), r * std::sin(phi), zc};
    dirs.push_back(d);
    dirs.push_back(-d);
  }
  return dirs;
}

}  // namespace lbt::quadrature
