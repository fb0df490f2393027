#pragma once

// Independent reference computations shared by the unit and acceptance
// suites. Nothing here calls into the library's numerical kernels.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "varreg/icl.hpp"

namespace oracle {

using Vec3 = std::array<double, 3>;
using varreg::pointwise::Sample;

inline Sample random_sample(std::mt19937_64& rng, int rank, double theta_lo = 0.01, double theta_hi = 10.0,
                            double* theta = nullptr) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> lt(std::log(theta_lo), std::log(theta_hi));
  Sample s;
  s.rank = rank;
  for (int a = 0; a < rank; ++a) {
    const auto k = static_cast<std::size_t>(a);
    s.gradient[k] = u(rng);
    s.u_ref[k] = u(rng);
    s.v[k] = u(rng);
  }
  s.residual = 1.5 * u(rng);
  if (theta != nullptr) *theta = std::exp(lt(rng));
  return s;
}

inline double residual_at(const Sample& s, const Vec3& u) {
  double r = s.residual;
  for (int a = 0; a < s.rank; ++a) {
    const auto k = static_cast<std::size_t>(a);
    r += s.gradient[k] * (u[k] - s.u_ref[k]);
  }
  return r;
}

// |rho(u)|^p / p + theta / 2 |v - u|^2
inline double local_energy(const Sample& s, const Vec3& u, double theta, int p) {
  const double r = residual_at(s, u);
  double q = 0.0;
  for (int a = 0; a < s.rank; ++a) {
    const auto k = static_cast<std::size_t>(a);
    q += (s.v[k] - u[k]) * (s.v[k] - u[k]);
  }
  const double data = p == 1 ? std::abs(r) : 0.5 * r * r;
  return data + 0.5 * theta * q;
}

// Minimum of the energy over nested grids centred on `centre` with
// half-widths 4, 1e-2, 1e-4, 1e-6 and 1e-8; each grid has 2 * half + 1 points
// per axis and recentres on the best point so far.
inline double grid_search_min(const Sample& s, const Vec3& centre, double theta, int p, int half = 5) {
  Vec3 best = centre;
  double best_e = local_energy(s, best, theta, p);
  for (double radius : {4.0, 1e-2, 1e-4, 1e-6, 1e-8}) {
    const Vec3 c = best;
    const double h = radius / half;
    const int n2 = s.rank == 3 ? half : 0;
    for (int i = -half; i <= half; ++i)
      for (int j = -half; j <= half; ++j)
        for (int k = -n2; k <= n2; ++k) {
          Vec3 x = c;
          x[0] += i * h;
          x[1] += j * h;
          if (s.rank == 3) x[2] += k * h;
          const double e = local_energy(s, x, theta, p);
          if (e < best_e) {
            best_e = e;
            best = x;
          }
        }
  }
  return best_e;
}

// Solves (J J^T + theta I) d = theta (v - u_ref) - J r by Gaussian
// elimination with partial pivoting and returns u_ref + d.
inline Vec3 dense_l2_solve(const Sample& s, double theta) {
  const int n = s.rank;
  double m[3][4] = {};
  for (int i = 0; i < n; ++i) {
    const auto ki = static_cast<std::size_t>(i);
    for (int j = 0; j < n; ++j) m[i][j] = s.gradient[ki] * s.gradient[static_cast<std::size_t>(j)];
    m[i][i] += theta;
    m[i][n] = theta * (s.v[ki] - s.u_ref[ki]) - s.gradient[ki] * s.residual;
  }
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
    for (int j = 0; j <= n; ++j) std::swap(m[c][j], m[piv][j]);
    for (int r = c + 1; r < n; ++r) {
      const double f = m[r][c] / m[c][c];
      for (int j = c; j <= n; ++j) m[r][j] -= f * m[c][j];
    }
  }
  Vec3 d{};
  for (int r = n - 1; r >= 0; --r) {
    double acc = m[r][n];
    for (int j = r + 1; j < n; ++j) acc -= m[r][j] * d[static_cast<std::size_t>(j)];
    d[static_cast<std::size_t>(r)] = acc / m[r][r];
  }
  Vec3 u{};
  for (int a = 0; a < n; ++a) u[static_cast<std::size_t>(a)] = s.u_ref[static_cast<std::size_t>(a)] + d[static_cast<std::size_t>(a)];
  return u;
}

// Gradient of rho(u)^2 / 2 + theta / 2 |v - u|^2.
inline Vec3 l2_gradient(const Sample& s, const Vec3& u, double theta) {
  const double r = residual_at(s, u);
  Vec3 g{};
  for (int a = 0; a < s.rank; ++a) {
    const auto k = static_cast<std::size_t>(a);
    g[k] = s.gradient[k] * r + theta * (u[k] - s.v[k]);
  }
  return g;
}

inline double max_abs(const Vec3& a, const Vec3& b) {
  return std::max({std::abs(a[0] - b[0]), std::abs(a[1] - b[1]), std::abs(a[2] - b[2])});
}

}  // namespace oracle
