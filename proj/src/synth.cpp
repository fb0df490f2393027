#include "varreg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "varreg/denoise.hpp"
#include "varreg/error.hpp"
#include "varreg/metrics.hpp"
#include "varreg/sampler.hpp"

namespace varreg {

namespace {

ScalarField normalise(const GridDesc& g, std::vector<double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, span = *hi - *lo;
  for (double& x : v) x = span > 0.0 ? std::clamp((x - a) / span, 0.0, 1.0) : 0.0;
  return ScalarField(g, std::move(v));
}

}  // namespace

Phantom make_phantom(const GridDesc& grid, std::uint64_t seed) {
  const int rank = grid.rank();
  const int min_dim = rank == 2 ? 32 : 16;
  for (int a = 0; a < rank; ++a)
    if (grid.dim(a) < min_dim)
      throw InvalidArgument("phantom needs dims >= " + std::to_string(min_dim) + " per axis");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  struct Bump {
    std::array<double, 3> centre;
    double sigma;
    double amplitude;
  };
  // Bump size is fixed in voxels and the count scales with the grid, so
  // texture density does not depend on resolution. Centres reach slightly
  // past the borders to keep the edges textured.
  const double per_bump = rank == 2 ? 51.2 : 200.0;
  const int count = std::max(8, static_cast<int>(std::lround(static_cast<double>(grid.size()) / per_bump)));
  std::vector<Bump> bumps;
  for (int k = 0; k < count; ++k) {
    Bump b{};
    for (int a = 0; a < rank; ++a)
      b.centre[static_cast<std::size_t>(a)] = (-0.05 + 1.1 * unit(rng)) * (grid.dim(a) - 1);
    b.sigma = 1.6 + 2.2 * unit(rng);
    b.amplitude = (unit(rng) < 0.25 ? -0.5 : 1.0) * (0.5 + 0.5 * unit(rng));
    bumps.push_back(b);
  }

  const auto ext = grid.extents();
  const int off = 3 - rank;
  std::vector<double> img(grid.size());
  std::size_t i = 0;
  for (int a = 0; a < ext[0]; ++a)
    for (int b = 0; b < ext[1]; ++b)
      for (int c = 0; c < ext[2]; ++c, ++i) {
        const std::array<int, 3> q{a, b, c};
        double v = 0.0;
        for (const auto& bump : bumps) {
          double d2 = 0.0;
          for (int ax = 0; ax < rank; ++ax) {
            const double d = q[static_cast<std::size_t>(ax + off)] - bump.centre[static_cast<std::size_t>(ax)];
            d2 += d * d;
          }
          v += bump.amplitude * std::exp(-d2 / (2.0 * bump.sigma * bump.sigma));
        }
        img[i] = v;
      }
  ScalarField image = normalise(grid, std::move(img));

  // Nested thresholds at fixed upper quantiles keep label areas comparable
  // across seeds.
  std::vector<double> sorted(image.values().begin(), image.values().end());
  std::sort(sorted.begin(), sorted.end());
  const auto quantile = [&](double q) {
    const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(sorted.size() - 1)));
    return sorted[k];
  };
  const double t2 = quantile(0.60), t1 = quantile(0.56);
  std::vector<double> mask(grid.size());
  for (std::size_t k = 0; k < mask.size(); ++k) {
    const double v = image[k];
    mask[k] = v >= t2 ? 2.0 : v >= t1 ? 1.0 : 0.0;
  }
  return Phantom{std::move(image), ScalarField(grid, std::move(mask))};
}

ScalarField make_smooth_image(const GridDesc& grid, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(grid.size());
  for (double& x : v) x = dist(rng);
  const ScalarField smooth = gaussian_smooth(ScalarField(grid, std::move(v)), sigma);
  return normalise(grid, std::vector<double>(smooth.values().begin(), smooth.values().end()));
}

VectorField make_deformation(const GridDesc& grid, double max_disp, double smoothness_sigma, std::uint64_t seed) {
  if (max_disp < 0.0) throw InvalidArgument("max_disp must be non-negative");
  if (!(smoothness_sigma > 0.0)) throw InvalidArgument("smoothness sigma must be positive");
  int min_dim = grid.dim(0);
  for (int a = 1; a < grid.rank(); ++a) min_dim = std::min(min_dim, grid.dim(a));
  if (max_disp > min_dim / 8.0) throw InvalidArgument("max_disp exceeds min(dims) / 8");
  if (max_disp == 0.0) return VectorField(grid);

  for (int attempt = 0; attempt < 20; ++attempt) {
    std::mt19937_64 rng(seed * 1000003ull + static_cast<std::uint64_t>(attempt));
    std::normal_distribution<double> dist(0.0, 1.0);
    // Noise is smoothed on a grid padded by the kernel radius and then
    // cropped, so clamped borders do not inflate the edge samples.
    const int pad = static_cast<int>(std::ceil(3.0 * smoothness_sigma));
    std::vector<int> padded_dims;
    for (int a = 0; a < grid.rank(); ++a) padded_dims.push_back(grid.dim(a) + 2 * pad);
    const GridDesc padded = grid.with_dims(padded_dims);
    const auto pext = padded.extents();
    const auto ext = grid.extents();
    const int off = 3 - grid.rank();
    std::vector<ScalarField> comps;
    for (int c = 0; c < grid.rank(); ++c) {
      std::vector<double> v(padded.size());
      for (double& x : v) x = dist(rng);
      const ScalarField smooth = gaussian_smooth(ScalarField(padded, std::move(v)), smoothness_sigma);
      std::vector<double> crop(grid.size());
      std::size_t i = 0;
      for (int a = 0; a < ext[0]; ++a)
        for (int b = 0; b < ext[1]; ++b)
          for (int d = 0; d < ext[2]; ++d, ++i) {
            const int pa = a + (off <= 0 ? pad : 0), pb = b + (off <= 1 ? pad : 0), pd = d + pad;
            crop[i] = smooth[(static_cast<std::size_t>(pa) * pext[1] + pb) * pext[2] + pd];
          }
      comps.emplace_back(grid, std::move(crop));
    }
    const VectorField raw(std::move(comps));
    const double peak = raw.max_norm();
    if (!(peak > 0.0)) continue;
    std::vector<ScalarField> scaled;
    for (const auto& c : raw.components()) {
      std::vector<double> v(c.values().begin(), c.values().end());
      for (double& x : v) x *= max_disp / peak;
      scaled.emplace_back(grid, std::move(v));
    }
    VectorField u(std::move(scaled));
    if (jacobian_report(u).neg_pct == 0.0) return u;
  }
  throw InvalidArgument("could not draw a fold-free deformation in 20 attempts");
}

VectorField invert_displacement(const VectorField& u, int iterations) {
  VectorField inv(u.grid());
  for (int it = 0; it < iterations; ++it) {
    std::vector<ScalarField> comps;
    for (const auto& c : u.components()) {
      const ScalarField moved = warp_scalar(c, inv);
      std::vector<double> v(moved.values().begin(), moved.values().end());
      for (double& x : v) x = -x;
      comps.emplace_back(u.grid(), std::move(v));
    }
    inv = VectorField(std::move(comps));
  }
  return inv;
}

SynthPair make_pair(const GridDesc& grid, const SynthConfig& cfg, std::uint64_t seed) {
  Phantom ph = make_phantom(grid, seed);
  int min_dim = grid.dim(0);
  for (int a = 1; a < grid.rank(); ++a) min_dim = std::min(min_dim, grid.dim(a));
  const double sigma = cfg.smoothness_sigma > 0.0 ? cfg.smoothness_sigma : min_dim / 2.0;
  VectorField u_true = make_deformation(grid, cfg.max_disp, sigma, seed ^ 0x5DEECE66Dull);
  VectorField u_inv = invert_displacement(u_true, 10);

  double residual = 0.0;
  for (int c = 0; c < grid.rank(); ++c) {
    const ScalarField back = warp_scalar(u_true.component(c), u_inv);
    for (std::size_t i = 0; i < back.size(); ++i)
      residual = std::max(residual, std::abs(back[i] + u_inv.component(c)[i]));
  }
  ScalarField i1 = warp_scalar(ph.image, u_inv);
  ScalarField mask1 = warp_mask_nearest(ph.mask, u_inv);
  return SynthPair{std::move(ph.image), std::move(i1), std::move(ph.mask), std::move(mask1),
                   std::move(u_true), std::move(u_inv), residual};
}

}  // namespace varreg
