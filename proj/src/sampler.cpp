#include "varreg/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "varreg/error.hpp"

namespace varreg {

namespace {

struct AxisCell {
  int lo = 0;
  double frac = 0.0;
  bool clamped = false;
};

// Locates coordinate p on an axis with n samples. Integer coordinates are
// attributed to the cell on their left.
AxisCell locate(double p, int n) {
  AxisCell cell;
  const double hi = static_cast<double>(n - 1);
  if (p < 0.0) {
    cell.clamped = true;
    p = 0.0;
  } else if (p > hi) {
    cell.clamped = true;
    p = hi;
  }
  const int c = std::clamp(static_cast<int>(std::ceil(p)) - 1, 0, n - 2);
  cell.lo = c;
  cell.frac = p - c;
  return cell;
}

void check_displacement(const VectorField& u) {
  for (const auto& c : u.components())
    for (double v : c.values())
      if (!std::isfinite(v)) throw NumericalError("non-finite displacement");
}

// Visits every sample with its located cells; fn(index, cells, ext).
template <typename Fn>
void for_each_cell(const GridDesc& g, const VectorField& u, Fn&& fn) {
  const auto ext = g.extents();
  const int off = 3 - g.rank();
  std::size_t i = 0;
  for (int a = 0; a < ext[0]; ++a)
    for (int b = 0; b < ext[1]; ++b)
      for (int d = 0; d < ext[2]; ++d, ++i) {
        const std::array<int, 3> pos{a, b, d};
        std::array<AxisCell, 3> cells{};
        for (int ax = 0; ax < g.rank(); ++ax) {
          const auto e = static_cast<std::size_t>(ax + off);
          cells[e] = locate(pos[e] + u.component(ax)[i], ext[e]);
        }
        fn(i, cells, ext);
      }
}

inline std::size_t flat(const std::array<int, 3>& ext, int a, int b, int d) {
  return (static_cast<std::size_t>(a) * static_cast<std::size_t>(ext[1]) + static_cast<std::size_t>(b)) *
             static_cast<std::size_t>(ext[2]) +
         static_cast<std::size_t>(d);
}

}  // namespace

ScalarField warp_scalar(const ScalarField& image, const VectorField& u) {
  require_same_shape(image.grid(), u.grid(), "warp_scalar");
  check_displacement(u);
  const auto img = image.values();
  std::vector<double> out(image.size());
  if (image.grid().rank() == 2) {
    for_each_cell(image.grid(), u, [&](std::size_t i, const std::array<AxisCell, 3>& c,
                                       const std::array<int, 3>& ext) {
      const double fy = c[1].frac, fx = c[2].frac;
      const std::size_t p = flat(ext, 0, c[1].lo, c[2].lo);
      const std::size_t row = static_cast<std::size_t>(ext[2]);
      out[i] = (1.0 - fy) * (1.0 - fx) * img[p] + (1.0 - fy) * fx * img[p + 1] +
               fy * (1.0 - fx) * img[p + row] + fy * fx * img[p + row + 1];
    });
  } else {
    for_each_cell(image.grid(), u, [&](std::size_t i, const std::array<AxisCell, 3>& c,
                                       const std::array<int, 3>& ext) {
      double acc = 0.0;
      for (int corner = 0; corner < 8; ++corner) {
        const int b0 = (corner >> 2) & 1, b1 = (corner >> 1) & 1, b2 = corner & 1;
        const double w = (b0 ? c[0].frac : 1.0 - c[0].frac) * (b1 ? c[1].frac : 1.0 - c[1].frac) *
                         (b2 ? c[2].frac : 1.0 - c[2].frac);
        acc += w * img[flat(ext, c[0].lo + b0, c[1].lo + b1, c[2].lo + b2)];
      }
      out[i] = acc;
    });
  }
  return ScalarField(image.grid(), std::move(out));
}

ScalarField warp_mask_nearest(const ScalarField& mask, const VectorField& u) {
  require_same_shape(mask.grid(), u.grid(), "warp_mask_nearest");
  check_displacement(u);
  const GridDesc& g = mask.grid();
  const auto ext = g.extents();
  const int off = 3 - g.rank();
  const auto vals = mask.values();
  std::vector<double> out(mask.size());
  std::size_t i = 0;
  for (int a = 0; a < ext[0]; ++a)
    for (int b = 0; b < ext[1]; ++b)
      for (int d = 0; d < ext[2]; ++d, ++i) {
        std::array<int, 3> q{a, b, d};
        for (int ax = 0; ax < g.rank(); ++ax) {
          const auto e = static_cast<std::size_t>(ax + off);
          const double p = q[e] + u.component(ax)[i];
          q[e] = std::clamp(static_cast<int>(std::floor(p + 0.5)), 0, ext[e] - 1);
        }
        out[i] = vals[flat(ext, q[0], q[1], q[2])];
      }
  return ScalarField(g, std::move(out));
}

VectorField image_gradient(const ScalarField& image) {
  const GridDesc& g = image.grid();
  const auto ext = g.extents();
  const int off = 3 - g.rank();
  const auto v = image.values();
  std::vector<ScalarField> comps;
  for (int ax = 0; ax < g.rank(); ++ax) {
    const auto e = static_cast<std::size_t>(ax + off);
    const int n = ext[e];
    const std::size_t stride = e == 0 ? static_cast<std::size_t>(ext[1]) * ext[2]
                               : e == 1 ? static_cast<std::size_t>(ext[2])
                                        : 1;
    std::vector<double> out(image.size());
    std::size_t i = 0;
    for (int a = 0; a < ext[0]; ++a)
      for (int b = 0; b < ext[1]; ++b)
        for (int d = 0; d < ext[2]; ++d, ++i) {
          const std::array<int, 3> q{a, b, d};
          const int k = q[e];
          if (k == 0)
            out[i] = v[i + stride] - v[i];
          else if (k == n - 1)
            out[i] = v[i] - v[i - stride];
          else
            out[i] = (v[i + stride] - v[i - stride]) / 2.0;
        }
    comps.emplace_back(g, std::move(out));
  }
  return VectorField(std::move(comps));
}

ScalarField image_gradient_adjoint(const VectorField& gf) {
  const GridDesc& g = gf.grid();
  const auto ext = g.extents();
  const int off = 3 - g.rank();
  std::vector<double> out(g.size(), 0.0);
  for (int ax = 0; ax < g.rank(); ++ax) {
    const auto e = static_cast<std::size_t>(ax + off);
    const int n = ext[e];
    const std::size_t stride = e == 0 ? static_cast<std::size_t>(ext[1]) * ext[2]
                               : e == 1 ? static_cast<std::size_t>(ext[2])
                                        : 1;
    const auto w = gf.component(ax).values();
    std::size_t i = 0;
    for (int a = 0; a < ext[0]; ++a)
      for (int b = 0; b < ext[1]; ++b)
        for (int d = 0; d < ext[2]; ++d, ++i) {
          const std::array<int, 3> q{a, b, d};
          const int k = q[e];
          if (k == 0) {
            out[i + stride] += w[i];
            out[i] -= w[i];
          } else if (k == n - 1) {
            out[i] += w[i];
            out[i - stride] -= w[i];
          } else {
            out[i + stride] += w[i] / 2.0;
            out[i - stride] -= w[i] / 2.0;
          }
        }
  }
  return ScalarField(g, std::move(out));
}

WarpAdjoint warp_adjoint(const ScalarField& image, const VectorField& u, const ScalarField& g_out) {
  require_same_shape(image.grid(), u.grid(), "warp_adjoint");
  require_same_shape(image.grid(), g_out.grid(), "warp_adjoint output gradient");
  check_displacement(u);
  const GridDesc& g = image.grid();
  const int rank = g.rank();
  const int off = 3 - rank;
  const auto img = image.values();
  const auto go = g_out.values();
  std::vector<double> g_img(image.size(), 0.0);
  std::vector<std::vector<double>> g_u(static_cast<std::size_t>(rank), std::vector<double>(image.size(), 0.0));

  for_each_cell(g, u, [&](std::size_t i, const std::array<AxisCell, 3>& c, const std::array<int, 3>& ext) {
    const double gi = go[i];
    if (gi == 0.0) return;
    std::array<double, 3> dval{0.0, 0.0, 0.0};
    const int corners = rank == 2 ? 4 : 8;
    for (int corner = 0; corner < corners; ++corner) {
      std::array<int, 3> bit{0, (corner >> 1) & 1, corner & 1};
      if (rank == 3) bit[0] = (corner >> 2) & 1;
      double w = 1.0;
      std::array<double, 3> wa{};
      for (std::size_t e = static_cast<std::size_t>(off); e < 3; ++e) {
        wa[e] = bit[e] ? c[e].frac : 1.0 - c[e].frac;
        w *= wa[e];
      }
      const double val = img[flat(ext, c[0].lo + bit[0], c[1].lo + bit[1], c[2].lo + bit[2])];
      g_img[flat(ext, c[0].lo + bit[0], c[1].lo + bit[1], c[2].lo + bit[2])] += gi * w;
      // derivative of the weight product along each axis
      for (std::size_t e = static_cast<std::size_t>(off); e < 3; ++e) {
        double dw = bit[e] ? 1.0 : -1.0;
        for (std::size_t o = static_cast<std::size_t>(off); o < 3; ++o)
          if (o != e) dw *= wa[o];
        dval[e] += dw * val;
      }
    }
    for (int ax = 0; ax < rank; ++ax) {
      const auto e = static_cast<std::size_t>(ax + off);
      if (!c[e].clamped) g_u[static_cast<std::size_t>(ax)][i] = gi * dval[e];
    }
  });

  std::vector<ScalarField> comps;
  for (auto& v : g_u) comps.emplace_back(g, std::move(v));
  return WarpAdjoint{ScalarField(g, std::move(g_img)), VectorField(std::move(comps))};
}

namespace {

// Zeroes g along every axis whose sample coordinate was clamped.
std::vector<ScalarField> mask_clamped(const VectorField& u, std::vector<ScalarField> g) {
  const GridDesc& grid = u.grid();
  const int off = 3 - grid.rank();
  std::vector<std::vector<double>> vals;
  for (const auto& c : g) vals.emplace_back(c.values().begin(), c.values().end());
  for_each_cell(grid, u, [&](std::size_t i, const std::array<AxisCell, 3>& c, const std::array<int, 3>&) {
    for (int ax = 0; ax < grid.rank(); ++ax)
      if (c[static_cast<std::size_t>(ax + off)].clamped) vals[static_cast<std::size_t>(ax)][i] = 0.0;
  });
  std::vector<ScalarField> out;
  for (auto& v : vals) out.emplace_back(grid, std::move(v));
  return out;
}

}  // namespace

VectorField sample_gradient(const ScalarField& image, const VectorField& u) {
  require_same_shape(image.grid(), u.grid(), "sample_gradient");
  const VectorField grad = image_gradient(image);
  std::vector<ScalarField> comps;
  for (const auto& c : grad.components()) comps.push_back(warp_scalar(c, u));
  return VectorField(mask_clamped(u, std::move(comps)));
}

VectorField sample_gradient_adjoint(const ScalarField& image, const VectorField& u, const VectorField& g_out) {
  require_same_shape(image.grid(), u.grid(), "sample_gradient_adjoint");
  require_same_shape(image.grid(), g_out.grid(), "sample_gradient_adjoint output gradient");
  const VectorField grad = image_gradient(image);
  const std::vector<ScalarField> masked = mask_clamped(u, g_out.components());
  const std::size_t n = image.size();
  std::vector<std::vector<double>> acc(static_cast<std::size_t>(u.rank()), std::vector<double>(n, 0.0));
  for (int c = 0; c < u.rank(); ++c) {
    const WarpAdjoint adj = warp_adjoint(grad.component(c), u, masked[static_cast<std::size_t>(c)]);
    for (int a = 0; a < u.rank(); ++a) {
      const auto d = adj.displacement.component(a).values();
      auto& dst = acc[static_cast<std::size_t>(a)];
      for (std::size_t i = 0; i < n; ++i) dst[i] += d[i];
    }
  }
  std::vector<ScalarField> comps;
  for (auto& v : acc) comps.emplace_back(image.grid(), std::move(v));
  return VectorField(std::move(comps));
}

}  // namespace varreg
