#include "varreg/denoise.hpp"

#include <algorithm>
#include <cmath>

#include "varreg/error.hpp"

namespace varreg {

void DenoiserSpec::validate(int rank) const {
  switch (kind) {
    case DenoiserKind::TV:
      if (!(tv_weight >= 0.0)) throw InvalidArgument("tv_weight must be non-negative");
      if (tv_iters < 1) throw InvalidArgument("tv_iters must be >= 1");
      break;
    case DenoiserKind::Gaussian:
      if (!(sigma > 0.0)) throw InvalidArgument("Gaussian sigma must be positive");
      break;
    case DenoiserKind::Conv:
      if (!conv) throw InvalidArgument("conv denoiser needs weights");
      if (conv->rank != rank || conv->in_channels() != rank || conv->out_channels() != rank)
        throw GridMismatch("conv denoiser channels must equal the displacement rank");
      break;
    case DenoiserKind::Identity:
      break;
  }
}

VectorField denoise(const VectorField& v_in, const DenoiserSpec& spec) {
  spec.validate(v_in.rank());
  switch (spec.kind) {
    case DenoiserKind::TV:
      return tv_denoise(v_in, spec.tv_weight, spec.tv_iters);
    case DenoiserKind::Gaussian:
      return gaussian_denoise(v_in, spec.sigma);
    case DenoiserKind::Conv:
      return conv_forward(v_in, *spec.conv);
    case DenoiserKind::Identity:
      break;
  }
  return v_in;
}

namespace {

struct Stencil {
  std::array<int, 3> ext;
  std::array<std::size_t, 3> stride;
  int first_axis;  // first extent axis that belongs to the grid
};

Stencil stencil_for(const GridDesc& g) {
  const auto ext = g.extents();
  return {ext, {static_cast<std::size_t>(ext[1]) * ext[2], static_cast<std::size_t>(ext[2]), 1}, 3 - g.rank()};
}

// Forward differences, zero on the last sample of each axis.
void forward_grad(const Stencil& st, const std::vector<double>& f, std::vector<std::vector<double>>& grad) {
  std::size_t i = 0;
  for (int a = 0; a < st.ext[0]; ++a)
    for (int b = 0; b < st.ext[1]; ++b)
      for (int d = 0; d < st.ext[2]; ++d, ++i) {
        const std::array<int, 3> q{a, b, d};
        for (int e = st.first_axis; e < 3; ++e) {
          const auto k = static_cast<std::size_t>(e);
          grad[static_cast<std::size_t>(e - st.first_axis)][i] =
              q[k] + 1 < st.ext[k] ? f[i + st.stride[k]] - f[i] : 0.0;
        }
      }
}

// Negative adjoint of forward_grad.
void divergence(const Stencil& st, const std::vector<std::vector<double>>& p, std::vector<double>& out) {
  std::size_t i = 0;
  for (int a = 0; a < st.ext[0]; ++a)
    for (int b = 0; b < st.ext[1]; ++b)
      for (int d = 0; d < st.ext[2]; ++d, ++i) {
        const std::array<int, 3> q{a, b, d};
        double acc = 0.0;
        for (int e = st.first_axis; e < 3; ++e) {
          const auto k = static_cast<std::size_t>(e);
          const auto& pa = p[static_cast<std::size_t>(e - st.first_axis)];
          if (q[k] + 1 < st.ext[k]) acc += pa[i];
          if (q[k] > 0) acc -= pa[i - st.stride[k]];
        }
        out[i] = acc;
      }
}

}  // namespace

VectorField tv_denoise(const VectorField& f, double weight, int iters) {
  if (!(weight >= 0.0)) throw InvalidArgument("TV weight must be non-negative");
  if (iters < 1) throw InvalidArgument("TV iterations must be >= 1");
  if (weight == 0.0) return f;
  const GridDesc& g = f.grid();
  const Stencil st = stencil_for(g);
  const auto rank = static_cast<std::size_t>(g.rank());
  const std::size_t n = g.size();
  const double tau = 1.0 / (2.0 * static_cast<double>(g.rank()));

  std::vector<ScalarField> out;
  for (const auto& comp : f.components()) {
    const auto fv = comp.values();
    std::vector<std::vector<double>> p(rank, std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> grad(rank, std::vector<double>(n, 0.0));
    std::vector<double> div(n, 0.0), q(n);
    for (int it = 0; it < iters; ++it) {
      divergence(st, p, div);
      for (std::size_t i = 0; i < n; ++i) q[i] = div[i] - fv[i] / weight;
      forward_grad(st, q, grad);
      for (std::size_t i = 0; i < n; ++i) {
        double norm2 = 0.0;
        for (std::size_t a = 0; a < rank; ++a) norm2 += grad[a][i] * grad[a][i];
        const double denom = 1.0 + tau * std::sqrt(norm2);
        for (std::size_t a = 0; a < rank; ++a) p[a][i] = (p[a][i] + tau * grad[a][i]) / denom;
      }
    }
    divergence(st, p, div);
    std::vector<double> res(n);
    for (std::size_t i = 0; i < n; ++i) res[i] = fv[i] - weight * div[i];
    out.emplace_back(g, std::move(res));
  }
  return VectorField(std::move(out));
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("Gaussian sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

ScalarField gaussian_smooth(const ScalarField& f, double sigma) {
  const auto kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);
  const Stencil st = stencil_for(f.grid());
  std::vector<double> cur(f.values().begin(), f.values().end());
  std::vector<double> next(cur.size());
  for (int e = st.first_axis; e < 3; ++e) {
    const auto k = static_cast<std::size_t>(e);
    const int n = st.ext[k];
    std::size_t i = 0;
    for (int a = 0; a < st.ext[0]; ++a)
      for (int b = 0; b < st.ext[1]; ++b)
        for (int d = 0; d < st.ext[2]; ++d, ++i) {
          const std::array<int, 3> q{a, b, d};
          const int pos = q[k];
          const std::size_t base = i - static_cast<std::size_t>(pos) * st.stride[k];
          double acc = 0.0;
          for (int t = -radius; t <= radius; ++t) {
            const int src = std::clamp(pos + t, 0, n - 1);
            acc += kernel[static_cast<std::size_t>(t + radius)] * cur[base + static_cast<std::size_t>(src) * st.stride[k]];
          }
          next[i] = acc;
        }
    std::swap(cur, next);
  }
  return ScalarField(f.grid(), std::move(cur));
}

VectorField gaussian_denoise(const VectorField& f, double sigma) {
  std::vector<ScalarField> out;
  for (const auto& c : f.components()) out.push_back(gaussian_smooth(c, sigma));
  return VectorField(std::move(out));
}

}  // namespace varreg
