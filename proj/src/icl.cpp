#include "varreg/icl.hpp"

#include <algorithm>
#include <cmath>

#include "varreg/error.hpp"
#include "varreg/sampler.hpp"

namespace varreg {

namespace pointwise {

double rho(const Sample& s, const std::array<double, 3>& u) {
  double out = s.residual;
  for (int a = 0; a < s.rank; ++a) {
    const auto k = static_cast<std::size_t>(a);
    out += s.gradient[k] * (u[k] - s.u_ref[k]);
  }
  return out;
}

namespace {

double grad_norm2(const Sample& s) {
  double n = 0.0;
  for (int a = 0; a < s.rank; ++a) n += s.gradient[static_cast<std::size_t>(a)] * s.gradient[static_cast<std::size_t>(a)];
  return n;
}

}  // namespace

std::array<double, 3> l1_threshold(const Sample& s, double theta, double eps) {
  const double zhat = theta * rho(s, s.v) / (grad_norm2(s) + eps);
  const double scale = zhat / std::max(std::abs(zhat), 1.0);
  std::array<double, 3> u{};
  for (int a = 0; a < s.rank; ++a) {
    const auto k = static_cast<std::size_t>(a);
    u[k] = s.v[k] - scale * s.gradient[k] / theta;
  }
  return u;
}

std::array<double, 3> l1_primal_dual(const Sample& s, double theta, double eps, double* z) {
  const double zhat = theta * rho(s, s.v) / (grad_norm2(s) + eps);
  const double projected = zhat / std::max(std::abs(zhat), 1.0);
  if (z != nullptr) *z = projected;
  std::array<double, 3> u{};
  for (int a = 0; a < s.rank; ++a) {
    const auto k = static_cast<std::size_t>(a);
    u[k] = s.v[k] - projected * s.gradient[k] / theta;
  }
  return u;
}

std::array<double, 3> l2_components(const Sample& s, double theta) {
  const auto& j = s.gradient;
  const double r = s.residual;
  std::array<double, 3> dv{};
  for (int a = 0; a < s.rank; ++a) dv[static_cast<std::size_t>(a)] = s.v[static_cast<std::size_t>(a)] - s.u_ref[static_cast<std::size_t>(a)];
  std::array<double, 3> u{};
  if (s.rank == 2) {
    const double den = j[0] * j[0] + j[1] * j[1] + theta;
    u[0] = s.u_ref[0] + ((j[1] * j[1] + theta) * dv[0] - j[0] * j[1] * dv[1] - j[0] * r) / den;
    u[1] = s.u_ref[1] + ((j[0] * j[0] + theta) * dv[1] - j[1] * j[0] * dv[0] - j[1] * r) / den;
  } else {
    const double den = j[0] * j[0] + j[1] * j[1] + j[2] * j[2] + theta;
    u[0] = s.u_ref[0] +
           ((j[1] * j[1] + j[2] * j[2] + theta) * dv[0] - j[0] * j[1] * dv[1] - j[0] * j[2] * dv[2] - j[0] * r) / den;
    u[1] = s.u_ref[1] +
           ((j[0] * j[0] + j[2] * j[2] + theta) * dv[1] - j[1] * j[0] * dv[0] - j[1] * j[2] * dv[2] - j[1] * r) / den;
    u[2] = s.u_ref[2] +
           ((j[0] * j[0] + j[1] * j[1] + theta) * dv[2] - j[2] * j[0] * dv[0] - j[2] * j[1] * dv[1] - j[2] * r) / den;
  }
  return u;
}

std::array<double, 3> l2_matrix_vector(const Sample& s, double theta) {
  const int n = s.rank;
  std::array<double, 3> b{};
  for (int a = 0; a < n; ++a) {
    const auto k = static_cast<std::size_t>(a);
    b[k] = s.v[k] - s.u_ref[k] - s.gradient[k] * s.residual / theta;
  }
  const double den = theta + grad_norm2(s);
  std::array<double, 3> u{};
  for (int row = 0; row < n; ++row) {
    const auto i = static_cast<std::size_t>(row);
    double acc = 0.0;
    for (int col = 0; col < n; ++col) {
      const auto k = static_cast<std::size_t>(col);
      const double m = (row == col ? 1.0 : 0.0) - s.gradient[i] * s.gradient[k] / den;
      acc += m * b[k];
    }
    u[i] = s.u_ref[i] + acc;
  }
  return u;
}

}  // namespace pointwise

namespace {

void require_ldt_shape(const LinearizedDataTerm& ldt, const VectorField& f, const char* what) {
  require_same_shape(ldt.residual.grid(), f.grid(), what);
}

pointwise::Sample gather(const LinearizedDataTerm& ldt, const VectorField& v, std::size_t i) {
  pointwise::Sample s;
  s.rank = v.rank();
  s.residual = ldt.residual[i];
  for (int a = 0; a < s.rank; ++a) {
    const auto k = static_cast<std::size_t>(a);
    s.gradient[k] = ldt.gradient.component(a)[i];
    s.u_ref[k] = ldt.u_ref.component(a)[i];
    s.v[k] = v.component(a)[i];
  }
  return s;
}

VectorField scatter(const GridDesc& g, std::vector<std::vector<double>> comps) {
  std::vector<ScalarField> out;
  for (auto& c : comps) out.emplace_back(g, std::move(c));
  return VectorField(std::move(out));
}

}  // namespace

LinearizedDataTerm linearize(const ScalarField& i0, const ScalarField& i1, const VectorField& u_ref) {
  require_same_shape(i0.grid(), i1.grid(), "linearize images");
  require_same_shape(i0.grid(), u_ref.grid(), "linearize displacement");
  ScalarField warped = warp_scalar(i1, u_ref);
  // grad I1 sampled at x + u_ref. Differentiating the warped image instead
  // would scale J by the local deformation, so compressed regions would take
  // ever larger steps.
  VectorField gradient = sample_gradient(i1, u_ref);
  std::vector<double> r(i0.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = warped[i] - i0[i];
  ScalarField residual(i0.grid(), std::move(r));
  return LinearizedDataTerm{std::move(warped), std::move(gradient), std::move(residual), u_ref};
}

ScalarField rho(const LinearizedDataTerm& ldt, const VectorField& u) {
  require_ldt_shape(ldt, u, "rho");
  std::vector<double> out(u.grid().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto s = gather(ldt, u, i);
    out[i] = pointwise::rho(s, s.v);
  }
  return ScalarField(u.grid(), std::move(out));
}

L1Update icl_l1(const LinearizedDataTerm& ldt, const VectorField& v, double theta, double eps) {
  require_ldt_shape(ldt, v, "icl_l1");
  if (!(theta > 0.0)) throw InvalidArgument("icl_l1 requires theta > 0");
  if (!(eps > 0.0)) throw InvalidArgument("icl_l1 requires eps > 0");
  const std::size_t n = v.grid().size();
  const auto rank = static_cast<std::size_t>(v.rank());
  std::vector<std::vector<double>> u(rank, std::vector<double>(n));
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = gather(ldt, v, i);
    const auto ui = pointwise::l1_primal_dual(s, theta, eps, &z[i]);
    for (std::size_t a = 0; a < rank; ++a) u[a][i] = ui[a];
  }
  return L1Update{scatter(v.grid(), std::move(u)), DualCertificate{ScalarField(v.grid(), std::move(z))}};
}

VectorField icl_l2(const LinearizedDataTerm& ldt, const VectorField& v, double theta) {
  require_ldt_shape(ldt, v, "icl_l2");
  if (!(theta > 0.0)) throw InvalidArgument("icl_l2 requires theta > 0");
  const std::size_t n = v.grid().size();
  const auto rank = static_cast<std::size_t>(v.rank());
  std::vector<std::vector<double>> u(rank, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto ui = pointwise::l2_components(gather(ldt, v, i), theta);
    for (std::size_t a = 0; a < rank; ++a) u[a][i] = ui[a];
  }
  return scatter(v.grid(), std::move(u));
}

double data_energy(const LinearizedDataTerm& ldt, const VectorField& u, int s) {
  if (s != 1 && s != 2) throw InvalidArgument("data term order s must be 1 or 2");
  const ScalarField r = rho(ldt, u);
  double sum = 0.0;
  for (double x : r.values()) sum += s == 1 ? std::abs(x) : x * x;
  return sum / s;
}

double total_variation(const VectorField& v) {
  const GridDesc& g = v.grid();
  const auto ext = g.extents();
  const int off = 3 - g.rank();
  const std::array<std::size_t, 3> stride{static_cast<std::size_t>(ext[1]) * ext[2],
                                          static_cast<std::size_t>(ext[2]), 1};
  double tv = 0.0;
  for (const auto& comp : v.components()) {
    const auto f = comp.values();
    std::size_t i = 0;
    for (int a = 0; a < ext[0]; ++a)
      for (int b = 0; b < ext[1]; ++b)
        for (int d = 0; d < ext[2]; ++d, ++i) {
          const std::array<int, 3> q{a, b, d};
          double n2 = 0.0;
          for (int e = off; e < 3; ++e) {
            const auto k = static_cast<std::size_t>(e);
            if (q[k] + 1 < ext[k]) {
              const double diff = f[i + stride[k]] - f[i];
              n2 += diff * diff;
            }
          }
          tv += std::sqrt(n2);
        }
  }
  return tv;
}

double splitting_energy(const LinearizedDataTerm& ldt, const VectorField& u, const VectorField& v, int s,
                        double theta, double lambda) {
  require_same_shape(u.grid(), v.grid(), "splitting_energy");
  if (lambda < 0.0) throw InvalidArgument("TV weight must be non-negative");
  double coupling = 0.0;
  for (int c = 0; c < u.rank(); ++c) {
    const auto a = u.component(c).values();
    const auto b = v.component(c).values();
    for (std::size_t i = 0; i < a.size(); ++i) coupling += (b[i] - a[i]) * (b[i] - a[i]);
  }
  const double tv = lambda > 0.0 ? lambda * total_variation(v) : 0.0;
  return data_energy(ldt, u, s) + tv + 0.5 * theta * coupling;
}

}  // namespace varreg
