#include "varreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "varreg/error.hpp"
#include "varreg/sampler.hpp"

namespace varreg {

namespace {

int label_of(double v) { return static_cast<int>(std::lround(v)); }

std::vector<std::array<int, 3>> boundary_points(const ScalarField& m, int label) {
  const auto ext = m.grid().extents();
  const int off = 3 - m.grid().rank();
  const auto vals = m.values();
  const auto at = [&](int a, int b, int c) {
    return label_of(vals[(static_cast<std::size_t>(a) * ext[1] + b) * ext[2] + c]);
  };
  std::vector<std::array<int, 3>> pts;
  for (int a = 0; a < ext[0]; ++a)
    for (int b = 0; b < ext[1]; ++b)
      for (int c = 0; c < ext[2]; ++c) {
        if (at(a, b, c) != label) continue;
        const std::array<int, 3> q{a, b, c};
        bool edge = false;
        for (int e = off; e < 3 && !edge; ++e)
          for (int step : {-1, 1}) {
            std::array<int, 3> r = q;
            r[static_cast<std::size_t>(e)] += step;
            const int x = r[static_cast<std::size_t>(e)];
            // Outside the grid counts as outside the label.
            if (x < 0 || x >= ext[static_cast<std::size_t>(e)] || at(r[0], r[1], r[2]) != label) {
              edge = true;
              break;
            }
          }
        if (edge) pts.push_back(q);
      }
  return pts;
}

double directed(const std::vector<std::array<int, 3>>& from, const std::vector<std::array<int, 3>>& to,
                const std::array<double, 3>& sp) {
  double worst = 0.0;
  for (const auto& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) {
      double d2 = 0.0;
      for (std::size_t e = 0; e < 3; ++e) {
        const double d = (p[e] - q[e]) * sp[e];
        d2 += d * d;
      }
      best = std::min(best, d2);
      if (best <= worst) break;
    }
    worst = std::max(worst, best);
  }
  return std::sqrt(worst);
}

}  // namespace

double dice(const ScalarField& a, const ScalarField& b, int label) {
  require_same_shape(a.grid(), b.grid(), "dice");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool in_a = label_of(a[i]) == label;
    const bool in_b = label_of(b[i]) == label;
    na += in_a;
    nb += in_b;
    both += in_a && in_b;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double hausdorff(const ScalarField& a, const ScalarField& b, int label, std::span<const double> spacing) {
  require_same_shape(a.grid(), b.grid(), "hausdorff");
  const int rank = a.grid().rank();
  if (static_cast<int>(spacing.size()) != rank) throw InvalidArgument("spacing must have one entry per axis");
  std::array<double, 3> sp{1.0, 1.0, 1.0};
  for (int ax = 0; ax < rank; ++ax) {
    if (!(spacing[static_cast<std::size_t>(ax)] > 0.0)) throw InvalidArgument("spacing must be positive");
    sp[static_cast<std::size_t>(ax + 3 - rank)] = spacing[static_cast<std::size_t>(ax)];
  }
  const auto pa = boundary_points(a, label);
  const auto pb = boundary_points(b, label);
  if (pa.empty() || pb.empty()) throw InvalidArgument("hausdorff distance needs a non-empty mask on both sides");
  return std::max(directed(pa, pb, sp), directed(pb, pa, sp));
}

JacobianReport jacobian_report(const VectorField& u) {
  const GridDesc& g = u.grid();
  const int rank = g.rank();
  // grads[c] holds d u_c / d x_a for every axis a.
  std::vector<VectorField> grads;
  for (int c = 0; c < rank; ++c) grads.push_back(image_gradient(u.component(c)));
  const std::size_t n = g.size();
  std::vector<double> det(n);
  std::size_t negative = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double m[3][3] = {};
    for (int c = 0; c < rank; ++c)
      for (int a = 0; a < rank; ++a) m[c][a] = (c == a ? 1.0 : 0.0) + grads[static_cast<std::size_t>(c)].component(a)[i];
    if (rank == 2) {
      det[i] = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    } else {
      det[i] = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
               m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    }
    negative += det[i] < 0.0;
  }
  ScalarField det_map(g, std::move(det));
  const VectorField dg = image_gradient(det_map);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int a = 0; a < rank; ++a) s += dg.component(a)[i] * dg.component(a)[i];
    sum += std::sqrt(s);
  }
  JacobianReport r;
  r.neg_pct = 100.0 * static_cast<double>(negative) / static_cast<double>(n);
  r.mean_grad_j = sum / static_cast<double>(n);
  r.det_map = std::move(det_map);
  return r;
}

double intensity_mae(const ScalarField& a, const ScalarField& b) {
  require_same_shape(a.grid(), b.grid(), "intensity_mae");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

std::vector<int> foreground_labels(const ScalarField& a, const ScalarField& b) {
  std::set<int> labels;
  for (double v : a.values()) labels.insert(label_of(v));
  for (double v : b.values()) labels.insert(label_of(v));
  labels.erase(0);
  return {labels.begin(), labels.end()};
}

}  // namespace varreg
