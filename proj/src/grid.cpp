#include "varreg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "varreg/error.hpp"

namespace varreg {

GridDesc::GridDesc(std::span<const int> dims, std::span<const double> spacing) {
  if (dims.size() != 2 && dims.size() != 3)
    throw InvalidArgument("grid rank must be 2 or 3, got " + std::to_string(dims.size()));
  if (!spacing.empty() && spacing.size() != dims.size())
    throw InvalidArgument("spacing count does not match grid rank");
  rank_ = static_cast<int>(dims.size());
  for (std::size_t a = 0; a < dims.size(); ++a) {
    if (dims[a] < 2) throw InvalidArgument("every grid dim must be >= 2");
    dims_[a] = dims[a];
    const double s = spacing.empty() ? 1.0 : spacing[a];
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("grid spacing must be positive");
    spacing_[a] = s;
  }
}

GridDesc GridDesc::make2(int d0, int d1, double s0, double s1) {
  const std::array<int, 2> d{d0, d1};
  const std::array<double, 2> s{s0, s1};
  return GridDesc(d, s);
}

GridDesc GridDesc::make3(int d0, int d1, int d2, double s0, double s1, double s2) {
  const std::array<int, 3> d{d0, d1, d2};
  const std::array<double, 3> s{s0, s1, s2};
  return GridDesc(d, s);
}

std::size_t GridDesc::size() const {
  if (rank_ == 0) return 0;
  std::size_t n = 1;
  for (int a = 0; a < rank_; ++a) n *= static_cast<std::size_t>(dims_[static_cast<std::size_t>(a)]);
  return n;
}

std::array<int, 3> GridDesc::extents() const {
  if (rank_ == 2) return {1, dims_[0], dims_[1]};
  return dims_;
}

bool GridDesc::operator==(const GridDesc& other) const {
  return same_shape(other) && spacing_ == other.spacing_;
}

bool GridDesc::same_shape(const GridDesc& other) const {
  return rank_ == other.rank_ && dims_ == other.dims_;
}

GridDesc GridDesc::with_dims(std::span<const int> dims) const {
  return GridDesc(dims, std::span<const double>(spacing_.data(), static_cast<std::size_t>(rank_)));
}

GridDesc GridDesc::with_spacing(std::span<const double> spacing) const {
  return GridDesc(std::span<const int>(dims_.data(), static_cast<std::size_t>(rank_)), spacing);
}

void require_same_shape(const GridDesc& a, const GridDesc& b, const char* what) {
  if (!a.same_shape(b)) throw GridMismatch(std::string("grid mismatch: ") + what);
}

ScalarField::ScalarField(const GridDesc& grid, double fill) : grid_(grid), values_(grid.size(), fill) {
  if (!std::isfinite(fill)) throw NumericalError("non-finite fill value");
}

ScalarField::ScalarField(const GridDesc& grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size())
    throw GridMismatch("value count " + std::to_string(values_.size()) +
                       " does not match grid size " + std::to_string(grid_.size()));
  for (double v : values_)
    if (!std::isfinite(v)) throw NumericalError("non-finite value in field");
}

double ScalarField::at(int i0, int i1) const {
  return values_[static_cast<std::size_t>(i0) * static_cast<std::size_t>(grid_.dim(1)) +
                 static_cast<std::size_t>(i1)];
}

double ScalarField::at(int i0, int i1, int i2) const {
  const auto d1 = static_cast<std::size_t>(grid_.dim(1));
  const auto d2 = static_cast<std::size_t>(grid_.dim(2));
  return values_[(static_cast<std::size_t>(i0) * d1 + static_cast<std::size_t>(i1)) * d2 +
                 static_cast<std::size_t>(i2)];
}

VectorField::VectorField(const GridDesc& grid) : grid_(grid) {
  comps_.assign(static_cast<std::size_t>(grid.rank()), ScalarField(grid));
}

VectorField::VectorField(std::vector<ScalarField> components) : comps_(std::move(components)) {
  if (comps_.empty()) throw InvalidArgument("vector field needs components");
  grid_ = comps_.front().grid();
  if (static_cast<int>(comps_.size()) != grid_.rank())
    throw GridMismatch("vector field component count must equal grid rank");
  for (const auto& c : comps_) require_same_shape(c.grid(), grid_, "vector field components");
}

double VectorField::max_norm() const {
  double best = 0.0;
  const std::size_t n = grid_.size();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (const auto& c : comps_) s += c[i] * c[i];
    best = std::max(best, s);
  }
  return std::sqrt(best);
}

namespace {

// Block mean along one extent axis of a padded (n0, n1, n2) array.
std::vector<double> reduce_axis(const std::vector<double>& in, std::array<int, 3>& ext, int axis) {
  const int n = ext[static_cast<std::size_t>(axis)];
  const int m = n / 2;
  std::array<int, 3> out_ext = ext;
  out_ext[static_cast<std::size_t>(axis)] = m;
  std::vector<double> out(static_cast<std::size_t>(out_ext[0]) * out_ext[1] * out_ext[2]);
  const auto idx = [](const std::array<int, 3>& e, int a, int b, int c) {
    return (static_cast<std::size_t>(a) * e[1] + b) * e[2] + c;
  };
  for (int a = 0; a < out_ext[0]; ++a)
    for (int b = 0; b < out_ext[1]; ++b)
      for (int c = 0; c < out_ext[2]; ++c) {
        std::array<int, 3> p{a, b, c};
        const int j = p[static_cast<std::size_t>(axis)];
        const int lo = 2 * j;
        const int hi = (j == m - 1) ? n - 1 : 2 * j + 1;
        double sum = 0.0;
        for (int s = lo; s <= hi; ++s) {
          p[static_cast<std::size_t>(axis)] = s;
          sum += in[idx(ext, p[0], p[1], p[2])];
        }
        out[idx(out_ext, a, b, c)] = sum / static_cast<double>(hi - lo + 1);
      }
  ext = out_ext;
  return out;
}

}  // namespace

ScalarField downsample(const ScalarField& f) {
  const GridDesc& g = f.grid();
  std::array<int, 3> ext = g.extents();
  std::vector<double> data(f.values().begin(), f.values().end());
  const int off = 3 - g.rank();
  for (int a = 0; a < g.rank(); ++a) {
    if (g.dim(a) < 4) throw InvalidArgument("grid too small to downsample");
    data = reduce_axis(data, ext, a + off);
  }
  std::vector<int> dims(static_cast<std::size_t>(g.rank()));
  std::vector<double> spacing(static_cast<std::size_t>(g.rank()));
  for (int a = 0; a < g.rank(); ++a) {
    dims[static_cast<std::size_t>(a)] = ext[static_cast<std::size_t>(a + off)];
    spacing[static_cast<std::size_t>(a)] = 2.0 * g.spacing(a);
  }
  return ScalarField(GridDesc(dims, spacing), std::move(data));
}

Pyramid build_pyramid(const ScalarField& i0, const ScalarField& i1, int levels) {
  if (!(i0.grid() == i1.grid())) throw GridMismatch("pyramid inputs must share one grid");
  if (levels < 1) throw InvalidArgument("pyramid needs at least one level");
  for (int a = 0; a < i0.grid().rank(); ++a) {
    int d = i0.grid().dim(a);
    for (int l = 1; l < levels; ++l) d /= 2;
    if (d < 4)
      throw InvalidArgument("pyramid of " + std::to_string(levels) +
                            " levels is too deep for the grid");
  }
  Pyramid p;
  p.levels.emplace_back(i0, i1);
  for (int l = 1; l < levels; ++l) {
    const auto& finer = p.levels.back();
    p.levels.emplace_back(downsample(finer.first), downsample(finer.second));
  }
  std::reverse(p.levels.begin(), p.levels.end());
  return p;
}

namespace {

double sample_clamped(const ScalarField& f, const std::array<double, 3>& pos) {
  const auto ext = f.grid().extents();
  std::array<int, 3> lo{};
  std::array<double, 3> fr{};
  for (std::size_t a = 0; a < 3; ++a) {
    const int n = ext[a];
    if (n == 1) {
      lo[a] = 0;
      fr[a] = 0.0;
      continue;
    }
    const double p = std::clamp(pos[a], 0.0, static_cast<double>(n - 1));
    const int c = std::clamp(static_cast<int>(std::floor(p)), 0, n - 2);
    lo[a] = c;
    fr[a] = p - c;
  }
  const auto vals = f.values();
  double out = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    std::array<int, 3> q{};
    double w = 1.0;
    bool skip = false;
    for (std::size_t a = 0; a < 3; ++a) {
      const int bit = (corner >> a) & 1;
      if (ext[a] == 1 && bit) {
        skip = true;
        break;
      }
      q[a] = lo[a] + bit;
      w *= bit ? fr[a] : 1.0 - fr[a];
    }
    if (skip) continue;
    out += w * vals[(static_cast<std::size_t>(q[0]) * ext[1] + q[1]) * ext[2] + q[2]];
  }
  return out;
}

}  // namespace

VectorField prolong_displacement(const VectorField& u, const GridDesc& target) {
  const GridDesc& src = u.grid();
  if (src.rank() != target.rank()) throw GridMismatch("prolongation rank mismatch");
  std::array<double, 3> ratio{1.0, 1.0, 1.0};
  const int off = 3 - src.rank();
  for (int a = 0; a < src.rank(); ++a) {
    const int s = src.dim(a);
    const int t = target.dim(a);
    if (t < 2 * s - 1 || t > 2 * s + 1)
      throw GridMismatch("prolongation target is not a 2x refinement of the source");
    ratio[static_cast<std::size_t>(a + off)] = static_cast<double>(t) / static_cast<double>(s);
  }
  const auto ext = target.extents();
  std::vector<ScalarField> comps;
  for (int c = 0; c < src.rank(); ++c) {
    std::vector<double> out(target.size());
    const double scale = ratio[static_cast<std::size_t>(c + off)];
    std::size_t i = 0;
    for (int a = 0; a < ext[0]; ++a)
      for (int b = 0; b < ext[1]; ++b)
        for (int d = 0; d < ext[2]; ++d) {
          const std::array<double, 3> pos{a / ratio[0], b / ratio[1], d / ratio[2]};
          out[i++] = scale * sample_clamped(u.component(c), pos);
        }
    comps.emplace_back(target, std::move(out));
  }
  return VectorField(std::move(comps));
}

}  // namespace varreg
