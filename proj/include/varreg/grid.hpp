#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace varreg {

// Regular 2D or 3D sampling grid. Samples are stored row-major with the last
// axis fastest. Displacement component c moves along axis c.
class GridDesc {
 public:
  GridDesc() = default;
  GridDesc(std::span<const int> dims, std::span<const double> spacing);

  static GridDesc make2(int d0, int d1, double s0 = 1.0, double s1 = 1.0);
  static GridDesc make3(int d0, int d1, int d2, double s0 = 1.0, double s1 = 1.0,
                        double s2 = 1.0);

  int rank() const { return rank_; }
  int dim(int axis) const { return dims_[static_cast<std::size_t>(axis)]; }
  double spacing(int axis) const { return spacing_[static_cast<std::size_t>(axis)]; }
  std::size_t size() const;

  // Dims padded to three axes with leading 1s, so (n0, n1, n2) loops cover
  // both ranks. Axis a of the grid is extent axis a + (3 - rank).
  std::array<int, 3> extents() const;

  // Same dims and spacing.
  bool operator==(const GridDesc& other) const;
  // Same dims; spacing may differ.
  bool same_shape(const GridDesc& other) const;

  GridDesc with_dims(std::span<const int> dims) const;
  GridDesc with_spacing(std::span<const double> spacing) const;

 private:
  int rank_ = 0;
  std::array<int, 3> dims_{1, 1, 1};
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
};

// One real value per grid sample. Values are finite and fixed at
// construction.
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(const GridDesc& grid, double fill = 0.0);
  ScalarField(const GridDesc& grid, std::vector<double> values);

  const GridDesc& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

  double at(int i0, int i1) const;
  double at(int i0, int i1, int i2) const;

 private:
  GridDesc grid_;
  std::vector<double> values_;
};

// A displacement field in voxel units: one ScalarField per axis.
class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(const GridDesc& grid);  // zeros
  explicit VectorField(std::vector<ScalarField> components);

  const GridDesc& grid() const { return grid_; }
  int rank() const { return grid_.rank(); }
  const ScalarField& component(int c) const { return comps_[static_cast<std::size_t>(c)]; }
  const std::vector<ScalarField>& components() const { return comps_; }

  // Largest per-sample Euclidean norm.
  double max_norm() const;

 private:
  GridDesc grid_;
  std::vector<ScalarField> comps_;
};

// Image pair at several resolutions, coarsest first.
struct Pyramid {
  std::vector<std::pair<ScalarField, ScalarField>> levels;
};

// 2x block-mean reduction per axis; an odd trailing sample joins the last
// block. Spacing doubles.
ScalarField downsample(const ScalarField& f);

Pyramid build_pyramid(const ScalarField& i0, const ScalarField& i1, int levels);

// Resamples each component onto `target` by multilinear interpolation of
// index coordinates and rescales it by the per-axis size ratio.
VectorField prolong_displacement(const VectorField& u, const GridDesc& target);

// Throws GridMismatch when the grids differ in shape.
void require_same_shape(const GridDesc& a, const GridDesc& b, const char* what);

}  // namespace varreg
