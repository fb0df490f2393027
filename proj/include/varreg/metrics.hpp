#pragma once

#include <span>
#include <vector>

#include "varreg/grid.hpp"

namespace varreg {

struct LabelScore {
  int label = 0;
  double dice = 0.0;
  double hausdorff_mm = 0.0;
};

struct JacobianReport {
  double neg_pct = 0.0;
  double mean_grad_j = 0.0;
  ScalarField det_map;
};

struct MetricsReport {
  std::vector<LabelScore> labels;  // ascending by label
  double neg_jacobian_pct = 0.0;
  double mean_grad_jacobian = 0.0;
  double mae = 0.0;
};

// 2|A n B| / (|A| + |B|) over samples carrying `label`; 1 when both are empty.
double dice(const ScalarField& a, const ScalarField& b, int label);

// Symmetric Hausdorff distance between the face-connected boundaries of the
// two label sets, in millimetres. `spacing` has one entry per axis.
double hausdorff(const ScalarField& a, const ScalarField& b, int label, std::span<const double> spacing);

// Determinant of grad(x + u) per sample, percentage of negative values and
// the mean magnitude of the determinant's gradient.
JacobianReport jacobian_report(const VectorField& u);

double intensity_mae(const ScalarField& a, const ScalarField& b);

// Sorted non-zero labels present in either mask.
std::vector<int> foreground_labels(const ScalarField& a, const ScalarField& b);

}  // namespace varreg
