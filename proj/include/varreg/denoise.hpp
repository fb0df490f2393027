#pragma once

#include <memory>
#include <vector>

#include "varreg/conv.hpp"
#include "varreg/grid.hpp"

namespace varreg {

enum class DenoiserKind { TV, Gaussian, Conv, Identity };

struct DenoiserSpec {
  DenoiserKind kind = DenoiserKind::Identity;
  double tv_weight = 0.0;  // lambda / theta
  int tv_iters = 200;
  double sigma = 1.0;
  std::shared_ptr<const ConvNet> conv;

  void validate(int rank) const;
};

VectorField denoise(const VectorField& v_in, const DenoiserSpec& spec);

// Per component, approximately minimises weight * TV(g) + 1/2 |g - f|^2 with
// the dual projection fixed point (step 1 / (2 rank), p starts at zero).
VectorField tv_denoise(const VectorField& f, double weight, int iters);

// Normalised taps exp(-k^2 / (2 sigma^2)) for k in [-ceil(3 sigma), ceil(3 sigma)].
std::vector<double> gaussian_kernel(double sigma);

// Separable Gaussian smoothing with clamp-to-edge borders.
VectorField gaussian_denoise(const VectorField& f, double sigma);
ScalarField gaussian_smooth(const ScalarField& f, double sigma);

}  // namespace varreg
