#pragma once

#include <cstdint>

#include "varreg/grid.hpp"

namespace varreg {

struct Phantom {
  ScalarField image;  // in [0, 1]
  ScalarField mask;   // labels {0, 1, 2}
};

// Sum of seeded Gaussian bumps, normalised to [0, 1]. Label 2 marks the
// brightest 40% of samples and label 1 the next 4%, a thin shell around it.
// Needs dims >= 32 (2D) or >= 16 (3D).
Phantom make_phantom(const GridDesc& grid, std::uint64_t seed);

// Smoothed seeded white noise scaled to a largest displacement norm of
// max_disp, regenerated until the Jacobian determinant is positive
// everywhere (at most 20 attempts).
VectorField make_deformation(const GridDesc& grid, double max_disp, double smoothness_sigma, std::uint64_t seed);

// Smooth random image for small test instances, normalised to [0, 1].
ScalarField make_smooth_image(const GridDesc& grid, double sigma, std::uint64_t seed);

struct SynthConfig {
  double max_disp = 2.0;
  double smoothness_sigma = 0.0;  // 0: half the smallest dim
};

struct SynthPair {
  ScalarField i0;
  ScalarField i1;
  ScalarField mask0;
  ScalarField mask1;
  VectorField u_true;
  VectorField u_inv;
  double inversion_residual = 0.0;  // max |u_true(x + u_inv) + u_inv|
};

// I1 = I0 warped by the fixed-point inverse of u_true, so registering I1
// onto I0 targets u_true.
SynthPair make_pair(const GridDesc& grid, const SynthConfig& cfg, std::uint64_t seed);

// Fixed-point inverse u_inv(x) = -u(x + u_inv(x)).
VectorField invert_displacement(const VectorField& u, int iterations);

}  // namespace varreg
