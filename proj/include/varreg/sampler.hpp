#pragma once

#include "varreg/grid.hpp"

namespace varreg {

// out(x) = I(clamp(x + u(x))) with bilinear/trilinear interpolation.
ScalarField warp_scalar(const ScalarField& image, const VectorField& u);

// Nearest-neighbour warp for label maps; never blends labels.
ScalarField warp_mask_nearest(const ScalarField& mask, const VectorField& u);

// Central differences in the interior, one-sided differences on borders.
VectorField image_gradient(const ScalarField& image);

// Transpose of image_gradient: returns G^T g for a gradient-shaped g.
ScalarField image_gradient_adjoint(const VectorField& g);

struct WarpAdjoint {
  ScalarField image;    // d<g_out, warp(I,u)>/dI
  VectorField displacement;  // d<g_out, warp(I,u)>/du
};

// Exact adjoints of warp_scalar with respect to the image and the
// displacement. On an integer coordinate the derivative of the cell to the
// left is used; a clamped axis contributes no displacement gradient.
WarpAdjoint warp_adjoint(const ScalarField& image, const VectorField& u, const ScalarField& g_out);

// grad I sampled at x + u(x), with the component along any clamped axis set
// to zero since the clamped warp is flat there.
VectorField sample_gradient(const ScalarField& image, const VectorField& u);

// Gradient with respect to u of <g_out, sample_gradient(image, u)>.
VectorField sample_gradient_adjoint(const ScalarField& image, const VectorField& u, const VectorField& g_out);

}  // namespace varreg
