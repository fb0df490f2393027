#pragma once

#include <array>

#include "varreg/grid.hpp"

namespace varreg {

// Quantities frozen at one linearization point u_ref: the warped floating
// image, its spatial gradient and the residual against the reference.
struct LinearizedDataTerm {
  ScalarField warped;   // I1(x + u_ref)
  VectorField gradient; // J = grad(I1(x + u_ref))
  ScalarField residual; // I1(x + u_ref) - I0
  VectorField u_ref;
};

// Dual variable of the L1 data term, |z| <= 1 per sample.
struct DualCertificate {
  ScalarField z;
};

struct L1Update {
  VectorField u;
  DualCertificate cert;
};

LinearizedDataTerm linearize(const ScalarField& i0, const ScalarField& i1, const VectorField& u_ref);

// rho(u) = r + <J, u - u_ref>
ScalarField rho(const LinearizedDataTerm& ldt, const VectorField& u);

// Closed-form minimiser of |rho(u)| + theta/2 |v - u|^2 per sample.
L1Update icl_l1(const LinearizedDataTerm& ldt, const VectorField& v, double theta, double eps);

// Closed-form minimiser of rho(u)^2 / 2 + theta/2 |v - u|^2 per sample,
// evaluated with the explicit 2D/3D component formulas.
VectorField icl_l2(const LinearizedDataTerm& ldt, const VectorField& v, double theta);

// (1/s) sum |rho(u)|^s, s in {1, 2}.
double data_energy(const LinearizedDataTerm& ldt, const VectorField& u, int s);

// Isotropic total variation with forward differences: for every component,
// the sum over samples of the Euclidean norm of its forward-difference
// gradient, summed over components.
double total_variation(const VectorField& v);

// data_energy(u) + lambda * TV(v) + theta/2 * sum |v - u|^2.
double splitting_energy(const LinearizedDataTerm& ldt, const VectorField& u, const VectorField& v, int s,
                        double theta, double lambda);

// Per-sample forms of the closed-form updates. Components beyond `rank`
// are ignored and returned as zero.
namespace pointwise {

struct Sample {
  int rank = 2;
  std::array<double, 3> gradient{};  // J
  double residual = 0.0;             // r
  std::array<double, 3> u_ref{};
  std::array<double, 3> v{};
};

double rho(const Sample& s, const std::array<double, 3>& u);

// Thresholding form: u = v - zhat / max(|zhat|, 1) * J / theta.
std::array<double, 3> l1_threshold(const Sample& s, double theta, double eps);

// Primal-dual form: project zhat onto [-1, 1], then u = v - z J / theta.
// Writes the projected dual value to *z.
std::array<double, 3> l1_primal_dual(const Sample& s, double theta, double eps, double* z);

// Component formulas with denominator |J|^2 + theta (2D and 3D).
std::array<double, 3> l2_components(const Sample& s, double theta);

// Matrix-vector form: u_ref + [1 - J J^T / (theta + |J|^2)] (v - u_ref - J r / theta).
std::array<double, 3> l2_matrix_vector(const Sample& s, double theta);

}  // namespace pointwise

}  // namespace varreg
