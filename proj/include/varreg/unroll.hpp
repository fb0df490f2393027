#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "varreg/conv.hpp"
#include "varreg/grid.hpp"
#include "varreg/icl.hpp"

namespace varreg {

// Theta1 shares one theta and one denoiser across all cascades; Theta2
// gives every cascade its own.
enum class Sharing { Theta1, Theta2 };

// Learnable state of the unrolled network. Raw theta values are mapped
// through softplus before use.
struct CascadeParams {
  int rank = 2;
  Sharing sharing = Sharing::Theta2;
  int n_warp = 1;
  int n_iter = 1;
  std::vector<double> theta_raw;
  std::vector<ConvNet> denoisers;
  std::optional<ConvNet> init_net;  // absent: the caller supplies the initial field

  int cascades() const { return n_warp * n_iter; }
  std::size_t slot(int cascade) const;
  double theta(int cascade) const;
  void validate() const;
};

double softplus(double x);
double softplus_inverse(double y);

// Hidden conv layers get He-normal weights, last layers start at zero, so
// the fresh network behaves like the zero-weight cascade.
CascadeParams make_cascade_params(int rank, Sharing sharing, int n_warp, int n_iter, int hidden, bool learned_init,
                                  double theta0, std::uint64_t seed);

// Same structure, every entry zero.
CascadeParams zero_params_like(const CascadeParams& p);

std::vector<double> flatten(const CascadeParams& p);
void unflatten(std::span<const double> flat, CascadeParams& p);

// Visits each named tensor in flatten order.
void for_each_tensor(CascadeParams& p,
                     const std::function<void(const std::string&, const std::vector<int>&, std::span<double>)>& fn);

struct CascadeStep {
  std::size_t slot = 0;
  double theta = 0.0;
  VectorField v_in;
  VectorField u;
  std::optional<ScalarField> zhat;  // s = 1 only
  ConvTrace gdl;
  VectorField v_out;
};

struct WarpStep {
  LinearizedDataTerm ldt;
  std::vector<CascadeStep> steps;
};

// Everything the reverse pass needs: inputs, parameters and every cascade's
// intermediates.
struct Tape {
  int s = 2;
  double eps = 1e-6;
  CascadeParams params;
  ScalarField i0;
  ScalarField i1;
  ConvTrace init;
  VectorField initial;
  std::vector<WarpStep> warps;
  VectorField output;
};

struct ForwardResult {
  VectorField u;
  Tape tape;
};

// WL -> ICL -> GDL cascades. `initial` is required when params carry no
// init net and ignored otherwise.
ForwardResult vrnet_forward(const ScalarField& i0, const ScalarField& i1, const CascadeParams& params, int s,
                            const std::optional<VectorField>& initial = std::nullopt, double eps = 1e-6);

// mean |I1(x + u) - I0| + alpha * mean sum_c |grad u_c|^2 (central differences).
double unsupervised_loss(const VectorField& u, const ScalarField& i0, const ScalarField& i1, double alpha);

struct LossGradient {
  double loss = 0.0;
  VectorField g_u;
};

LossGradient unsupervised_loss_gradient(const VectorField& u, const ScalarField& i0, const ScalarField& i1,
                                        double alpha);

struct BackwardResult {
  double loss = 0.0;
  CascadeParams grads;
};

// Reverse pass over a recorded forward. Throws InvalidArgument when the tape
// was recorded for different images.
BackwardResult vrnet_backward(const Tape& tape, const ScalarField& i0, const ScalarField& i1, double alpha);

struct GradCheckGroup {
  std::string name;
  std::size_t count = 0;
  double max_rel = 0.0;
  double mean_rel = 0.0;
};

struct GradCheckReport {
  std::size_t count = 0;
  double max_rel = 0.0;
  double mean_rel = 0.0;
  double fraction_ok = 1.0;  // share of parameters with relative error below 1e-3
  std::vector<GradCheckGroup> groups;
};

struct GradCheckConfig {
  int s = 2;
  double alpha = 0.05;
  double step = 1e-5;
  double eps = 1e-6;
  std::optional<VectorField> initial;
};

// Relative error |a - b| / max(|a|, |b|, 1e-8); two zero values give 0.
double relative_error(double a, double b);

// Central differences on every parameter versus vrnet_backward.
GradCheckReport grad_check(const CascadeParams& params, const ScalarField& i0, const ScalarField& i1,
                           const GradCheckConfig& cfg);

}  // namespace varreg
