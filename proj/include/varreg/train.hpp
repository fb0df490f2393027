#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "varreg/unroll.hpp"

namespace varreg {

// How the first displacement of the cascade is produced during training and
// evaluation. Learned requires CascadeParams::init_net.
enum class NetInit { Zeros, Noise, Learned };

struct TrainConfig {
  double alpha = 0.05;
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int iterations = 500;
  int batch = 10;
  std::uint64_t seed = 0;
  int s = 2;
  int n_warp = 2;
  int n_iter = 1;
  NetInit init = NetInit::Learned;
  double noise_sigma = 0.5;

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

// Bias-corrected adaptive-moment update with stability constant 1e-8.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const TrainConfig& cfg);

struct ImagePair {
  ScalarField i0;
  ScalarField i1;
};

struct TrainResult {
  CascadeParams params;
  std::vector<double> loss_history;  // mean batch loss per iteration
};

// Seeded mini-batch training on the unsupervised loss.
TrainResult train(const std::vector<ImagePair>& pairs, const CascadeParams& params, const TrainConfig& cfg);

// Initial field for one pair under cfg.init; noise is seeded by `seed`.
std::optional<VectorField> initial_field(const TrainConfig& cfg, const GridDesc& grid, std::uint64_t seed);

// Network output for one pair under the configured init strategy.
VectorField infer(const CascadeParams& params, const ImagePair& pair, const TrainConfig& cfg, std::uint64_t seed);

// Mean unsupervised loss over pairs, evaluated with infer().
double evaluate_loss(const std::vector<ImagePair>& pairs, const CascadeParams& params, const TrainConfig& cfg);

}  // namespace varreg
