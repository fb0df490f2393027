#include "varreg/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "varreg/error.hpp"
#include "varreg/parallel.hpp"
#include "varreg/solver.hpp"

namespace varreg {

void TrainConfig::validate() const {
  if (alpha < 0.0) throw InvalidArgument("alpha must be non-negative");
  if (!(lr > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw InvalidArgument("Adam betas must lie in (0, 1)");
  if (iterations < 0) throw InvalidArgument("iterations must be non-negative");
  if (batch < 1) throw InvalidArgument("batch must be >= 1");
  if (s != 1 && s != 2) throw InvalidArgument("s must be 1 or 2");
  if (n_warp < 1 || n_iter < 1) throw InvalidArgument("n_warp and n_iter must be >= 1");
  if (init == NetInit::Noise && !(noise_sigma > 0.0)) throw InvalidArgument("noise sigma must be positive");
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const TrainConfig& cfg) {
  if (params.size() != grads.size()) throw GridMismatch("Adam parameter and gradient sizes differ");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw GridMismatch("Adam state does not match the parameter count");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + 1e-8);
  }
}

std::optional<VectorField> initial_field(const TrainConfig& cfg, const GridDesc& grid, std::uint64_t seed) {
  if (cfg.init != NetInit::Noise) return std::nullopt;
  InitStrategy noise;
  noise.kind = InitKind::Noise;
  noise.noise_sigma = cfg.noise_sigma;
  return init_displacement(noise, grid, seed);
}

namespace {

// Drops the init net when the strategy does not use it.
CascadeParams effective_params(const CascadeParams& params, const TrainConfig& cfg) {
  if (cfg.init == NetInit::Learned) {
    if (!params.init_net) throw InvalidArgument("learned init requires an init network");
    return params;
  }
  CascadeParams p = params;
  p.init_net.reset();
  return p;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9E3779B97F4A7C15ull ^ (b + 0x632BE59BD9B4E019ull + (a << 6) + (a >> 2));
  x ^= x >> 31;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 29;
  return x;
}

}  // namespace

VectorField infer(const CascadeParams& params, const ImagePair& pair, const TrainConfig& cfg, std::uint64_t seed) {
  const CascadeParams p = effective_params(params, cfg);
  return vrnet_forward(pair.i0, pair.i1, p, cfg.s, initial_field(cfg, pair.i0.grid(), seed)).u;
}

double evaluate_loss(const std::vector<ImagePair>& pairs, const CascadeParams& params, const TrainConfig& cfg) {
  if (pairs.empty()) throw InvalidArgument("evaluation set is empty");
  std::vector<double> losses(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const VectorField u = infer(params, pairs[i], cfg, mix(cfg.seed, 1000003 + i));
    losses[i] = unsupervised_loss(u, pairs[i].i0, pairs[i].i1, cfg.alpha);
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(pairs.size());
}

TrainResult train(const std::vector<ImagePair>& pairs, const CascadeParams& params, const TrainConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw InvalidArgument("training set is empty");
  if (params.n_warp != cfg.n_warp || params.n_iter != cfg.n_iter)
    throw InvalidArgument("cascade shape of the parameters does not match the training config");
  TrainResult result{params, {}};
  result.params.validate();
  if (cfg.iterations == 0) return result;

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  AdamState state;
  std::vector<double> flat = flatten(result.params);
  const auto batch = static_cast<std::size_t>(cfg.batch);
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<std::size_t> members(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      members[b] = order[cursor++];
    }
    const CascadeParams current = effective_params(result.params, cfg);
    std::vector<double> losses(batch);
    std::vector<std::vector<double>> grads(batch);
    parallel_for(batch, [&](std::size_t b) {
      const ImagePair& pair = pairs[members[b]];
      const auto init = initial_field(cfg, pair.i0.grid(), mix(cfg.seed, static_cast<std::uint64_t>(it) * batch + b));
      const auto fwd = vrnet_forward(pair.i0, pair.i1, current, cfg.s, init);
      auto bwd = vrnet_backward(fwd.tape, pair.i0, pair.i1, cfg.alpha);
      losses[b] = bwd.loss;
      if (!current.init_net && result.params.init_net) bwd.grads.init_net = zeros_like(*result.params.init_net);
      grads[b] = flatten(bwd.grads);
    });
    std::vector<double> mean_grad(flat.size(), 0.0);
    double mean_loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      mean_loss += losses[b];
      for (std::size_t i = 0; i < flat.size(); ++i) mean_grad[i] += grads[b][i];
    }
    mean_loss /= static_cast<double>(batch);
    for (double& g : mean_grad) g /= static_cast<double>(batch);
    if (!std::isfinite(mean_loss)) throw NumericalError("training loss became non-finite");
    adam_step(flat, mean_grad, state, cfg);
    unflatten(flat, result.params);
    result.loss_history.push_back(mean_loss);
  }
  return result;
}

}  // namespace varreg
