#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "varreg/conv.hpp"
#include "varreg/denoise.hpp"
#include "varreg/grid.hpp"

namespace varreg {

enum class InitKind { Zeros, Noise, Provided, Learned };

struct InitStrategy {
  InitKind kind = InitKind::Zeros;
  double noise_sigma = 0.5;
  std::optional<VectorField> field;           // Provided
  std::shared_ptr<const ConvNet> learned;     // Learned: 2 -> rank channels

  void validate() const;
};

struct SolverConfig {
  int s = 2;
  double theta = 0.001;
  DenoiserSpec denoiser = default_denoiser();
  int n_warp = 3;
  int n_iter = 2;
  int levels = 3;
  double eps = 1e-6;
  InitStrategy init;
  std::uint64_t seed = 0;

  static DenoiserSpec default_denoiser();
  void validate() const;
};

struct IterationRecord {
  int level = 0;  // 0 = coarsest
  int warp = 0;
  int iter = 0;
  double splitting_energy = 0.0;
  double data_energy = 0.0;
  double max_u = 0.0;  // largest |u| after the data step
  double max_v = 0.0;  // largest |v| after the denoising step
};

struct SolveDiagnostics {
  std::vector<IterationRecord> records;
};

struct RegistrationResult {
  VectorField u;
  SolveDiagnostics diagnostics;
};

// Zeros, seeded i.i.d. normal noise, a provided field, or the learned init
// net applied to the stacked (i0, i1) pair.
VectorField init_displacement(const InitStrategy& strategy, const GridDesc& grid, std::uint64_t seed,
                              const ScalarField* i0 = nullptr, const ScalarField* i1 = nullptr);

// Coarse-to-fine variable-splitting registration of i1 onto i0. Returns the
// denoised field v of the last inner iteration at the finest level.
RegistrationResult register_images(const ScalarField& i0, const ScalarField& i1, const SolverConfig& cfg);

}  // namespace varreg
