#include "varreg/solver.hpp"

#include <random>

#include "varreg/error.hpp"
#include "varreg/icl.hpp"

namespace varreg {

void InitStrategy::validate() const {
  switch (kind) {
    case InitKind::Noise:
      if (!(noise_sigma > 0.0)) throw InvalidArgument("noise init needs a positive sigma");
      break;
    case InitKind::Provided:
      if (!field) throw InvalidArgument("provided init needs a field");
      break;
    case InitKind::Learned:
      if (!learned) throw InvalidArgument("learned init needs an init network");
      if (learned->in_channels() != 2) throw GridMismatch("init network must take two image channels");
      break;
    case InitKind::Zeros:
      break;
  }
}

DenoiserSpec SolverConfig::default_denoiser() {
  DenoiserSpec d;
  d.kind = DenoiserKind::TV;
  d.tv_weight = 0.1;
  d.tv_iters = 200;
  return d;
}

void SolverConfig::validate() const {
  if (s != 1 && s != 2) throw InvalidArgument("s must be 1 or 2");
  if (!(theta > 0.0)) throw InvalidArgument("theta must be positive");
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  if (n_warp < 1 || n_iter < 1) throw InvalidArgument("n_warp and n_iter must be >= 1");
  if (levels < 1) throw InvalidArgument("levels must be >= 1");
  init.validate();
}

VectorField init_displacement(const InitStrategy& strategy, const GridDesc& grid, std::uint64_t seed,
                              const ScalarField* i0, const ScalarField* i1) {
  strategy.validate();
  switch (strategy.kind) {
    case InitKind::Zeros:
      return VectorField(grid);
    case InitKind::Noise: {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> dist(0.0, strategy.noise_sigma);
      std::vector<ScalarField> comps;
      for (int c = 0; c < grid.rank(); ++c) {
        std::vector<double> v(grid.size());
        for (double& x : v) x = dist(rng);
        comps.emplace_back(grid, std::move(v));
      }
      return VectorField(std::move(comps));
    }
    case InitKind::Provided:
      require_same_shape(strategy.field->grid(), grid, "provided init field");
      return *strategy.field;
    case InitKind::Learned: {
      if (i0 == nullptr || i1 == nullptr) throw InvalidArgument("learned init needs the image pair");
      require_same_shape(i0->grid(), grid, "learned init images");
      if (strategy.learned->out_channels() != grid.rank())
        throw GridMismatch("init network output channels must equal the grid rank");
      return to_vector_field(conv_net_apply(*strategy.learned, stack_images(*i0, *i1)));
    }
  }
  return VectorField(grid);
}

RegistrationResult register_images(const ScalarField& i0, const ScalarField& i1, const SolverConfig& cfg) {
  cfg.validate();
  if (!(i0.grid() == i1.grid())) throw GridMismatch("reference and floating images must share one grid");
  cfg.denoiser.validate(i0.grid().rank());
  const Pyramid pyr = build_pyramid(i0, i1, cfg.levels);
  const double lambda = cfg.denoiser.kind == DenoiserKind::TV ? cfg.theta * cfg.denoiser.tv_weight : 0.0;

  RegistrationResult result;
  VectorField v;
  for (std::size_t level = 0; level < pyr.levels.size(); ++level) {
    const auto& [ref, flo] = pyr.levels[level];
    if (level == 0) {
      v = init_displacement(cfg.init, ref.grid(), cfg.seed, &ref, &flo);
    } else {
      v = prolong_displacement(v, ref.grid());
    }
    for (int w = 0; w < cfg.n_warp; ++w) {
      const LinearizedDataTerm ldt = linearize(ref, flo, v);
      for (int k = 0; k < cfg.n_iter; ++k) {
        VectorField u = cfg.s == 1 ? icl_l1(ldt, v, cfg.theta, cfg.eps).u : icl_l2(ldt, v, cfg.theta);
        v = denoise(u, cfg.denoiser);
        IterationRecord rec;
        rec.level = static_cast<int>(level);
        rec.warp = w;
        rec.iter = k;
        rec.splitting_energy = splitting_energy(ldt, u, v, cfg.s, cfg.theta, lambda);
        rec.data_energy = data_energy(ldt, u, cfg.s);
        rec.max_u = u.max_norm();
        rec.max_v = v.max_norm();
        result.diagnostics.records.push_back(rec);
      }
    }
  }
  result.u = std::move(v);
  return result;
}

}  // namespace varreg
