#include <doctest.h>

#include <cmath>
#include <map>

#include "helpers.hpp"
#include "varreg/error.hpp"
#include "varreg/icl.hpp"
#include "varreg/sampler.hpp"
#include "varreg/solver.hpp"
#include "varreg/synth.hpp"

using namespace varreg;
using namespace testing;

namespace {

// I1(x) = I0(x - shift): registering I1 onto I0 should find u = shift.
ScalarField translated(const ScalarField& i0, std::vector<double> shift) {
  for (double& s : shift) s = -s;
  return warp_scalar(i0, constant_vector(i0.grid(), shift));
}

// Mean endpoint error against a constant field over samples at least
// `margin` away from every border.
double mean_epe(const VectorField& u, std::vector<double> truth, int margin) {
  const GridDesc& g = u.grid();
  double sum = 0.0;
  int n = 0;
  for (int a = margin; a < g.dim(0) - margin; ++a)
    for (int b = margin; b < g.dim(1) - margin; ++b) {
      const double d0 = u.component(0).at(a, b) - truth[0], d1 = u.component(1).at(a, b) - truth[1];
      sum += std::hypot(d0, d1);
      ++n;
    }
  return sum / n;
}

SolverConfig default_config() {
  SolverConfig cfg;
  cfg.s = 2;
  return cfg;
}

}  // namespace

TEST_CASE("config validation") {
  SolverConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.theta = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = SolverConfig{};
  cfg.n_warp = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = SolverConfig{};
  cfg.s = 3;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  const GridDesc g = GridDesc::make2(32, 32);
  CHECK_THROWS_AS(register_images(ScalarField(g), ScalarField(GridDesc::make2(32, 33)), SolverConfig{}), GridMismatch);
}

TEST_CASE("identical images register to zero") {
  const GridDesc g = GridDesc::make2(64, 64);
  const Phantom p = make_phantom(g, 3);
  const RegistrationResult r = register_images(p.image, p.image, default_config());
  CHECK(r.u.max_norm() < 0.05);
}

TEST_CASE("one closed-form step without denoising") {
  const GridDesc g = GridDesc::make2(32, 32);
  const Phantom p = make_phantom(g, 4);
  const ScalarField i1 = translated(p.image, {0.7, -0.4});
  SolverConfig cfg;
  cfg.s = 2;
  cfg.theta = 0.05;
  cfg.n_warp = 1;
  cfg.n_iter = 1;
  cfg.levels = 1;
  cfg.denoiser = DenoiserSpec{};
  const RegistrationResult r = register_images(p.image, i1, cfg);
  const LinearizedDataTerm ldt = linearize(p.image, i1, VectorField(g));
  CHECK(bit_equal(r.u, icl_l2(ldt, VectorField(g), 0.05)));
}

TEST_CASE("unit translation is recovered") {
  const GridDesc g = GridDesc::make2(64, 64);
  const Phantom p = make_phantom(g, 5);
  const ScalarField i1 = translated(p.image, {1.0, 0.0});
  const RegistrationResult r = register_images(p.image, i1, default_config());
  CHECK(mean_epe(r.u, {1.0, 0.0}, 0) < 0.3);
}

TEST_CASE("forward and backward registrations cancel") {
  const GridDesc g = GridDesc::make2(64, 64);
  const Phantom p = make_phantom(g, 6);
  const ScalarField i1 = translated(p.image, {1.0, 0.5});
  const VectorField fwd = register_images(p.image, i1, default_config()).u;
  const VectorField bwd = register_images(i1, p.image, default_config()).u;
  std::vector<ScalarField> sum;
  for (int c = 0; c < 2; ++c) {
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) v[i] = fwd.component(c)[i] + bwd.component(c)[i];
    sum.emplace_back(g, std::move(v));
  }
  CHECK(mean_epe(VectorField(std::move(sum)), {0.0, 0.0}, 0) < 0.2);
}

TEST_CASE("the pyramid helps with large translations") {
  const GridDesc g = GridDesc::make2(64, 64);
  const Phantom p = make_phantom(g, 7);
  const std::vector<double> shift{5.0, -3.0};
  const ScalarField i1 = translated(p.image, shift);
  SolverConfig multi = default_config();
  SolverConfig single = default_config();
  single.levels = 1;
  const double e3 = mean_epe(register_images(p.image, i1, multi).u, shift, 8);
  const double e1 = mean_epe(register_images(p.image, i1, single).u, shift, 8);
  CHECK(e3 < e1);
}

TEST_CASE("splitting energy never rises within a linearization") {
  const GridDesc g = GridDesc::make2(64, 64);
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const SynthPair pair = make_pair(g, SynthConfig{}, seed);
    const RegistrationResult r = register_images(pair.i0, pair.i1, default_config());
    REQUIRE(r.diagnostics.records.size() == 3u * 3u * 2u);
    std::map<std::pair<int, int>, double> last;
    for (const IterationRecord& rec : r.diagnostics.records) {
      const auto key = std::make_pair(rec.level, rec.warp);
      if (auto it = last.find(key); it != last.end())
        CHECK(rec.splitting_energy <= it->second + 1e-6 * std::abs(it->second));
      last[key] = rec.splitting_energy;
      CHECK(std::isfinite(rec.data_energy));
    }
  }
}

TEST_CASE("registration is deterministic") {
  const GridDesc g = GridDesc::make2(48, 40);
  const SynthPair pair = make_pair(g, SynthConfig{}, 9);
  SolverConfig cfg = default_config();
  cfg.init.kind = InitKind::Noise;
  cfg.seed = 11;
  CHECK(bit_equal(register_images(pair.i0, pair.i1, cfg).u, register_images(pair.i0, pair.i1, cfg).u));
  cfg.s = 1;
  CHECK(bit_equal(register_images(pair.i0, pair.i1, cfg).u, register_images(pair.i0, pair.i1, cfg).u));
}

TEST_CASE("initial displacements") {
  const GridDesc g = GridDesc::make2(64, 64);
  InitStrategy zeros;
  CHECK(init_displacement(zeros, g, 1).max_norm() == 0.0);

  InitStrategy noise;
  noise.kind = InitKind::Noise;
  noise.noise_sigma = 0.5;
  const VectorField a = init_displacement(noise, g, 42), b = init_displacement(noise, g, 42);
  CHECK(bit_equal(a, b));
  CHECK_FALSE(bit_equal(a, init_displacement(noise, g, 43)));
  for (int c = 0; c < 2; ++c) {
    double mean = 0.0, sq = 0.0;
    for (double v : a.component(c).values()) mean += v;
    mean /= static_cast<double>(g.size());
    for (double v : a.component(c).values()) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(g.size() - 1));
    CHECK(sd >= 0.4);
    CHECK(sd <= 0.6);
  }

  InitStrategy given;
  given.kind = InitKind::Provided;
  given.field = random_vector(g, 5);
  CHECK(bit_equal(init_displacement(given, g, 0), *given.field));
  CHECK_THROWS_AS(init_displacement(given, GridDesc::make2(64, 63), 0), GridMismatch);
}
