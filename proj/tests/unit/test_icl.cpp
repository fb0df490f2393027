#include <doctest.h>

#include "../common/oracles.hpp"
#include "helpers.hpp"
#include "varreg/error.hpp"
#include "varreg/icl.hpp"
#include "varreg/sampler.hpp"

using namespace varreg;
using namespace testing;

namespace {

// Constant per-sample data term on a 2x2 grid.
LinearizedDataTerm constant_ldt(std::vector<double> j, double r, std::vector<double> uref = {0.0, 0.0}) {
  const GridDesc g = GridDesc::make2(2, 2);
  return LinearizedDataTerm{ScalarField(g, 0.0), constant_vector(g, j), ScalarField(g, r), constant_vector(g, uref)};
}

LinearizedDataTerm random_ldt(const GridDesc& g, unsigned seed) {
  return LinearizedDataTerm{random_field(g, seed), random_vector(g, seed + 1), random_field(g, seed + 2, -1.0, 1.0),
                            random_vector(g, seed + 3)};
}

}  // namespace

TEST_CASE("linearize trivial cases") {
  const GridDesc g = GridDesc::make2(6, 5);
  const ScalarField img = random_field(g, 1);
  const LinearizedDataTerm same = linearize(img, img, VectorField(g));
  for (double v : same.residual.values()) CHECK(v == 0.0);

  const ScalarField ramp = field2(g, [](int a, int) { return a; });
  const LinearizedDataTerm lr = linearize(ScalarField(g, 0.0), ramp, VectorField(g));
  for (int a = 1; a < 5; ++a)
    for (int b = 1; b < 4; ++b) {
      CHECK(lr.gradient.component(0).at(a, b) == 1.0);
      CHECK(lr.gradient.component(1).at(a, b) == 0.0);
      CHECK(lr.residual.at(a, b) == a);
    }
  CHECK_THROWS_AS(linearize(img, ScalarField(GridDesc::make2(6, 6)), VectorField(g)), GridMismatch);
}

TEST_CASE("linearize at the true shift leaves no residual") {
  const GridDesc g = GridDesc::make2(8, 7);
  const ScalarField i0 = random_field(g, 2);
  // I1(x + 1) = I0(x) along axis 0.
  const ScalarField i1 = field2(g, [&](int a, int b) { return i0.at(std::max(a - 1, 0), b); });
  const LinearizedDataTerm ldt = linearize(i0, i1, constant_vector(g, {1.0, 0.0}));
  for (int a = 0; a < 7; ++a)
    for (int b = 0; b < 7; ++b) CHECK(std::abs(ldt.residual.at(a, b)) < 1e-12);
}

TEST_CASE("rho against a per-sample dot product") {
  const GridDesc g = GridDesc::make3(3, 4, 2);
  const LinearizedDataTerm ldt = random_ldt(g, 10);
  CHECK(bit_equal(rho(ldt, ldt.u_ref), ldt.residual));
  const VectorField u = random_vector(g, 20);
  const ScalarField r = rho(ldt, u);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double want = ldt.residual[i];
    for (int c = 0; c < 3; ++c) want += ldt.gradient.component(c)[i] * (u.component(c)[i] - ldt.u_ref.component(c)[i]);
    CHECK(std::abs(r[i] - want) <= 1e-15);
  }
  LinearizedDataTerm flat = ldt;
  flat.gradient = VectorField(g);
  CHECK(bit_equal(rho(flat, u), flat.residual));
}

TEST_CASE("L1 update examples") {
  const LinearizedDataTerm a = constant_ldt({1.0, 0.0}, 0.5);
  const L1Update ua = icl_l1(a, VectorField(a.gradient.grid()), 1.0, 1e-12);
  CHECK(ua.u.component(0)[0] == doctest::Approx(-0.5).epsilon(1e-11));
  CHECK(ua.u.component(1)[0] == 0.0);
  CHECK(ua.cert.z[0] == doctest::Approx(0.5).epsilon(1e-11));

  const LinearizedDataTerm b = constant_ldt({1.0, 0.0}, 2.0);
  const L1Update ub = icl_l1(b, VectorField(b.gradient.grid()), 1.0, 1e-12);
  CHECK(ub.u.component(0)[0] == -1.0);
  CHECK(ub.cert.z[0] == 1.0);

  const LinearizedDataTerm c = constant_ldt({0.0, 0.0}, 3.0);
  const VectorField v = constant_vector(c.gradient.grid(), {0.25, -0.75});
  CHECK(bit_equal(icl_l1(c, v, 0.7, 1e-6).u, v));
}

TEST_CASE("L1 update minimises the local energy") {
  std::mt19937_64 rng(3);
  for (int n = 0; n < 100; ++n) {
    double theta = 0.0;
    const auto s = oracle::random_sample(rng, n % 2 == 0 ? 2 : 3, 0.01, 10.0, &theta);
    double z = 0.0;
    const auto u = pointwise::l1_primal_dual(s, theta, 1e-12, &z);
    CHECK(std::abs(z) <= 1.0);
    const double e = oracle::local_energy(s, u, theta, 1);
    CHECK(e <= oracle::grid_search_min(s, u, theta, 1) + 1e-8);
  }
}

TEST_CASE("thresholding and primal-dual forms agree bit for bit") {
  std::mt19937_64 rng(4);
  for (int n = 0; n < 200; ++n) {
    double theta = 0.0;
    const auto s = oracle::random_sample(rng, 2 + n % 2, 0.01, 10.0, &theta);
    double z = 0.0;
    const auto a = pointwise::l1_threshold(s, theta, 1e-6);
    const auto b = pointwise::l1_primal_dual(s, theta, 1e-6, &z);
    CHECK(a == b);
    CHECK(std::abs(z) <= 1.0);
  }
}

TEST_CASE("L2 update examples") {
  const LinearizedDataTerm a = constant_ldt({1.0, 0.0}, 0.5);
  const VectorField ua = icl_l2(a, VectorField(a.gradient.grid()), 1.0);
  CHECK(ua.component(0)[0] == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(ua.component(1)[0] == 0.0);

  const LinearizedDataTerm b = constant_ldt({1.3, -0.4}, 0.8, {0.1, 0.2});
  const VectorField ub = icl_l2(b, constant_vector(b.gradient.grid(), {0.3, -0.2}), 1e12);
  CHECK(std::abs(ub.component(0)[0] - 0.3) < 1e-6);
  CHECK(std::abs(ub.component(1)[0] + 0.2) < 1e-6);
  CHECK_THROWS_AS(icl_l2(b, VectorField(b.gradient.grid()), 0.0), InvalidArgument);
}

TEST_CASE("L2 update against a dense solve and its optimality condition") {
  std::mt19937_64 rng(5);
  for (int n = 0; n < 200; ++n) {
    double theta = 0.0;
    const auto s = oracle::random_sample(rng, 2 + n % 2, 0.01, 10.0, &theta);
    const auto u = pointwise::l2_components(s, theta);
    CHECK(oracle::max_abs(u, oracle::dense_l2_solve(s, theta)) <= 1e-10);
    const auto g = oracle::l2_gradient(s, u, theta);
    CHECK(oracle::max_abs(g, {0, 0, 0}) <= 1e-10);
    CHECK(oracle::max_abs(u, pointwise::l2_matrix_vector(s, theta)) <= 1e-12);
  }
}

TEST_CASE("larger theta pulls the L2 update toward v") {
  std::mt19937_64 rng(6);
  for (int n = 0; n < 50; ++n) {
    auto s = oracle::random_sample(rng, 2 + n % 2);
    double prev = 1e300;
    for (double theta : {0.01, 0.1, 1.0, 10.0, 100.0}) {
      const auto u = pointwise::l2_components(s, theta);
      double d = 0.0;
      for (int a = 0; a < s.rank; ++a) d += (u[a] - s.v[a]) * (u[a] - s.v[a]);
      CHECK(d <= prev * (1 + 1e-12));
      prev = d;
    }
  }
}

TEST_CASE("field L2 update matches the per-sample form") {
  const GridDesc g = GridDesc::make3(3, 3, 4);
  const LinearizedDataTerm ldt = random_ldt(g, 30);
  const VectorField v = random_vector(g, 40);
  const VectorField u = icl_l2(ldt, v, 0.3);
  for (std::size_t i = 0; i < g.size(); ++i) {
    pointwise::Sample s;
    s.rank = 3;
    for (int c = 0; c < 3; ++c) {
      s.gradient[c] = ldt.gradient.component(c)[i];
      s.u_ref[c] = ldt.u_ref.component(c)[i];
      s.v[c] = v.component(c)[i];
    }
    s.residual = ldt.residual[i];
    const auto want = oracle::dense_l2_solve(s, 0.3);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(u.component(c)[i] - want[c]) <= 1e-10);
  }
}

TEST_CASE("data energy") {
  const LinearizedDataTerm zero = constant_ldt({1.0, 1.0}, 0.0);
  CHECK(data_energy(zero, VectorField(zero.gradient.grid()), 1) == 0.0);

  const GridDesc g = GridDesc::make2(2, 2);
  const LinearizedDataTerm one{ScalarField(g), VectorField(g), ScalarField(g, std::vector<double>{2, 0, 0, 0}),
                               VectorField(g)};
  CHECK(data_energy(one, VectorField(g), 2) == 2.0);
  CHECK(data_energy(one, VectorField(g), 1) == 2.0);
  CHECK_THROWS_AS(data_energy(one, VectorField(g), 3), InvalidArgument);

  const GridDesc big = GridDesc::make2(9, 8);
  const LinearizedDataTerm ldt = random_ldt(big, 50);
  const VectorField u = random_vector(big, 60);
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < big.size(); ++i) {
    double r = ldt.residual[i];
    for (int c = 0; c < 2; ++c) r += ldt.gradient.component(c)[i] * (u.component(c)[i] - ldt.u_ref.component(c)[i]);
    s1 += std::abs(r);
    s2 += 0.5 * r * r;
  }
  CHECK(data_energy(ldt, u, 1) == doctest::Approx(s1).epsilon(1e-12));
  CHECK(data_energy(ldt, u, 2) == doctest::Approx(s2).epsilon(1e-12));
}

TEST_CASE("splitting energy") {
  const GridDesc g = GridDesc::make2(2, 2);
  const LinearizedDataTerm flat{ScalarField(g), VectorField(g), ScalarField(g, 0.0), VectorField(g)};
  const VectorField c = constant_vector(g, {0.4, -1.0});
  CHECK(splitting_energy(flat, c, c, 2, 3.0, 0.5) == 0.0);

  const LinearizedDataTerm one{ScalarField(g), VectorField(g), ScalarField(g, std::vector<double>{1, 0, 0, 0}),
                               VectorField(g)};
  CHECK(splitting_energy(one, VectorField(g), VectorField(g), 2, 17.0, 0.5) == 0.5);

  const GridDesc big = GridDesc::make2(6, 7);
  const LinearizedDataTerm ldt = random_ldt(big, 70);
  const VectorField u = random_vector(big, 80), v = random_vector(big, 90);
  const double theta = 0.7, lambda = 0.3;
  double tv = 0.0, coupling = 0.0;
  for (int c = 0; c < 2; ++c) {
    const ScalarField& f = v.component(c);
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 7; ++b) {
        const double d0 = a + 1 < 6 ? f.at(a + 1, b) - f.at(a, b) : 0.0;
        const double d1 = b + 1 < 7 ? f.at(a, b + 1) - f.at(a, b) : 0.0;
        tv += std::sqrt(d0 * d0 + d1 * d1);
        const double du = f.at(a, b) - u.component(c).at(a, b);
        coupling += du * du;
      }
  }
  const double want = data_energy(ldt, u, 1) + lambda * tv + 0.5 * theta * coupling;
  CHECK(splitting_energy(ldt, u, v, 1, theta, lambda) == doctest::Approx(want).epsilon(1e-12));
  CHECK(total_variation(v) == doctest::Approx(tv).epsilon(1e-12));
}
