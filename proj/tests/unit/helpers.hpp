#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "varreg/grid.hpp"

namespace testing {

using varreg::GridDesc;
using varreg::ScalarField;
using varreg::VectorField;

inline ScalarField field2(const GridDesc& g, const std::function<double(int, int)>& f) {
  std::vector<double> v;
  for (int a = 0; a < g.dim(0); ++a)
    for (int b = 0; b < g.dim(1); ++b) v.push_back(f(a, b));
  return ScalarField(g, std::move(v));
}

inline ScalarField field3(const GridDesc& g, const std::function<double(int, int, int)>& f) {
  std::vector<double> v;
  for (int a = 0; a < g.dim(0); ++a)
    for (int b = 0; b < g.dim(1); ++b)
      for (int c = 0; c < g.dim(2); ++c) v.push_back(f(a, b, c));
  return ScalarField(g, std::move(v));
}

inline ScalarField random_field(const GridDesc& g, unsigned seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(g.size());
  for (double& x : v) x = d(rng);
  return ScalarField(g, std::move(v));
}

inline VectorField random_vector(const GridDesc& g, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::vector<ScalarField> c;
  for (int k = 0; k < g.rank(); ++k) c.push_back(random_field(g, seed * 31 + k, lo, hi));
  return VectorField(std::move(c));
}

inline VectorField constant_vector(const GridDesc& g, std::vector<double> values) {
  std::vector<ScalarField> c;
  for (double x : values) c.emplace_back(g, x);
  return VectorField(std::move(c));
}

inline double max_abs_diff(const ScalarField& a, const ScalarField& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const VectorField& a, const VectorField& b) {
  double m = 0.0;
  for (int c = 0; c < a.rank(); ++c) m = std::max(m, max_abs_diff(a.component(c), b.component(c)));
  return m;
}

inline bool bit_equal(const ScalarField& a, const ScalarField& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

inline bool bit_equal(const VectorField& a, const VectorField& b) {
  if (a.rank() != b.rank()) return false;
  for (int c = 0; c < a.rank(); ++c)
    if (!bit_equal(a.component(c), b.component(c))) return false;
  return true;
}

}  // namespace testing
