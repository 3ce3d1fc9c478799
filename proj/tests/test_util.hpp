#pragma once

#include "dpdwald/glm.hpp"

#include <cmath>
#include <random>

namespace testutil {

inline double rel_frobenius(const dpdwald::Matrix& a, const dpdwald::Matrix& b) {
  return (a - b).norm() / std::max(1e-300, b.norm());
}

inline dpdwald::FixedDesign random_design(int n, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  dpdwald::FixedDesign d;
  d.X.resize(n, k);
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    for (int j = 1; j < k; ++j) d.X(i, j) = z(rng);
  }
  d.label = "random";
  return d;
}

inline dpdwald::Vector simulate(const dpdwald::GlmModel& m, const dpdwald::Vector& theta, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  dpdwald::Vector y(static_cast<Eigen::Index>(m.size()));
  for (std::size_t i = 0; i < m.size(); ++i) y(static_cast<Eigen::Index>(i)) = m.sample(i, theta, rng);
  return y;
}

}  // namespace testutil
