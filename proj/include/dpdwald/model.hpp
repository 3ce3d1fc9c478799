#pragma once

#include "dpdwald/integration.hpp"
#include "dpdwald/types.hpp"

#include <cstddef>
#include <optional>

namespace dpdwald {

/// Where the mass of f_i sits; used to place integration windows.
struct Spread {
  double center = 0.0;
  double scale = 1.0;
};

/// Integrals of f^a against 1, u and u u^T for one observation.
struct PowerMoments {
  double mass = 0.0;  // int f^a
  Vector first;       // int u f^a
  Matrix second;      // int u u^T f^a (may be empty when not requested)
};

/// n independent, non-identically distributed densities f_{i,theta} sharing
/// a parameter theta of dimension p.
class ModelFamily {
 public:
  virtual ~ModelFamily() = default;

  virtual std::size_t size() const = 0;
  virtual std::size_t dim() const = 0;
  virtual Support support() const = 0;

  virtual double log_density(std::size_t i, double y, const Vector& theta) const = 0;
  virtual Vector score(std::size_t i, double y, const Vector& theta) const = 0;
  virtual Spread spread(std::size_t i, const Vector& theta) const = 0;

  /// Whether theta lies in the parameter space (e.g. a variance is positive).
  virtual bool admissible(const Vector& theta) const { return theta.allFinite(); }

  /// Closed-form or specialised power moments. Returning nullopt makes callers
  /// integrate score and density directly.
  virtual std::optional<PowerMoments> analytic_moments(std::size_t /*i*/, const Vector& /*theta*/,
                                                       double /*a*/, bool /*need_second*/) const {
    return std::nullopt;
  }

  /// Maximum likelihood estimate on the data, used as the default solver start.
  virtual Vector initial_estimate(const Vector& data) const = 0;
  /// Outlier-resistant starting value; defaults to initial_estimate.
  virtual Vector robust_initial_estimate(const Vector& data) const { return initial_estimate(data); }

  bool in_support(double y) const;
};

/// Largest |score - numerical gradient of log_density| over the probe points,
/// using central differences with step h.
double score_consistency(const ModelFamily& model, const Vector& theta, const Vector& probes,
                         double h = 1e-5);

}  // namespace dpdwald
