#pragma once

#include "dpdwald/types.hpp"

#include <functional>

namespace dpdwald {

enum class Support { continuous_real, nonnegative_integer };

const char* to_string(Support s);

struct IntegrationOptions {
  double abs_tol = 1e-12;
  double rel_tol = 1e-10;
  int max_subdivisions = 4000;
  // Continuous integrands are integrated over center +/- window_sds * scale.
  double window_sds = 12.0;
  // Integer support: stop a direction after `quiet_terms` consecutive terms
  // each below term_tol (relative to max(1, |partial sum|)); never exceed max_terms.
  int max_terms = 10000;
  int quiet_terms = 50;
  double term_tol = 1e-14;
  // Above this mean a count series is replaced by the integral of its smooth
  // continuation (unit-step trapezoid, Euler-Maclaurin remainder is
  // exponentially small in the variance).
  double large_mean = 1e4;
  double large_mean_window_sds = 40.0;
};

struct IntegralResult {
  Vector value;
  double error = 0.0;  // estimate, infinity norm over components
  int evaluations = 0;
};

/// Integrates vector-valued functions of a scalar observation. Continuous
/// support uses adaptive 15-point Gauss-Kronrod with a shared mesh for all
/// components; integer support sums outward from the mode.
class IntegralEngine {
 public:
  // f(y, out) writes `dim` values into out.
  using Integrand = std::function<void(double, Eigen::Ref<Vector>)>;

  explicit IntegralEngine(IntegrationOptions options = {});

  const IntegrationOptions& options() const noexcept { return options_; }

  IntegralResult integrate(const Integrand& f, int dim, double lower, double upper) const;

  IntegralResult sum_counts(const Integrand& f, int dim, double mean, double sd) const;

  /// Dispatches on support: window around `center` of half-width
  /// window_sds * scale for continuous data, a count series otherwise.
  IntegralResult over_support(Support support, const Integrand& f, int dim, double center,
                              double scale) const;

 private:
  IntegrationOptions options_;
};

}  // namespace dpdwald
