#pragma once

#include "dpdwald/mdpde.hpp"
#include "dpdwald/types.hpp"

#include <functional>
#include <string>

namespace dpdwald {

/// L beta = l0 with L of full row rank r, acting on the first k coordinates
/// of theta.
struct LinearHypothesis {
  Matrix L;
  Vector l0;

  LinearHypothesis(Matrix L, Vector l0);
  int rank() const { return static_cast<int>(L.rows()); }
};

/// h(theta) = 0 with Jacobian H(theta) = dh^T/dtheta (p x r).
class CompositeHypothesis {
 public:
  using Restriction = std::function<Vector(const Vector&)>;
  using Jacobian = std::function<Matrix(const Vector&)>;

  /// Without an analytic Jacobian, H is taken from central differences of h.
  CompositeHypothesis(Restriction h, int r, Jacobian jacobian = {});

  /// h(theta) = [L 0] theta - l0 for a parameter of dimension p >= L.cols().
  static CompositeHypothesis linear(const LinearHypothesis& hyp, int p);
  /// theta_index = value.
  static CompositeHypothesis coordinate(int index, double value, int p);

  int restrictions() const noexcept { return r_; }
  Vector h(const Vector& theta) const;
  /// H at theta; throws RankDeficiencyError when its rank is below r.
  Matrix H(const Vector& theta) const;
  Matrix numerical_jacobian(const Vector& theta, double step = 1e-6) const;
  /// Largest entry of |analytic H - numerical H|; 0 without an analytic H.
  double jacobian_mismatch(const Vector& theta) const;
  bool has_analytic_jacobian() const noexcept { return static_cast<bool>(jacobian_); }

 private:
  Restriction h_;
  Jacobian jacobian_;
  int r_;
};

struct TestReport {
  std::string kind;  // "simple" or "composite"
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  double critical_value = 0.0;
  bool reject = false;
  double alpha = 0.05;
  double tau = 0.0;
  SandwichCov sigma_used;
};

/// n (theta_hat - theta0)^T Sigma(theta0)^{-1} (theta_hat - theta0), df p.
TestReport wald_simple(const Vector& theta_hat, const Vector& theta0, const SandwichCov& sigma_at_null, int n,
                       double alpha = 0.05);

/// n h^T (H^T Sigma H)^{-1} h, everything at theta_hat, df r.
TestReport wald_composite(const Vector& theta_hat, const CompositeHypothesis& hyp,
                          const SandwichCov& sigma_at_estimate, int n, double alpha = 0.05);

/// Normal approximation to the power at a fixed alternative:
/// 1 - Phi( sqrt(n)/sigma_W (chi2_{df,alpha}/n - s) ).
double power_fixed_alternative(const Vector& theta_star, const Vector& theta0, const Matrix& sigma_null,
                               const Matrix& sigma_star, int n, double alpha = 0.05);
double power_fixed_alternative(const Vector& theta_star, const CompositeHypothesis& hyp, const Matrix& sigma_star,
                               int n, double alpha = 0.05);

struct FixedAlternative {
  double s = 0.0;        // (theta* - theta0)^T Sigma0^{-1} (theta* - theta0)
  double sigma_w = 0.0;  // standard deviation of the limiting normal law
  int df = 0;
};

FixedAlternative fixed_alternative_terms(const Vector& theta_star, const Vector& theta0, const Matrix& sigma_null,
                                         const Matrix& sigma_star);
FixedAlternative fixed_alternative_terms(const Vector& theta_star, const CompositeHypothesis& hyp,
                                         const Matrix& sigma_star);

/// floor((A + B + sqrt(A(A + 2B))) / (2 s^2)) + 1 with
/// A = sigma_W^2 Phi^{-1}(1 - target)^2 and B = 2 s chi2_{p,alpha}.
int sample_size_for_power(const Vector& theta_star, const Vector& theta0, const Matrix& sigma_null,
                          const Matrix& sigma_star, double alpha, double target_power);
int sample_size_for_power(const FixedAlternative& terms, double alpha, double target_power);

double contiguous_delta_simple(const Vector& d, const Matrix& sigma);
/// d^T H (H^T Sigma H)^{-1} H^T d.
double contiguous_delta_composite(const Vector& d, const Matrix& H, const Matrix& sigma);
/// d*^T (H^T Sigma H)^{-1} d*, for h(theta_n) = d* / sqrt(n).
double contiguous_delta_composite_star(const Vector& dstar, const Matrix& H, const Matrix& sigma);

double contiguous_power_simple(const Vector& d, const Matrix& sigma, double alpha = 0.05);
double contiguous_power_composite(const Vector& d, const Matrix& H, const Matrix& sigma, double alpha = 0.05);
double contiguous_power_composite_star(const Vector& dstar, const Matrix& H, const Matrix& sigma,
                                       double alpha = 0.05);

/// Power when the contiguous alternative is also contaminated: d is replaced
/// by d + eps * IF. Pass H for the composite test, an empty matrix otherwise.
double contaminated_contiguous_power(const Vector& d, double eps, const Vector& if_value, const Matrix& sigma,
                                     double alpha = 0.05, const Matrix& H = Matrix());
/// Same quantity summed as sum_v C_v P(chi2_{df+2v} > chi2_{df,alpha}).
double contaminated_contiguous_power_series(const Vector& d, double eps, const Vector& if_value,
                                            const Matrix& sigma, double alpha = 0.05, const Matrix& H = Matrix());
/// Level of the test under contamination alone (d = 0).
double contaminated_level(double eps, const Vector& if_value, const Matrix& sigma, double alpha = 0.05,
                          const Matrix& H = Matrix());

}  // namespace dpdwald
