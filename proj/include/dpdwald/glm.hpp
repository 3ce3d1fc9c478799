#pragma once

#include "dpdwald/mdpde.hpp"
#include "dpdwald/model.hpp"
#include "dpdwald/types.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>

namespace dpdwald {

enum class GlmKind { normal_identity, poisson_log };

/// Exponential-family pieces of f(y; eta, phi) = exp{(y eta - b(eta))/a(phi) + c(y, phi)}
/// with canonical link.
struct GlmFamily {
  GlmKind kind = GlmKind::normal_identity;

  static GlmFamily normal() { return GlmFamily{GlmKind::normal_identity}; }
  static GlmFamily poisson() { return GlmFamily{GlmKind::poisson_log}; }
  static GlmFamily parse(const std::string& name);

  std::string name() const;
  bool has_dispersion() const { return kind == GlmKind::normal_identity; }
  Support support() const;

  double a(double phi) const;
  double a_prime(double phi) const;
  double b(double eta) const;
  double b_prime(double eta) const;
  double b_second(double eta) const;
  double c(double y, double phi) const;
  double dc_dphi(double y, double phi) const;

  double mean(double eta) const { return b_prime(eta); }
  double variance(double eta, double phi) const { return a(phi) * b_second(eta); }
  double link(double mu) const;
  double inverse_link(double eta) const { return mean(eta); }
  double link_derivative(double mu) const;
};

/// log of the Poisson probability at (possibly non-integer) y, accurate for
/// very large means (saddle-point form with Stirling and deviance corrections).
double poisson_log_pmf(double y, double mean);

/// Seed for the shipped fixed-normal design. Covariates are Phi^{-1} of
/// SplitMix64 uniforms, so the draws do not depend on any library's
/// distribution implementation.
inline constexpr std::uint64_t kDesign2Seed = 20170318;

struct FixedDesign {
  Matrix X;
  std::string label = "user";

  /// Rows (1, a) for the first n/2 observations and (1, b) afterwards.
  static FixedDesign design1(int n = 50, double a = 1.0, double b = 2.0);
  /// Rows (1, x_i) with x_i fixed draws from N(mu, sigma^2).
  static FixedDesign design2(int n = 50, double mu = 0.0, double sigma = 1.0, std::uint64_t seed = kDesign2Seed);
  /// Rows (1, i).
  static FixedDesign design3(int n = 50);
  /// Rows (1, 1/i, 1/i^2).
  static FixedDesign design4(int n = 50);
  /// "design1".."design4" (or "1".."4").
  static FixedDesign by_name(const std::string& name, int n = 50);

  /// Header row x1,...,xk then one row per observation.
  static FixedDesign from_csv(const std::string& path);
  void to_csv(const std::string& path) const;

  std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t k() const { return static_cast<std::size_t>(X.cols()); }
  /// (1/n) X^T X, the finite-sample stand-in for C_x.
  Matrix cx() const;
};

struct GlmTheta {
  Vector beta;
  double phi = 1.0;
};

/// Fixed-design GLM as a ModelFamily. theta = (beta, phi) when the family has
/// a free dispersion, else theta = beta. A normal model may also be built with
/// phi held fixed, in which case theta = beta.
class GlmModel : public ModelFamily {
 public:
  GlmModel(GlmFamily family, FixedDesign design, std::optional<double> fixed_phi = std::nullopt);

  std::size_t size() const override { return design_.n(); }
  std::size_t dim() const override { return design_.k() + (estimates_phi() ? 1 : 0); }
  Support support() const override { return family_.support(); }

  double log_density(std::size_t i, double y, const Vector& theta) const override;
  Vector score(std::size_t i, double y, const Vector& theta) const override;
  Spread spread(std::size_t i, const Vector& theta) const override;
  bool admissible(const Vector& theta) const override;
  std::optional<PowerMoments> analytic_moments(std::size_t i, const Vector& theta, double a,
                                               bool need_second) const override;
  Vector initial_estimate(const Vector& data) const override;
  /// Normal family: least absolute deviations with a MAD scale.
  Vector robust_initial_estimate(const Vector& data) const override;

  const GlmFamily& family() const noexcept { return family_; }
  const FixedDesign& design() const noexcept { return design_; }
  bool estimates_phi() const noexcept { return family_.has_dispersion() && !fixed_phi_; }

  GlmTheta split(const Vector& theta) const;
  Vector join(const GlmTheta& t) const;
  double eta(std::size_t i, const Vector& theta) const;

  /// One draw of y_i under theta.
  double sample(std::size_t i, const Vector& theta, std::mt19937_64& rng) const;

  void set_integration(IntegrationOptions opts) { integration_ = opts; }
  const IntegrationOptions& integration() const noexcept { return integration_; }

 private:
  GlmFamily family_;
  FixedDesign design_;
  std::optional<double> fixed_phi_;
  IntegrationOptions integration_{};
};

struct KValues {
  double k1 = 0.0;
  std::optional<double> k2;  // absent when phi is known
};

KValues k_functions(const GlmModel& model, double y, std::size_t i, const Vector& theta);

/// gamma_j = int K_j f^{1+tau}, gamma_jh = int K_j K_h f^{1+tau}; mass = int f^{1+tau}.
struct GammaIntegrals {
  double mass = 0.0;
  double g1 = 0.0;
  double g2 = 0.0;
  double g11 = 0.0;
  double g12 = 0.0;
  double g22 = 0.0;
  double error = 0.0;
};

/// Numerical gammas for observation i (quadrature or count series).
GammaIntegrals gamma_integrals(const GlmModel& model, std::size_t i, const Vector& theta, double tau);
/// Closed forms for the normal family; they do not depend on x.
GammaIntegrals normal_gamma_closed(double phi, double tau);

/// Psi and Omega assembled block-wise from the gammas (1/n normalised).
SandwichCov glm_sandwich(const GlmModel& model, const Vector& theta, double tau);

/// Normal identity model: Sigma = blockdiag(upsilon_beta C_x^{-1}, upsilon_phi).
double upsilon_beta(double phi, double tau);
double upsilon_phi(double phi, double tau);

/// (n / phi_hat) (1 + tau^2/(1+2tau))^{-3/2} (beta_hat - beta0)^T C_x (beta_hat - beta0).
double normal_wald_statistic(const Vector& beta_hat, double phi_hat, const Vector& beta0, const Matrix& cx, int n,
                             double tau);
/// (1/phi0) (1 + tau^2/(1+2tau))^{-3/2} d_x with d_x = d^T C_x d.
double normal_contiguous_delta(double dx, double phi0, double tau);

/// d^T L^T (L Sigma_beta L^T)^{-1} L d with Sigma from the finite-n sandwich at theta0.
double glm_contiguous_delta(const GlmModel& model, const Vector& theta0, double tau, const Matrix& L,
                            const Vector& d);

/// S_i(t) = ((K1 f^tau - gamma1) x_i, K2 f^tau - gamma2).
Vector s_vector(const GlmModel& model, std::size_t i, double t, const Vector& theta, double tau);

/// Second-order IF of the linear-hypothesis statistic through S:
/// 2 [S/n]^T Psi^{-1} L^T (L Sigma L^T)^{-1} L Psi^{-1} [S/n], S summed over the
/// contaminated directions (t has length 1 with index, or length n).
double glm_if2(const GlmModel& model, const Vector& theta0, double tau, const Matrix& L,
               std::optional<std::size_t> index, const Vector& t);
/// K*_r(delta) d^T L^T (L Sigma L^T)^{-1} L Psi^{-1} [sum S / n].
double glm_pif(const GlmModel& model, const Vector& theta0, double tau, const Matrix& L, const Vector& d,
               std::optional<std::size_t> index, const Vector& t, double alpha = 0.05);

/// Normal model, beta = beta0 test, contamination in direction i0 at t.
double normal_if2_closed_single(const FixedDesign& design, const Vector& beta0, double phi0, double tau,
                                std::size_t i0, double t);
/// Same, contamination t_i in every direction (full quadratic form).
double normal_if2_closed_all(const FixedDesign& design, const Vector& beta0, double phi0, double tau,
                             const Vector& t);
/// Normal model PIF for the beta = beta0 test, contamination in every direction.
double normal_pif_closed(const FixedDesign& design, const Vector& beta0, double phi0, double tau, const Vector& d,
                         const Vector& t, double alpha = 0.05);

struct DesignReport {
  double max_abs_x = 0.0;
  double max_abs_xx = 0.0;
  double max_mean_abs_xxx = 0.0;
  double min_eigenvalue = 0.0;
  bool pass = true;
  std::string note;
};

DesignReport design_diagnostics(const FixedDesign& design);

}  // namespace dpdwald
