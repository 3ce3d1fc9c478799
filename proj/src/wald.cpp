#include "dpdwald/wald.hpp"

#include "dpdwald/chisq.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace dpdwald {

namespace {

// Quadratic forms need Sigma^{-1}; only a genuinely singular Sigma is refused.
constexpr double kSigmaRatio = 1e-14;

void check_rank(const Matrix& m, int r, const char* what) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  const double hi = sv.size() ? sv(0) : 0.0;
  const double lo = sv.size() ? sv(sv.size() - 1) : 0.0;
  if (sv.size() < r || !(hi > 0.0) || !(lo > 1e-10 * hi)) {
    std::ostringstream os;
    os << what << ": restrictions are redundant, rank below " << r << " (singular values " << lo << " .. " << hi
       << ")";
    throw RankDeficiencyError(os.str(), lo, hi);
  }
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
}

double quad_inverse(const Vector& v, const Matrix& m, const char* what) {
  if (v.size() != m.rows() || m.rows() != m.cols()) throw DomainError(std::string(what) + ": dimension mismatch");
  return v.dot(spd_inverse(m, what, kSigmaRatio) * v);
}

Matrix restricted_inverse(const Matrix& H, const Matrix& sigma, const char* what) {
  if (H.rows() != sigma.rows()) throw DomainError(std::string(what) + ": H and Sigma dimensions disagree");
  check_rank(H, static_cast<int>(H.cols()), what);
  return spd_inverse(H.transpose() * sigma * H, what, kSigmaRatio);
}

}  // namespace

LinearHypothesis::LinearHypothesis(Matrix L_, Vector l0_) : L(std::move(L_)), l0(std::move(l0_)) {
  if (L.rows() == 0 || L.cols() == 0) throw DomainError("LinearHypothesis: L is empty");
  if (L.rows() != l0.size()) throw DomainError("LinearHypothesis: L and l0 have different row counts");
  if (L.rows() > L.cols()) throw DomainError("LinearHypothesis: more restrictions than coefficients");
  if (!L.allFinite() || !l0.allFinite()) throw DomainError("LinearHypothesis: non-finite entries");
  check_rank(L.transpose(), static_cast<int>(L.rows()), "LinearHypothesis");
}

CompositeHypothesis::CompositeHypothesis(Restriction h, int r, Jacobian jacobian)
    : h_(std::move(h)), jacobian_(std::move(jacobian)), r_(r) {
  if (!h_) throw DomainError("CompositeHypothesis: missing restriction function");
  if (r_ < 1) throw DomainError("CompositeHypothesis: need at least one restriction");
}

CompositeHypothesis CompositeHypothesis::linear(const LinearHypothesis& hyp, int p) {
  const Eigen::Index k = hyp.L.cols();
  if (p < k) throw DomainError("CompositeHypothesis::linear: L has more columns than the parameter");
  Matrix H = Matrix::Zero(p, hyp.L.rows());
  H.topRows(k) = hyp.L.transpose();
  const Matrix L = hyp.L;
  const Vector l0 = hyp.l0;
  return CompositeHypothesis([L, l0, k](const Vector& theta) -> Vector { return L * theta.head(k) - l0; },
                             static_cast<int>(L.rows()), [H](const Vector&) { return H; });
}

CompositeHypothesis CompositeHypothesis::coordinate(int index, double value, int p) {
  if (index < 0 || index >= p) throw DomainError("CompositeHypothesis::coordinate: index out of range");
  Matrix L = Matrix::Zero(1, p);
  L(0, index) = 1.0;
  return linear(LinearHypothesis(L, Vector::Constant(1, value)), p);
}

Vector CompositeHypothesis::h(const Vector& theta) const {
  Vector v = h_(theta);
  if (v.size() != r_) throw DomainError("CompositeHypothesis: restriction returned the wrong length");
  return v;
}

Matrix CompositeHypothesis::numerical_jacobian(const Vector& theta, double step) const {
  Matrix J(theta.size(), r_);
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double hstep = step * std::max(1.0, std::abs(theta(j)));
    Vector hi = theta;
    Vector lo = theta;
    hi(j) += hstep;
    lo(j) -= hstep;
    J.row(j) = ((h(hi) - h(lo)) / (2.0 * hstep)).transpose();
  }
  return J;
}

Matrix CompositeHypothesis::H(const Vector& theta) const {
  Matrix J = jacobian_ ? jacobian_(theta) : numerical_jacobian(theta);
  if (J.rows() != theta.size() || J.cols() != r_) throw DomainError("CompositeHypothesis: Jacobian has the wrong shape");
  check_rank(J, r_, "CompositeHypothesis");
  return J;
}

double CompositeHypothesis::jacobian_mismatch(const Vector& theta) const {
  if (!jacobian_) return 0.0;
  return (jacobian_(theta) - numerical_jacobian(theta)).cwiseAbs().maxCoeff();
}

TestReport wald_simple(const Vector& theta_hat, const Vector& theta0, const SandwichCov& sigma_at_null, int n,
                       double alpha) {
  check_alpha(alpha);
  if (n < 1) throw DomainError("wald_simple: n must be positive");
  if (theta_hat.size() != theta0.size() || theta0.size() != sigma_at_null.sigma.rows()) {
    throw DomainError("wald_simple: dimension mismatch");
  }
  const Vector diff = theta_hat - theta0;
  TestReport rep;
  rep.kind = "simple";
  rep.statistic = n * quad_inverse(diff, sigma_at_null.sigma, "wald_simple: Sigma");
  rep.df = static_cast<int>(theta0.size());
  rep.p_value = chisq_sf(rep.statistic, rep.df);
  rep.critical_value = chisq_critical(rep.df, alpha);
  rep.reject = rep.statistic > rep.critical_value;
  rep.alpha = alpha;
  rep.tau = sigma_at_null.tau;
  rep.sigma_used = sigma_at_null;
  return rep;
}

TestReport wald_composite(const Vector& theta_hat, const CompositeHypothesis& hyp,
                          const SandwichCov& sigma_at_estimate, int n, double alpha) {
  check_alpha(alpha);
  if (n < 1) throw DomainError("wald_composite: n must be positive");
  const Vector hv = hyp.h(theta_hat);
  const Matrix H = hyp.H(theta_hat);
  if (hyp.has_analytic_jacobian()) {
    const double gap = hyp.jacobian_mismatch(theta_hat);
    if (gap > 1e-5 * std::max(1.0, H.cwiseAbs().maxCoeff())) {
      throw DomainError("wald_composite: supplied Jacobian disagrees with finite differences of h (max gap " +
                        std::to_string(gap) + ")");
    }
  }
  const Matrix middle = restricted_inverse(H, sigma_at_estimate.sigma, "wald_composite: H^T Sigma H");
  TestReport rep;
  rep.kind = "composite";
  rep.statistic = n * hv.dot(middle * hv);
  rep.df = hyp.restrictions();
  rep.p_value = chisq_sf(rep.statistic, rep.df);
  rep.critical_value = chisq_critical(rep.df, alpha);
  rep.reject = rep.statistic > rep.critical_value;
  rep.alpha = alpha;
  rep.tau = sigma_at_estimate.tau;
  rep.sigma_used = sigma_at_estimate;
  return rep;
}

FixedAlternative fixed_alternative_terms(const Vector& theta_star, const Vector& theta0, const Matrix& sigma_null,
                                         const Matrix& sigma_star) {
  if (theta_star.size() != theta0.size() || sigma_null.rows() != theta0.size() ||
      sigma_star.rows() != theta0.size()) {
    throw DomainError("power_fixed_alternative: dimension mismatch");
  }
  const Vector diff = theta_star - theta0;
  if (diff.cwiseAbs().maxCoeff() == 0.0) throw DomainError("power_fixed_alternative: alternative equals the null");
  const Vector a = spd_inverse(sigma_null, "power_fixed_alternative: Sigma(theta0)", kSigmaRatio) * diff;
  FixedAlternative t;
  t.s = diff.dot(a);
  t.sigma_w = std::sqrt(std::max(0.0, 4.0 * a.dot(sigma_star * a)));
  t.df = static_cast<int>(theta0.size());
  return t;
}

FixedAlternative fixed_alternative_terms(const Vector& theta_star, const CompositeHypothesis& hyp,
                                         const Matrix& sigma_star) {
  const Vector hv = hyp.h(theta_star);
  if (hv.cwiseAbs().maxCoeff() == 0.0) throw DomainError("power_fixed_alternative: alternative satisfies the null");
  const Matrix H = hyp.H(theta_star);
  const Matrix middle = restricted_inverse(H, sigma_star, "power_fixed_alternative: H^T Sigma H");
  FixedAlternative t;
  t.s = hv.dot(middle * hv);
  t.sigma_w = std::sqrt(4.0 * t.s);
  t.df = hyp.restrictions();
  return t;
}

namespace {

double fixed_power(const FixedAlternative& t, int n, double alpha) {
  check_alpha(alpha);
  if (n < 1) throw DomainError("power_fixed_alternative: n must be positive");
  if (!(t.sigma_w > 0.0)) throw NumericalError("power_fixed_alternative: degenerate alternative, sigma_W = 0");
  const double c = chisq_critical(t.df, alpha);
  const double z = std::sqrt(static_cast<double>(n)) / t.sigma_w * (c / n - t.s);
  return 1.0 - normal_cdf(z);
}

}  // namespace

double power_fixed_alternative(const Vector& theta_star, const Vector& theta0, const Matrix& sigma_null,
                               const Matrix& sigma_star, int n, double alpha) {
  return fixed_power(fixed_alternative_terms(theta_star, theta0, sigma_null, sigma_star), n, alpha);
}

double power_fixed_alternative(const Vector& theta_star, const CompositeHypothesis& hyp, const Matrix& sigma_star,
                               int n, double alpha) {
  return fixed_power(fixed_alternative_terms(theta_star, hyp, sigma_star), n, alpha);
}

int sample_size_for_power(const FixedAlternative& t, double alpha, double target_power) {
  check_alpha(alpha);
  if (!(target_power > 0.0 && target_power < 1.0)) throw DomainError("sample_size_for_power: target must lie in (0, 1)");
  if (!(t.s > 0.0)) throw DomainError("sample_size_for_power: s(theta*) must be positive");
  const double z = normal_quantile(1.0 - target_power);
  const double A = t.sigma_w * t.sigma_w * z * z;
  const double B = 2.0 * t.s * chisq_critical(t.df, alpha);
  const double raw = (A + B + std::sqrt(A * (A + 2.0 * B))) / (2.0 * t.s * t.s);
  if (!std::isfinite(raw) || raw > 2e9) throw NumericalError("sample_size_for_power: required n overflows");
  return static_cast<int>(std::floor(raw)) + 1;
}

int sample_size_for_power(const Vector& theta_star, const Vector& theta0, const Matrix& sigma_null,
                          const Matrix& sigma_star, double alpha, double target_power) {
  return sample_size_for_power(fixed_alternative_terms(theta_star, theta0, sigma_null, sigma_star), alpha,
                               target_power);
}

double contiguous_delta_simple(const Vector& d, const Matrix& sigma) {
  return quad_inverse(d, sigma, "contiguous power: Sigma");
}

double contiguous_delta_composite(const Vector& d, const Matrix& H, const Matrix& sigma) {
  if (d.size() != H.rows()) throw DomainError("contiguous power: d and H dimensions disagree");
  const Vector dstar = H.transpose() * d;
  return dstar.dot(restricted_inverse(H, sigma, "contiguous power: H^T Sigma H") * dstar);
}

double contiguous_delta_composite_star(const Vector& dstar, const Matrix& H, const Matrix& sigma) {
  if (dstar.size() != H.cols()) throw DomainError("contiguous power: d* length must equal the number of restrictions");
  return dstar.dot(restricted_inverse(H, sigma, "contiguous power: H^T Sigma H") * dstar);
}

double contiguous_power_simple(const Vector& d, const Matrix& sigma, double alpha) {
  check_alpha(alpha);
  return noncentral_power(static_cast<double>(d.size()), contiguous_delta_simple(d, sigma), alpha);
}

double contiguous_power_composite(const Vector& d, const Matrix& H, const Matrix& sigma, double alpha) {
  check_alpha(alpha);
  return noncentral_power(static_cast<double>(H.cols()), contiguous_delta_composite(d, H, sigma), alpha);
}

double contiguous_power_composite_star(const Vector& dstar, const Matrix& H, const Matrix& sigma, double alpha) {
  check_alpha(alpha);
  return noncentral_power(static_cast<double>(H.cols()), contiguous_delta_composite_star(dstar, H, sigma), alpha);
}

namespace {

struct Contaminated {
  double delta;
  double df;
};

Contaminated contaminated_delta(const Vector& d, double eps, const Vector& if_value, const Matrix& sigma,
                                const Matrix& H) {
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw DomainError("contaminated power: eps must be >= 0");
  if (d.size() != if_value.size()) throw DomainError("contaminated power: d and IF dimensions disagree");
  const Vector dt = d + eps * if_value;
  if (H.size() == 0) return {contiguous_delta_simple(dt, sigma), static_cast<double>(d.size())};
  return {contiguous_delta_composite(dt, H, sigma), static_cast<double>(H.cols())};
}

}  // namespace

double contaminated_contiguous_power(const Vector& d, double eps, const Vector& if_value, const Matrix& sigma,
                                     double alpha, const Matrix& H) {
  check_alpha(alpha);
  const auto c = contaminated_delta(d, eps, if_value, sigma, H);
  return noncentral_power(c.df, c.delta, alpha);
}

double contaminated_contiguous_power_series(const Vector& d, double eps, const Vector& if_value,
                                            const Matrix& sigma, double alpha, const Matrix& H) {
  check_alpha(alpha);
  const auto c = contaminated_delta(d, eps, if_value, sigma, H);
  return noncentral_chisq_sf_series(chisq_critical(c.df, alpha), c.df, c.delta);
}

double contaminated_level(double eps, const Vector& if_value, const Matrix& sigma, double alpha, const Matrix& H) {
  return contaminated_contiguous_power(Vector::Zero(if_value.size()), eps, if_value, sigma, alpha, H);
}

}  // namespace dpdwald
