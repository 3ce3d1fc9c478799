#pragma once

namespace dpdwald {

double normal_cdf(double x);
double normal_quantile(double p);

double chisq_cdf(double x, double df);
double chisq_sf(double x, double df);

/// Upper-alpha point of the central chi-square: P(chi2_df > c) = alpha, by
/// bisection to 1e-12.
double chisq_critical(double df, double alpha);

/// Poisson mixing weight C_v(delta) = (delta/2)^v e^{-delta/2} / v!.
double poisson_weight(int v, double delta);

struct SeriesStats {
  int terms = 0;
  double remainder_bound = 0.0;
};

/// Non-central chi-square CDF as the Poisson mixture
/// sum_v C_v(delta) P(chi2_{df+2v} <= x), truncated once a rigorous bound on
/// the remainder falls below 1e-15 (at most 10000 terms).
double noncentral_chisq_cdf(double x, double df, double delta, SeriesStats* stats = nullptr);
double noncentral_chisq_sf(double x, double df, double delta, SeriesStats* stats = nullptr);

/// Direct upper-tail series sum_v C_v(delta) P(chi2_{df+2v} > x), stopped when
/// a term drops below 1e-14 past the Poisson mode.
double noncentral_chisq_sf_series(double x, double df, double delta, SeriesStats* stats = nullptr);

/// 1 - G_{chi2_df(delta)}(chi2_{df,alpha}).
double noncentral_power(double df, double delta, double alpha);

/// Derivative weight of the contiguous power: K*_p(s) = 2 d/ds power(p, s).
/// Evaluated as sum_v C_v(s) [Q_{v+1} - Q_v] with Q_v = P(chi2_{p+2v} > chi2_{p,alpha}),
/// which has no cancellation and a removable point at s = 0.
double kstar(double df, double s, double alpha, SeriesStats* stats = nullptr);

/// The same constant summed term by term in its original form
/// e^{-s/2} sum_v s^{v-1}/(v! 2^v) (2v - s) Q_v. Cancels badly for large s.
double kstar_literal(double df, double s, double alpha);

}  // namespace dpdwald
