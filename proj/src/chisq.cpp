#include "dpdwald/chisq.hpp"

#include "dpdwald/types.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>
#include <sstream>

namespace dpdwald {

namespace {

constexpr int kMaxTerms = 10000;
constexpr double kRemainder = 1e-15;
constexpr double kTermTol = 1e-14;

void check_df(double df, const char* what) {
  if (!(df > 0.0) || !std::isfinite(df)) throw DomainError(std::string(what) + ": degrees of freedom must be positive");
}

void check_delta(double delta, const char* what) {
  if (!(delta >= 0.0) || !std::isfinite(delta)) {
    throw DomainError(std::string(what) + ": non-centrality must be finite and >= 0");
  }
}

void check_alpha(double alpha, const char* what) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError(std::string(what) + ": alpha must lie in (0, 1)");
}

double log_poisson_weight(int v, double delta) {
  if (delta == 0.0) return v == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  const double half = 0.5 * delta;
  return v * std::log(half) - half - std::lgamma(v + 1.0);
}

[[noreturn]] void too_many_terms(const char* what, double df, double delta) {
  std::ostringstream os;
  os << what << ": series did not converge within " << kMaxTerms << " terms (df " << df << ", delta " << delta << ")";
  throw NumericalError(os.str());
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0, 1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

double chisq_cdf(double x, double df) {
  check_df(df, "chisq_cdf");
  if (x <= 0.0) return 0.0;
  if (x == std::numeric_limits<double>::infinity()) return 1.0;
  return boost::math::gamma_p(0.5 * df, 0.5 * x);
}

double chisq_sf(double x, double df) {
  check_df(df, "chisq_sf");
  if (x <= 0.0) return 1.0;
  if (x == std::numeric_limits<double>::infinity()) return 0.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

double chisq_critical(double df, double alpha) {
  check_df(df, "chisq_critical");
  check_alpha(alpha, "chisq_critical");
  double lo = 0.0;
  double hi = std::max(1.0, df);
  while (chisq_sf(hi, df) > alpha) {
    lo = hi;
    hi *= 2.0;
  }
  while (hi - lo > 1e-12 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (chisq_sf(mid, df) > alpha) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double poisson_weight(int v, double delta) {
  if (v < 0) return 0.0;
  check_delta(delta, "poisson_weight");
  return std::exp(log_poisson_weight(v, delta));
}

double noncentral_chisq_cdf(double x, double df, double delta, SeriesStats* stats) {
  check_df(df, "noncentral_chisq_cdf");
  check_delta(delta, "noncentral_chisq_cdf");
  if (x <= 0.0) return 0.0;
  if (delta == 0.0) return chisq_cdf(x, df);
  const double half = 0.5 * delta;
  double acc = 0.0;
  for (int v = 0; v < kMaxTerms; ++v) {
    acc += poisson_weight(v, delta) * chisq_cdf(x, df + 2.0 * v);
    // The CDFs decrease in v, so the remainder is at most P(chi2_{df+2v+2} <= x);
    // past the Poisson mode the weights also have a geometric tail.
    double bound = chisq_cdf(x, df + 2.0 * (v + 1));
    const double ratio = half / (v + 2.0);
    if (ratio < 1.0) bound = std::min(bound, poisson_weight(v + 1, delta) / (1.0 - ratio));
    if (bound < kRemainder) {
      if (stats) *stats = SeriesStats{v + 1, bound};
      return std::min(1.0, acc);
    }
  }
  too_many_terms("noncentral_chisq_cdf", df, delta);
}

double noncentral_chisq_sf(double x, double df, double delta, SeriesStats* stats) {
  return std::max(0.0, 1.0 - noncentral_chisq_cdf(x, df, delta, stats));
}

double noncentral_chisq_sf_series(double x, double df, double delta, SeriesStats* stats) {
  check_df(df, "noncentral_chisq_sf_series");
  check_delta(delta, "noncentral_chisq_sf_series");
  if (delta == 0.0) return chisq_sf(x, df);
  const double half = 0.5 * delta;
  double acc = 0.0;
  for (int v = 0; v < kMaxTerms; ++v) {
    const double term = poisson_weight(v, delta) * chisq_sf(x, df + 2.0 * v);
    acc += term;
    const double ratio = half / (v + 2.0);
    if (v + 1 > half && term < kTermTol && ratio < 1.0) {
      // Q_v <= 1, so the weights' tail bounds what is left.
      const double bound = poisson_weight(v + 1, delta) / (1.0 - ratio);
      if (bound < kTermTol) {
        if (stats) *stats = SeriesStats{v + 1, bound};
        return std::min(1.0, acc);
      }
    }
  }
  too_many_terms("noncentral_chisq_sf_series", df, delta);
}

double noncentral_power(double df, double delta, double alpha) {
  return noncentral_chisq_sf(chisq_critical(df, alpha), df, delta);
}

double kstar(double df, double s, double alpha, SeriesStats* stats) {
  check_df(df, "kstar");
  check_delta(s, "kstar");
  check_alpha(alpha, "kstar");
  const double c = chisq_critical(df, alpha);
  const double hc = 0.5 * c;
  const double hs = 0.5 * s;
  // Q_{v+1} - Q_v = e^{-c/2} (c/2)^{df/2+v} / Gamma(df/2+v+1).
  auto log_gap = [&](int v) {
    const double a = 0.5 * df + v;
    return a * std::log(hc) - hc - std::lgamma(a + 1.0);
  };
  double acc = 0.0;
  for (int v = 0; v < kMaxTerms; ++v) {
    const double term = std::exp(log_poisson_weight(v, s) + log_gap(v));
    acc += term;
    if (s == 0.0) {
      if (stats) *stats = SeriesStats{1, 0.0};
      return acc;
    }
    // C_u <= 1 and the gaps telescope, so the remainder is at most
    // P(chi2_{df+2v+2} <= c); past both modes the terms also decay geometrically.
    double bound = chisq_cdf(c, df + 2.0 * (v + 1));
    const double ratio = hs / (v + 2.0) * hc / (0.5 * df + v + 2.0);
    const bool past_modes = v + 1 > hs && 0.5 * df + v + 1 > hc;
    if (past_modes && ratio < 1.0) {
      bound = std::min(bound, std::exp(log_poisson_weight(v + 1, s) + log_gap(v + 1)) / (1.0 - ratio));
    }
    if (bound < kRemainder) {
      if (stats) *stats = SeriesStats{v + 1, bound};
      return acc;
    }
  }
  too_many_terms("kstar", df, s);
}

double kstar_literal(double df, double s, double alpha) {
  check_df(df, "kstar_literal");
  check_delta(s, "kstar_literal");
  check_alpha(alpha, "kstar_literal");
  const double c = chisq_critical(df, alpha);
  if (s == 0.0) return chisq_sf(c, df + 2.0) - chisq_sf(c, df);
  double acc = 0.0;
  for (int v = 0; v < kMaxTerms; ++v) {
    // s^{v-1} / (v! 2^v)
    const double coef = std::exp((v - 1) * std::log(s) - std::lgamma(v + 1.0) - v * std::log(2.0));
    const double term = coef * (2.0 * v - s) * chisq_sf(c, df + 2.0 * v);
    acc += term;
    if (v > s && std::abs(term) * std::exp(-0.5 * s) < 1e-17) break;
  }
  return std::exp(-0.5 * s) * acc;
}

}  // namespace dpdwald
