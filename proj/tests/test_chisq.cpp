#include "dpdwald/chisq.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <doctest.h>

#include <cmath>

using namespace dpdwald;

TEST_CASE("central chi-square and normal helpers") {
  CHECK(chisq_critical(1, 0.05) == doctest::Approx(3.841458820694124).epsilon(1e-12));
  for (double df : {1.0, 2.0, 5.0, 20.0, 25.0}) {
    const boost::math::chi_squared_distribution<double> c(df);
    for (double a : {0.01, 0.05, 0.1}) {
      CHECK(chisq_critical(df, a) == doctest::Approx(boost::math::quantile(boost::math::complement(c, a))).epsilon(1e-11));
    }
  }
  CHECK(normal_quantile(0.1) == doctest::Approx(-1.2815515655446004).epsilon(1e-13));
  CHECK(normal_cdf(1.96) == doctest::Approx(0.9750021048517795).epsilon(1e-13));
  CHECK(chisq_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("C_v mixture agrees with an independent non-central CDF") {
  double worst = 0.0;
  for (int df = 1; df <= 25; ++df) {
    for (double delta = 0.0; delta <= 50.0; delta += 2.5) {
      const boost::math::non_central_chi_squared_distribution<double> nc(df, delta);
      for (double q : {0.2, 1.0, 3.0}) {
        const double x = q * (df + delta) + 0.5;
        const double ref = delta == 0.0 ? boost::math::cdf(boost::math::chi_squared_distribution<double>(df), x)
                                        : boost::math::cdf(nc, x);
        worst = std::max(worst, std::abs(noncentral_chisq_cdf(x, df, delta) - ref));
      }
    }
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("upper-tail series and CDF complement agree") {
  for (double df : {1.0, 4.0, 20.0}) {
    for (double delta : {0.0, 0.5, 7.0, 30.0, 50.0}) {
      const double x = chisq_critical(df, 0.05);
      SeriesStats st;
      const double a = noncentral_chisq_sf_series(x, df, delta, &st);
      CHECK(std::abs(a - noncentral_chisq_sf(x, df, delta)) < 1e-12);
      CHECK(std::abs(a - (1.0 - noncentral_chisq_cdf(x, df, delta))) < 1e-12);
    }
  }
}

TEST_CASE("CDF remainder bound is enforced") {
  SeriesStats st;
  noncentral_chisq_cdf(40.0, 10.0, 45.0, &st);
  CHECK(st.terms > 0);
  CHECK(st.remainder_bound < 1e-15);
}

TEST_CASE("power is alpha at delta 0 and strictly increasing in delta") {
  for (double df : {1.0, 3.0, 20.0}) {
    CHECK(noncentral_power(df, 0.0, 0.05) == doctest::Approx(0.05).epsilon(1e-12));
    double prev = 0.05;
    for (double d = 0.25; d <= 60.0; d += 0.25) {
      const double p = noncentral_power(df, d, 0.05);
      CHECK(p > prev);
      prev = p;
    }
  }
}

TEST_CASE("K* is twice the derivative of power in the non-centrality") {
  for (double df : {1.0, 2.0, 5.0, 20.0}) {
    for (double s : {0.3, 1.0, 4.0, 12.0, 40.0}) {
      const double h = 1e-4;
      const double fd = (noncentral_power(df, s + h, 0.05) - noncentral_power(df, s - h, 0.05)) / (2 * h);
      CHECK(kstar(df, s, 0.05) == doctest::Approx(2.0 * fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("K* stable and literal forms agree where the literal form is usable") {
  for (double df : {1.0, 3.0, 10.0}) {
    for (double s : {0.01, 0.5, 2.0, 8.0}) {
      CHECK(kstar(df, s, 0.05) == doctest::Approx(kstar_literal(df, s, 0.05)).epsilon(1e-10));
    }
  }
}

TEST_CASE("K* at zero is the removable limit Q1 - Q0") {
  for (double df : {1.0, 4.0}) {
    const double c = chisq_critical(df, 0.05);
    const double lim = chisq_sf(c, df + 2) - chisq_sf(c, df);
    CHECK(kstar(df, 0.0, 0.05) == doctest::Approx(lim).epsilon(1e-13));
    CHECK(kstar(df, 1e-9, 0.05) == doctest::Approx(lim).epsilon(1e-7));
  }
}

TEST_CASE("K* truncation bound below 1e-12") {
  SeriesStats st;
  kstar(5.0, 30.0, 0.05, &st);
  CHECK(st.remainder_bound < 1e-12);
  kstar(5.0, 5000.0, 0.05, &st);
  CHECK(st.remainder_bound < 1e-12);
}

TEST_CASE("Poisson mixing weights") {
  double sum = 0.0;
  for (int v = 0; v < 200; ++v) sum += poisson_weight(v, 17.0);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(poisson_weight(0, 0.0) == 1.0);
  CHECK(poisson_weight(3, 0.0) == 0.0);
}

TEST_CASE("invalid arguments raise domain errors") {
  CHECK_THROWS(chisq_critical(0.0, 0.05));
  CHECK_THROWS(chisq_critical(2.0, 1.5));
  CHECK_THROWS(noncentral_chisq_cdf(1.0, 2.0, -1.0));
}
