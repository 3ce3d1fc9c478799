#include "dpdwald/chisq.hpp"
#include "dpdwald/csv.hpp"
#include "dpdwald/glm.hpp"
#include "dpdwald/wald.hpp"
#include "test_util.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace dpdwald;
using testutil::random_design;
using testutil::rel_frobenius;
using testutil::simulate;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Hand-written gammas. Normal: trapezoid in z = (y - mu)/sqrt(phi), which is
// exponentially accurate for Gaussian integrands. Poisson: long double sum.
GammaIntegrals normal_oracle(double mu, double phi, double tau) {
  GammaIntegrals g;
  const double h = 0.005, s = std::sqrt(phi);
  long double m = 0, g1 = 0, g2 = 0, g11 = 0, g12 = 0, g22 = 0;
  for (double z = -40.0; z <= 40.0 + 1e-12; z += h) {
    const double r = z * s;
    const double f = std::exp(-r * r / (2 * phi)) / std::sqrt(2 * M_PI * phi);
    const double w = std::pow(f, 1.0 + tau) * h * s;
    const double k1 = r / phi, k2 = r * r / (2 * phi * phi) - 1.0 / (2 * phi);
    m += w;
    g1 += k1 * w;
    g2 += k2 * w;
    g11 += k1 * k1 * w;
    g12 += k1 * k2 * w;
    g22 += k2 * k2 * w;
  }
  (void)mu;
  g.mass = static_cast<double>(m);
  g.g1 = static_cast<double>(g1);
  g.g2 = static_cast<double>(g2);
  g.g11 = static_cast<double>(g11);
  g.g12 = static_cast<double>(g12);
  g.g22 = static_cast<double>(g22);
  return g;
}

GammaIntegrals poisson_oracle(double mu, double tau) {
  long double m = 0, g1 = 0, g11 = 0;
  const int cap = static_cast<int>(mu + 40.0 * std::sqrt(mu) + 200.0);
  for (int y = 0; y <= cap; ++y) {
    const long double lf = y * std::log(static_cast<long double>(mu)) - mu - std::lgamma(y + 1.0L);
    const long double w = std::exp((1.0L + tau) * lf);
    m += w;
    g1 += (y - mu) * w;
    g11 += (y - mu) * (y - mu) * w;
  }
  GammaIntegrals g;
  g.mass = static_cast<double>(m);
  g.g1 = static_cast<double>(g1);
  g.g11 = static_cast<double>(g11);
  return g;
}

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("family pieces") {
  const GlmFamily n = GlmFamily::normal(), p = GlmFamily::poisson();
  CHECK(n.mean(0.7) == 0.7);
  CHECK(n.variance(0.7, 2.0) == 2.0);
  CHECK(p.mean(0.7) == doctest::Approx(std::exp(0.7)));
  CHECK(p.variance(0.7, 1.0) == doctest::Approx(std::exp(0.7)));
  CHECK(p.link(p.inverse_link(1.3)) == doctest::Approx(1.3));
  CHECK(GlmFamily::parse("poisson").kind == GlmKind::poisson_log);
  CHECK(GlmFamily::parse("normal").kind == GlmKind::normal_identity);
  CHECK_THROWS_AS(GlmFamily::parse("gamma"), DomainError);
  // log density from the exponential-family pieces
  CHECK(n.c(1.2, 0.8) + (1.2 * 0.5 - n.b(0.5)) / n.a(0.8) ==
        doctest::Approx(-0.5 * std::log(2 * M_PI * 0.8) - (1.2 - 0.5) * (1.2 - 0.5) / 1.6).epsilon(1e-14));
  CHECK(poisson_log_pmf(3.0, 2.5) == doctest::Approx(3 * std::log(2.5) - 2.5 - std::log(6.0)).epsilon(1e-14));
  CHECK(poisson_log_pmf(1e6, 1e6) == doctest::Approx(-0.5 * std::log(2 * M_PI * 1e6) - 1.0 / 12e6).epsilon(1e-12));
}

TEST_CASE("K functions") {
  const GlmModel n(GlmFamily::normal(), FixedDesign::design1(4));
  const Vector theta = vec({0.5, 1.0, 2.0});
  const double mu = 0.5 + 1.0;  // row 0 is (1, 1)
  CHECK(k_functions(n, mu, 0, theta).k1 == 0.0);
  const KValues kv = k_functions(n, 2.5, 0, theta);
  CHECK(kv.k1 == doctest::Approx(1.0 / 2.0));
  CHECK(*kv.k2 == doctest::Approx(1.0 / 8.0 - 1.0 / 4.0));

  const GlmModel p(GlmFamily::poisson(), FixedDesign::design1(4));
  const Vector tp = vec({0.3, 0.4});
  const double mp = std::exp(0.7);
  CHECK(k_functions(p, mp, 0, tp).k1 == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_FALSE(k_functions(p, 3.0, 0, tp).k2.has_value());
  CHECK(std::abs(p.score(0, mp, tp).norm()) < 1e-14);

  // K2 averages to zero at the normal MLE.
  const GlmModel m(GlmFamily::normal(), random_design(300, 3, 5));
  const Vector y = simulate(m, vec({1.0, -1.0, 0.5, 1.5}), 6);
  const Vector mle = fit_mdpde(m, y, 0.0).theta;
  double mean_k2 = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) mean_k2 += *k_functions(m, y(static_cast<Eigen::Index>(i)), i, mle).k2;
  CHECK(std::abs(mean_k2 / 300.0) < 1e-10);
}

TEST_CASE("normal gammas: closed forms against quadrature") {
  for (double phi : {0.3, 1.0, 4.0}) {
    for (double tau : {0.0, 0.1, 0.5, 1.0}) {
      const GammaIntegrals c = normal_gamma_closed(phi, tau);
      const GammaIntegrals o = normal_oracle(0.0, phi, tau);
      CHECK(close(c.mass, o.mass, 1e-10));
      CHECK(std::abs(c.g1) < 1e-15);
      CHECK(close(c.g2, o.g2, 1e-10));
      CHECK(close(c.g11, o.g11, 1e-10));
      CHECK(std::abs(c.g12) < 1e-15);
      CHECK(close(c.g22, o.g22, 1e-10));
      CHECK(c.g11 == doctest::Approx(std::pow(2 * M_PI * phi, -tau / 2) * std::pow(1 + tau, -1.5) / phi).epsilon(1e-13));
      if (tau == 0.0) CHECK(std::abs(c.g2) < 1e-15);
    }
  }
}

TEST_CASE("gamma consistency on randomised probes") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const GlmModel nm(GlmFamily::normal(), random_design(10, 2, 3));
  const GlmModel pm(GlmFamily::poisson(), random_design(10, 2, 4));
  for (int probe = 0; probe < 12; ++probe) {
    const double tau = u(rng);
    const std::size_t i = static_cast<std::size_t>(probe % 10);
    const Vector tn = vec({2.0 * u(rng) - 1.0, 2.0 * u(rng) - 1.0, 0.2 + 3.0 * u(rng)});
    const GammaIntegrals a = gamma_integrals(nm, i, tn, tau);
    const GammaIntegrals c = normal_gamma_closed(tn(2), tau);
    CHECK(close(a.mass, c.mass, 1e-10));
    CHECK(std::abs(a.g1) < 1e-10);
    CHECK(close(a.g2, c.g2, 1e-10));
    CHECK(close(a.g11, c.g11, 1e-10));
    CHECK(close(a.g22, c.g22, 1e-10));

    const Vector tp = vec({4.0 * u(rng) - 1.0, 2.0 * u(rng) - 1.0});
    const double mu = std::exp(pm.eta(i, tp));
    const GammaIntegrals b = gamma_integrals(pm, i, tp, tau);
    const GammaIntegrals o = poisson_oracle(mu, tau);
    CAPTURE(mu);
    CHECK(close(b.mass, o.mass, 1e-10));
    CHECK(std::abs(b.g1 - o.g1) < 1e-10 * std::max(1.0, o.g11));
    CHECK(close(b.g11, o.g11, 1e-10));
    // the fast moments used by the sandwich
    const auto pmom = pm.analytic_moments(i, tp, 1.0 + tau, true);
    REQUIRE(pmom.has_value());
    CHECK(close(pmom->mass, o.mass, 1e-10));
    CHECK(close(pmom->second(1, 1), o.g11 * pm.design().X(static_cast<Eigen::Index>(i), 1) *
                                        pm.design().X(static_cast<Eigen::Index>(i), 1), 1e-10));
  }
}

TEST_CASE("Poisson gammas: unit mean, tau = 1, by direct series") {
  FixedDesign d;
  d.X = Matrix::Zero(1, 2);
  d.X(0, 0) = 1.0;
  const GlmModel m(GlmFamily::poisson(), d);
  const GammaIntegrals g = gamma_integrals(m, 0, Vector::Zero(2), 1.0);
  const GammaIntegrals o = poisson_oracle(1.0, 1.0);
  CHECK(close(g.mass, o.mass, 1e-10));
  CHECK(std::abs(g.g1 - o.g1) < 1e-10);
  CHECK(close(g.g11, o.g11, 1e-10));
  // tau = 0: gamma_1 = 0
  CHECK(std::abs(gamma_integrals(m, 0, vec({1.3, 0.0}), 0.0).g1) < 1e-10);
}

TEST_CASE("Poisson gammas at very large means follow the Gaussian limit") {
  FixedDesign d;
  d.X = Matrix::Ones(1, 1);
  const GlmModel m(GlmFamily::poisson(), d);
  for (double eta : {12.0, 30.0, 50.0}) {
    const double mu = std::exp(eta);
    const double tau = 0.5;
    const GammaIntegrals g = gamma_integrals(m, 0, vec({eta}), tau);
    const double mass = std::pow(2 * M_PI * mu, -tau / 2) / std::sqrt(1 + tau);
    CHECK(g.mass == doctest::Approx(mass).epsilon(1e-4));
    CHECK(g.g11 == doctest::Approx(mass * mu / (1 + tau)).epsilon(1e-4));
  }
}

TEST_CASE("glm_sandwich equals the generic sandwich") {
  for (double tau : {0.0, 0.2, 0.7}) {
    const GlmModel n(GlmFamily::normal(), FixedDesign::design4(30));
    const Vector tn = vec({1.0, 0.5, -0.5, 1.3});
    const SandwichCov a = glm_sandwich(n, tn, tau);
    const SandwichCov b = sandwich_cov(n, tn, tau);
    CHECK(rel_frobenius(a.psi, b.psi) < 1e-10);
    CHECK(rel_frobenius(a.omega, b.omega) < 1e-10);
    CHECK(rel_frobenius(a.sigma, b.sigma) < 1e-10);

    const GlmModel p(GlmFamily::poisson(), random_design(30, 3, 9));
    const Vector tp = vec({1.0, 0.4, -0.3});
    const SandwichCov c = glm_sandwich(p, tp, tau);
    const SandwichCov e = sandwich_cov(p, tp, tau);
    CHECK(rel_frobenius(c.psi, e.psi) < 1e-10);
    CHECK(rel_frobenius(c.omega, e.omega) < 1e-10);
    CHECK(rel_frobenius(c.sigma, e.sigma) < 1e-10);
  }
}

TEST_CASE("tau = 0 sandwich is the Fisher information inverse") {
  const GlmModel p(GlmFamily::poisson(), FixedDesign::design1(20));
  const Vector theta = vec({1.0, -0.3});
  Matrix fisher = Matrix::Zero(2, 2);
  for (Eigen::Index i = 0; i < 20; ++i) {
    const Vector x = p.design().X.row(i).transpose();
    fisher += std::exp(x.dot(theta)) * x * x.transpose();
  }
  fisher /= 20.0;
  const SandwichCov c = glm_sandwich(p, theta, 0.0);
  CHECK(rel_frobenius(c.psi, fisher) < 1e-10);
  CHECK(rel_frobenius(c.sigma, fisher.inverse()) < 1e-10);
}

TEST_CASE("normal identity: upsilon forms match the sandwich") {
  const FixedDesign d = FixedDesign::design2(50);
  const GlmModel m(GlmFamily::normal(), d);
  const Matrix cx_inv = d.cx().inverse();
  for (double phi : {0.5, 1.0, 2.5}) {
    for (double tau : {0.0, 0.1, 0.3, 0.5, 0.7, 1.0}) {
      const SandwichCov c = glm_sandwich(m, vec({1.0, 1.0, phi}), tau);
      const Matrix sb = c.sigma.topLeftCorner(2, 2);
      CHECK(rel_frobenius(sb, upsilon_beta(phi, tau) * cx_inv) < 1e-8);
      CHECK(std::abs(c.sigma(2, 2) - upsilon_phi(phi, tau)) < 1e-8 * upsilon_phi(phi, tau));
      CHECK(c.sigma.topRightCorner(2, 1).cwiseAbs().maxCoeff() < 1e-10);
    }
    CHECK(upsilon_phi(phi, 0.0) == doctest::Approx(2 * phi * phi).epsilon(1e-15));
    CHECK(upsilon_beta(phi, 0.0) == doctest::Approx(phi).epsilon(1e-15));
  }
}

TEST_CASE("normal Wald statistic") {
  const FixedDesign d = random_design(200, 3, 13);
  const GlmModel m(GlmFamily::normal(), d);
  const Vector beta0 = vec({1.0, 0.5, -0.5});
  CHECK(normal_wald_statistic(beta0, 1.2, beta0, d.cx(), 200, 0.5) == 0.0);
  const Vector y = simulate(m, vec({1.0, 0.6, -0.5, 1.0}), 14);
  for (double tau : {0.0, 0.5}) {
    const FitResult fit = fit_mdpde(m, y, tau);
    const Vector bh = fit.theta.head(3);
    const double w = normal_wald_statistic(bh, fit.theta(3), beta0, d.cx(), 200, tau);
    Matrix L = Matrix::Identity(3, 3);
    const CompositeHypothesis hyp = CompositeHypothesis::linear(LinearHypothesis(L, beta0), 4);
    const double g = wald_composite(fit.theta, hyp, glm_sandwich(m, fit.theta, tau), 200).statistic;
    CHECK(w == doctest::Approx(g).epsilon(1e-10));
    if (tau == 0.0) {
      const Vector diff = bh - beta0;
      CHECK(w == doctest::Approx(200 * diff.dot(d.cx() * diff) / fit.theta(3)).epsilon(1e-14));
    }
  }
}

TEST_CASE("contiguous delta: closed form against the numeric path") {
  CHECK(normal_contiguous_delta(10.0, 1.0, 0.0) == 10.0);
  for (int k : {1, 3, 20}) {
    const FixedDesign d = random_design(200, k, 100 + k);
    const GlmModel m(GlmFamily::normal(), d);
    Vector theta0 = Vector::Ones(k + 1);
    Vector dir = Vector::LinSpaced(k, 0.3, 1.0);
    for (double dx : {2.0, 10.0, 50.0}) {
      dir *= std::sqrt(dx / dir.dot(d.cx() * dir));
      for (double tau : {0.0, 0.1, 0.3, 0.5, 0.7, 1.0}) {
        const double numeric = glm_contiguous_delta(m, theta0, tau, Matrix::Identity(k, k), dir);
        CHECK(numeric == doctest::Approx(normal_contiguous_delta(dx, 1.0, tau)).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("Poisson Design 1 cell: h = 2, d = 5, tau = 0.7") {
  const GlmModel m(GlmFamily::poisson(), FixedDesign::design1(50));
  const double delta = glm_contiguous_delta(m, vec({1.0, 0.0}), 0.7, Matrix{{0.0, 1.0}}, vec({0.0, 5.0}));
  CHECK(noncentral_power(1.0, delta, 0.05) == doctest::Approx(0.954).epsilon(0.005 / 0.954));
}

TEST_CASE("S vector is centred and damped") {
  const GlmModel p(GlmFamily::poisson(), FixedDesign::design4(10));
  const Vector tp = vec({1.0, 1.0, 0.0});
  for (double tau : {0.0, 0.4}) {
    Vector acc = Vector::Zero(3);
    const double mu = std::exp(p.eta(2, tp));
    for (int y = 0; y < 200; ++y) acc += std::exp(poisson_log_pmf(y, mu)) * s_vector(p, 2, y, tp, tau);
    CHECK(acc.cwiseAbs().maxCoeff() < 1e-8);
  }
  const GlmModel n(GlmFamily::normal(), FixedDesign::design1(10));
  const Vector tn = vec({1.0, 1.0, 1.5});
  for (double tau : {0.0, 0.5}) {
    Vector acc = Vector::Zero(3);
    const double h = 0.005, s = std::sqrt(1.5), mu = n.eta(3, tn);
    for (double z = -40; z <= 40; z += h) {
      const double y = mu + s * z;
      acc += std::exp(n.log_density(3, y, tn)) * s_vector(n, 3, y, tn, tau) * h * s;
    }
    CHECK(acc.cwiseAbs().maxCoeff() < 1e-8);
  }
  // beta block dies off; the phi block settles at -gamma_2
  CHECK(s_vector(n, 3, 1e2, tn, 0.5).head(2).norm() < 1e-300);
  CHECK(s_vector(n, 3, 10.0, tn, 0.5).head(2).norm() < s_vector(n, 3, 5.0, tn, 0.5).head(2).norm());
  CHECK((s_vector(n, 3, 1e3, tn, 0.5) + normal_gamma_closed(1.5, 0.5).g2 * Vector::Unit(3, 2)).norm() < 1e-12);
  double sup = 0.0;
  for (int y = 0; y <= 300; ++y) sup = std::max(sup, s_vector(p, 2, y, tp, 0.4).norm());
  CHECK(std::isfinite(sup));
  CHECK(sup < 10.0);
}

TEST_CASE("Poisson tau = 0 fit matches the reference MLE") {
  const RegressionData data = read_regression_csv(std::string(DPDWALD_FIXTURES) + "/poisson_fixture.csv");
  std::ifstream in(std::string(DPDWALD_FIXTURES) + "/poisson_fixture_mle.json");
  const nlohmann::json ref = nlohmann::json::parse(in);
  FixedDesign d;
  d.X = data.X;
  const GlmModel m(GlmFamily::poisson(), d);
  const FitResult fit = fit_mdpde(m, data.y, 0.0);
  for (int j = 0; j < 2; ++j) CHECK(std::abs(fit.theta(j) - ref["beta"][j].get<double>()) < 1e-8);
  const FitResult robust = fit_mdpde(m, data.y, 0.3);
  CHECK((robust.theta - fit.theta).norm() < 0.3);
}

TEST_CASE("design diagnostics") {
  const DesignReport d1 = design_diagnostics(FixedDesign::design1(50));
  CHECK(d1.pass);
  CHECK(rel_frobenius(FixedDesign::design1(50).cx(), Matrix{{1.0, 1.5}, {1.5, 2.5}}) < 1e-15);
  CHECK(d1.min_eigenvalue > 0.0);
  const DesignReport d3 = design_diagnostics(FixedDesign::design3(50));
  CHECK(d3.pass);
  CHECK(d3.min_eigenvalue > 0.0);
  CHECK_FALSE(d3.note.empty());
  FixedDesign dup;
  dup.X = Matrix::Ones(20, 2);
  CHECK_FALSE(design_diagnostics(dup).pass);
}

TEST_CASE("shipped designs") {
  const FixedDesign d1 = FixedDesign::design1(50);
  CHECK(d1.X(0, 1) == 1.0);
  CHECK(d1.X(24, 1) == 1.0);
  CHECK(d1.X(25, 1) == 2.0);
  const FixedDesign d3 = FixedDesign::design3(50);
  CHECK(d3.X(49, 1) == 50.0);
  const FixedDesign d4 = FixedDesign::design4(50);
  CHECK(d4.X(1, 2) == 0.25);
  const FixedDesign a = FixedDesign::design2(50), b = FixedDesign::design2(50);
  CHECK(a.X == b.X);
  CHECK(a.X != FixedDesign::design2(50, 0.0, 1.0, 1).X);
  CHECK(std::abs(a.X.col(1).mean()) < 0.5);
  CHECK_THROWS_AS(FixedDesign::by_name("design7"), DomainError);
}

TEST_CASE("design CSV round trip") {
  const FixedDesign d = FixedDesign::design2(40);
  const std::string path = "design_roundtrip_test.csv";
  d.to_csv(path);
  const FixedDesign back = FixedDesign::from_csv(path);
  std::remove(path.c_str());
  CHECK(back.X == d.X);
}
