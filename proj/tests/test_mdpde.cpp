#include "dpdwald/csv.hpp"
#include "dpdwald/glm.hpp"
#include "dpdwald/mdpde.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace dpdwald;
using testutil::random_design;
using testutil::rel_frobenius;
using testutil::simulate;

namespace {

Vector objective_gradient(const ModelFamily& m, const Vector& y, const Vector& theta, double tau) {
  const double h = 1e-5;
  Vector g(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Vector hi = theta, lo = theta;
    hi(j) += h;
    lo(j) -= h;
    g(j) = (dpd_objective(m, y, hi, tau) - dpd_objective(m, y, lo, tau)) / (2 * h);
  }
  return g;
}

EvalContext definition_route() {
  EvalContext ctx;
  ctx.route = MomentRoute::definition;
  return ctx;
}

}  // namespace

TEST_CASE("objective gradient is -(1 + tau) times the estimating equation") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int probe = 0; probe < 4; ++probe) {
    const double tau = 0.1 + 0.3 * probe;
    {
      const GlmModel m(GlmFamily::normal(), random_design(30, 2, 100 + probe));
      Vector theta(3);
      theta << 1.0 + u(rng), -0.5 + u(rng), 1.2 + u(rng);
      const Vector y = simulate(m, theta, 7 + probe);
      const Vector g = objective_gradient(m, y, theta, tau);
      CHECK((g + (1.0 + tau) * estimating_equation(m, y, theta, tau)).cwiseAbs().maxCoeff() < 1e-6);
    }
    {
      const GlmModel m(GlmFamily::poisson(), random_design(25, 2, 200 + probe));
      Vector theta(2);
      theta << 0.8 + u(rng), 0.4 + u(rng);
      const Vector y = simulate(m, theta, 17 + probe);
      const Vector g = objective_gradient(m, y, theta, tau);
      CHECK((g + (1.0 + tau) * estimating_equation(m, y, theta, tau)).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("estimating equation is continuous at tau = 0") {
  const GlmModel m(GlmFamily::normal(), random_design(40, 3, 5));
  Vector theta(4);
  theta << 0.3, 1.0, -1.0, 0.8;
  const Vector y = simulate(m, theta, 9);
  const Vector e0 = estimating_equation(m, y, theta, 0.0);
  const Vector e1 = estimating_equation(m, y, theta, 1e-8);
  CHECK((e0 - e1).cwiseAbs().maxCoeff() < 1e-6);
  // tau = 0 is the mean score.
  Vector mean_score = Vector::Zero(4);
  for (std::size_t i = 0; i < m.size(); ++i) mean_score += m.score(i, y(static_cast<Eigen::Index>(i)), theta);
  CHECK((e0 - mean_score / 40.0).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("single Poisson observation: objective and xi by direct series") {
  FixedDesign d;
  d.X = Matrix::Ones(1, 1);
  const GlmModel m(GlmFamily::poisson(), d);
  const Vector theta = Vector::Zero(1);
  const Vector y = Vector::Zero(1);
  double sq = 0.0, xi = 0.0, fact = 1.0;
  for (int k = 0; k < 60; ++k) {
    if (k > 0) fact *= k;
    const double f2 = std::exp(-2.0) / (fact * fact);
    sq += f2;
    xi += (k - 1.0) * f2;
  }
  CHECK(dpd_objective(m, y, theta, 1.0) == doctest::Approx(sq - 2.0 * std::exp(-1.0)).epsilon(1e-14));
  CHECK(xi_vector(m, 0, theta, 1.0)(0) == doctest::Approx(xi).epsilon(1e-12));
  CHECK(std::abs(xi_vector(m, 0, theta, 1.0, definition_route())(0) - xi) < 1e-12);
}

TEST_CASE("xi vanishes at tau = 0 and by symmetry for the normal mean") {
  const GlmModel m(GlmFamily::normal(), FixedDesign::design1(10));
  Vector theta(3);
  theta << 1.0, 0.5, 1.0;
  for (std::size_t i : {0u, 7u}) {
    CHECK(xi_vector(m, i, theta, 0.0, definition_route()).cwiseAbs().maxCoeff() < 1e-12);
    const Vector xi1 = xi_vector(m, i, theta, 1.0, definition_route());
    CHECK(std::abs(xi1(0)) < 1e-13);
    CHECK(std::abs(xi1(1)) < 1e-13);
  }
  const GlmModel p(GlmFamily::poisson(), FixedDesign::design1(10));
  CHECK(xi_vector(p, 3, Vector::Ones(2), 0.0, definition_route()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tau = 0 fit is OLS with the likelihood variance") {
  const RegressionData data = read_regression_csv(std::string(DPDWALD_FIXTURES) + "/normal_fixture.csv");
  FixedDesign d;
  d.X = data.X;
  const GlmModel m(GlmFamily::normal(), d);
  const FitResult fit = fit_mdpde(m, data.y, 0.0);
  const Vector beta = data.X.colPivHouseholderQr().solve(data.y);
  const double phi = (data.y - data.X * beta).squaredNorm() / static_cast<double>(data.y.size());
  CHECK(fit.converged);
  CHECK((fit.theta.head(3) - beta).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(std::abs(fit.theta(3) - phi) < 1e-8);
  Vector ols(4);
  ols << beta, phi;
  CHECK(estimating_equation(m, data.y, ols, 0.0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("clean normal data: tau = 0.5 estimate within three standard errors") {
  const GlmModel m(GlmFamily::normal(), random_design(400, 2, 21));
  Vector truth(3);
  truth << 1.0, -2.0, 1.5;
  const Vector y = simulate(m, truth, 22);
  const FitResult fit = fit_mdpde(m, y, 0.5);
  CHECK(fit.converged);
  CHECK(fit.equation_norm < 1e-8);
  const SandwichCov cov = sandwich_cov(m, fit.theta, 0.5);
  const Vector se = (cov.sigma.diagonal() / 400.0).cwiseSqrt();
  CHECK(((fit.theta - truth).cwiseAbs().array() < 3.0 * se.array()).all());
}

TEST_CASE("gross outliers: tau = 0.5 beats the MLE in at least 90 of 100 replications") {
  const int n = 100;
  const GlmModel m(GlmFamily::normal(), random_design(n, 2, 31));
  Vector truth(3);
  truth << 1.0, 2.0, 1.0;
  int wins = 0;
  for (int rep = 0; rep < 100; ++rep) {
    Vector y = simulate(m, truth, 1000 + rep);
    std::mt19937_64 rng(5000 + rep);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int j = 0; j < n / 10; ++j) y(idx[j]) += 15.0;
    const Vector t0 = fit_mdpde(m, y, 0.0).theta;
    const Vector t5 = fit_mdpde(m, y, 0.5).theta;
    if ((t5 - truth).norm() < (t0 - truth).norm()) ++wins;
  }
  CHECK(wins >= 90);
}

TEST_CASE("sandwich invariants") {
  for (double tau : {0.0, 0.3, 1.0}) {
    const GlmModel m(GlmFamily::poisson(), random_design(30, 3, 41));
    Vector theta(3);
    theta << 0.5, 0.3, -0.2;
    const SandwichCov c = sandwich_cov(m, theta, tau);
    CHECK(rel_frobenius(c.psi, c.psi.transpose()) < 1e-15);
    CHECK(rel_frobenius(c.sigma, c.sigma.transpose()) < 1e-15);
    const Matrix pinv = c.psi.inverse();
    CHECK(rel_frobenius(c.sigma, pinv * c.omega * pinv) < 1e-10);
    Eigen::SelfAdjointEigenSolver<Matrix> ep(c.psi), eo(c.omega);
    CHECK(ep.eigenvalues().minCoeff() > 0.0);
    CHECK(eo.eigenvalues().minCoeff() > -1e-12);
    CHECK(c.sigma_eigenvalues.minCoeff() > 0.0);
    if (tau == 0.0) {
      CHECK(rel_frobenius(c.psi, c.omega) < 1e-12);
      CHECK(rel_frobenius(c.sigma, pinv) < 1e-10);
    }
  }
}

TEST_CASE("Poisson Design 1: specialised moments equal definition-level integration") {
  const GlmModel m(GlmFamily::poisson(), FixedDesign::design1(50));
  Vector theta(2);
  theta << 1.0, 0.0;
  for (double tau : {0.0, 0.3, 0.7}) {
    const SandwichCov a = sandwich_cov(m, theta, tau);
    const SandwichCov b = sandwich_cov(m, theta, tau, definition_route());
    CHECK(rel_frobenius(a.psi, b.psi) < 1e-10);
    CHECK(rel_frobenius(a.omega, b.omega) < 1e-10);
  }
}

TEST_CASE("normal model: definition route matches closed-form moments") {
  const GlmModel m(GlmFamily::normal(), FixedDesign::design4(20));
  Vector theta(4);
  theta << 1.0, 0.5, -0.5, 2.0;
  for (double tau : {0.0, 0.5}) {
    const SandwichCov a = sandwich_cov(m, theta, tau);
    const SandwichCov b = sandwich_cov(m, theta, tau, definition_route());
    CHECK(rel_frobenius(a.sigma, b.sigma) < 1e-9);
  }
}

TEST_CASE("reordering observations leaves the sandwich and estimate unchanged") {
  const FixedDesign d = random_design(40, 2, 51);
  const GlmModel m(GlmFamily::poisson(), d);
  Vector theta(2);
  theta << 0.7, 0.4;
  const Vector y = simulate(m, theta, 52);
  std::vector<int> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::rotate(perm.begin(), perm.begin() + 13, perm.end());
  FixedDesign dp;
  dp.X.resize(40, 2);
  Vector yp(40);
  for (int i = 0; i < 40; ++i) {
    dp.X.row(i) = d.X.row(perm[i]);
    yp(i) = y(perm[i]);
  }
  const GlmModel mp(GlmFamily::poisson(), dp);
  const FitResult f = fit_mdpde(m, y, 0.4);
  const FitResult fp = fit_mdpde(mp, yp, 0.4);
  CHECK((f.theta - fp.theta).cwiseAbs().maxCoeff() < 1e-9);
  const SandwichCov a = sandwich_cov(m, f.theta, 0.4);
  const SandwichCov b = sandwich_cov(mp, f.theta, 0.4);
  CHECK(rel_frobenius(a.psi, b.psi) < 1e-13);
  CHECK(rel_frobenius(a.omega, b.omega) < 1e-13);
  CHECK(rel_frobenius(a.sigma, b.sigma) < 1e-12);
}

TEST_CASE("singular Psi is rejected with its eigenvalues") {
  FixedDesign d;
  d.X = Matrix::Ones(20, 2);
  const GlmModel m(GlmFamily::poisson(), d);
  try {
    sandwich_cov(m, Vector::Zero(2), 0.2);
    FAIL("expected a rank deficiency error");
  } catch (const RankDeficiencyError& e) {
    CHECK(e.min_eigenvalue() < 1e-10 * e.max_eigenvalue());
  }
}

TEST_CASE("solver failure carries the last iterate") {
  const GlmModel m(GlmFamily::poisson(), random_design(30, 2, 61));
  Vector theta(2);
  theta << 1.0, 0.5;
  const Vector y = simulate(m, theta, 62);
  SolverOptions o;
  o.max_iterations = 1;
  Vector init(2);
  init << -2.0, 2.0;
  try {
    fit_mdpde(m, y, 0.5, init, o);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    CHECK(e.last_iterate().size() == 2);
    CHECK(e.equation_norm() > o.tolerance);
    CHECK(e.iterations() == 1);
  }
}

TEST_CASE("input validation") {
  const GlmModel p(GlmFamily::poisson(), FixedDesign::design1(4));
  Vector y(4);
  y << 1, 2, -1, 0;
  CHECK_THROWS_AS(estimating_equation(p, y, Vector::Zero(2), 0.2), DomainError);
  y << 1, 2, 1.5, 0;
  CHECK_THROWS_AS(estimating_equation(p, y, Vector::Zero(2), 0.2), DomainError);
  y << 1, 2, 1, 0;
  CHECK_THROWS_AS(dpd_objective(p, y, Vector::Zero(2), 0.0), DomainError);
  CHECK_THROWS_AS(estimating_equation(p, y, Vector::Zero(3), 0.2), DomainError);
  CHECK_THROWS_AS(estimating_equation(p, Vector::Zero(3), Vector::Zero(2), 0.2), DomainError);
  const GlmModel n(GlmFamily::normal(), FixedDesign::design1(4));
  Vector bad(3);
  bad << 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(sandwich_cov(n, bad, 0.1), DomainError);
  y(0) = std::nan("");
  CHECK_THROWS_AS(estimating_equation(n, y, Vector::Ones(3), 0.2), DomainError);
}

TEST_CASE("scores match numerical gradients of the log density") {
  const GlmModel n(GlmFamily::normal(), FixedDesign::design2(12));
  Vector tn(3);
  tn << 0.2, -0.7, 1.3;
  Vector probes(5);
  probes << -3.0, -0.4, 0.0, 1.1, 4.2;
  CHECK(score_consistency(n, tn, probes) < 1e-6);
  const GlmModel p(GlmFamily::poisson(), FixedDesign::design4(12));
  Vector tp(3);
  tp << 0.5, 0.3, -0.4;
  Vector counts(4);
  counts << 0, 1, 3, 9;
  CHECK(score_consistency(p, tp, counts) < 1e-6);
}
