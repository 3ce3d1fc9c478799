#include "dpdwald/chisq.hpp"
#include "dpdwald/glm.hpp"
#include "dpdwald/mc.hpp"
#include "dpdwald/mdpde.hpp"
#include "dpdwald/robustness.hpp"
#include "dpdwald/wald.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace dpdwald;

namespace {

GlmModel make_model(const std::string& family, const Matrix& X, std::optional<double> phi) {
  FixedDesign d;
  d.X = X;
  return GlmModel(GlmFamily::parse(family), d, phi);
}

py::dict fit_dict(const FitResult& r) {
  py::dict d;
  d["theta"] = r.theta;
  d["converged"] = r.converged;
  d["iterations"] = r.iterations;
  d["gradient_steps"] = r.gradient_steps;
  d["equation_norm"] = r.equation_norm;
  d["tau"] = r.tau;
  return d;
}

py::dict report_dict(const TestReport& r) {
  py::dict d;
  d["kind"] = r.kind;
  d["statistic"] = r.statistic;
  d["df"] = r.df;
  d["p_value"] = r.p_value;
  d["critical_value"] = r.critical_value;
  d["reject"] = r.reject;
  d["alpha"] = r.alpha;
  d["tau"] = r.tau;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Density power divergence fits and Wald tests for fixed-design GLMs";

  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  m.def(
      "design",
      [](const std::string& name, int n) { return FixedDesign::by_name(name, n).X; }, py::arg("name"),
      py::arg("n") = 50, "Design matrix of a named reference design (design1..design4).");

  m.def(
      "fit",
      [](const std::string& family, const Matrix& X, const Vector& y, double tau, std::optional<double> phi) {
        const GlmModel model = make_model(family, X, phi);
        return fit_dict(fit_mdpde(model, y, tau));
      },
      py::arg("family"), py::arg("X"), py::arg("y"), py::arg("tau"), py::arg("phi") = std::nullopt);

  m.def(
      "sandwich",
      [](const std::string& family, const Matrix& X, const Vector& theta, double tau, std::optional<double> phi) {
        const GlmModel model = make_model(family, X, phi);
        const SandwichCov c = sandwich_cov(model, theta, tau);
        py::dict d;
        d["psi"] = c.psi;
        d["omega"] = c.omega;
        d["sigma"] = c.sigma;
        return d;
      },
      py::arg("family"), py::arg("X"), py::arg("theta"), py::arg("tau"), py::arg("phi") = std::nullopt,
      "Finite-n sandwich Psi, Omega and Sigma = Psi^-1 Omega Psi^-1.");

  m.def(
      "wald_simple",
      [](const Vector& theta_hat, const Vector& theta0, const Matrix& sigma, int n, double alpha) {
        return report_dict(wald_simple(theta_hat, theta0, make_sandwich(Matrix::Identity(sigma.rows(), sigma.cols()), sigma, 0.0), n, alpha));
      },
      py::arg("theta_hat"), py::arg("theta0"), py::arg("sigma"), py::arg("n"), py::arg("alpha") = 0.05,
      "Simple Wald-type test with a given covariance Sigma.");

  m.def(
      "wald_linear",
      [](const Vector& theta_hat, const Matrix& L, const Vector& l0, const Matrix& sigma, int n, double alpha) {
        const auto hyp = CompositeHypothesis::linear(LinearHypothesis(L, l0), static_cast<int>(theta_hat.size()));
        return report_dict(wald_composite(theta_hat, hyp, make_sandwich(Matrix::Identity(sigma.rows(), sigma.cols()), sigma, 0.0), n, alpha));
      },
      py::arg("theta_hat"), py::arg("L"), py::arg("l0"), py::arg("sigma"), py::arg("n"), py::arg("alpha") = 0.05,
      "Wald-type test of L theta[:k] = l0.");

  m.def("noncentral_power", &noncentral_power, py::arg("df"), py::arg("delta"), py::arg("alpha") = 0.05);
  m.def(
      "noncentral_chisq_cdf", [](double x, double df, double delta) { return noncentral_chisq_cdf(x, df, delta); },
      py::arg("x"), py::arg("df"), py::arg("delta"));
  m.def(
      "kstar", [](double df, double s, double alpha) { return kstar(df, s, alpha); }, py::arg("df"), py::arg("s"),
      py::arg("alpha") = 0.05);
  m.def("normal_contiguous_delta", &normal_contiguous_delta, py::arg("dx"), py::arg("phi0"), py::arg("tau"));
  m.def("upsilon_beta", &upsilon_beta, py::arg("phi"), py::arg("tau"));
  m.def("upsilon_phi", &upsilon_phi, py::arg("phi"), py::arg("tau"));

  m.def(
      "sample_size",
      [](const Vector& theta_star, const Vector& theta0, const Matrix& sigma_null, const Matrix& sigma_star,
         double alpha, double power) {
        return sample_size_for_power(theta_star, theta0, sigma_null, sigma_star, alpha, power);
      },
      py::arg("theta_star"), py::arg("theta0"), py::arg("sigma_null"), py::arg("sigma_star"), py::arg("alpha"),
      py::arg("power"));
  m.def(
      "power_fixed_alternative",
      [](const Vector& theta_star, const Vector& theta0, const Matrix& sigma_null, const Matrix& sigma_star, int n,
         double alpha) { return power_fixed_alternative(theta_star, theta0, sigma_null, sigma_star, n, alpha); },
      py::arg("theta_star"), py::arg("theta0"), py::arg("sigma_null"), py::arg("sigma_star"), py::arg("n"),
      py::arg("alpha") = 0.05);

  m.def(
      "if2_profile",
      [](const std::string& family, const Matrix& X, const Vector& theta0, double tau, const Vector& grid,
         std::optional<std::size_t> index, const Matrix& H) {
        const GlmModel model = make_model(family, X, std::nullopt);
        const InfluenceAnalyzer a(model, theta0, tau);
        ProfileRequest req;
        req.kind = H.size() == 0 ? ProfileKind::if2_simple : ProfileKind::if2_composite;
        req.index = index;
        req.H = H;
        return influence_profile(a, grid, req).values;
      },
      py::arg("family"), py::arg("X"), py::arg("theta0"), py::arg("tau"), py::arg("grid"),
      py::arg("index") = std::nullopt, py::arg("H") = Matrix(),
      "Second-order IF of the test statistic over a grid of contamination points (index is 0-based).");

  m.def(
      "run_mc",
      [](const std::string& family, const Matrix& X, const Vector& theta0, const Matrix& L, const Vector& l0,
         int replications, std::uint64_t seed, std::vector<double> taus, const std::string& scenario, double alpha,
         double epsilon, double point) {
        const GlmModel model = make_model(family, X, std::nullopt);
        McConfig c;
        c.replications = replications;
        c.n = static_cast<int>(X.rows());
        c.seed = seed;
        c.tau_grid = std::move(taus);
        c.scenario = parse_scenario(scenario);
        c.alpha = alpha;
        c.epsilon = epsilon;
        c.contamination_point = point;
        McReport rep;
        {
          py::gil_scoped_release release;
          rep = run_mc(c, model, theta0, LinearHypothesis(L, l0));
        }
        py::list rows;
        for (const McRow& r : rep.rows) {
          py::dict d;
          d["tau"] = r.tau;
          d["rate"] = r.rate;
          d["se"] = r.se;
          d["valid"] = r.valid;
          d["excluded"] = r.excluded;
          rows.append(d);
        }
        return rows;
      },
      py::arg("family"), py::arg("X"), py::arg("theta0"), py::arg("L"), py::arg("l0"), py::arg("replications"),
      py::arg("seed"), py::arg("taus"), py::arg("scenario") = "null", py::arg("alpha") = 0.05,
      py::arg("epsilon") = 0.0, py::arg("point") = 0.0);
}
