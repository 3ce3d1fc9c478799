#include "dpdwald/mdpde.hpp"

#include "parallel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

namespace dpdwald {

bool ModelFamily::in_support(double y) const {
  if (!std::isfinite(y)) return false;
  if (support() == Support::nonnegative_integer) return y >= 0.0 && y == std::floor(y);
  return true;
}

double score_consistency(const ModelFamily& model, const Vector& theta, const Vector& probes, double h) {
  check_parameter(theta, model.dim(), "score_consistency");
  const auto p = static_cast<Eigen::Index>(model.dim());
  double worst = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    for (Eigen::Index k = 0; k < probes.size(); ++k) {
      const double y = probes(k);
      const Vector u = model.score(i, y, theta);
      for (Eigen::Index j = 0; j < p; ++j) {
        Vector lo = theta;
        Vector hi = theta;
        const double step = h * std::max(1.0, std::abs(theta(j)));
        lo(j) -= step;
        hi(j) += step;
        const double fd = (model.log_density(i, y, hi) - model.log_density(i, y, lo)) / (2.0 * step);
        worst = std::max(worst, std::abs(fd - u(j)));
      }
    }
  }
  return worst;
}

namespace {

void check_tau(double tau, bool allow_zero, const char* what) {
  if (!std::isfinite(tau) || tau < 0.0 || (!allow_zero && tau == 0.0)) {
    std::ostringstream os;
    os << what << ": tau must be " << (allow_zero ? ">= 0" : "> 0") << ", got " << tau;
    throw DomainError(os.str());
  }
}

void check_inputs(const ModelFamily& model, const Vector& data, const Vector& theta, const char* what) {
  check_parameter(theta, model.dim(), what);
  if (static_cast<std::size_t>(data.size()) != model.size()) {
    std::ostringstream os;
    os << what << ": data has " << data.size() << " observations, model expects " << model.size();
    throw DomainError(os.str());
  }
  if (data.size() == 0) throw DomainError(std::string(what) + ": no observations");
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    if (!model.in_support(data(i))) {
      std::ostringstream os;
      os << what << ": observation " << i << " (" << data(i) << ") is outside the support";
      throw DomainError(os.str());
    }
  }
  if (!model.admissible(theta)) throw DomainError(std::string(what) + ": parameter outside the model domain");
}

double checked_log_density(const ModelFamily& model, std::size_t i, double y, const Vector& theta) {
  const double lf = model.log_density(i, y, theta);
  if (std::isnan(lf) || lf == std::numeric_limits<double>::infinity()) {
    std::ostringstream os;
    os << "non-finite density for observation " << i << " at y = " << y;
    throw DomainError(os.str());
  }
  return lf;
}

// Sum of per-observation contributions in index order.
template <class Fn>
Vector ordered_mean(std::size_t n, Eigen::Index p, unsigned threads, Fn&& per_obs) {
  std::vector<Vector> parts(n);
  detail::parallel_for(n, [&](std::size_t i) { parts[i] = per_obs(i); }, threads);
  Vector acc = Vector::Zero(p);
  for (const auto& v : parts) acc += v;
  return acc / static_cast<double>(n);
}

}  // namespace

PowerMoments power_moments(const ModelFamily& model, std::size_t i, const Vector& theta, double a,
                           bool need_second, const EvalContext& ctx) {
  if (ctx.route == MomentRoute::automatic) {
    if (auto m = model.analytic_moments(i, theta, a, need_second)) return *m;
  }
  const auto p = static_cast<int>(model.dim());
  const int dim = 1 + p + (need_second ? p * p : 0);
  IntegralEngine engine(ctx.integration);
  auto integrand = [&](double y, Eigen::Ref<Vector> out) {
    const double lf = model.log_density(i, y, theta);
    const double w = std::exp(a * lf);
    if (w == 0.0 || !std::isfinite(lf)) {
      out.setZero();
      return;
    }
    const Vector u = model.score(i, y, theta);
    out(0) = w;
    out.segment(1, p) = w * u;
    if (need_second) {
      for (int c = 0; c < p; ++c) out.segment(1 + p + c * p, p) = (w * u(c)) * u;
    }
  };
  const Spread s = model.spread(i, theta);
  const IntegralResult r = engine.over_support(model.support(), integrand, dim, s.center, s.scale);
  PowerMoments m;
  m.mass = r.value(0);
  m.first = r.value.segment(1, p);
  if (need_second) {
    m.second = Eigen::Map<const Matrix>(r.value.data() + 1 + p, p, p);
    m.second = 0.5 * (m.second + m.second.transpose()).eval();
  }
  return m;
}

Vector xi_vector(const ModelFamily& model, std::size_t i, const Vector& theta, double tau, const EvalContext& ctx) {
  check_tau(tau, true, "xi_vector");
  check_parameter(theta, model.dim(), "xi_vector");
  if (i >= model.size()) throw DomainError("xi_vector: observation index out of range");
  return power_moments(model, i, theta, 1.0 + tau, false, ctx).first;
}

double dpd_objective(const ModelFamily& model, const Vector& data, const Vector& theta, double tau,
                     const EvalContext& ctx) {
  check_tau(tau, false, "dpd_objective");
  check_inputs(model, data, theta, "dpd_objective");
  const Vector total = ordered_mean(model.size(), 1, ctx.threads, [&](std::size_t i) {
    const double lf = checked_log_density(model, i, data(i), theta);
    const double mass = power_moments(model, i, theta, 1.0 + tau, false, ctx).mass;
    Vector v(1);
    v(0) = mass - (1.0 + 1.0 / tau) * std::exp(tau * lf);
    return v;
  });
  return total(0);
}

Vector estimating_equation(const ModelFamily& model, const Vector& data, const Vector& theta, double tau,
                           const EvalContext& ctx) {
  check_tau(tau, true, "estimating_equation");
  check_inputs(model, data, theta, "estimating_equation");
  const auto p = static_cast<Eigen::Index>(model.dim());
  return ordered_mean(model.size(), p, ctx.threads, [&](std::size_t i) -> Vector {
    const double lf = checked_log_density(model, i, data(i), theta);
    const Vector u = model.score(i, data(i), theta);
    if (tau == 0.0) return u;
    return std::exp(tau * lf) * u - power_moments(model, i, theta, 1.0 + tau, false, ctx).first;
  });
}

SandwichCov make_sandwich(Matrix psi, Matrix omega, double tau) {
  psi = 0.5 * (psi + psi.transpose()).eval();
  omega = 0.5 * (omega + omega.transpose()).eval();
  const Matrix psi_inv = spd_inverse(psi, "sandwich_cov: Psi");
  Eigen::SelfAdjointEigenSolver<Matrix> oe(omega, Eigen::EigenvaluesOnly);
  const double omax = oe.eigenvalues().cwiseAbs().maxCoeff();
  if (oe.eigenvalues().minCoeff() < -1e-9 * std::max(omax, 1e-300)) {
    std::ostringstream os;
    os << "sandwich_cov: Omega is not positive semidefinite (smallest eigenvalue " << oe.eigenvalues().minCoeff()
       << ")";
    throw NumericalError(os.str());
  }
  SandwichCov out;
  out.sigma = psi_inv * omega * psi_inv;
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose()).eval();
  out.psi = std::move(psi);
  out.omega = std::move(omega);
  out.tau = tau;
  Eigen::SelfAdjointEigenSolver<Matrix> se(out.sigma, Eigen::EigenvaluesOnly);
  out.sigma_eigenvalues = se.eigenvalues();
  return out;
}

SandwichCov sandwich_cov(const ModelFamily& model, const Vector& theta, double tau, const EvalContext& ctx) {
  check_tau(tau, true, "sandwich_cov");
  check_parameter(theta, model.dim(), "sandwich_cov");
  if (!model.admissible(theta)) throw DomainError("sandwich_cov: parameter outside the model domain");
  const auto n = model.size();
  const auto p = static_cast<Eigen::Index>(model.dim());
  std::vector<Matrix> psi_parts(n);
  std::vector<Matrix> omega_parts(n);
  detail::parallel_for(
      n,
      [&](std::size_t i) {
        const PowerMoments m1 = power_moments(model, i, theta, 1.0 + tau, true, ctx);
        const PowerMoments m2 = power_moments(model, i, theta, 1.0 + 2.0 * tau, true, ctx);
        psi_parts[i] = m1.second;
        omega_parts[i] = m2.second - m1.first * m1.first.transpose();
      },
      ctx.threads);
  Matrix psi = Matrix::Zero(p, p);
  Matrix omega = Matrix::Zero(p, p);
  for (std::size_t i = 0; i < n; ++i) {
    psi += psi_parts[i];
    omega += omega_parts[i];
  }
  return make_sandwich(psi / static_cast<double>(n), omega / static_cast<double>(n), tau);
}

namespace {

// Objective minimised by the descent fallback: the DPD objective for tau > 0,
// the negative mean log-likelihood at tau = 0.
double solver_objective(const ModelFamily& model, const Vector& data, const Vector& theta, double tau,
                        const EvalContext& ctx) {
  if (tau > 0.0) return dpd_objective(model, data, theta, tau, ctx);
  double acc = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) acc -= model.log_density(i, data(i), theta);
  return acc / static_cast<double>(model.size());
}

Matrix equation_jacobian(const ModelFamily& model, const Vector& data, const Vector& theta, double tau,
                         double step, const EvalContext& ctx) {
  const auto p = theta.size();
  Matrix jac(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = step * std::max(1.0, std::abs(theta(j)));
    Vector hi = theta;
    Vector lo = theta;
    hi(j) += h;
    lo(j) -= h;
    if (model.admissible(lo)) {
      jac.col(j) = (estimating_equation(model, data, hi, tau, ctx) - estimating_equation(model, data, lo, tau, ctx)) /
                   (2.0 * h);
    } else {
      jac.col(j) = (estimating_equation(model, data, hi, tau, ctx) - estimating_equation(model, data, theta, tau, ctx)) / h;
    }
  }
  return jac;
}

FitResult solve_from(const ModelFamily& model, const Vector& data, double tau, Vector theta,
                     const SolverOptions& opts, const EvalContext& ctx) {
  check_inputs(model, data, theta, "fit_mdpde");

  FitResult result;
  result.tau = tau;
  Vector eq = estimating_equation(model, data, theta, tau, ctx);
  double norm = eq.lpNorm<Eigen::Infinity>();
  const double grad_scale = tau > 0.0 ? -(1.0 + tau) : -1.0;

  for (int it = 0; it < opts.max_iterations; ++it) {
    if (norm < opts.tolerance) {
      result.theta = theta;
      result.converged = true;
      result.iterations = it;
      result.equation_norm = norm;
      return result;
    }

    bool accepted = false;
    const Matrix jac = equation_jacobian(model, data, theta, tau, opts.jacobian_step, ctx);
    Eigen::JacobiSVD<Matrix> svd(jac, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (jac.allFinite() && sv(0) > 0.0 && sv(sv.size() - 1) > opts.jacobian_condition * sv(0)) {
      const Vector delta = -svd.solve(eq);
      const double f0 = eq.squaredNorm();
      double lambda = 1.0;
      for (int ls = 0; ls < 40 && !accepted; ++ls, lambda *= 0.5) {
        const Vector cand = theta + lambda * delta;
        if (!model.admissible(cand)) continue;
        const Vector ceq = estimating_equation(model, data, cand, tau, ctx);
        if (ceq.allFinite() && ceq.squaredNorm() <= (1.0 - 1e-4 * lambda) * f0) {
          theta = cand;
          eq = ceq;
          accepted = true;
        }
      }
    }

    if (!accepted) {
      // Descent step on the objective, whose gradient is a multiple of the equation.
      const Vector grad = grad_scale * eq;
      const double obj = solver_objective(model, data, theta, tau, ctx);
      double lambda = 1.0 / std::max(1.0, grad.norm());
      for (int ls = 0; ls < 60 && !accepted; ++ls, lambda *= 0.5) {
        const Vector cand = theta - lambda * grad;
        if (!model.admissible(cand)) continue;
        const double cobj = solver_objective(model, data, cand, tau, ctx);
        if (std::isfinite(cobj) && cobj <= obj - 1e-4 * lambda * grad.squaredNorm()) {
          theta = cand;
          eq = estimating_equation(model, data, theta, tau, ctx);
          accepted = true;
        }
      }
      ++result.gradient_steps;
      if (!accepted) {
        std::ostringstream os;
        os << "fit_mdpde: no descent direction at iteration " << it << " (equation norm " << norm << ")";
        throw ConvergenceError(os.str(), theta, norm, it);
      }
    }
    norm = eq.lpNorm<Eigen::Infinity>();
  }
  if (norm < opts.tolerance) {
    result.theta = theta;
    result.converged = true;
    result.iterations = opts.max_iterations;
    result.equation_norm = norm;
    return result;
  }
  std::ostringstream os;
  os << "fit_mdpde: equation norm " << norm << " above tolerance " << opts.tolerance << " after "
     << opts.max_iterations << " iterations";
  throw ConvergenceError(os.str(), theta, norm, opts.max_iterations);
}

}  // namespace

FitResult fit_mdpde(const ModelFamily& model, const Vector& data, double tau, const Vector& init,
                    const SolverOptions& opts, const EvalContext& ctx) {
  check_tau(tau, true, "fit_mdpde");
  if (init.size() != 0) return solve_from(model, data, tau, init, opts, ctx);

  std::vector<Vector> starts{model.initial_estimate(data)};
  if (tau > 0.0) {
    // The likelihood start can sit in the basin of a degenerate root (e.g. an
    // exploding scale under gross outliers); keep whichever converged root
    // has the lower objective.
    Vector robust = model.robust_initial_estimate(data);
    if (robust.size() == starts.front().size() && robust != starts.front()) starts.push_back(std::move(robust));
  }
  std::optional<FitResult> best;
  double best_obj = std::numeric_limits<double>::infinity();
  std::optional<ConvergenceError> last_error;
  for (const Vector& start : starts) {
    try {
      FitResult r = solve_from(model, data, tau, start, opts, ctx);
      if (starts.size() == 1) return r;
      const double obj = dpd_objective(model, data, r.theta, tau, ctx);
      if (!best || obj < best_obj) {
        best_obj = obj;
        best = std::move(r);
      }
    } catch (const ConvergenceError& e) {
      last_error = e;
    }
  }
  if (best) return *best;
  throw *last_error;
}

}  // namespace dpdwald
