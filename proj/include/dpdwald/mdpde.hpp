#pragma once

#include "dpdwald/integration.hpp"
#include "dpdwald/model.hpp"
#include "dpdwald/types.hpp"

#include <string>

namespace dpdwald {

enum class MomentRoute {
  automatic,   // model's analytic moments when it has them
  definition,  // always integrate score and density directly
};

struct EvalContext {
  IntegrationOptions integration{};
  MomentRoute route = MomentRoute::automatic;
  unsigned threads = 0;  // 0: worker_threads()
};

PowerMoments power_moments(const ModelFamily& model, std::size_t i, const Vector& theta, double a,
                           bool need_second, const EvalContext& ctx = {});

/// (1/n) sum_i [ int f_i^{1+tau} - (1 + 1/tau) f_i(y_i)^tau ], tau > 0.
double dpd_objective(const ModelFamily& model, const Vector& data, const Vector& theta, double tau,
                     const EvalContext& ctx = {});

/// (1/n) sum_i [ f_i(y_i)^tau u_i(y_i) - xi_i ]. Its zero is the estimator;
/// tau = 0 gives the mean score. For tau > 0 the objective's gradient is
/// -(1 + tau) times this vector.
Vector estimating_equation(const ModelFamily& model, const Vector& data, const Vector& theta, double tau,
                           const EvalContext& ctx = {});

/// xi_i = int u_i f_i^{1+tau}.
Vector xi_vector(const ModelFamily& model, std::size_t i, const Vector& theta, double tau,
                 const EvalContext& ctx = {});

struct SandwichCov {
  Matrix psi;
  Matrix omega;
  Matrix sigma;
  double tau = 0.0;
  Vector sigma_eigenvalues;
};

/// Psi = (1/n) sum J_i, Omega = (1/n) sum [int u u^T f^{1+2tau} - xi xi^T],
/// Sigma = Psi^{-1} Omega Psi^{-1}, all at finite n.
SandwichCov sandwich_cov(const ModelFamily& model, const Vector& theta, double tau, const EvalContext& ctx = {});

/// Builds the sandwich from already assembled Psi and Omega (symmetrised,
/// checked for positive definiteness).
SandwichCov make_sandwich(Matrix psi, Matrix omega, double tau);

struct SolverOptions {
  double tolerance = 1e-8;  // on the infinity norm of the estimating equation
  int max_iterations = 200;
  double jacobian_step = 1e-6;
  // Fall back to gradient steps when the Jacobian's singular value ratio drops below this.
  double jacobian_condition = 1e-12;
};

struct FitResult {
  Vector theta;
  bool converged = false;
  int iterations = 0;
  int gradient_steps = 0;
  double equation_norm = 0.0;
  double tau = 0.0;
};

/// Damped Newton on the estimating equation with a line search on its squared
/// norm; descent steps on the objective when Newton stalls. Starts from `init`
/// or, when empty, from the maximum likelihood estimate and (tau > 0) the
/// model's robust start, keeping the converged root with the smaller
/// objective. Throws ConvergenceError if the tolerance is not met.
FitResult fit_mdpde(const ModelFamily& model, const Vector& data, double tau, const Vector& init = Vector(),
                    const SolverOptions& opts = {}, const EvalContext& ctx = {});

}  // namespace dpdwald
