#include "dpdwald/robustness.hpp"

#include "dpdwald/chisq.hpp"
#include "parallel.hpp"

#include <cmath>
#include <sstream>

namespace dpdwald {

ContaminationSpec ContaminationSpec::single(std::size_t index, double t) {
  ContaminationSpec s;
  s.mode = Mode::single_direction;
  s.index = index;
  s.points = Vector::Constant(1, t);
  return s;
}

ContaminationSpec ContaminationSpec::all(Vector t) {
  ContaminationSpec s;
  s.mode = Mode::all_directions;
  s.points = std::move(t);
  return s;
}

ContaminationSpec ContaminationSpec::all_at(std::size_t n, double t) {
  return all(Vector::Constant(static_cast<Eigen::Index>(n), t));
}

InfluenceAnalyzer::InfluenceAnalyzer(const ModelFamily& model, Vector theta0, double tau, EvalContext ctx)
    : model_(&model), theta0_(std::move(theta0)), tau_(tau), ctx_(ctx) {
  check_parameter(theta0_, model.dim(), "InfluenceAnalyzer");
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw DomainError("InfluenceAnalyzer: tau must be >= 0");
  cov_ = sandwich_cov(model, theta0_, tau_, ctx_);
  psi_inv_ = spd_inverse(cov_.psi, "InfluenceAnalyzer: Psi");
  sigma_inv_ = spd_inverse(cov_.sigma, "InfluenceAnalyzer: Sigma", 1e-14);
  xi_.resize(model.size());
  detail::parallel_for(
      model.size(), [&](std::size_t i) { xi_[i] = xi_vector(model, i, theta0_, tau_, ctx_); }, ctx_.threads);
}

Vector InfluenceAnalyzer::d_vector(std::size_t i, double t) const {
  if (i >= model_->size()) throw DomainError("d_vector: observation index out of range");
  if (!model_->in_support(t)) {
    std::ostringstream os;
    os << "contamination point " << t << " is outside the support";
    throw DomainError(os.str());
  }
  const double lf = model_->log_density(i, t, theta0_);
  const Vector u = model_->score(i, t, theta0_);
  const double w = std::exp(tau_ * lf);
  // f^tau u -> 0 in the tails for tau > 0 even when the density underflows.
  if (tau_ > 0.0 && w == 0.0) return -xi_[i];
  return w * u - xi_[i];
}

Vector InfluenceAnalyzer::if_mdpde(const ContaminationSpec& spec) const {
  const auto n = model_->size();
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(model_->dim()));
  if (spec.mode == ContaminationSpec::Mode::single_direction) {
    if (spec.points.size() != 1) throw DomainError("if_mdpde: single-direction contamination needs one point");
    acc = d_vector(spec.index, spec.points(0));
  } else {
    if (static_cast<std::size_t>(spec.points.size()) != n) {
      throw DomainError("if_mdpde: all-direction contamination needs one point per observation");
    }
    for (std::size_t i = 0; i < n; ++i) acc += d_vector(i, spec.points(static_cast<Eigen::Index>(i)));
  }
  return psi_inv_ * acc / static_cast<double>(n);
}

double InfluenceAnalyzer::first_order_if(const ContaminationSpec& spec) const {
  // The functional at the null model is theta0 itself.
  const Vector bias = theta0_ - theta0_;
  return 2.0 * bias.dot(sigma_inv_ * if_mdpde(spec));
}

double InfluenceAnalyzer::if2_simple(const ContaminationSpec& spec) const {
  const Vector v = if_mdpde(spec);
  return std::max(0.0, 2.0 * v.dot(sigma_inv_ * v));
}

namespace {

Matrix projector(const Matrix& H, const Matrix& sigma) {
  if (H.rows() != sigma.rows()) throw DomainError("composite influence: H has the wrong number of rows");
  const Matrix middle = spd_inverse(H.transpose() * sigma * H, "composite influence: H^T Sigma H", 1e-14);
  return H * middle * H.transpose();
}

}  // namespace

double InfluenceAnalyzer::if2_composite(const ContaminationSpec& spec, const Matrix& H) const {
  const Vector v = if_mdpde(spec);
  return std::max(0.0, 2.0 * v.dot(projector(H, cov_.sigma) * v));
}

double InfluenceAnalyzer::pif(const ContaminationSpec& spec, const Vector& d, double alpha, const Matrix& H) const {
  if (d.size() != theta0_.size()) throw DomainError("pif: d has the wrong length");
  const Matrix A = H.size() == 0 ? sigma_inv_ : projector(H, cov_.sigma);
  const double df = H.size() == 0 ? static_cast<double>(d.size()) : static_cast<double>(H.cols());
  const Vector Ad = A * d;
  const double delta = std::max(0.0, d.dot(Ad));
  if (Ad.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  return kstar(df, delta, alpha) * Ad.dot(if_mdpde(spec));
}

double InfluenceAnalyzer::lif(const ContaminationSpec& spec, double alpha, const Matrix& H) const {
  return pif(spec, Vector::Zero(theta0_.size()), alpha, H);
}

Vector profile_grid(double center, double half_width, int points) {
  if (points < 2 || !(half_width > 0.0)) throw DomainError("profile_grid: need >= 2 points and a positive width");
  return Vector::LinSpaced(points, center - half_width, center + half_width);
}

Vector default_profile_grid(const ModelFamily& model, const Vector& theta0, std::optional<std::size_t> index,
                            int points) {
  double center = 0.0;
  double sd = 0.0;
  if (index) {
    const Spread s = model.spread(*index, theta0);
    center = s.center;
    sd = s.scale;
  } else {
    for (std::size_t i = 0; i < model.size(); ++i) {
      const Spread s = model.spread(i, theta0);
      center += s.center;
      sd += s.scale;
    }
    center /= static_cast<double>(model.size());
    sd /= static_cast<double>(model.size());
  }
  const double half = std::max(20.0, 10.0 * sd);
  if (model.support() == Support::nonnegative_integer) {
    const double lo = std::max(0.0, std::floor(center - half));
    const double hi = std::ceil(center + half);
    const auto count = static_cast<Eigen::Index>(hi - lo) + 1;
    return Vector::LinSpaced(count, lo, hi);
  }
  return profile_grid(center, half, points);
}

IfProfile influence_profile(const InfluenceAnalyzer& analyzer, const Vector& grid, const ProfileRequest& request,
                            unsigned threads) {
  IfProfile out;
  out.grid = grid;
  out.tau = analyzer.tau();
  out.values.resize(grid.size());
  const auto n = analyzer.model().size();
  detail::parallel_for(
      static_cast<std::size_t>(grid.size()),
      [&](std::size_t g) {
        const double t = grid(static_cast<Eigen::Index>(g));
        const ContaminationSpec spec =
            request.index ? ContaminationSpec::single(*request.index, t) : ContaminationSpec::all_at(n, t);
        double v = 0.0;
        switch (request.kind) {
          case ProfileKind::if_norm:
            v = analyzer.if_mdpde(spec).norm();
            break;
          case ProfileKind::if2_simple:
            v = analyzer.if2_simple(spec);
            break;
          case ProfileKind::if2_composite:
            v = analyzer.if2_composite(spec, request.H);
            break;
          case ProfileKind::pif:
            v = analyzer.pif(spec, request.d, request.alpha, request.H);
            break;
        }
        out.values(static_cast<Eigen::Index>(g)) = v;
      },
      threads);
  return out;
}

}  // namespace dpdwald
