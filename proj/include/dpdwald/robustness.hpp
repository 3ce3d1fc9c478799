#pragma once

#include "dpdwald/mdpde.hpp"
#include "dpdwald/model.hpp"
#include "dpdwald/types.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace dpdwald {

/// Point contamination of the null model, either in one observation's
/// distribution or in every observation's.
struct ContaminationSpec {
  enum class Mode { single_direction, all_directions };

  Mode mode = Mode::single_direction;
  std::size_t index = 0;  // contaminated observation in single-direction mode
  Vector points;          // length 1 (single) or n (all)

  static ContaminationSpec single(std::size_t index, double t);
  static ContaminationSpec all(Vector t);
  static ContaminationSpec all_at(std::size_t n, double t);
};

struct IfProfile {
  Vector grid;
  Vector values;
  double tau = 0.0;
};

/// Influence quantities of the estimator and the Wald-type statistics at the
/// null model. Psi^{-1}, Sigma and xi_i are computed once at construction.
class InfluenceAnalyzer {
 public:
  InfluenceAnalyzer(const ModelFamily& model, Vector theta0, double tau, EvalContext ctx = {});

  const ModelFamily& model() const noexcept { return *model_; }
  const Vector& theta0() const noexcept { return theta0_; }
  double tau() const noexcept { return tau_; }
  const SandwichCov& sandwich() const noexcept { return cov_; }
  const Vector& xi(std::size_t i) const { return xi_.at(i); }

  /// D_i(t) = f_i(t)^tau u_i(t) - xi_i.
  Vector d_vector(std::size_t i, double t) const;

  /// Psi^{-1} (1/n) D_{i0}(t) or Psi^{-1} (1/n) sum_i D_i(t_i).
  Vector if_mdpde(const ContaminationSpec& spec) const;

  /// First-order influence of either statistic at the null:
  /// 2 (T(F_theta0) - theta0)^T Sigma^{-1} IF, zero by Fisher consistency.
  double first_order_if(const ContaminationSpec& spec) const;

  /// 2 IF^T Sigma^{-1} IF.
  double if2_simple(const ContaminationSpec& spec) const;
  /// 2 IF^T H (H^T Sigma H)^{-1} H^T IF.
  double if2_composite(const ContaminationSpec& spec, const Matrix& H) const;

  /// K*_p(d^T Sigma^{-1} d) d^T Sigma^{-1} IF for the simple test; with H the
  /// composite version K*_r(delta*) d^T H (H^T Sigma H)^{-1} H^T IF.
  double pif(const ContaminationSpec& spec, const Vector& d, double alpha = 0.05, const Matrix& H = Matrix()) const;

  /// Level influence function; identically zero.
  double lif(const ContaminationSpec& spec, double alpha = 0.05, const Matrix& H = Matrix()) const;

 private:
  const ModelFamily* model_;
  Vector theta0_;
  double tau_;
  EvalContext ctx_;
  SandwichCov cov_;
  Matrix psi_inv_;
  Matrix sigma_inv_;
  std::vector<Vector> xi_;
};

/// `points` evenly spaced values on [center - half_width, center + half_width].
Vector profile_grid(double center, double half_width, int points = 401);

/// Default profile grid: centered on the null mean of observation `index`
/// (or the average null mean when absent), half-width max(20, 10 sd).
/// Integer-support models get every integer in range.
Vector default_profile_grid(const ModelFamily& model, const Vector& theta0, std::optional<std::size_t> index,
                            int points = 401);

enum class ProfileKind { if_norm, if2_simple, if2_composite, pif };

struct ProfileRequest {
  ProfileKind kind = ProfileKind::if2_simple;
  std::optional<std::size_t> index;  // single direction; all directions when absent
  Matrix H;                          // composite quantities
  Vector d;                          // pif direction
  double alpha = 0.05;
};

/// Evaluates the requested quantity at each grid point (all directions use
/// t_i = t for every i). Grid points run in parallel; output order is the grid's.
IfProfile influence_profile(const InfluenceAnalyzer& analyzer, const Vector& grid, const ProfileRequest& request,
                            unsigned threads = 0);

}  // namespace dpdwald
