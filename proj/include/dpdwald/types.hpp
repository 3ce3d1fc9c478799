#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dpdwald {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Parameter vectors are plain Eigen vectors; length and finiteness are
// validated at API boundaries via check_parameter().
using ParamVector = Vector;

/// Input outside the model's domain (bad data, non-finite density, bad shape).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure (integral, series, solver) failed to meet tolerance.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A matrix that must be invertible is numerically rank deficient.
class RankDeficiencyError : public NumericalError {
 public:
  RankDeficiencyError(const std::string& what, double min_eigenvalue, double max_eigenvalue)
      : NumericalError(what), min_eigenvalue_(min_eigenvalue), max_eigenvalue_(max_eigenvalue) {}

  double min_eigenvalue() const noexcept { return min_eigenvalue_; }
  double max_eigenvalue() const noexcept { return max_eigenvalue_; }

 private:
  double min_eigenvalue_;
  double max_eigenvalue_;
};

/// The MDPDE solver did not reach tolerance. Carries the last iterate.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, Vector last_iterate, double equation_norm, int iterations)
      : NumericalError(what),
        last_iterate_(std::move(last_iterate)),
        equation_norm_(equation_norm),
        iterations_(iterations) {}

  const Vector& last_iterate() const noexcept { return last_iterate_; }
  double equation_norm() const noexcept { return equation_norm_; }
  int iterations() const noexcept { return iterations_; }

 private:
  Vector last_iterate_;
  double equation_norm_;
  int iterations_;
};

void check_parameter(const Vector& theta, std::size_t expected_dim, const char* what);

/// Inverse of a symmetric positive definite matrix. Throws RankDeficiencyError
/// when the smallest eigenvalue falls below `ratio` times the largest.
Matrix spd_inverse(const Matrix& m, const char* what, double ratio = 1e-10);

/// Inverse of a general square matrix via full-pivot LU; throws on singularity.
Matrix checked_inverse(const Matrix& m, const char* what, double ratio = 1e-13);

/// Number of worker threads: DPDWALD_THREADS if set and positive, else hardware concurrency.
unsigned worker_threads();

}  // namespace dpdwald
