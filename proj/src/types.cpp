#include "dpdwald/types.hpp"

#include <Eigen/Eigenvalues>

#include <cstdlib>
#include <sstream>
#include <thread>

namespace dpdwald {

void check_parameter(const Vector& theta, std::size_t expected_dim, const char* what) {
  if (static_cast<std::size_t>(theta.size()) != expected_dim) {
    std::ostringstream os;
    os << what << ": expected parameter of length " << expected_dim << ", got " << theta.size();
    throw DomainError(os.str());
  }
  if (!theta.allFinite()) throw DomainError(std::string(what) + ": parameter has non-finite entries");
}

Matrix spd_inverse(const Matrix& m, const char* what, double ratio) {
  if (m.rows() != m.cols() || m.rows() == 0) throw DomainError(std::string(what) + ": matrix must be square");
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  const auto& ev = eig.eigenvalues();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  if (!(hi > 0.0) || !(lo > ratio * hi)) {
    std::ostringstream os;
    os << what << ": matrix is not positive definite (smallest eigenvalue " << lo << ", largest " << hi << ")";
    throw RankDeficiencyError(os.str(), lo, hi);
  }
  Matrix inv = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (inv + inv.transpose());
}

Matrix checked_inverse(const Matrix& m, const char* what, double ratio) {
  if (m.rows() != m.cols() || m.rows() == 0) throw DomainError(std::string(what) + ": matrix must be square");
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  const double hi = sv(0);
  const double lo = sv(sv.size() - 1);
  if (!(hi > 0.0) || !(lo > ratio * hi)) {
    std::ostringstream os;
    os << what << ": matrix is singular (smallest singular value " << lo << ", largest " << hi << ")";
    throw RankDeficiencyError(os.str(), lo, hi);
  }
  return m.fullPivLu().inverse();
}

unsigned worker_threads() {
  if (const char* env = std::getenv("DPDWALD_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

}  // namespace dpdwald
