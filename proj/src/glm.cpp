#include "dpdwald/glm.hpp"

#include "dpdwald/chisq.hpp"
#include "dpdwald/csv.hpp"
#include "parallel.hpp"

#include <boost/math/constants/constants.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace dpdwald {

namespace {

constexpr double kTwoPi = boost::math::constants::two_pi<double>();

[[noreturn]] void bad_family() { throw DomainError("unknown GLM family"); }

}  // namespace

GlmFamily GlmFamily::parse(const std::string& name) {
  if (name == "normal" || name == "gaussian" || name == "normal-identity") return normal();
  if (name == "poisson" || name == "poisson-log") return poisson();
  throw DomainError("unknown family '" + name + "' (want normal or poisson)");
}

std::string GlmFamily::name() const { return kind == GlmKind::normal_identity ? "normal" : "poisson"; }

Support GlmFamily::support() const {
  return kind == GlmKind::normal_identity ? Support::continuous_real : Support::nonnegative_integer;
}

double GlmFamily::a(double phi) const { return kind == GlmKind::normal_identity ? phi : 1.0; }
double GlmFamily::a_prime(double) const { return kind == GlmKind::normal_identity ? 1.0 : 0.0; }

double GlmFamily::b(double eta) const {
  switch (kind) {
    case GlmKind::normal_identity:
      return 0.5 * eta * eta;
    case GlmKind::poisson_log:
      return std::exp(eta);
  }
  bad_family();
}

double GlmFamily::b_prime(double eta) const { return kind == GlmKind::normal_identity ? eta : std::exp(eta); }
double GlmFamily::b_second(double eta) const { return kind == GlmKind::normal_identity ? 1.0 : std::exp(eta); }

double GlmFamily::c(double y, double phi) const {
  switch (kind) {
    case GlmKind::normal_identity:
      return -0.5 * y * y / phi - 0.5 * std::log(kTwoPi * phi);
    case GlmKind::poisson_log:
      return -std::lgamma(y + 1.0);
  }
  bad_family();
}

double GlmFamily::dc_dphi(double y, double phi) const {
  if (kind == GlmKind::poisson_log) return 0.0;
  return 0.5 * y * y / (phi * phi) - 0.5 / phi;
}

double GlmFamily::link(double mu) const { return kind == GlmKind::normal_identity ? mu : std::log(mu); }
double GlmFamily::link_derivative(double mu) const { return kind == GlmKind::normal_identity ? 1.0 : 1.0 / mu; }

namespace {

// Stirling series remainder log(n!) - [(n+1/2) log n - n + log sqrt(2 pi)].
double stirlerr(double n) {
  constexpr double S0 = 1.0 / 12.0;
  constexpr double S1 = 1.0 / 360.0;
  constexpr double S2 = 1.0 / 1260.0;
  constexpr double S3 = 1.0 / 1680.0;
  constexpr double S4 = 1.0 / 1188.0;
  if (n <= 15.0) return std::lgamma(n + 1.0) - (n + 0.5) * std::log(n) + n - 0.5 * std::log(kTwoPi);
  const double nn = n * n;
  if (n > 500.0) return (S0 - S1 / nn) / n;
  if (n > 80.0) return (S0 - (S1 - S2 / nn) / nn) / n;
  if (n > 35.0) return (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n;
  return (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n;
}

// Deviance term x log(x/m) + m - x without cancellation near x = m;
// dev = x - m is passed separately so callers can supply it exactly.
double bd0(double x, double m, double dev) {
  if (std::abs(dev) < 0.1 * (x + m)) {
    double v = dev / (x + m);
    double s = dev * v;
    double ej = 2.0 * x * v;
    v *= v;
    for (int j = 1; j < 1000; ++j) {
      ej *= v;
      const double s1 = s + ej / (2 * j + 1);
      if (s1 == s) return s1;
      s = s1;
    }
    return s;
  }
  return x * std::log1p(dev / m) - dev;
}

// log f(mean + dev) for the continuous extension of the Poisson pmf.
double poisson_log_pmf_dev(double mean, double dev) {
  const double y = mean + dev;
  if (y < 0.0) return -std::numeric_limits<double>::infinity();
  if (y == 0.0) return -mean;
  return -stirlerr(y) - bd0(y, mean, dev) - 0.5 * std::log(kTwoPi * y);
}

}  // namespace

double poisson_log_pmf(double y, double mean) {
  if (!(mean > 0.0)) {
    if (mean == 0.0) return y == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    throw DomainError("poisson_log_pmf: negative mean");
  }
  if (y < 0.0) return -std::numeric_limits<double>::infinity();
  if (y == 0.0) return -mean;
  return poisson_log_pmf_dev(mean, y - mean);
}

// ---------------------------------------------------------------- designs

namespace {

// SplitMix64 (Steele, Lea, Flood 2014).
std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void check_n(int n, int min_n) {
  if (n < min_n) throw DomainError("design needs at least " + std::to_string(min_n) + " rows");
}

}  // namespace

FixedDesign FixedDesign::design1(int n, double a, double b) {
  check_n(n, 2);
  FixedDesign d;
  d.X.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    d.X(i, 1) = (i < n / 2) ? a : b;
  }
  d.label = "design1";
  return d;
}

FixedDesign FixedDesign::design2(int n, double mu, double sigma, std::uint64_t seed) {
  check_n(n, 2);
  if (!(sigma > 0.0)) throw DomainError("design2: sigma must be positive");
  FixedDesign d;
  d.X.resize(n, 2);
  std::uint64_t state = seed;
  for (int i = 0; i < n; ++i) {
    const double u = (static_cast<double>(splitmix64(state) >> 11) + 0.5) * 0x1.0p-53;
    d.X(i, 0) = 1.0;
    d.X(i, 1) = mu + sigma * normal_quantile(u);
  }
  d.label = "design2";
  return d;
}

FixedDesign FixedDesign::design3(int n) {
  check_n(n, 2);
  FixedDesign d;
  d.X.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    d.X(i, 0) = 1.0;
    d.X(i, 1) = i + 1.0;
  }
  d.label = "design3";
  return d;
}

FixedDesign FixedDesign::design4(int n) {
  check_n(n, 3);
  FixedDesign d;
  d.X.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    const double v = 1.0 / (i + 1.0);
    d.X(i, 0) = 1.0;
    d.X(i, 1) = v;
    d.X(i, 2) = v * v;
  }
  d.label = "design4";
  return d;
}

FixedDesign FixedDesign::by_name(const std::string& name, int n) {
  if (name == "design1" || name == "1") return design1(n);
  if (name == "design2" || name == "2") return design2(n);
  if (name == "design3" || name == "3") return design3(n);
  if (name == "design4" || name == "4") return design4(n);
  throw DomainError("unknown design '" + name + "' (want design1..design4 or a CSV path)");
}

FixedDesign FixedDesign::from_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (t.header[c] != "x" + std::to_string(c + 1)) {
      throw DomainError(path + ": design header must be x1,...,xk (column " + std::to_string(c + 1) + " is '" +
                        t.header[c] + "')");
    }
  }
  if (t.values.rows() == 0) throw DomainError(path + ": no observations");
  FixedDesign d;
  d.X = t.values;
  d.label = "user";
  return d;
}

void FixedDesign::to_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write " + path);
  std::vector<std::string> header;
  for (std::size_t c = 0; c < k(); ++c) header.push_back("x" + std::to_string(c + 1));
  write_csv(out, header, X);
}

Matrix FixedDesign::cx() const { return X.transpose() * X / static_cast<double>(X.rows()); }

// ---------------------------------------------------------------- model

GlmModel::GlmModel(GlmFamily family, FixedDesign design, std::optional<double> fixed_phi)
    : family_(family), design_(std::move(design)), fixed_phi_(fixed_phi) {
  if (design_.X.rows() == 0 || design_.X.cols() == 0) throw DomainError("GlmModel: empty design");
  if (!design_.X.allFinite()) throw DomainError("GlmModel: design has non-finite entries");
  if (fixed_phi_ && !family_.has_dispersion()) throw DomainError("GlmModel: this family has no dispersion parameter");
  if (fixed_phi_ && !(*fixed_phi_ > 0.0)) throw DomainError("GlmModel: fixed phi must be positive");
}

GlmTheta GlmModel::split(const Vector& theta) const {
  check_parameter(theta, dim(), "GlmModel");
  GlmTheta t;
  const auto k = static_cast<Eigen::Index>(design_.k());
  t.beta = theta.head(k);
  if (estimates_phi()) {
    t.phi = theta(k);
  } else {
    t.phi = fixed_phi_.value_or(1.0);
  }
  return t;
}

Vector GlmModel::join(const GlmTheta& t) const {
  Vector theta(static_cast<Eigen::Index>(dim()));
  theta.head(static_cast<Eigen::Index>(design_.k())) = t.beta;
  if (estimates_phi()) theta(static_cast<Eigen::Index>(design_.k())) = t.phi;
  return theta;
}

double GlmModel::eta(std::size_t i, const Vector& theta) const {
  return design_.X.row(static_cast<Eigen::Index>(i)).dot(theta.head(static_cast<Eigen::Index>(design_.k())));
}

bool GlmModel::admissible(const Vector& theta) const {
  if (static_cast<std::size_t>(theta.size()) != dim() || !theta.allFinite()) return false;
  if (estimates_phi() && !(theta(static_cast<Eigen::Index>(design_.k())) > 0.0)) return false;
  if (family_.kind == GlmKind::poisson_log) {
    // exp(eta) must stay representable.
    for (std::size_t i = 0; i < size(); ++i) {
      if (eta(i, theta) > 700.0) return false;
    }
  }
  return true;
}

double GlmModel::log_density(std::size_t i, double y, const Vector& theta) const {
  const double e = eta(i, theta);
  if (family_.kind == GlmKind::poisson_log) return poisson_log_pmf(y, std::exp(e));
  const double phi = estimates_phi() ? theta(static_cast<Eigen::Index>(design_.k())) : fixed_phi_.value_or(1.0);
  const double r = y - e;
  return -0.5 * std::log(kTwoPi * phi) - 0.5 * r * r / phi;
}

KValues k_functions(const GlmModel& model, double y, std::size_t i, const Vector& theta) {
  const double e = model.eta(i, theta);
  KValues k;
  if (model.family().kind == GlmKind::poisson_log) {
    k.k1 = y - std::exp(e);
    return k;
  }
  const double phi = model.split(theta).phi;
  const double r = y - e;
  k.k1 = r / phi;
  k.k2 = 0.5 * r * r / (phi * phi) - 0.5 / phi;
  return k;
}

Vector GlmModel::score(std::size_t i, double y, const Vector& theta) const {
  const KValues k = k_functions(*this, y, i, theta);
  Vector u(static_cast<Eigen::Index>(dim()));
  const auto kk = static_cast<Eigen::Index>(design_.k());
  u.head(kk) = k.k1 * design_.X.row(static_cast<Eigen::Index>(i)).transpose();
  if (estimates_phi()) u(kk) = *k.k2;
  return u;
}

Spread GlmModel::spread(std::size_t i, const Vector& theta) const {
  const double e = eta(i, theta);
  if (family_.kind == GlmKind::poisson_log) {
    const double mu = std::exp(e);
    return Spread{mu, std::sqrt(std::max(mu, 1.0))};
  }
  return Spread{e, std::sqrt(split(theta).phi)};
}

namespace {

// Normal gammas for a general exponent a = 1 + tau: under f^a / int f^a the
// residual is N(0, phi / a).
GammaIntegrals normal_gamma_exponent(double phi, double a) {
  GammaIntegrals g;
  g.mass = std::pow(kTwoPi * phi, 0.5 * (1.0 - a)) / std::sqrt(a);
  g.g1 = 0.0;
  g.g2 = g.mass / (2.0 * phi) * (1.0 / a - 1.0);
  g.g11 = g.mass / (a * phi);
  g.g12 = 0.0;
  g.g22 = g.mass / (4.0 * phi * phi) * (3.0 / (a * a) - 2.0 / a + 1.0);
  return g;
}

// Large Poisson means: the count sum equals the integral of the continuous
// extension up to exponentially small Euler-Maclaurin terms. Integrating in
// z = (y - mu)/sqrt(mu) keeps y - mu exact where y itself would round.
GammaIntegrals poisson_gamma_large_mean(double mu, double a, const IntegrationOptions& o) {
  const double sd = std::sqrt(mu);
  auto integrand = [&](double z, Eigen::Ref<Vector> out) {
    const double dev = z * sd;
    const double w = std::exp(a * poisson_log_pmf_dev(mu, dev)) * sd;
    out(0) = w;
    out(1) = w * dev;
    out(2) = w * dev * dev;
  };
  const IntegralEngine engine(o);
  const double half = o.large_mean_window_sds;
  const IntegralResult r = engine.integrate(integrand, 3, -half, half);
  GammaIntegrals g;
  g.mass = r.value(0);
  g.g1 = r.value(1);
  g.g11 = r.value(2);
  g.error = r.error;
  return g;
}

GammaIntegrals numeric_gamma_exponent(const GlmModel& model, std::size_t i, const Vector& theta, double a) {
  if (model.family().kind == GlmKind::poisson_log) {
    const double mu = std::exp(model.eta(i, theta));
    if (mu > model.integration().large_mean) return poisson_gamma_large_mean(mu, a, model.integration());
  }
  const bool two = model.family().has_dispersion();
  const int dim = two ? 6 : 3;
  auto integrand = [&](double y, Eigen::Ref<Vector> out) {
    const double w = std::exp(a * model.log_density(i, y, theta));
    if (w == 0.0) {
      out.setZero();
      return;
    }
    const KValues k = k_functions(model, y, i, theta);
    out(0) = w;
    out(1) = w * k.k1;
    out(2) = w * k.k1 * k.k1;
    if (two) {
      out(3) = w * *k.k2;
      out(4) = w * k.k1 * *k.k2;
      out(5) = w * *k.k2 * *k.k2;
    }
  };
  const IntegralEngine engine(model.integration());
  const Spread s = model.spread(i, theta);
  const IntegralResult r = engine.over_support(model.support(), integrand, dim, s.center, s.scale);
  GammaIntegrals g;
  g.mass = r.value(0);
  g.g1 = r.value(1);
  g.g11 = r.value(2);
  if (two) {
    g.g2 = r.value(3);
    g.g12 = r.value(4);
    g.g22 = r.value(5);
  }
  g.error = r.error;
  return g;
}

// Poisson sums of f^a, K1 f^a, K1^2 f^a outward from the mode, with the pmf
// advanced by log f(y+1) = log f(y) + log mu - log(y+1).
GammaIntegrals poisson_gamma_series(double mu, double a, const IntegrationOptions& o) {
  GammaIntegrals g;
  const double log_mu = std::log(mu);
  const double mode = std::floor(mu);
  const double lf_mode = poisson_log_pmf(mode, mu);
  int terms = 0;
  auto run = [&](double y, double lf, int dir) {
    int quiet = 0;
    while (y >= 0.0 && terms < o.max_terms) {
      const double w = std::exp(a * lf);
      const double k = y - mu;
      g.mass += w;
      g.g1 += w * k;
      g.g11 += w * k * k;
      ++terms;
      quiet = (w * (1.0 + k * k) < o.term_tol * std::max(1e-300, g.mass)) ? quiet + 1 : 0;
      if (quiet >= o.quiet_terms) return;
      if (dir > 0) {
        lf += log_mu - std::log(y + 1.0);
        y += 1.0;
      } else {
        if (y == 0.0) return;
        lf += std::log(y) - log_mu;
        y -= 1.0;
      }
    }
    if (y >= 0.0 && terms >= o.max_terms) throw NumericalError("Poisson moment series hit the term cap");
  };
  run(mode, lf_mode, +1);
  if (mode > 0.0) run(mode - 1.0, lf_mode + std::log(mode) - log_mu, -1);
  return g;
}

// Gammas used for assembly: closed forms or direct series where they exist.
GammaIntegrals model_gammas(const GlmModel& model, std::size_t i, const Vector& theta, double a) {
  if (model.family().kind == GlmKind::normal_identity) return normal_gamma_exponent(model.split(theta).phi, a);
  const double mu = std::exp(model.eta(i, theta));
  if (mu > 0.0 && mu <= model.integration().large_mean) return poisson_gamma_series(mu, a, model.integration());
  return numeric_gamma_exponent(model, i, theta, a);
}

}  // namespace

std::optional<PowerMoments> GlmModel::analytic_moments(std::size_t i, const Vector& theta, double a,
                                                       bool need_second) const {
  const GammaIntegrals g = model_gammas(*this, i, theta, a);
  const auto k = static_cast<Eigen::Index>(design_.k());
  const auto p = static_cast<Eigen::Index>(dim());
  const Vector x = design_.X.row(static_cast<Eigen::Index>(i)).transpose();
  PowerMoments m;
  m.mass = g.mass;
  m.first.resize(p);
  m.first.head(k) = g.g1 * x;
  if (estimates_phi()) m.first(k) = g.g2;
  if (need_second) {
    m.second.resize(p, p);
    m.second.topLeftCorner(k, k) = g.g11 * x * x.transpose();
    if (estimates_phi()) {
      m.second.block(0, k, k, 1) = g.g12 * x;
      m.second.block(k, 0, 1, k) = g.g12 * x.transpose();
      m.second(k, k) = g.g22;
    }
  }
  return m;
}

Vector GlmModel::initial_estimate(const Vector& data) const {
  if (static_cast<std::size_t>(data.size()) != size()) throw DomainError("initial_estimate: data length mismatch");
  const Matrix& X = design_.X;
  const auto n = static_cast<double>(size());
  if (family_.kind == GlmKind::normal_identity) {
    const auto qr = X.colPivHouseholderQr();
    if (qr.rank() < X.cols()) throw RankDeficiencyError("initial_estimate: design is rank deficient", 0.0, 1.0);
    GlmTheta t;
    t.beta = qr.solve(data);
    const double rss = (data - X * t.beta).squaredNorm();
    t.phi = estimates_phi() ? rss / n : fixed_phi_.value_or(1.0);
    if (estimates_phi() && !(t.phi > 0.0)) throw DomainError("initial_estimate: residual variance is zero");
    return join(t);
  }
  // Poisson maximum likelihood by Newton's method with step halving.
  if (data.maxCoeff() <= 0.0) throw DomainError("initial_estimate: all counts are zero; the MLE does not exist");
  Vector beta = X.colPivHouseholderQr().solve((data.array() + 0.5).log().matrix());
  auto loglik = [&](const Vector& b) {
    const Vector e = X * b;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < e.size(); ++i) acc += data(i) * e(i) - std::exp(e(i));
    return acc;
  };
  double ll = loglik(beta);
  for (int it = 0; it < 200; ++it) {
    const Vector mu = (X * beta).array().exp().matrix();
    const Vector grad = X.transpose() * (data - mu);
    if (grad.lpNorm<Eigen::Infinity>() < 1e-13 * std::max(1.0, data.sum())) break;
    const Matrix hess = X.transpose() * mu.asDiagonal() * X;
    const Vector step = hess.ldlt().solve(grad);
    double lambda = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, lambda *= 0.5) {
      const Vector cand = beta + lambda * step;
      const double cll = loglik(cand);
      if (std::isfinite(cll) && cll >= ll) {
        beta = cand;
        moved = (cll > ll);
        ll = cll;
        break;
      }
    }
    if (!moved) break;
  }
  return beta;
}

Vector GlmModel::robust_initial_estimate(const Vector& data) const {
  if (family_.kind != GlmKind::normal_identity) return initial_estimate(data);
  const Vector ols = initial_estimate(data);
  const Matrix& X = design_.X;
  const auto k = static_cast<Eigen::Index>(design_.k());
  Vector beta = ols.head(k);
  // LAD by iteratively reweighted least squares.
  for (int it = 0; it < 100; ++it) {
    const Vector r = data - X * beta;
    const double floor = 1e-8 * std::max(1.0, r.cwiseAbs().maxCoeff());
    const Vector w = r.cwiseAbs().cwiseMax(floor).cwiseInverse();
    const Matrix xtwx = X.transpose() * w.asDiagonal() * X;
    const Vector next = xtwx.ldlt().solve(X.transpose() * w.asDiagonal() * data);
    if (!next.allFinite()) break;
    const double change = (next - beta).lpNorm<Eigen::Infinity>();
    beta = next;
    if (change < 1e-10 * std::max(1.0, beta.lpNorm<Eigen::Infinity>())) break;
  }
  GlmTheta t;
  t.beta = beta;
  t.phi = fixed_phi_.value_or(1.0);
  if (estimates_phi()) {
    std::vector<double> absr(static_cast<std::size_t>(data.size()));
    const Vector r = data - X * beta;
    for (Eigen::Index i = 0; i < r.size(); ++i) absr[static_cast<std::size_t>(i)] = std::abs(r(i));
    const auto mid = absr.begin() + static_cast<std::ptrdiff_t>(absr.size() / 2);
    std::nth_element(absr.begin(), mid, absr.end());
    const double s = 1.4826 * *mid;
    // A perfect partial fit leaves a zero MAD; fall back to the likelihood scale.
    t.phi = s > 0.0 ? s * s : split(ols).phi;
  }
  return join(t);
}

double GlmModel::sample(std::size_t i, const Vector& theta, std::mt19937_64& rng) const {
  const double e = eta(i, theta);
  if (family_.kind == GlmKind::poisson_log) {
    boost::random::poisson_distribution<long long, double> dist(std::exp(e));
    return static_cast<double>(dist(rng));
  }
  boost::random::normal_distribution<double> dist(e, std::sqrt(split(theta).phi));
  return dist(rng);
}

// ---------------------------------------------------------------- gammas and sandwich

GammaIntegrals gamma_integrals(const GlmModel& model, std::size_t i, const Vector& theta, double tau) {
  if (!(tau >= 0.0)) throw DomainError("gamma_integrals: tau must be >= 0");
  if (i >= model.size()) throw DomainError("gamma_integrals: observation index out of range");
  return numeric_gamma_exponent(model, i, theta, 1.0 + tau);
}

GammaIntegrals normal_gamma_closed(double phi, double tau) {
  if (!(phi > 0.0) || !(tau >= 0.0)) throw DomainError("normal_gamma_closed: need phi > 0 and tau >= 0");
  return normal_gamma_exponent(phi, 1.0 + tau);
}

SandwichCov glm_sandwich(const GlmModel& model, const Vector& theta, double tau) {
  if (!(tau >= 0.0)) throw DomainError("glm_sandwich: tau must be >= 0");
  if (!model.admissible(theta)) throw DomainError("glm_sandwich: parameter outside the model domain");
  const auto n = model.size();
  const auto k = static_cast<Eigen::Index>(model.design().k());
  const auto p = static_cast<Eigen::Index>(model.dim());
  const bool phi = model.estimates_phi();
  std::vector<GammaIntegrals> g1(n);
  std::vector<GammaIntegrals> g2(n);
  detail::parallel_for(n, [&](std::size_t i) {
    g1[i] = gamma_integrals(model, i, theta, tau);
    g2[i] = gamma_integrals(model, i, theta, 2.0 * tau);
  });
  Matrix psi = Matrix::Zero(p, p);
  Matrix omega = Matrix::Zero(p, p);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector x = model.design().X.row(static_cast<Eigen::Index>(i)).transpose();
    const Matrix xx = x * x.transpose();
    psi.topLeftCorner(k, k) += g1[i].g11 * xx;
    omega.topLeftCorner(k, k) += (g2[i].g11 - g1[i].g1 * g1[i].g1) * xx;
    if (phi) {
      psi.block(0, k, k, 1) += g1[i].g12 * x;
      psi(k, k) += g1[i].g22;
      omega.block(0, k, k, 1) += (g2[i].g12 - g1[i].g1 * g1[i].g2) * x;
      omega(k, k) += g2[i].g22 - g1[i].g2 * g1[i].g2;
    }
  }
  if (phi) {
    psi.block(k, 0, 1, k) = psi.block(0, k, k, 1).transpose();
    omega.block(k, 0, 1, k) = omega.block(0, k, k, 1).transpose();
  }
  return make_sandwich(psi / static_cast<double>(n), omega / static_cast<double>(n), tau);
}

double upsilon_beta(double phi, double tau) { return phi * std::pow(1.0 + tau * tau / (1.0 + 2.0 * tau), 1.5); }

double upsilon_phi(double phi, double tau) {
  const double t2 = tau * tau;
  const double q = 1.0 + t2 / (1.0 + 2.0 * tau);
  return 4.0 * phi * phi / ((2.0 + t2) * (2.0 + t2)) *
         (2.0 * (1.0 + 2.0 * t2) * std::pow(q, 2.5) - t2 * (1.0 + tau) * (1.0 + tau));
}

double normal_wald_statistic(const Vector& beta_hat, double phi_hat, const Vector& beta0, const Matrix& cx, int n,
                             double tau) {
  if (!(phi_hat > 0.0)) throw DomainError("normal_wald_statistic: phi must be positive");
  const Vector d = beta_hat - beta0;
  return n / phi_hat * std::pow(1.0 + tau * tau / (1.0 + 2.0 * tau), -1.5) * d.dot(cx * d);
}

double normal_contiguous_delta(double dx, double phi0, double tau) {
  if (!(phi0 > 0.0)) throw DomainError("normal_contiguous_delta: phi must be positive");
  return std::pow(1.0 + tau * tau / (1.0 + 2.0 * tau), -1.5) * dx / phi0;
}

namespace {

Matrix pad_l(const GlmModel& model, const Matrix& L) {
  const auto k = static_cast<Eigen::Index>(model.design().k());
  if (L.cols() != k) throw DomainError("L must have one column per regression coefficient");
  Matrix full = Matrix::Zero(L.rows(), static_cast<Eigen::Index>(model.dim()));
  full.leftCols(k) = L;
  return full;
}

Vector pad_d(const GlmModel& model, const Vector& d) {
  const auto p = static_cast<Eigen::Index>(model.dim());
  const auto k = static_cast<Eigen::Index>(model.design().k());
  if (d.size() == p) return d;
  if (d.size() != k) throw DomainError("d must have length k or p");
  Vector full = Vector::Zero(p);
  full.head(k) = d;
  return full;
}

}  // namespace

double glm_contiguous_delta(const GlmModel& model, const Vector& theta0, double tau, const Matrix& L,
                            const Vector& d) {
  const Matrix Lf = pad_l(model, L);
  const Vector df = pad_d(model, d);
  const SandwichCov cov = sandwich_cov(model, theta0, tau);
  const Vector ld = Lf * df;
  return ld.dot(spd_inverse(Lf * cov.sigma * Lf.transpose(), "glm_contiguous_delta: L Sigma L^T", 1e-14) * ld);
}

Vector s_vector(const GlmModel& model, std::size_t i, double t, const Vector& theta, double tau) {
  if (!model.in_support(t)) throw DomainError("s_vector: point outside the support");
  const GammaIntegrals g = model_gammas(model, i, theta, 1.0 + tau);
  const KValues kv = k_functions(model, t, i, theta);
  const double w = std::exp(tau * model.log_density(i, t, theta));
  const auto k = static_cast<Eigen::Index>(model.design().k());
  Vector s(static_cast<Eigen::Index>(model.dim()));
  s.head(k) = (kv.k1 * w - g.g1) * model.design().X.row(static_cast<Eigen::Index>(i)).transpose();
  if (model.estimates_phi()) s(k) = *kv.k2 * w - g.g2;
  return s;
}

namespace {

struct GlmInfluence {
  Vector v;  // Psi^{-1} [sum S / n]
  Matrix Lf;
  Matrix middle;  // (L Sigma L^T)^{-1}
};

GlmInfluence glm_influence(const GlmModel& model, const Vector& theta0, double tau, const Matrix& L,
                           std::optional<std::size_t> index, const Vector& t) {
  const auto n = model.size();
  const SandwichCov cov = glm_sandwich(model, theta0, tau);
  Vector sum = Vector::Zero(static_cast<Eigen::Index>(model.dim()));
  if (index) {
    if (t.size() != 1 || *index >= n) throw DomainError("glm influence: single direction needs one point");
    sum = s_vector(model, *index, t(0), theta0, tau);
  } else {
    if (static_cast<std::size_t>(t.size()) != n) throw DomainError("glm influence: need one point per observation");
    for (std::size_t i = 0; i < n; ++i) sum += s_vector(model, i, t(static_cast<Eigen::Index>(i)), theta0, tau);
  }
  GlmInfluence out;
  out.v = spd_inverse(cov.psi, "glm influence: Psi") * sum / static_cast<double>(n);
  out.Lf = pad_l(model, L);
  out.middle = spd_inverse(out.Lf * cov.sigma * out.Lf.transpose(), "glm influence: L Sigma L^T", 1e-14);
  return out;
}

}  // namespace

double glm_if2(const GlmModel& model, const Vector& theta0, double tau, const Matrix& L,
               std::optional<std::size_t> index, const Vector& t) {
  const GlmInfluence g = glm_influence(model, theta0, tau, L, index, t);
  const Vector lv = g.Lf * g.v;
  return std::max(0.0, 2.0 * lv.dot(g.middle * lv));
}

double glm_pif(const GlmModel& model, const Vector& theta0, double tau, const Matrix& L, const Vector& d,
               std::optional<std::size_t> index, const Vector& t, double alpha) {
  const GlmInfluence g = glm_influence(model, theta0, tau, L, index, t);
  const Vector ld = g.Lf * pad_d(model, d);
  const double delta = ld.dot(g.middle * ld);
  if (ld.cwiseAbs().maxCoeff() == 0.0) return 0.0;
  return kstar(static_cast<double>(L.rows()), delta, alpha) * ld.dot(g.middle * (g.Lf * g.v));
}

double normal_if2_closed_single(const FixedDesign& design, const Vector& beta0, double phi0, double tau,
                                std::size_t i0, double t) {
  if (i0 >= design.n()) throw DomainError("normal_if2_closed_single: index out of range");
  const Matrix xtx_inv = (design.X.transpose() * design.X).inverse();
  const Vector x = design.X.row(static_cast<Eigen::Index>(i0)).transpose();
  const double r = t - x.dot(beta0);
  const double quad = x.dot(xtx_inv * design.cx() * xtx_inv * x);
  return 2.0 / phi0 * std::pow(1.0 + 2.0 * tau, 1.5) * r * r * std::exp(-tau * r * r / phi0) * quad;
}

double normal_if2_closed_all(const FixedDesign& design, const Vector& beta0, double phi0, double tau,
                             const Vector& t) {
  if (static_cast<std::size_t>(t.size()) != design.n()) throw DomainError("normal_if2_closed_all: need n points");
  const Matrix xtx_inv = (design.X.transpose() * design.X).inverse();
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(design.k()));
  for (Eigen::Index i = 0; i < design.X.rows(); ++i) {
    const Vector x = design.X.row(i).transpose();
    const double r = t(i) - x.dot(beta0);
    acc += r * std::exp(-0.5 * tau * r * r / phi0) * x;
  }
  return 2.0 / phi0 * std::pow(1.0 + 2.0 * tau, 1.5) * acc.dot(xtx_inv * design.cx() * xtx_inv * acc);
}

double normal_pif_closed(const FixedDesign& design, const Vector& beta0, double phi0, double tau, const Vector& d,
                         const Vector& t, double alpha) {
  if (static_cast<std::size_t>(t.size()) != design.n()) throw DomainError("normal_pif_closed: need n points");
  const Matrix cx = design.cx();
  const Matrix xtx_inv = (design.X.transpose() * design.X).inverse();
  const double delta = normal_contiguous_delta(d.dot(cx * d), phi0, tau);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < design.X.rows(); ++i) {
    const Vector x = design.X.row(i).transpose();
    const double r = t(i) - x.dot(beta0);
    acc += r * std::exp(-0.5 * tau * r * r / phi0) * d.dot(cx * xtx_inv * x);
  }
  return kstar(static_cast<double>(design.k()), delta, alpha) / phi0 * std::pow(1.0 + 2.0 * tau, 1.5) *
         std::pow(1.0 + tau, -1.5) * acc;
}

DesignReport design_diagnostics(const FixedDesign& design) {
  const Matrix& X = design.X;
  const auto n = X.rows();
  const auto k = X.cols();
  DesignReport rep;
  rep.max_abs_x = X.cwiseAbs().maxCoeff();
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index l = 0; l < k; ++l) {
      rep.max_abs_xx = std::max(rep.max_abs_xx, (X.col(j).cwiseProduct(X.col(l))).cwiseAbs().maxCoeff());
      for (Eigen::Index h = 0; h < k; ++h) {
        const double m = X.col(j).cwiseProduct(X.col(l)).cwiseProduct(X.col(h)).cwiseAbs().mean();
        rep.max_mean_abs_xxx = std::max(rep.max_mean_abs_xxx, m);
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(design.cx(), Eigen::EigenvaluesOnly);
  rep.min_eigenvalue = eig.eigenvalues().minCoeff();
  rep.pass = rep.min_eigenvalue >= 1e-8;
  std::ostringstream note;
  if (!rep.pass) note << "(1/n) X^T X is numerically singular; ";
  // Compare covariate magnitudes in the first and last quarter of rows.
  const Eigen::Index q = std::max<Eigen::Index>(1, n / 4);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double head = X.col(j).head(q).cwiseAbs().mean();
    const double tail = X.col(j).tail(q).cwiseAbs().mean();
    if (head > 0.0 && tail >= 4.0 * head) {
      note << "column x" << j + 1 << " grows along the design, so (1/n) X^T X may diverge with n; ";
    } else if (tail > 0.0 && head >= 4.0 * tail) {
      note << "column x" << j + 1 << " shrinks along the design, so the limit of (1/n) X^T X may be singular; ";
    }
  }
  rep.note = note.str();
  if (rep.note.size() >= 2) rep.note.resize(rep.note.size() - 2);
  return rep;
}

}  // namespace dpdwald
