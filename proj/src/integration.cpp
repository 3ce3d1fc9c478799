#include "dpdwald/integration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <sstream>
#include <vector>

namespace dpdwald {

const char* to_string(Support s) {
  switch (s) {
    case Support::continuous_real:
      return "continuous-real";
    case Support::nonnegative_integer:
      return "nonnegative-integer";
  }
  return "unknown";
}

namespace {

// Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15).
constexpr std::array<double, 8> kNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kKronrod = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for nodes 1, 3, 5 and the center.
constexpr std::array<double, 4> kGauss = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double a;
  double b;
  Vector value;
  double error;
};

struct ByError {
  bool operator()(const Panel& l, const Panel& r) const { return l.error < r.error; }
};

Panel gk15(const IntegralEngine::Integrand& f, int dim, double a, double b, Vector& scratch) {
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  Vector kron = Vector::Zero(dim);
  Vector gauss = Vector::Zero(dim);

  f(mid, scratch);
  kron += kKronrod[7] * scratch;
  gauss += kGauss[3] * scratch;
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kNodes[j];
    f(mid - dx, scratch);
    Vector pair = scratch;
    f(mid + dx, scratch);
    pair += scratch;
    kron += kKronrod[j] * pair;
    if (j % 2 == 1) gauss += kGauss[j / 2] * pair;
  }
  kron *= half;
  gauss *= half;
  const double err = (kron - gauss).cwiseAbs().maxCoeff();
  return Panel{a, b, std::move(kron), err};
}

}  // namespace

IntegralEngine::IntegralEngine(IntegrationOptions options) : options_(options) {
  if (!(options_.abs_tol > 0.0) || options_.rel_tol < 0.0 || options_.max_subdivisions < 1 ||
      options_.max_terms < 1 || options_.quiet_terms < 1 || !(options_.window_sds > 0.0)) {
    throw DomainError("IntegralEngine: invalid options");
  }
}

IntegralResult IntegralEngine::integrate(const Integrand& f, int dim, double lower, double upper) const {
  if (!(upper > lower) || !std::isfinite(lower) || !std::isfinite(upper)) {
    throw DomainError("IntegralEngine::integrate: invalid interval");
  }
  Vector scratch(dim);
  std::priority_queue<Panel, std::vector<Panel>, ByError> heap;
  constexpr int kInitialPanels = 4;
  const double width = (upper - lower) / kInitialPanels;
  for (int k = 0; k < kInitialPanels; ++k) {
    const double a = lower + k * width;
    const double b = (k + 1 == kInitialPanels) ? upper : a + width;
    heap.push(gk15(f, dim, a, b, scratch));
  }
  int evaluations = 15 * kInitialPanels;

  Vector value = Vector::Zero(dim);
  double error = 0.0;
  auto refresh = [&]() {
    // Deterministic reduction: sum panels in order of position.
    std::vector<Panel> store;
    auto copy = heap;
    store.reserve(copy.size());
    while (!copy.empty()) {
      store.push_back(copy.top());
      copy.pop();
    }
    std::sort(store.begin(), store.end(), [](const Panel& l, const Panel& r) { return l.a < r.a; });
    value.setZero();
    error = 0.0;
    for (const auto& p : store) {
      value += p.value;
      error += p.error;
    }
  };

  refresh();
  for (int split = 0;; ++split) {
    if (!value.allFinite()) throw NumericalError("IntegralEngine::integrate: non-finite integrand");
    const double target = std::max(options_.abs_tol, options_.rel_tol * value.cwiseAbs().maxCoeff());
    if (error <= target) {
      refresh();
      break;
    }
    if (split >= options_.max_subdivisions) {
      std::ostringstream os;
      os << "IntegralEngine::integrate: no convergence on [" << lower << ", " << upper << "] after "
         << split << " subdivisions (error estimate " << error << ", target " << target << ")";
      throw NumericalError(os.str());
    }
    Panel worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    Panel left = gk15(f, dim, worst.a, mid, scratch);
    Panel right = gk15(f, dim, mid, worst.b, scratch);
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(std::move(left));
    heap.push(std::move(right));
    evaluations += 30;
  }
  return IntegralResult{std::move(value), error, evaluations};
}

IntegralResult IntegralEngine::sum_counts(const Integrand& f, int dim, double mean, double sd) const {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw DomainError("IntegralEngine::sum_counts: invalid mean");
  if (mean > options_.large_mean) {
    const double s = std::max(sd, std::sqrt(mean));
    const double w = options_.large_mean_window_sds * s;
    return integrate(f, dim, std::max(0.0, mean - w), mean + w);
  }

  Vector scratch(dim);
  Vector up = Vector::Zero(dim);
  Vector down = Vector::Zero(dim);
  double tail = 0.0;
  int terms = 0;
  const double mode = std::floor(mean);

  auto run = [&](double start, double step, Vector& acc) {
    int quiet = 0;
    for (double y = start; y >= 0.0; y += step) {
      if (++terms > options_.max_terms) {
        std::ostringstream os;
        os << "IntegralEngine::sum_counts: series for mean " << mean << " exceeded " << options_.max_terms
           << " terms";
        throw NumericalError(os.str());
      }
      f(y, scratch);
      acc += scratch;
      const double mag = scratch.cwiseAbs().maxCoeff();
      const double scale = std::max(1.0, (up + down).cwiseAbs().maxCoeff());
      if (mag < options_.term_tol * scale) {
        tail += mag;
        if (++quiet >= options_.quiet_terms) break;
      } else {
        quiet = 0;
      }
    }
  };
  run(mode, 1.0, up);
  if (mode >= 1.0) run(mode - 1.0, -1.0, down);

  Vector value = up + down;
  if (!value.allFinite()) throw NumericalError("IntegralEngine::sum_counts: non-finite term");
  return IntegralResult{std::move(value), tail, terms};
}

IntegralResult IntegralEngine::over_support(Support support, const Integrand& f, int dim, double center,
                                            double scale) const {
  if (support == Support::nonnegative_integer) return sum_counts(f, dim, center, scale);
  if (!(scale > 0.0)) throw DomainError("IntegralEngine::over_support: scale must be positive");
  const double w = options_.window_sds * scale;
  return integrate(f, dim, center - w, center + w);
}

}  // namespace dpdwald
