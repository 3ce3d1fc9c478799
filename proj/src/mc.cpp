#include "dpdwald/mc.hpp"

#include "parallel.hpp"

#include <boost/random/bernoulli_distribution.hpp>

#include <cmath>
#include <iomanip>
#include <ostream>

namespace dpdwald {

std::string to_string(McScenario s) {
  switch (s) {
    case McScenario::null_hypothesis:
      return "null";
    case McScenario::fixed_alternative:
      return "fixed-alt";
    case McScenario::contiguous:
      return "contiguous";
    case McScenario::contaminated_level:
      return "contaminated-level";
    case McScenario::contaminated_power:
      return "contaminated-power";
  }
  return "unknown";
}

McScenario parse_scenario(const std::string& name) {
  for (auto s : {McScenario::null_hypothesis, McScenario::fixed_alternative, McScenario::contiguous,
                 McScenario::contaminated_level, McScenario::contaminated_power}) {
    if (to_string(s) == name) return s;
  }
  throw DomainError("unknown scenario '" + name +
                    "' (want null, fixed-alt, contiguous, contaminated-level, contaminated-power)");
}

std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t r) {
  std::uint64_t z = seed + (r + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Vector scenario_theta(const McConfig& config, const Vector& theta0) {
  switch (config.scenario) {
    case McScenario::null_hypothesis:
    case McScenario::contaminated_level:
      return theta0;
    case McScenario::fixed_alternative:
      if (config.theta_star.size() != theta0.size()) throw DomainError("fixed-alt scenario needs theta_star");
      return config.theta_star;
    case McScenario::contiguous:
    case McScenario::contaminated_power:
      if (config.d.size() != theta0.size()) throw DomainError("contiguous scenario needs d of the parameter length");
      return theta0 + config.d / std::sqrt(static_cast<double>(config.n));
  }
  return theta0;
}

namespace {

void validate(const McConfig& c, const GlmModel& model, const Vector& theta0) {
  if (c.replications < 100) throw DomainError("run_mc: need at least 100 replications");
  if (c.n <= 0 || static_cast<std::size_t>(c.n) != model.size()) {
    throw DomainError("run_mc: n must equal the number of design rows");
  }
  if (c.tau_grid.empty()) throw DomainError("run_mc: empty tau grid");
  for (double t : c.tau_grid) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("run_mc: tau values must be finite and >= 0");
  }
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw DomainError("run_mc: alpha must lie in (0, 1)");
  const bool contaminated =
      c.scenario == McScenario::contaminated_level || c.scenario == McScenario::contaminated_power;
  if (contaminated) {
    if (!(c.epsilon >= 0.0) || c.epsilon / std::sqrt(static_cast<double>(c.n)) > 1.0) {
      throw DomainError("run_mc: need 0 <= eps <= sqrt(n)");
    }
    if (!c.point_generator && !model.in_support(c.contamination_point)) {
      throw DomainError("run_mc: contamination point outside the support");
    }
  }
  check_parameter(theta0, model.dim(), "run_mc theta0");
  if (!model.admissible(theta0)) throw DomainError("run_mc: theta0 outside the model domain");
}

struct RepOutcome {
  std::vector<signed char> reject;  // -1 excluded
  std::vector<double> statistic;
};

}  // namespace

McReport run_mc(const McConfig& config, const GlmModel& model, const Vector& theta0, const LinearHypothesis& hyp) {
  validate(config, model, theta0);
  const auto k = static_cast<Eigen::Index>(model.design().k());
  if (hyp.L.cols() != k) throw DomainError("run_mc: hypothesis needs one column per regression coefficient");
  if ((hyp.L * theta0.head(k) - hyp.l0).cwiseAbs().maxCoeff() > 1e-12) {
    throw DomainError("run_mc: theta0 does not satisfy the null hypothesis");
  }
  const Vector theta_gen = scenario_theta(config, theta0);
  if (!model.admissible(theta_gen)) throw DomainError("run_mc: generating parameter outside the model domain");
  const auto p = static_cast<int>(model.dim());
  const CompositeHypothesis composite = CompositeHypothesis::linear(hyp, p);
  const bool contaminated = config.scenario == McScenario::contaminated_level ||
                            config.scenario == McScenario::contaminated_power;
  const double replace_prob = contaminated ? config.epsilon / std::sqrt(static_cast<double>(config.n)) : 0.0;
  const std::size_t n = model.size();
  const std::size_t taus = config.tau_grid.size();

  EvalContext ctx;
  ctx.integration = model.integration();
  ctx.threads = 1;

  std::vector<RepOutcome> outcomes(static_cast<std::size_t>(config.replications));
  detail::parallel_for(
      outcomes.size(),
      [&](std::size_t r) {
        std::mt19937_64 rng(replication_seed(config.seed, r));
        boost::random::bernoulli_distribution<double> replace(replace_prob);
        Vector y(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
          double v = model.sample(i, theta_gen, rng);
          if (contaminated && replace(rng)) {
            v = config.point_generator ? config.point_generator(i, rng) : config.contamination_point;
          }
          y(static_cast<Eigen::Index>(i)) = v;
        }
        RepOutcome& out = outcomes[r];
        out.reject.assign(taus, -1);
        out.statistic.assign(taus, 0.0);
        for (std::size_t t = 0; t < taus; ++t) {
          try {
            const FitResult fit = fit_mdpde(model, y, config.tau_grid[t], Vector(), SolverOptions{}, ctx);
            const SandwichCov cov = sandwich_cov(model, fit.theta, config.tau_grid[t], ctx);
            const TestReport rep =
                wald_composite(fit.theta, composite, cov, static_cast<int>(n), config.alpha);
            out.reject[t] = rep.reject ? 1 : 0;
            out.statistic[t] = rep.statistic;
          } catch (const NumericalError&) {
          } catch (const DomainError&) {
          }
        }
      },
      config.threads);

  McReport report;
  report.config = config;
  report.family = model.family().name();
  report.design = model.design().label;
  for (std::size_t t = 0; t < taus; ++t) {
    McRow row;
    row.tau = config.tau_grid[t];
    double stat_sum = 0.0;
    for (const RepOutcome& o : outcomes) {
      if (o.reject[t] < 0) {
        ++row.excluded;
        continue;
      }
      ++row.valid;
      row.rejections += o.reject[t];
      stat_sum += o.statistic[t];
    }
    if (row.valid > 0) {
      row.rate = static_cast<double>(row.rejections) / row.valid;
      row.se = std::sqrt(row.rate * (1.0 - row.rate) / row.valid);
      row.mean_statistic = stat_sum / row.valid;
    }
    report.rows.push_back(row);
  }
  return report;
}

void write_mc_csv(std::ostream& out, const McReport& report) {
  out << "scenario,family,design,n,replications,seed,alpha,tau,valid,excluded,rejections,rate,se,mean_statistic\n";
  out << std::setprecision(17);
  for (const McRow& r : report.rows) {
    out << to_string(report.config.scenario) << ',' << report.family << ',' << report.design << ','
        << report.config.n << ',' << report.config.replications << ',' << report.config.seed << ','
        << report.config.alpha << ',' << r.tau << ',' << r.valid << ',' << r.excluded << ',' << r.rejections << ','
        << r.rate << ',' << r.se << ',' << r.mean_statistic << '\n';
  }
}

}  // namespace dpdwald
