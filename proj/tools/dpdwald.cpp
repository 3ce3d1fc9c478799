// dpdwald: fit, test, power tables, influence profiles and Monte Carlo runs
// for robust Wald-type tests in fixed-design GLMs.

#include "dpdwald/chisq.hpp"
#include "dpdwald/csv.hpp"
#include "dpdwald/glm.hpp"
#include "dpdwald/mc.hpp"
#include "dpdwald/mdpde.hpp"
#include "dpdwald/robustness.hpp"
#include "dpdwald/wald.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace dpdwald;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;
const std::vector<double> kDefaultTauGrid{0.0, 0.1, 0.3, 0.5, 0.7, 1.0};

// ---------------------------------------------------------------- parsing helpers

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(s);
  while (std::getline(ss, cell, sep)) out.push_back(trim(cell));
  return out;
}

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw DomainError("cannot parse '" + s + "' as a number in " + what);
  }
}

Vector parse_vector(const std::string& s, const std::string& what) {
  const auto parts = split(s, ',');
  Vector v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) v(static_cast<Eigen::Index>(i)) = parse_number(parts[i], what);
  return v;
}

// "L:l0" with rows of L separated by ';' (e.g. "0,1:0" or "1,0;0,1:1,1"),
// or "h" / "h=value" for beta_h = value (1-based, value defaults to 0).
LinearHypothesis parse_hypothesis(const std::string& spec, std::size_t k) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    const auto eq = spec.find('=');
    const std::string hs = trim(spec.substr(0, eq));
    const double value = eq == std::string::npos ? 0.0 : parse_number(trim(spec.substr(eq + 1)), "--hypothesis");
    const double h = parse_number(hs, "--hypothesis");
    if (h != std::floor(h) || h < 1 || h > static_cast<double>(k)) {
      throw DomainError("--hypothesis index must be an integer in 1.." + std::to_string(k));
    }
    Matrix L = Matrix::Zero(1, static_cast<Eigen::Index>(k));
    L(0, static_cast<Eigen::Index>(h) - 1) = 1.0;
    return LinearHypothesis(L, Vector::Constant(1, value));
  }
  const auto rows = split(spec.substr(0, colon), ';');
  const Vector l0 = parse_vector(spec.substr(colon + 1), "--hypothesis l0");
  Matrix L(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(k));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Vector row = parse_vector(rows[r], "--hypothesis L");
    if (static_cast<std::size_t>(row.size()) != k) {
      throw DomainError("--hypothesis: each row of L needs " + std::to_string(k) + " entries");
    }
    L.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return LinearHypothesis(L, l0);
}

json to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    out.push_back(row);
  }
  return out;
}

Vector vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json hypothesis_json(const LinearHypothesis& h) { return json{{"L", to_json(h.L)}, {"l0", to_json(h.l0)}}; }

// ---------------------------------------------------------------- shared options

struct Common {
  std::string family = "normal";
  std::string design = "design1";
  int n = 50;
  std::vector<double> tau;
  double alpha = 0.05;
  std::string hypothesis;
  std::string theta0;
  std::string out;
  std::string config;
  double phi = 0.0;  // > 0: dispersion held fixed
};

void add_common(CLI::App* sub, Common& c, bool with_design) {
  sub->add_option("--family", c.family, "normal or poisson")->capture_default_str();
  if (with_design) {
    sub->add_option("--design", c.design, "design1..design4 or a CSV with columns x1..xk")->capture_default_str();
    sub->add_option("--n", c.n, "rows of a named design")->capture_default_str();
  }
  sub->add_option("--tau", c.tau, "tuning parameters (comma separated)")->delimiter(',');
  sub->add_option("--alpha", c.alpha, "significance level")->capture_default_str();
  sub->add_option("--hypothesis", c.hypothesis, "L:l0 (rows of L split by ';') or h[=value] for beta_h");
  sub->add_option("--theta0", c.theta0, "null parameter (beta, then phi for the normal family)");
  sub->add_option("--out", c.out, "output path (stdout when absent)");
  sub->add_option("--config", c.config, "key=value file; command-line flags take precedence");
  sub->add_option("--phi", c.phi, "hold the normal dispersion fixed at this value");
}

std::vector<double> tau_grid(const Common& c) {
  const auto grid = c.tau.empty() ? kDefaultTauGrid : c.tau;
  for (double t : grid) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("--tau values must be finite and >= 0");
  }
  return grid;
}

void validate_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("--alpha must lie in (0, 1)");
}

void validate_output(const std::string& path) {
  if (path.empty()) return;
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) throw DomainError("output directory does not exist: " + parent.string());
}

void validate_input(const std::string& path, const char* what) {
  if (path.empty()) throw DomainError(std::string(what) + " is required");
  if (!fs::is_regular_file(path)) throw DomainError(std::string("cannot open ") + what + " " + path);
}

FixedDesign load_design(const Common& c) {
  if (fs::is_regular_file(c.design)) return FixedDesign::from_csv(c.design);
  return FixedDesign::by_name(c.design, c.n);
}

GlmModel make_model(const Common& c, FixedDesign design) {
  const GlmFamily fam = GlmFamily::parse(c.family);
  std::optional<double> fixed;
  if (c.phi != 0.0) {
    if (!(c.phi > 0.0)) throw DomainError("--phi must be positive");
    fixed = c.phi;
  }
  return GlmModel(fam, std::move(design), fixed);
}

// beta (length k) or the full parameter; phi defaults to 1 when omitted.
Vector parse_theta(const std::string& spec, const GlmModel& model, const char* what, double beta_default = 1.0) {
  const auto k = static_cast<Eigen::Index>(model.design().k());
  const auto p = static_cast<Eigen::Index>(model.dim());
  Vector theta = Vector::Constant(p, beta_default);
  if (model.estimates_phi()) theta(k) = 1.0;
  if (!spec.empty()) {
    const Vector v = parse_vector(spec, what);
    if (v.size() == p) {
      theta = v;
    } else if (v.size() == k) {
      theta.head(k) = v;
    } else {
      throw DomainError(std::string(what) + " needs " + std::to_string(k) + " or " + std::to_string(p) + " values");
    }
  }
  if (!model.admissible(theta)) throw DomainError(std::string(what) + " is outside the model domain");
  return theta;
}

Matrix padded_h(const LinearHypothesis& hyp, const GlmModel& model) {
  Matrix H = Matrix::Zero(static_cast<Eigen::Index>(model.dim()), hyp.L.rows());
  H.topRows(hyp.L.cols()) = hyp.L.transpose();
  return H;
}

// Writes to --out or stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw DomainError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

void emit_json(const std::string& path, const json& j) {
  Output out(path);
  out.stream() << j.dump(2) << "\n";
}

// ---------------------------------------------------------------- fit

struct FitOptions {
  Common common;
  std::string data;
};

json fit_entry(const GlmModel& model, const FitResult& fit) {
  const SandwichCov cov = sandwich_cov(model, fit.theta, fit.tau);
  const double n = static_cast<double>(model.size());
  Vector se = (cov.sigma.diagonal() / n).cwiseSqrt();
  return json{{"tau", fit.tau},
              {"theta", to_json(fit.theta)},
              {"converged", fit.converged},
              {"iterations", fit.iterations},
              {"gradient_steps", fit.gradient_steps},
              {"equation_norm", fit.equation_norm},
              {"std_errors", to_json(se)},
              {"sigma", to_json(cov.sigma)}};
}

std::pair<GlmModel, Vector> load_regression(const FitOptions& o) {
  validate_input(o.data, "--data");
  const RegressionData d = read_regression_csv(o.data);
  FixedDesign design;
  design.X = d.X;
  design.label = "data";
  return {make_model(o.common, design), d.y};
}

std::vector<FitResult> fit_grid(const GlmModel& model, const Vector& y, const std::vector<double>& taus) {
  std::vector<FitResult> fits;
  for (double t : taus) fits.push_back(fit_mdpde(model, y, t));
  return fits;
}

int cmd_fit(const FitOptions& o) {
  validate_output(o.common.out);
  const auto taus = tau_grid(o.common);
  auto [model, y] = load_regression(o);
  json j{{"schema", 1},
         {"command", "fit"},
         {"family", model.family().name()},
         {"data", o.data},
         {"n", model.size()},
         {"k", model.design().k()},
         {"fixed_phi", o.common.phi > 0.0 ? json(o.common.phi) : json(nullptr)}};
  j["fits"] = json::array();
  for (const FitResult& f : fit_grid(model, y, taus)) j["fits"].push_back(fit_entry(model, f));
  emit_json(o.common.out, j);
  return 0;
}

// ---------------------------------------------------------------- test

struct TestOptions {
  FitOptions base;
  std::string fit_file;
};

json report_json(const TestReport& r, const Vector& theta_hat) {
  return json{{"tau", r.tau},
              {"kind", r.kind},
              {"statistic", r.statistic},
              {"df", r.df},
              {"p_value", r.p_value},
              {"critical_value", r.critical_value},
              {"reject", r.reject},
              {"alpha", r.alpha},
              {"theta_hat", to_json(theta_hat)}};
}

int cmd_test(const TestOptions& o) {
  const Common& c = o.base.common;
  validate_output(c.out);
  validate_alpha(c.alpha);
  if (c.hypothesis.empty() && c.theta0.empty()) throw DomainError("test needs --hypothesis or --theta0");
  if (!o.fit_file.empty()) validate_input(o.fit_file, "--fit");
  auto [model, y] = load_regression(o.base);
  const int n = static_cast<int>(model.size());

  std::vector<Vector> thetas;
  std::vector<double> taus;
  if (!o.fit_file.empty()) {
    std::ifstream in(o.fit_file);
    json fj;
    try {
      in >> fj;
    } catch (const json::exception& e) {
      throw DomainError(o.fit_file + ": " + e.what());
    }
    if (fj.value("schema", 0) != 1 || fj.value("command", "") != "fit") {
      throw DomainError(o.fit_file + ": not a fit output (schema 1)");
    }
    if (fj.value("family", "") != model.family().name()) throw DomainError(o.fit_file + ": family mismatch");
    const std::vector<double> wanted = c.tau.empty() ? std::vector<double>{} : tau_grid(c);
    for (const auto& f : fj.at("fits")) {
      const double t = f.at("tau").get<double>();
      if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), t) == wanted.end()) continue;
      Vector theta = vector_from_json(f.at("theta"));
      check_parameter(theta, model.dim(), "--fit theta");
      taus.push_back(t);
      thetas.push_back(std::move(theta));
    }
    if (taus.empty()) throw DomainError(o.fit_file + ": no fits for the requested tau values");
  } else {
    taus = tau_grid(c);
    for (const FitResult& f : fit_grid(model, y, taus)) thetas.push_back(f.theta);
  }

  json j{{"schema", 1}, {"command", "test"}, {"family", model.family().name()}, {"data", o.base.data}, {"n", n}};
  j["reports"] = json::array();
  if (!c.hypothesis.empty()) {
    const LinearHypothesis hyp = parse_hypothesis(c.hypothesis, model.design().k());
    const auto composite = CompositeHypothesis::linear(hyp, static_cast<int>(model.dim()));
    j["hypothesis"] = hypothesis_json(hyp);
    for (std::size_t t = 0; t < taus.size(); ++t) {
      const SandwichCov cov = sandwich_cov(model, thetas[t], taus[t]);
      j["reports"].push_back(report_json(wald_composite(thetas[t], composite, cov, n, c.alpha), thetas[t]));
    }
  } else {
    const Vector theta0 = parse_theta(c.theta0, model, "--theta0");
    j["theta0"] = to_json(theta0);
    for (std::size_t t = 0; t < taus.size(); ++t) {
      const SandwichCov cov = sandwich_cov(model, theta0, taus[t]);
      j["reports"].push_back(report_json(wald_simple(thetas[t], theta0, cov, n, c.alpha), thetas[t]));
    }
  }
  emit_json(c.out, j);
  return 0;
}

// ---------------------------------------------------------------- power tables

struct TableOptions {
  Common common;
  int table = 1;
  double phi0 = 1.0;
};

int cmd_power_table(const TableOptions& o) {
  const Common& c = o.common;
  validate_output(c.out);
  validate_alpha(c.alpha);
  const auto taus = tau_grid(c);
  Output out(c.out);
  std::ostream& os = out.stream();
  os << std::setprecision(10);
  if (o.table == 1) {
    if (!(o.phi0 > 0.0)) throw DomainError("--phi0 must be positive");
    os << "k,dx,tau,delta,power\n";
    for (int k : {1, 20}) {
      for (double dx : {0.0, 2.0, 5.0, 10.0, 15.0, 20.0, 25.0, 50.0}) {
        for (double t : taus) {
          const double delta = normal_contiguous_delta(dx, o.phi0, t);
          os << k << ',' << dx << ',' << t << ',' << delta << ',' << noncentral_power(k, delta, c.alpha) << '\n';
        }
      }
    }
    return 0;
  }
  if (o.table != 2) throw DomainError("--table must be 1 or 2");
  struct Block {
    int design;
    std::vector<int> h;
    std::vector<double> d;
  };
  const std::vector<Block> blocks{{1, {1, 2}, {0, 2, 3, 5, 7, 10}},
                                  {2, {1, 2}, {0, 1, 2, 3, 5, 7}},
                                  {3, {1, 2}, {0, 0.01, 0.05, 0.1, 0.2, 0.5}},
                                  {4, {2, 3}, {0, 10, 20, 30, 50, 70}}};
  os << "design,h,d,tau,sigma_hh,delta,power,note\n";
  for (const Block& b : blocks) {
    const FixedDesign design = FixedDesign::by_name(std::to_string(b.design), c.n);
    const GlmModel model(GlmFamily::poisson(), design);
    for (int h : b.h) {
      Vector theta0 = Vector::Ones(static_cast<Eigen::Index>(design.k()));
      theta0(h - 1) = 0.0;
      for (double t : taus) {
        const double s = glm_sandwich(model, theta0, t).sigma(h - 1, h - 1);
        for (double d : b.d) {
          const double delta = d * d / s;
          os << b.design << ',' << h << ',' << d << ',' << t << ',' << s << ',' << delta << ','
             << noncentral_power(1.0, delta, c.alpha) << ',' << (b.design == 2 ? "seed-dependent" : "") << '\n';
        }
      }
    }
  }
  return 0;
}

// ---------------------------------------------------------------- influence profiles

struct ProfileOptions {
  Common common;
  std::string index = "all";
  std::string kind = "if2";
  double t_min = NAN;
  double t_max = NAN;
  int points = 401;
  std::string d;
};

int cmd_profile(const ProfileOptions& o, bool power) {
  const Common& c = o.common;
  validate_output(c.out);
  validate_alpha(c.alpha);
  const auto taus = tau_grid(c);
  const GlmModel model = make_model(c, load_design(c));
  const Vector theta0 = parse_theta(c.theta0, model, "--theta0");
  std::optional<std::size_t> index;
  if (o.index != "all") {
    const double v = parse_number(o.index, "--index");
    if (v != std::floor(v) || v < 1 || v > static_cast<double>(model.size())) {
      throw DomainError("--index must be 'all' or an integer in 1.." + std::to_string(model.size()));
    }
    index = static_cast<std::size_t>(v) - 1;
  }
  ProfileRequest req;
  req.index = index;
  req.alpha = c.alpha;
  if (!c.hypothesis.empty()) req.H = padded_h(parse_hypothesis(c.hypothesis, model.design().k()), model);
  if (power) {
    req.kind = ProfileKind::pif;
    req.d = parse_theta(o.d, model, "--d", 0.0);
    if (model.estimates_phi() && o.d.size() > 0 && parse_vector(o.d, "--d").size() == static_cast<Eigen::Index>(model.design().k())) {
      req.d(static_cast<Eigen::Index>(model.design().k())) = 0.0;
    }
  } else if (o.kind == "if2") {
    req.kind = req.H.size() == 0 ? ProfileKind::if2_simple : ProfileKind::if2_composite;
  } else if (o.kind == "if") {
    req.kind = ProfileKind::if_norm;
  } else {
    throw DomainError("--kind must be if2 or if");
  }
  Vector grid;
  if (std::isnan(o.t_min) != std::isnan(o.t_max)) throw DomainError("give both --t-min and --t-max");
  if (!std::isnan(o.t_min)) {
    if (!(o.t_max > o.t_min) || o.points < 2) throw DomainError("need --t-max > --t-min and --points >= 2");
    grid = Vector::LinSpaced(o.points, o.t_min, o.t_max);
    if (model.support() == Support::nonnegative_integer) {
      grid = grid.array().round().matrix();
      std::vector<double> g(grid.data(), grid.data() + grid.size());
      g.erase(std::unique(g.begin(), g.end()), g.end());
      grid = Eigen::Map<Vector>(g.data(), static_cast<Eigen::Index>(g.size()));
    }
  } else {
    grid = default_profile_grid(model, theta0, index, o.points);
  }
  Output out(c.out);
  std::ostream& os = out.stream();
  os << std::setprecision(12) << "t,tau,value\n";
  for (double t : taus) {
    const InfluenceAnalyzer analyzer(model, theta0, t);
    const IfProfile prof = influence_profile(analyzer, grid, req);
    for (Eigen::Index g = 0; g < grid.size(); ++g) os << grid(g) << ',' << t << ',' << prof.values(g) << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- Monte Carlo

struct McOptions {
  Common common;
  int replications = 1000;
  std::uint64_t seed = 1;
  std::string scenario = "null";
  std::string theta_star;
  std::string d;
  double epsilon = 0.0;
  double point = 0.0;
  std::string json_out;
};

int cmd_mc(McOptions o) {
  Common& c = o.common;
  validate_output(c.out);
  validate_output(o.json_out);
  validate_alpha(c.alpha);
  McConfig cfg;
  cfg.replications = o.replications;
  cfg.n = c.n;
  cfg.seed = o.seed;
  cfg.tau_grid = c.tau.empty() ? std::vector<double>{0.0, 0.3, 0.5} : tau_grid(c);
  cfg.scenario = parse_scenario(o.scenario);
  cfg.alpha = c.alpha;
  cfg.epsilon = o.epsilon;
  cfg.contamination_point = o.point;
  const GlmModel model = make_model(c, load_design(c));
  cfg.n = static_cast<int>(model.size());
  const Vector theta0 = parse_theta(c.theta0, model, "--theta0");
  if (!o.theta_star.empty()) cfg.theta_star = parse_theta(o.theta_star, model, "--theta-star");
  if (!o.d.empty()) {
    cfg.d = parse_theta(o.d, model, "--d", 0.0);
    if (parse_vector(o.d, "--d").size() == static_cast<Eigen::Index>(model.design().k()) && model.estimates_phi()) {
      cfg.d(static_cast<Eigen::Index>(model.design().k())) = 0.0;
    }
  }
  const auto k = model.design().k();
  const std::string hyp_spec = c.hypothesis.empty()
                                   ? std::to_string(k) + "=" + std::to_string(theta0(static_cast<Eigen::Index>(k) - 1))
                                   : c.hypothesis;
  const LinearHypothesis hyp = parse_hypothesis(hyp_spec, k);
  if ((hyp.L * theta0.head(static_cast<Eigen::Index>(k)) - hyp.l0).cwiseAbs().maxCoeff() > 1e-12) {
    throw DomainError("--theta0 does not satisfy the null hypothesis");
  }
  const McReport rep = run_mc(cfg, model, theta0, hyp);
  {
    Output out(c.out);
    write_mc_csv(out.stream(), rep);
  }
  if (!o.json_out.empty()) {
    json j{{"schema", 1},
           {"command", "mc"},
           {"scenario", to_string(cfg.scenario)},
           {"family", rep.family},
           {"design", rep.design},
           {"n", cfg.n},
           {"replications", cfg.replications},
           {"seed", cfg.seed},
           {"rng", "mt19937_64 per replication, seeded by SplitMix64(seed, replication)"},
           {"alpha", cfg.alpha},
           {"epsilon", cfg.epsilon},
           {"contamination_point", cfg.contamination_point},
           {"theta0", to_json(theta0)},
           {"hypothesis", hypothesis_json(hyp)}};
    j["rows"] = json::array();
    for (const McRow& r : rep.rows) {
      j["rows"].push_back(json{{"tau", r.tau},
                               {"valid", r.valid},
                               {"excluded", r.excluded},
                               {"rejections", r.rejections},
                               {"rate", r.rate},
                               {"se", r.se},
                               {"mean_statistic", r.mean_statistic}});
    }
    emit_json(o.json_out, j);
  }
  return 0;
}

// ---------------------------------------------------------------- sample size

struct SampleSizeOptions {
  Common common;
  std::string theta_star;
  double power = 0.8;
};

int cmd_sample_size(const SampleSizeOptions& o) {
  const Common& c = o.common;
  validate_output(c.out);
  validate_alpha(c.alpha);
  if (!(o.power > 0.0 && o.power < 1.0)) throw DomainError("--power must lie in (0, 1)");
  if (o.theta_star.empty()) throw DomainError("sample-size needs --theta-star");
  const auto taus = tau_grid(c);
  const GlmModel model = make_model(c, load_design(c));
  const Vector theta0 = parse_theta(c.theta0, model, "--theta0");
  const Vector theta_star = parse_theta(o.theta_star, model, "--theta-star");
  json j{{"schema", 1}, {"command", "sample-size"}, {"family", model.family().name()},
         {"design", model.design().label}, {"alpha", c.alpha}, {"target_power", o.power},
         {"theta0", to_json(theta0)}, {"theta_star", to_json(theta_star)}};
  std::optional<CompositeHypothesis> composite;
  if (!c.hypothesis.empty()) {
    const LinearHypothesis hyp = parse_hypothesis(c.hypothesis, model.design().k());
    composite = CompositeHypothesis::linear(hyp, static_cast<int>(model.dim()));
    j["hypothesis"] = hypothesis_json(hyp);
  }
  j["rows"] = json::array();
  for (double t : taus) {
    const Matrix sigma_star = sandwich_cov(model, theta_star, t).sigma;
    FixedAlternative terms;
    if (composite) {
      terms = fixed_alternative_terms(theta_star, *composite, sigma_star);
    } else {
      terms = fixed_alternative_terms(theta_star, theta0, sandwich_cov(model, theta0, t).sigma, sigma_star);
    }
    const int n = sample_size_for_power(terms, c.alpha, o.power);
    const double achieved =
        composite ? power_fixed_alternative(theta_star, *composite, sigma_star, n, c.alpha)
                  : power_fixed_alternative(theta_star, theta0, sandwich_cov(model, theta0, t).sigma, sigma_star, n,
                                            c.alpha);
    j["rows"].push_back(json{{"tau", t}, {"n", n}, {"s", terms.s}, {"sigma_w", terms.sigma_w},
                             {"df", terms.df}, {"power_at_n", achieved}});
  }
  emit_json(c.out, j);
  return 0;
}

// ---------------------------------------------------------------- diagnostics

int cmd_diagnostics(const Common& c) {
  validate_output(c.out);
  const FixedDesign design = load_design(c);
  const DesignReport r = design_diagnostics(design);
  emit_json(c.out, json{{"schema", 1},
                        {"command", "diagnostics"},
                        {"design", design.label},
                        {"n", design.n()},
                        {"k", design.k()},
                        {"max_abs_x", r.max_abs_x},
                        {"max_abs_xx", r.max_abs_xx},
                        {"max_mean_abs_xxx", r.max_mean_abs_xxx},
                        {"min_eigenvalue_cx", r.min_eigenvalue},
                        {"pass", r.pass},
                        {"note", r.note}});
  return 0;
}

// ---------------------------------------------------------------- config file

// Plain key=value lines ('#' comments). Keys are long option names without
// the leading dashes. Values from the file are inserted only for options the
// command line does not already set.
std::vector<std::string> merge_config(CLI::App* sub, const std::string& path, std::vector<std::string> args) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open config " + path);
  std::string line;
  int lineno = 0;
  std::vector<std::string> extra;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DomainError(path + ": line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "config" || sub->get_option_no_throw("--" + key) == nullptr) {
      throw DomainError(path + ": line " + std::to_string(lineno) + ": unknown key '" + key + "' for command " +
                        sub->get_name());
    }
    const bool on_command_line = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == "--" + key || a.rfind("--" + key + "=", 0) == 0;
    });
    if (!on_command_line) {
      extra.push_back("--" + key);
      extra.push_back(value);
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Density power divergence fits and Wald tests for fixed-design GLMs"};
  app.require_subcommand(1);

  FitOptions fit;
  auto* fit_cmd = app.add_subcommand("fit", "fit the estimator over a tau grid");
  add_common(fit_cmd, fit.common, false);
  fit_cmd->add_option("--data", fit.data, "CSV with columns y, x1..xk")->required();

  TestOptions test;
  auto* test_cmd = app.add_subcommand("test", "Wald-type test per tau");
  add_common(test_cmd, test.base.common, false);
  test_cmd->add_option("--data", test.base.data, "CSV with columns y, x1..xk")->required();
  test_cmd->add_option("--fit", test.fit_file, "reuse estimates from a fit output");

  TableOptions table;
  auto* table_cmd = app.add_subcommand("power-table", "contiguous power tables");
  add_common(table_cmd, table.common, true);
  table_cmd->add_option("--table", table.table, "1: normal model, 2: Poisson designs")->capture_default_str();
  table_cmd->add_option("--phi0", table.phi0, "null dispersion for table 1")->capture_default_str();

  ProfileOptions ifp;
  auto* if_cmd = app.add_subcommand("if-profile", "second-order influence profile");
  add_common(if_cmd, ifp.common, true);
  if_cmd->add_option("--index", ifp.index, "contaminated observation (1-based) or 'all'")->capture_default_str();
  if_cmd->add_option("--kind", ifp.kind, "if2 or if (norm of the estimator IF)")->capture_default_str();
  if_cmd->add_option("--t-min", ifp.t_min, "grid start");
  if_cmd->add_option("--t-max", ifp.t_max, "grid end");
  if_cmd->add_option("--points", ifp.points, "grid points")->capture_default_str();

  ProfileOptions pifp;
  auto* pif_cmd = app.add_subcommand("pif-profile", "power influence profile");
  add_common(pif_cmd, pifp.common, true);
  pif_cmd->add_option("--index", pifp.index, "contaminated observation (1-based) or 'all'")->capture_default_str();
  pif_cmd->add_option("--d", pifp.d, "contiguous direction (beta or full parameter)");
  pif_cmd->add_option("--t-min", pifp.t_min, "grid start");
  pif_cmd->add_option("--t-max", pifp.t_max, "grid end");
  pif_cmd->add_option("--points", pifp.points, "grid points")->capture_default_str();

  McOptions mc;
  mc.common.n = 200;
  mc.common.design = "design2";
  auto* mc_cmd = app.add_subcommand("mc", "Monte Carlo rejection rates");
  add_common(mc_cmd, mc.common, true);
  mc_cmd->add_option("--replications", mc.replications, "number of simulated data sets (>= 100)")->capture_default_str();
  mc_cmd->add_option("--seed", mc.seed, "master seed; fixes every replication stream")->capture_default_str();
  mc_cmd->add_option("--scenario", mc.scenario, "null, fixed-alt, contiguous, contaminated-level, contaminated-power")
      ->capture_default_str();
  mc_cmd->add_option("--theta-star", mc.theta_star, "fixed alternative");
  mc_cmd->add_option("--d", mc.d, "contiguous direction");
  mc_cmd->add_option("--epsilon", mc.epsilon, "contamination proportion times sqrt(n)")->capture_default_str();
  mc_cmd->add_option("--point", mc.point, "contamination point")->capture_default_str();
  mc_cmd->add_option("--json", mc.json_out, "also write the report as JSON");

  SampleSizeOptions ss;
  auto* ss_cmd = app.add_subcommand("sample-size", "sample size for a target power at a fixed alternative");
  add_common(ss_cmd, ss.common, true);
  ss_cmd->add_option("--theta-star", ss.theta_star, "fixed alternative")->required();
  ss_cmd->add_option("--power", ss.power, "target power")->capture_default_str();

  Common diag;
  auto* diag_cmd = app.add_subcommand("diagnostics", "design regularity report");
  diag_cmd->add_option("--design", diag.design, "design1..design4 or a CSV with columns x1..xk")->capture_default_str();
  diag_cmd->add_option("--n", diag.n, "rows of a named design")->capture_default_str();
  diag_cmd->add_option("--out", diag.out, "output path (stdout when absent)");
  diag_cmd->add_option("--config", diag.config, "key=value file; command-line flags take precedence");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    // Config file: located before CLI11 parsing so flags can override it.
    if (!args.empty()) {
      CLI::App* sub = nullptr;
      for (auto* s : app.get_subcommands([](CLI::App*) { return true; })) {
        if (s->get_name() == args.front()) sub = s;
      }
      for (std::size_t i = 0; sub && i < args.size(); ++i) {
        std::string path;
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
        if (!path.empty()) {
          args = merge_config(sub, path, args);
          break;
        }
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fit);
    if (test_cmd->parsed()) return cmd_test(test);
    if (table_cmd->parsed()) return cmd_power_table(table);
    if (if_cmd->parsed()) return cmd_profile(ifp, false);
    if (pif_cmd->parsed()) return cmd_profile(pifp, true);
    if (mc_cmd->parsed()) return cmd_mc(mc);
    if (ss_cmd->parsed()) return cmd_sample_size(ss);
    if (diag_cmd->parsed()) return cmd_diagnostics(diag);
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
