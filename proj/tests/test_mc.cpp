#include "dpdwald/mc.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <sstream>

using namespace dpdwald;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::uint64_t splitmix_nth(std::uint64_t state, std::uint64_t r) {
  std::uint64_t z = 0;
  for (std::uint64_t k = 0; k <= r; ++k) {
    state += 0x9E3779B97F4A7C15ULL;
    z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
  }
  return z;
}

LinearHypothesis second_coefficient_zero(int k) {
  Matrix L = Matrix::Zero(1, k);
  L(0, 1) = 1.0;
  return LinearHypothesis(L, vec({0.0}));
}

}  // namespace

TEST_CASE("replication seeds are the SplitMix64 stream") {
  for (std::uint64_t seed : {0ULL, 1ULL, 20240611ULL, ~0ULL}) {
    for (std::uint64_t r : {0ULL, 1ULL, 7ULL, 999ULL}) CHECK(replication_seed(seed, r) == splitmix_nth(seed, r));
  }
  // first output of SplitMix64 seeded with 0
  CHECK(replication_seed(0, 0) == 0xE220A8397B1DCDAFULL);
}

TEST_CASE("scenarios and names") {
  for (auto s : {McScenario::null_hypothesis, McScenario::fixed_alternative, McScenario::contiguous,
                 McScenario::contaminated_level, McScenario::contaminated_power}) {
    CHECK(parse_scenario(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_scenario("bogus"), DomainError);
  McConfig c;
  c.n = 100;
  c.scenario = McScenario::contiguous;
  c.d = vec({0.0, 2.0});
  CHECK((scenario_theta(c, vec({1.0, 0.0})) - vec({1.0, 0.2})).norm() < 1e-15);
}

TEST_CASE("bit reproducible and independent of thread count") {
  const GlmModel m(GlmFamily::poisson(), FixedDesign::design1(60));
  McConfig c;
  c.replications = 100;
  c.n = 60;
  c.seed = 99;
  c.tau_grid = {0.0, 0.5};
  c.threads = 1;
  const McReport a = run_mc(c, m, vec({1.0, 0.0}), second_coefficient_zero(2));
  c.threads = 3;
  const McReport b = run_mc(c, m, vec({1.0, 0.0}), second_coefficient_zero(2));
  REQUIRE(a.rows.size() == 2);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(a.rows[t].rejections == b.rows[t].rejections);
    CHECK(a.rows[t].mean_statistic == b.rows[t].mean_statistic);
    CHECK(a.rows[t].valid + a.rows[t].excluded == 100);
    CHECK(a.rows[t].excluded <= 1);
    CHECK(a.rows[t].se == doctest::Approx(std::sqrt(a.rows[t].rate * (1 - a.rows[t].rate) / a.rows[t].valid)));
  }
  std::ostringstream sa, sb;
  write_mc_csv(sa, a);
  write_mc_csv(sb, b);
  CHECK(sa.str() == sb.str());
  c.seed = 100;
  const McReport other = run_mc(c, m, vec({1.0, 0.0}), second_coefficient_zero(2));
  CHECK(other.rows[1].mean_statistic != a.rows[1].mean_statistic);
}

TEST_CASE("fixed alternative: rejection rate grows with n") {
  McConfig c;
  c.replications = 100;
  c.seed = 5;
  c.tau_grid = {0.3};
  c.scenario = McScenario::fixed_alternative;
  c.theta_star = vec({1.0, 0.3, 1.0});
  double prev = -1.0;
  for (int n : {50, 100, 200, 400}) {
    const GlmModel m(GlmFamily::normal(), FixedDesign::design2(n));
    c.n = n;
    const McReport r = run_mc(c, m, vec({1.0, 0.0, 1.0}), second_coefficient_zero(2));
    CAPTURE(n);
    CHECK(r.rows[0].rate >= prev);
    prev = r.rows[0].rate;
  }
  CHECK(prev > 0.95);
}

TEST_CASE("contaminated level stays at alpha for tau = 0.3") {
  const int n = 500;
  const GlmModel m(GlmFamily::normal(), FixedDesign::design2(n));
  McConfig c;
  c.replications = 600;
  c.n = n;
  c.seed = 42;
  c.tau_grid = {0.3};
  c.scenario = McScenario::contaminated_level;
  c.epsilon = 0.5;
  c.contamination_point = 15.0;
  const McReport r = run_mc(c, m, vec({1.0, 0.0, 1.0}), second_coefficient_zero(2));
  const McRow& row = r.rows[0];
  const double se = std::sqrt(0.05 * 0.95 / row.valid);
  CHECK(std::abs(row.rate - 0.05) < 3.0 * se);
  CHECK(row.excluded < 6);
}

TEST_CASE("configuration errors") {
  const GlmModel m(GlmFamily::poisson(), FixedDesign::design1(50));
  McConfig c;
  c.n = 50;
  c.replications = 99;
  CHECK_THROWS_AS(run_mc(c, m, vec({1.0, 0.0}), second_coefficient_zero(2)), DomainError);
  c.replications = 100;
  c.n = 40;
  CHECK_THROWS_AS(run_mc(c, m, vec({1.0, 0.0}), second_coefficient_zero(2)), DomainError);
  c.n = 50;
  c.scenario = McScenario::contaminated_level;
  c.epsilon = 0.5;
  c.contamination_point = -1.0;
  CHECK_THROWS_AS(run_mc(c, m, vec({1.0, 0.0}), second_coefficient_zero(2)), DomainError);
  c.contamination_point = 3.0;
  c.tau_grid = {-0.1};
  CHECK_THROWS_AS(run_mc(c, m, vec({1.0, 0.0}), second_coefficient_zero(2)), DomainError);
  c.tau_grid = {0.3};
  c.scenario = McScenario::fixed_alternative;
  CHECK_THROWS_AS(run_mc(c, m, vec({1.0, 0.0}), second_coefficient_zero(2)), DomainError);
  c.scenario = McScenario::null_hypothesis;
  CHECK_THROWS_AS(run_mc(c, m, vec({1.0, 0.5}), second_coefficient_zero(2)), DomainError);
}
