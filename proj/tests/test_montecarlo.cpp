#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mdev/bounds.hpp"
#include "mdev/montecarlo.hpp"
#include "mdev/rng.hpp"
#include "mdev/tilt.hpp"

using namespace mdev;

namespace {

double choose(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

// P(X_n > x) for i.i.d. two-point steps {lo, hi}, P(hi) = p, by binomial counting.
double binomial_tail(int n, double lo, double hi, double p, double x) {
  double tail = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double s = k * hi + (n - k) * lo;
    if (s > x + kTieTolerance * std::max(1.0, std::abs(x))) tail += choose(n, k) * std::pow(p, k) * std::pow(1 - p, n - k);
  }
  return tail;
}

// Same event under the tilted measure, reweighted by e^{-lambda s + n log M(lambda)}.
double binomial_tilted(int n, double lo, double hi, double p, double x, double lambda) {
  const double mgf = p * std::exp(lambda * hi) + (1 - p) * std::exp(lambda * lo);
  const double q = p * std::exp(lambda * hi) / mgf;
  double total = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double s = k * hi + (n - k) * lo;
    if (!(s > x + kTieTolerance * std::max(1.0, std::abs(x)))) continue;
    const double w = std::exp(-lambda * s + n * std::log(mgf));
    total += choose(n, k) * std::pow(q, k) * std::pow(1 - q, n - k) * w;
  }
  return total;
}

}  // namespace

TEST_CASE("clopper-pearson") {
  auto [lo0, hi0] = clopper_pearson(0, 10);
  CHECK(lo0 == 0.0);
  CHECK(hi0 == doctest::Approx(1.0 - std::pow(0.025, 0.1)).epsilon(1e-10));
  auto [lo5, hi5] = clopper_pearson(5, 10);
  CHECK(lo5 == doctest::Approx(0.18709).epsilon(1e-4));
  CHECK(hi5 == doctest::Approx(0.81291).epsilon(1e-4));
  auto [lo10, hi10] = clopper_pearson(10, 10);
  CHECK(hi10 == 1.0);
  CHECK(lo10 == doctest::Approx(std::pow(0.025, 0.1)).epsilon(1e-10));
  CHECK_THROWS_AS(clopper_pearson(3, 2), std::invalid_argument);
}

TEST_CASE("plain estimator") {
  const MartingaleModel m = make_rademacher(10);
  const TailEstimate below = estimate_tail_plain(m, -100.0, 1000, 1);
  CHECK(below.p_hat == 1.0);
  CHECK(below.ci_hi == 1.0);

  CHECK(exact_tail(m, 0.0) == doctest::Approx(193.0 / 512.0).epsilon(1e-14));
  const TailEstimate e = estimate_tail_plain(m, 0.0, 200000, 7);
  CHECK(e.estimator == "plain");
  CHECK(e.n_samples == 200000);
  CHECK(std::abs(e.p_hat - 193.0 / 512.0) < 4.0 * e.std_err);
  CHECK(e.ci_lo <= e.p_hat);
  CHECK(e.p_hat <= e.ci_hi);
  CHECK(e.ess <= e.n_samples);

  McOptions paths;
  paths.force_path_sampling = true;
  const TailEstimate p = estimate_tail_plain(m, 0.0, 100000, 8, paths);
  CHECK(std::abs(p.p_hat - 193.0 / 512.0) < 4.0 * p.std_err);

  CHECK(exact_tail(m, 0.0, TailEvent::abs_greater) == doctest::Approx(1.0 - 252.0 / 1024.0).epsilon(1e-14));
  CHECK(exact_tail(m, 0.0, TailEvent::greater_equal) == doctest::Approx((386.0 + 252.0) / 1024.0).epsilon(1e-14));

  CHECK_THROWS_AS(estimate_tail_plain(m, 0.0, 0, 1), std::invalid_argument);
}

TEST_CASE("results do not depend on the worker count") {
  const MartingaleModel m = make_regime_switch(40, 0.3);
  McOptions one, three;
  three.workers = 3;
  const TailEstimate a = estimate_tail_plain(m, 1.0, 70000, 5, one);
  const TailEstimate b = estimate_tail_plain(m, 1.0, 70000, 5, three);
  CHECK(a.p_hat == b.p_hat);
  CHECK(a.std_err == b.std_err);
  const TailEstimate c = estimate_tail_tilted(m, 1.5, 1.2, 70000, 5, one);
  const TailEstimate d = estimate_tail_tilted(m, 1.5, 1.2, 70000, 5, three);
  CHECK(c.p_hat == d.p_hat);
  CHECK(c.std_err == d.std_err);
  CHECK(c.ess == d.ess);
}

TEST_CASE("tilted estimator") {
  const MartingaleModel m = make_rademacher(20);
  const TailEstimate zero = estimate_tail_tilted(m, 0.5, 0.0, 100000, 3);
  const double exact = exact_tail(m, 0.5);
  CHECK(std::abs(zero.p_hat - exact) < 4.0 * zero.std_err);
  // Weights vanish off the event, so with unit weights ess is the hit count.
  CHECK(zero.ess == doctest::Approx(zero.p_hat * 100000.0).epsilon(1e-12));

  const double target = (15504.0 + 4845.0 + 1140.0 + 190.0 + 20.0 + 1.0) / 1048576.0;
  CHECK(exact_tail(m, 2.0) == doctest::Approx(target).epsilon(1e-14));
  const TailEstimate t = estimate_tail_tilted(m, 2.0, choose_tilt(m, 2.0).lambda, 100000, 11);
  CHECK(t.estimator == "tilted");
  CHECK(std::abs(t.p_hat - target) < 3.0 * t.std_err);
  CHECK(t.std_err / t.p_hat < 0.01);
  CHECK(t.ess <= t.n_samples);
  CHECK(!t.low_ess);

  CHECK_THROWS_AS(estimate_tail_tilted(m, 2.0, -1.0, 10, 1), std::invalid_argument);
  McOptions two;
  two.event = TailEvent::abs_greater;
  CHECK_THROWS_AS(estimate_tail_tilted(m, 2.0, 1.0, 10, 1, two), std::invalid_argument);
}

TEST_CASE("exact tilted expectation equals the tail for every two-point model up to n = 12") {
  const std::vector<std::pair<double, double>> shapes = {{1.0, 0.5}, {2.0, 0.2}, {0.25, 0.8}, {9.0, 0.1}};
  for (auto [hi, p] : shapes) {
    const double lo = -p * hi / (1 - p);
    for (int n = 1; n <= 12; ++n) {
      const MartingaleModel m = make_iid(ConditionalLaw{{hi, p}, {lo, 1 - p}}, n);
      const double shi = m.law_at({}).max_value(), slo = m.law_at({}).min_value();
      for (double x : {0.0, 0.3, 1.0, 2.5}) {
        const double oracle = binomial_tail(n, slo, shi, p, x);
        CHECK(std::abs(exact_tail(m, x) - oracle) < 1e-10);
        for (double lambda : {0.0, 0.5, x}) {
          CHECK(std::abs(binomial_tilted(n, slo, shi, p, x, lambda) - oracle) < 1e-10);
          CHECK(std::abs(exact_tilted_expectation(m, x, lambda) - oracle) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("ratio report") {
  const MartingaleModel m = make_rademacher(100);
  const RatioReport r = ratio_report(m, {0.0, 1.0}, 20000, 3);
  REQUIRE(r.rows.size() == 2);
  const RatioRow& r0 = r.rows[0];
  CHECK(r0.gauss_tail == 0.5);
  CHECK(r0.ratio == doctest::Approx(r0.p_hat / 0.5).epsilon(1e-15));
  CHECK(r0.log_ratio == doctest::Approx(std::log(r0.ratio)));
  const double be = berry_esseen_term(BoundParams::from_certificate(r.certificate));
  CHECK(r0.bound_lo == doctest::Approx(std::exp(-be)).epsilon(1e-14));
  CHECK(r0.bound_hi == doctest::Approx(std::exp(be)).epsilon(1e-14));
  CHECK(r0.bound_lo <= 1.0);
  CHECK(r0.bound_hi >= 1.0);
  CHECK(r.rows[1].seed == derive_seed(3, 1));

  CHECK_THROWS_AS(ratio_report(m, {-0.5}, 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(ratio_report(m, {1000.0}, 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(ratio_report(m, {}, 100, 1), std::invalid_argument);

  std::ostringstream os;
  write_ratio_csv(os, r, {{"command", "tail"}});
  const std::string s = os.str();
  CHECK(s.rfind("# ", 0) == 0);
  CHECK(s.find("\nx,p_hat,se,ci_lo,ci_hi,gauss_tail,ratio,log_ratio,bound_lo,bound_hi,ess,n_samples,seed\n") !=
        std::string::npos);
}

TEST_CASE("mdp scan") {
  auto family = [](std::size_t n) { return make_rademacher(n); };
  CHECK_THROWS_AS(mdp_scan(family, {100}, 0.5, 1.0, 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(mdp_scan(family, {100}, 0.0, 1.0, 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(mdp_scan(family, {100}, 0.25, -1.0, 100, 1), std::invalid_argument);

  const std::vector<MdpRow> rows = mdp_scan(family, {16, 256, 4096}, 0.25, 0.0, 20000, 2);
  REQUIRE(rows.size() == 3);
  double prev = 1e300;
  for (const MdpRow& r : rows) {
    CHECK(r.a_n == doctest::Approx(std::pow(static_cast<double>(r.n), 0.25)));
    CHECK(r.value <= 0.0);
    CHECK(r.value_lo <= r.value);
    CHECK(r.value <= r.value_hi);
    CHECK(std::abs(r.value) <= std::log(2.0) / (r.a_n * r.a_n) + 1e-12);
    CHECK(std::abs(r.value) < prev);
    prev = std::abs(r.value);
  }
}

TEST_CASE("grid parsing") {
  CHECK(parse_grid("0:3:0.5") == std::vector<double>{0, 0.5, 1, 1.5, 2, 2.5, 3});
  CHECK(parse_grid("1,2.5") == std::vector<double>{1, 2.5});
  CHECK(parse_grid("0:1:0.1").size() == 11);
  CHECK(parse_grid("2") == std::vector<double>{2});
  CHECK_THROWS_AS(parse_grid("0:1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_grid("1:0:0.1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_grid("a,b"), std::invalid_argument);
  CHECK_THROWS_AS(parse_grid(""), std::invalid_argument);
}
