#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "mdev/bounds.hpp"
#include "mdev/coupling.hpp"
#include "mdev/rng.hpp"

using namespace mdev;

TEST_CASE("exact rademacher quantile") {
  const double r4 = 2.0;  // sqrt(4)
  CHECK(quantile_exact_rademacher(1, 0.25) == -1.0);
  CHECK(quantile_exact_rademacher(1, 0.5) == -1.0);
  CHECK(quantile_exact_rademacher(1, 0.75) == 1.0);
  CHECK(quantile_exact_rademacher(4, 0.5) == 0.0);
  CHECK(quantile_exact_rademacher(4, 5.0 / 16.0) == -2.0 / r4);
  CHECK(quantile_exact_rademacher(4, 5.0 / 16.0 + 1e-9) == 0.0);
  CHECK(quantile_exact_rademacher(4, 0.999) == 2.0);
  CHECK_THROWS_AS(quantile_exact_rademacher(4, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(quantile_exact_rademacher(4, 1.0), std::invalid_argument);

  const QuantileFunction qf = QuantileFunction::exact_rademacher(9);
  double prev = -1e300;
  for (double s = 0.001; s < 1.0; s += 0.001) {
    CHECK(qf(s) >= prev);
    prev = qf(s);
  }
}

TEST_CASE("empirical quantile") {
  CHECK(quantile_empirical({1, 2, 3}, 0.5) == 2.0);
  CHECK(quantile_empirical({1, 2, 3}, 0.34) == 2.0);
  CHECK(quantile_empirical({1, 2, 3}, 1.0 / 3.0) == 1.0);
  for (double s : {0.01, 0.5, 0.99}) CHECK(quantile_empirical({5}, s) == 5.0);
  CHECK_THROWS_AS(quantile_empirical({}, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(QuantileFunction::empirical({}), std::invalid_argument);

  std::vector<double> draws(1000000);
  Stream rng(21, 0);
  for (double& d : draws) d = normal_quantile(rng.uniform());
  const QuantileFunction emp = QuantileFunction::empirical(draws);
  CHECK(std::abs(emp(0.5)) < 0.005);
}

TEST_CASE("normal quantile inverts the cdf") {
  for (double p : {1e-300, 1e-10, 0.01, 0.3, 0.5, 0.9, 1 - 1e-12}) {
    const double z = normal_quantile(p);
    CHECK(normal_cdf(z) == doctest::Approx(p).epsilon(1e-12));
  }
}

TEST_CASE("couple") {
  const QuantileFunction id = QuantileFunction::standard_normal(100);
  for (double z : {-3.0, -0.1, 0.0, 2.5}) {
    const CouplingSample s = couple(id, z);
    CHECK(s.w == z);
    CHECK(s.deviation == 0.0);
  }

  const QuantileFunction one = QuantileFunction::exact_rademacher(1);
  CHECK(couple(one, -0.3).w == -1.0);
  CHECK(couple(one, 0.3).w == 1.0);
  // Phi(0) = 1/2 = F(-1), so the infimum picks -1.
  CHECK(couple(one, 0.0).w == -1.0);
  CHECK_THROWS_AS(couple(one, INFINITY), std::invalid_argument);

  const QuantileFunction qf = QuantileFunction::exact_rademacher(40);
  double prev = -1e300;
  for (double z = -6.0; z <= 6.0; z += 0.01) {
    const CouplingSample s = couple(qf, z);
    CHECK(s.w >= prev);
    prev = s.w;
    CHECK(s.deviation == doctest::Approx(std::sqrt(40.0) * std::abs(s.w - z) / std::log(40.0)));
  }
}

TEST_CASE("pushforward reproduces the binomial atoms") {
  const QuantileFunction qf = QuantileFunction::exact_rademacher(6);
  const std::vector<double> mass = qf.atom_measure();
  const std::vector<double> binom = {1, 6, 15, 20, 15, 6, 1};
  REQUIRE(mass.size() == 7);
  for (int k = 0; k <= 6; ++k) {
    CHECK(std::abs(mass[k] - binom[k] / 64.0) < 1e-12);
    CHECK(qf.support()[k] == doctest::Approx((2.0 * k - 6) / std::sqrt(6.0)).epsilon(1e-15));
  }
  CHECK_THROWS_AS(QuantileFunction::standard_normal().atom_measure(), std::logic_error);

  // Mapping a fine z grid agrees with the interval measures.
  std::vector<double> seen(7, 0.0);
  const double h = 1e-4;
  for (double z = -9.0; z < 9.0; z += h) {
    const double w = couple(qf, z + h / 2).w;
    const int k = static_cast<int>(std::lround((w * std::sqrt(6.0) + 6) / 2));
    seen[k] += std::exp(-(z + h / 2) * (z + h / 2) / 2) / std::sqrt(2 * M_PI) * h;
  }
  for (int k = 0; k <= 6; ++k) CHECK(seen[k] == doctest::Approx(binom[k] / 64.0).epsilon(1e-3));
}

TEST_CASE("coupling tail report") {
  const CouplingReport identity = coupling_tail_report(QuantileFunction::standard_normal(100), 20000, 1);
  CHECK(identity.D_hat == 0.0);

  const CouplingReport r = coupling_tail_report(100, 200000, 3);
  CHECK(r.n == 100);
  CHECK(r.budget == 200000);
  CHECK(r.D_hat > 0.0);
  CHECK(std::isfinite(r.D_hat));
  CHECK(!r.tail_unresolved);
  CHECK(r.tail_slope < 0.0);
  // Event |W| <= sqrt(100) / 8: lattice points with |2k - 100| <= 12.5, i.e. k = 44..56.
  double event = 0.0, pk = std::pow(0.5, 100);
  for (int k = 0; k <= 56; ++k) {
    if (k >= 44) event += pk;
    pk = pk * (100 - k) / (k + 1);
  }
  CHECK(std::abs(r.frac_event - event) < 4.0 * std::sqrt(event * (1 - event) / 200000));

  CouplingOptions three;
  three.workers = 3;
  const CouplingReport r3 = coupling_tail_report(100, 200000, 3, three);
  CHECK(r3.D_hat == r.D_hat);
  CHECK(r3.tail_slope == r.tail_slope);

  const CouplingReport tiny = coupling_tail_report(100, 10, 3);
  CHECK(tiny.tail_unresolved);
  CHECK_THROWS_AS(coupling_tail_report(1, 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(coupling_tail_report(100, 0, 1), std::invalid_argument);

  std::ostringstream os;
  write_coupling_csv(os, {r}, {{"command", "couple"}});
  CHECK(os.str().find("\nn,seed,D_hat,tail_slope,tail_intercept,frac_event,budget\n") != std::string::npos);
}

TEST_CASE("sakhanenko certificate of the rademacher model") {
  const SakhanenkoCertificate c = sakhanenko_certificate(make_rademacher(100));
  CHECK(c.K == 0.5);
  CHECK(c.L == 2.0);
  CHECK(c.M == 0.0);
  // Check the certified inequality directly: |eta| = 1.
  CHECK(std::exp(c.K) <= c.L);
}
