#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "mdev/bounds.hpp"

using namespace mdev;

namespace {

// Composite Simpson rule for the standard normal density on [a, b].
double simpson_tail(double a, double b, int panels) {
  const double h = (b - a) / panels;
  auto phi = [](double t) { return std::exp(-t * t / 2) / std::sqrt(2 * std::numbers::pi); };
  double s = phi(a) + phi(b);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * phi(a + i * h);
  return s * h / 3.0;
}

// sup |F_n - Phi| over the lattice of the normalized Rademacher sum, by direct pmf recursion.
double kolmogorov_oracle(int n) {
  std::vector<double> pmf(n + 1);
  pmf[0] = std::pow(0.5, n);
  for (int k = 1; k <= n; ++k) pmf[k] = pmf[k - 1] * (n - k + 1) / k;
  double cdf = 0.0, worst = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double t = (2.0 * k - n) / std::sqrt(static_cast<double>(n));
    const double phi = 0.5 * std::erfc(-t / std::sqrt(2.0));
    worst = std::max(worst, std::abs(cdf - phi));
    cdf += pmf[k];
    worst = std::max(worst, std::abs(cdf - phi));
  }
  return worst;
}

}  // namespace

TEST_CASE("gaussian tail") {
  CHECK(gaussian_tail(0.0) == 0.5);
  CHECK(gaussian_tail(1.0) == doctest::Approx(0.15865525).epsilon(1e-8));
  CHECK(gaussian_tail(1.0) == doctest::Approx(simpson_tail(1.0, 40.0, 200000)).epsilon(1e-12));
  CHECK(gaussian_tail(3.0) == doctest::Approx(simpson_tail(3.0, 40.0, 200000)).epsilon(1e-12));
  for (double x : {0.1, 0.7, 2.0, 5.0}) {
    CHECK(gaussian_tail(-x) == doctest::Approx(1.0 - gaussian_tail(x)).epsilon(1e-15));
    CHECK(normal_cdf(x) == doctest::Approx(1.0 - gaussian_tail(x)).epsilon(1e-15));
  }
}

TEST_CASE("log gaussian tail") {
  for (double x : {-3.0, 0.0, 1.0, 5.0, 20.0})
    CHECK(log_gaussian_tail(x) == doctest::Approx(std::log(gaussian_tail(x))).epsilon(1e-13));
  for (double x : {50.0, 200.0, 1e4}) {
    const double asym = -x * x / 2 - std::log(x) - 0.5 * std::log(2 * std::numbers::pi) +
                        std::log1p(-1 / (x * x) + 3 / std::pow(x, 4));
    CHECK(std::isfinite(log_gaussian_tail(x)));
    CHECK(log_gaussian_tail(x) == doctest::Approx(asym).epsilon(1e-12));
  }
}

TEST_CASE("gaussian sandwich") {
  const auto [lo, hi] = gaussian_sandwich(0.0);
  CHECK(lo == doctest::Approx(0.39894).epsilon(1e-5));
  CHECK(hi == doctest::Approx(0.56419).epsilon(1e-5));
  CHECK(lo <= 0.5);
  CHECK(0.5 <= hi);
  for (int i = 0; i <= 1000; ++i) {
    const double x = i * 0.01;
    const auto [l, h] = gaussian_sandwich(x);
    CHECK(l <= gaussian_tail(x));
    CHECK(gaussian_tail(x) <= h);
  }
  const auto [l40, h40] = gaussian_sandwich(40.0);
  CHECK(l40 < 1e-300);
  CHECK(l40 <= h40);
  CHECK_THROWS_AS(gaussian_sandwich(-1.0), std::invalid_argument);
}

TEST_CASE("theorem right-hand side") {
  CHECK(thm21_rhs(0.0, BoundParams{1.0, 0.0, 0.0, 1.0}) == 0.0);
  CHECK(thm21_rhs(0.0, BoundParams{0.5, 0.1, 0.1, 1.0}) == doctest::Approx(std::sqrt(0.1) + 0.1).epsilon(1e-15));
  CHECK(thm21_rhs(0.0, BoundParams{0.5, 0.1, 0.1, 1.0}) == doctest::Approx(0.41623).epsilon(1e-5));

  const BoundParams one{1.0, 0.1, 0.0, 1.0};
  CHECK(one.regime() == Regime::rho_eq_1);
  CHECK(one.eps_tilde() == doctest::Approx(0.23026).epsilon(1e-5));
  CHECK(thm21_rhs(1.0, one) == doctest::Approx(0.1 + 2 * 0.1 * std::log(10.0)).epsilon(1e-14));
  CHECK(BoundParams{1.0, 0.9, 0.0, 1.0}.eps_tilde() == doctest::Approx(0.5 * std::log(2.0)));
  CHECK(BoundParams{0.5, 0.0, 0.0, 1.0}.regime() == Regime::rho_lt_1);

  for (double rho : {0.3, 1.0}) {
    double prev_x = -1.0;
    for (double x = 0.0; x < 5.0; x += 0.25) {
      const double v = thm21_rhs(x, BoundParams{rho, 0.05, 0.05, 1.0});
      CHECK(v >= prev_x);
      prev_x = v;
      CHECK(thm21_rhs(x, BoundParams{rho, 0.06, 0.05, 1.0}) >= v);
      CHECK(thm21_rhs(x, BoundParams{rho, 0.05, 0.06, 1.0}) >= v);
      CHECK(std::exp(-v) <= 1.0);
      CHECK(std::exp(v) >= 1.0);
    }
  }
  CHECK_THROWS_AS(thm21_rhs(-1.0, one), std::invalid_argument);
  CHECK_THROWS_AS(thm21_rhs(1.0, BoundParams{1.5, 0.1, 0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(thm21_rhs(1.0, BoundParams{1.0, 0.1, 0.0, 0.0}), std::invalid_argument);

  // Combined form equals the theorem form when rho = 1.
  CHECK(combined_log_ratio_bound(2.0, one) == doctest::Approx(thm21_rhs(2.0, one)).epsilon(1e-15));
  const BoundParams half{0.5, 0.1, 0.0, 1.0};
  CHECK(combined_log_ratio_bound(2.0, half) >= thm21_rhs(2.0, half));
}

TEST_CASE("berry-esseen term") {
  CHECK(berry_esseen_term(BoundParams{1.0, 0.0, 0.0, 1.0}) == 0.0);
  CHECK(berry_esseen_term(BoundParams{1.0, std::exp(-1.0), 0.0, 1.0}) == doctest::Approx(0.36788).epsilon(1e-5));
  CHECK(berry_esseen_term(BoundParams{0.5, 0.04, 0.1, 2.0}) == doctest::Approx(2 * (0.2 + 0.1)).epsilon(1e-15));
  const BoundParams p{0.7, 0.1, 0.2, 1.0};
  CHECK(berry_esseen_term(p) == doctest::Approx(thm21_rhs(0.0, p)).epsilon(1e-15));
}

TEST_CASE("bernstein tail bound") {
  CHECK(bernstein_tail_bound(0.0, 100, 0, 2) == 2.0);
  for (double x : {0.5, 1.0, 3.0})
    CHECK(bernstein_tail_bound(x, 1e16, 0, 2) == doctest::Approx(2 * std::exp(-x * x / 2)).epsilon(1e-7));
  CHECK(bernstein_tail_bound(2.0, 100, 0, 2) == doctest::Approx(2 * std::exp(-4.0 / (2 * (1 + 4.0 / 30)))).epsilon(1e-15));
  CHECK(bernstein_tail_bound(2.0, 100, 10, 2) > bernstein_tail_bound(2.0, 100, 0, 2));
  CHECK_THROWS_AS(bernstein_tail_bound(-1.0, 100, 0, 2), std::invalid_argument);
  CHECK_THROWS_AS(bernstein_tail_bound(1.0, 0.5, 0, 2), std::invalid_argument);
  CHECK_THROWS_AS(bernstein_tail_bound(1.0, 100, 0, 0), std::invalid_argument);
}

TEST_CASE("mixing right-hand sides") {
  CHECK(beta_mixing_rhs(1.0, 100.0, 0.25, 1.0) == doctest::Approx(8.0 / std::pow(100.0, 0.25)).epsilon(1e-15));
  CHECK(beta_mixing_rhs(0.0, 1e4, 0.3, 0.5, 2.0) == doctest::Approx(2.0 / std::pow(1e4, 0.1)).epsilon(1e-15));
  CHECK(psi_mixing_rhs(0.0, 1e4, 0.3, 1.0, 0.5) == doctest::Approx(std::log(1e4) / std::pow(1e4, 0.2) + 0.5).epsilon(1e-14));
  CHECK(psi_mixing_rhs(1.0, 1e4, 0.3, 0.5, 0.1) ==
        doctest::Approx(1 / std::pow(1e4, 0.1) + 0.01 + 2 * (1 / std::pow(1e4, 0.1) + 0.1)).epsilon(1e-14));
  CHECK(psi_mixing_rhs(2.0, 1e4, 0.3, 1.0, 0.2) > psi_mixing_rhs(2.0, 1e4, 0.3, 1.0, 0.1));
}

TEST_CASE("rademacher kolmogorov distance") {
  for (int n : {1, 2, 7, 50, 333, 1000})
    CHECK(rademacher_kolmogorov_distance(n) == doctest::Approx(kolmogorov_oracle(n)).epsilon(1e-10));
  CHECK_THROWS_AS(rademacher_kolmogorov_distance(0), std::invalid_argument);
  const std::vector<double> ns = {100, 1000, 10000};
  std::vector<double> d;
  for (double n : ns) d.push_back(rademacher_kolmogorov_distance(static_cast<std::size_t>(n)));
  CHECK(std::abs(log_log_slope(ns, d) + 0.5) < 0.15);
}

TEST_CASE("log-log slope") {
  const std::vector<double> x = {1, 2, 4, 8, 16};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * std::pow(v, -0.5));
  CHECK(log_log_slope(x, y) == doctest::Approx(-0.5).epsilon(1e-12));
  std::vector<double> z;
  for (double v : x) z.push_back(std::pow(v, 2.0));
  CHECK(log_log_slope(x, z) == doctest::Approx(2.0).epsilon(1e-12));
}
