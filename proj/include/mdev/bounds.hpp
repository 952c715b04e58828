#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace mdev {

struct Certificate;

enum class Regime { rho_lt_1, rho_eq_1 };

/// Inputs of the closed-form right-hand sides. `c` stands in for the
/// anonymous constants and defaults to one.
struct BoundParams {
  double rho = 1.0;
  double eps = 0.0;
  double delta = 0.0;
  double c = 1.0;

  Regime regime() const { return rho < 1.0 ? Regime::rho_lt_1 : Regime::rho_eq_1; }
  /// eps^rho for rho < 1, eps |ln eps| (eps clamped to (0, 1/2]) for rho = 1.
  double eps_tilde() const;
  void validate() const;

  static BoundParams from_certificate(const Certificate& cert, double c = 1.0);
};

/// 1 - Phi(x) through erfc.
double gaussian_tail(double x);
/// ln(1 - Phi(x)), finite far into the right tail.
double log_gaussian_tail(double x);
double normal_cdf(double x);

/// (e^{-x^2/2} / (sqrt(2 pi)(1+x)), e^{-x^2/2} / (sqrt(pi)(1+x))), x >= 0.
std::pair<double, double> gaussian_sandwich(double x);

/// c (x^{2+rho} eps^rho + x^2 delta^2 + (1+x)(eps~ + delta)).
double thm21_rhs(double x, const BoundParams& p);

/// c (x^{2+rho} eps^rho + x^2 delta^2 + (1+x)(eps^rho |ln eps| + delta)), valid for every rho.
double combined_log_ratio_bound(double x, const BoundParams& p);

/// c (eps~ + delta).
double berry_esseen_term(const BoundParams& p);

/// 2 exp(-x^2 / (2 (1 + M/n + x L / (3 sqrt n)))).
double bernstein_tail_bound(double x, double n, double M, double L);

/// c (1+x)^{2+rho} / n^{rho (1/2 - alpha)}.
double beta_mixing_rhs(double x, double n, double alpha, double rho, double c = 1.0);

/// Right-hand side for psi-mixing interlaced sums with tau_n given.
double psi_mixing_rhs(double x, double n, double alpha, double rho, double tau, double c = 1.0);

/// sup_x |P(X_n <= x) - Phi(x)| for the normalized Rademacher sum, computed
/// exactly from the binomial distribution.
double rademacher_kolmogorov_distance(std::size_t n);

/// Least-squares slope of ln y against ln x.
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace mdev
