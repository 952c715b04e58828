#include "mdev/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mdev/models.hpp"

namespace mdev {

double BoundParams::eps_tilde() const {
  if (regime() == Regime::rho_lt_1) return std::pow(eps, rho);
  if (eps <= 0.0) return 0.0;
  const double e = std::min(eps, 0.5);
  return e * std::abs(std::log(e));
}

void BoundParams::validate() const {
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("bounds: rho must lie in (0, 1]");
  if (!(eps >= 0.0) || !(delta >= 0.0)) throw std::invalid_argument("bounds: eps and delta must be nonnegative");
  if (!(c > 0.0)) throw std::invalid_argument("bounds: c must be positive");
}

BoundParams BoundParams::from_certificate(const Certificate& cert, double c) {
  return BoundParams{cert.rho, cert.eps_n, cert.delta_n, c};
}

double gaussian_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double normal_cdf(double x) { return gaussian_tail(-x); }

double log_gaussian_tail(double x) {
  if (x < 30.0) return std::log(gaussian_tail(x));
  // Mills-ratio asymptotic series; the omitted term is below 1e-14 here.
  const double r = 1.0 / (x * x);
  const double series = -r + 3.0 * r * r - 15.0 * r * r * r + 105.0 * r * r * r * r;
  return -0.5 * x * x - std::log(x * std::sqrt(2.0 * std::numbers::pi)) + std::log1p(series);
}

std::pair<double, double> gaussian_sandwich(double x) {
  if (!(x >= 0.0)) throw std::invalid_argument("gaussian_sandwich: x must be nonnegative");
  const double g = std::exp(-0.5 * x * x) / (1.0 + x);
  return {g / std::sqrt(2.0 * std::numbers::pi), g / std::sqrt(std::numbers::pi)};
}

double thm21_rhs(double x, const BoundParams& p) {
  p.validate();
  if (!(x >= 0.0)) throw std::invalid_argument("thm21_rhs: x must be nonnegative");
  return p.c * (std::pow(x, 2.0 + p.rho) * std::pow(p.eps, p.rho) + x * x * p.delta * p.delta +
                (1.0 + x) * (p.eps_tilde() + p.delta));
}

double combined_log_ratio_bound(double x, const BoundParams& p) {
  p.validate();
  if (!(x >= 0.0)) throw std::invalid_argument("combined_log_ratio_bound: x must be nonnegative");
  const double e = std::min(p.eps, 0.5);
  const double log_term = p.eps > 0.0 ? std::pow(p.eps, p.rho) * std::abs(std::log(e)) : 0.0;
  return p.c * (std::pow(x, 2.0 + p.rho) * std::pow(p.eps, p.rho) + x * x * p.delta * p.delta +
                (1.0 + x) * (log_term + p.delta));
}

double berry_esseen_term(const BoundParams& p) {
  p.validate();
  return p.c * (p.eps_tilde() + p.delta);
}

double bernstein_tail_bound(double x, double n, double M, double L) {
  if (!(x >= 0.0) || !(n >= 1.0) || !(M >= 0.0) || !(L > 0.0))
    throw std::invalid_argument("bernstein_tail_bound: need x >= 0, n >= 1, M >= 0, L > 0");
  return 2.0 * std::exp(-x * x / (2.0 * (1.0 + M / n + x * L / (3.0 * std::sqrt(n)))));
}

double beta_mixing_rhs(double x, double n, double alpha, double rho, double c) {
  return c * std::pow(1.0 + x, 2.0 + rho) / std::pow(n, rho * (0.5 - alpha));
}

double psi_mixing_rhs(double x, double n, double alpha, double rho, double tau, double c) {
  const double scale = std::pow(n, 0.5 - alpha);
  if (rho < 1.0) {
    const double s = std::pow(n, rho * (0.5 - alpha));
    return c * (std::pow(x, 2.0 + rho) / s + x * x * tau * tau + (1.0 + x) * (1.0 / s + tau));
  }
  return c * (x * x * x / scale + x * x * tau * tau + (1.0 + x) * (std::log(n) / scale + tau));
}

double rademacher_kolmogorov_distance(std::size_t n) {
  if (n == 0) throw std::invalid_argument("rademacher_kolmogorov_distance: n must be positive");
  const double nn = static_cast<double>(n);
  const double root = std::sqrt(nn);
  const double base = std::lgamma(nn + 1.0) - nn * std::numbers::ln2;
  double below = 0.0;  // P(X_n < t_k)
  double worst = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    const double pmf = std::exp(base - std::lgamma(kk + 1.0) - std::lgamma(nn - kk + 1.0));
    const double t = (2.0 * kk - nn) / root;
    const double phi = normal_cdf(t);
    const double at = std::min(1.0, below + pmf);
    worst = std::max({worst, std::abs(below - phi), std::abs(at - phi)});
    below = at;
  }
  return worst;
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("log_log_slope: need matching sizes >= 2");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace mdev
