#include "mdev/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>
#include <fmt/format.h>

#include "mdev/bounds.hpp"
#include "mdev/montecarlo.hpp"
#include "mdev/rng.hpp"

namespace mdev {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_level(double s) {
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("quantile: s must lie in (0, 1)");
}

// Gaussian measure of (a, b], evaluated on the side where it does not cancel.
double gaussian_interval(double a, double b) {
  if (a >= 0.0) return gaussian_tail(a) - gaussian_tail(b);
  if (b <= 0.0) return normal_cdf(b) - normal_cdf(a);
  return 1.0 - gaussian_tail(b) - normal_cdf(a);
}

}  // namespace

double normal_quantile(double p) {
  if (std::isnan(p)) throw std::invalid_argument("normal_quantile: NaN");
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

QuantileFunction QuantileFunction::exact_rademacher(std::size_t n) {
  if (n == 0) throw std::invalid_argument("exact_rademacher: n must be positive");
  QuantileFunction q(Kind::exact_rademacher, n);
  const double nn = static_cast<double>(n);
  const double base = std::lgamma(nn + 1.0) - nn * std::numbers::ln2;
  std::vector<double> pmf(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double kk = static_cast<double>(k);
    pmf[k] = std::exp(base - std::lgamma(kk + 1.0) - std::lgamma(nn - kk + 1.0));
    q.values_.push_back((2.0 * kk - nn) / std::sqrt(nn));
  }
  // F_k from below, 1 - F_k from above; the smaller one sets the threshold.
  std::vector<double> lower(n + 1), upper(n + 1);
  double run = 0.0;
  for (std::size_t k = 0; k <= n; ++k) lower[k] = run += pmf[k];
  run = 0.0;
  for (std::size_t k = n + 1; k-- > 0;) {
    upper[k] = run;  // P(B > k)
    run += pmf[k];
  }
  for (std::size_t k = 0; k <= n; ++k) q.cdf_.push_back(lower[k] <= 0.5 ? lower[k] : 1.0 - upper[k]);
  q.cdf_.back() = 1.0;
  for (std::size_t k = 0; k < n; ++k)
    q.thresholds_.push_back(lower[k] <= 0.5 ? normal_quantile(lower[k]) : -normal_quantile(upper[k]));
  return q;
}

QuantileFunction QuantileFunction::empirical(std::vector<double> samples, std::size_t nominal_n) {
  if (samples.empty()) throw std::invalid_argument("empirical quantile: no samples");
  QuantileFunction q(Kind::empirical, nominal_n);
  std::sort(samples.begin(), samples.end());
  q.values_ = std::move(samples);
  return q;
}

QuantileFunction QuantileFunction::standard_normal(std::size_t nominal_n) {
  return QuantileFunction(Kind::standard_normal, nominal_n);
}

double QuantileFunction::operator()(double s) const {
  check_level(s);
  switch (kind_) {
    case Kind::standard_normal:
      return normal_quantile(s);
    case Kind::empirical:
      return quantile_empirical(values_, s);
    case Kind::exact_rademacher: {
      const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), s);
      return values_[static_cast<std::size_t>(it - cdf_.begin())];
    }
  }
  return 0.0;
}

double QuantileFunction::couple(double z) const {
  switch (kind_) {
    case Kind::standard_normal:
      return z;
    case Kind::empirical: {
      const double s = normal_cdf(z);
      const double N = static_cast<double>(values_.size());
      const double idx = std::clamp(std::ceil(s * N), 1.0, N);
      return values_[static_cast<std::size_t>(idx) - 1];
    }
    case Kind::exact_rademacher: {
      const auto it = std::lower_bound(thresholds_.begin(), thresholds_.end(), z);
      return values_[static_cast<std::size_t>(it - thresholds_.begin())];
    }
  }
  return 0.0;
}

std::vector<double> QuantileFunction::atom_measure() const {
  if (kind_ != Kind::exact_rademacher) throw std::logic_error("atom_measure: exact quantile functions only");
  std::vector<double> out;
  for (std::size_t k = 0; k < values_.size(); ++k) {
    const double a = k == 0 ? -kInf : thresholds_[k - 1];
    const double b = k + 1 == values_.size() ? kInf : thresholds_[k];
    out.push_back(gaussian_interval(a, b));
  }
  return out;
}

double quantile_exact_rademacher(std::size_t n, double s) {
  check_level(s);
  return QuantileFunction::exact_rademacher(n)(s);
}

double quantile_empirical(const std::vector<double>& sorted_samples, double s) {
  if (sorted_samples.empty()) throw std::invalid_argument("empirical quantile: no samples");
  check_level(s);
  const double N = static_cast<double>(sorted_samples.size());
  const double idx = std::clamp(std::ceil(s * N), 1.0, N);
  return sorted_samples[static_cast<std::size_t>(idx) - 1];
}

CouplingSample couple(const QuantileFunction& qf, double z) {
  if (!std::isfinite(z)) throw std::invalid_argument("couple: z must be finite");
  CouplingSample c;
  c.z = z;
  c.w = qf.couple(z);
  const double gap = std::abs(c.w - z);
  const double n = static_cast<double>(qf.n());
  if (gap == 0.0)
    c.deviation = 0.0;
  else
    c.deviation = qf.n() >= 2 ? std::sqrt(n) * gap / std::log(n) : kInf;
  return c;
}

// ---------------------------------------------------------------------------

CouplingReport coupling_tail_report(std::size_t n, std::size_t budget, std::uint64_t seed,
                                    const CouplingOptions& options) {
  return coupling_tail_report(QuantileFunction::exact_rademacher(n), budget, seed, options);
}

CouplingReport coupling_tail_report(const QuantileFunction& qf, std::size_t budget, std::uint64_t seed,
                                    const CouplingOptions& options) {
  if (qf.n() < 2) throw std::invalid_argument("coupling_tail_report: n must be at least 2");
  if (budget == 0) throw std::invalid_argument("coupling_tail_report: budget must be at least 1");
  struct Part {
    std::vector<double> dev;
    double d_max = 0.0;
    std::size_t in_event = 0;
  };
  const double edge = options.alpha * std::sqrt(static_cast<double>(qf.n()));
  const auto parts = run_chunked<Part>(budget, options.workers, [&](std::size_t b, std::size_t e, Part& out) {
    out.dev.reserve(e - b);
    for (std::size_t j = b; j < e; ++j) {
      Stream rng(seed, j);
      const CouplingSample c = couple(qf, normal_quantile(rng.uniform()));
      out.dev.push_back(c.deviation);
      if (std::abs(c.w) <= edge) {
        ++out.in_event;
        out.d_max = std::max(out.d_max, c.deviation / (2.0 * (c.w * c.w + 1.0)));
      }
    }
  });

  CouplingReport r;
  r.n = qf.n();
  r.seed = seed;
  r.budget = budget;
  std::vector<double> dev;
  dev.reserve(budget);
  std::size_t in_event = 0;
  for (const Part& p : parts) {
    dev.insert(dev.end(), p.dev.begin(), p.dev.end());
    r.D_hat = std::max(r.D_hat, p.d_max);
    in_event += p.in_event;
  }
  const double N = static_cast<double>(budget);
  r.frac_event = static_cast<double>(in_event) / N;

  std::sort(dev.begin(), dev.end());
  const double top = dev.back();
  std::vector<double> xs, ys;
  for (std::size_t i = 0; top > 0.0 && i < options.tail_grid; ++i) {
    const double x = top * static_cast<double>(i) / static_cast<double>(options.tail_grid);
    const auto above = static_cast<std::size_t>(dev.end() - std::upper_bound(dev.begin(), dev.end(), x));
    if (above < options.min_exceedances) break;
    xs.push_back(x);
    ys.push_back(std::log(static_cast<double>(above) / N));
  }
  r.tail_points = xs.size();
  r.tail_unresolved = xs.size() < 3;
  if (!r.tail_unresolved) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    r.tail_slope = sxy / sxx;
    r.tail_intercept = my - r.tail_slope * mx;
  }
  return r;
}

void write_coupling_csv(std::ostream& os, const std::vector<CouplingReport>& rows, const nlohmann::json& config) {
  write_config_header(os, config);
  os << "n,seed,D_hat,tail_slope,tail_intercept,frac_event,budget\n";
  for (const CouplingReport& r : rows)
    os << fmt::format("{},{},{:.12g},{:.12g},{:.12g},{:.12g},{}\n", r.n, r.seed, r.D_hat, r.tail_slope,
                      r.tail_intercept, r.frac_event, r.budget);
}

SakhanenkoCertificate sakhanenko_certificate(const MartingaleModel& model, const std::vector<double>& grid) {
  const Reachability reach = enumerate_reachable(model);
  std::vector<double> g = grid;
  std::sort(g.begin(), g.end());
  for (double L : g) {
    double best_K = 0.0;
    for (double K : g) {
      const bool ok = std::all_of(reach.eta_laws.begin(), reach.eta_laws.end(), [&](const ConditionalLaw* law) {
        return two_sided_moment(*law, 1.0, K) <= L * law->second_moment();
      });
      if (ok) best_K = K;
    }
    if (best_K > 0.0) return {best_K, L, bracket_gap(reach, model.horizon())};
  }
  const ConditionalLaw& law = *reach.eta_laws.front();
  throw CertificationError("sakhanenko_certificate: no (K, L) on the grid satisfies E|eta|^3 e^(K|eta|) <= L E eta^2",
                           law, "E|eta|^3 e^(K|eta|) <= L E eta^2", two_sided_moment(law, 1.0, g.front()),
                           g.back() * law.second_moment());
}

}  // namespace mdev
