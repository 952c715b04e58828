#include "mdev/tilt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mdev/bounds.hpp"
#include "mdev/rng.hpp"

namespace mdev {

TiltedLaw tilt_law(const ConditionalLaw& law, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("tilt_law: lambda must be finite and nonnegative");
  TiltedLaw t{law, lambda, {}, {}, 0.0, 0.0, 0.0};
  const auto atoms = law.atoms();
  const std::size_t k = atoms.size();
  t.probs.resize(k);

  const double reach = lambda * std::max(std::abs(law.min_value()), std::abs(law.max_value()));
  if (lambda == 0.0) {
    for (std::size_t i = 0; i < k; ++i) t.probs[i] = atoms[i].prob;
  } else if (reach < 1.0) {
    // Small exponents: work with e^(lambda v) - 1 to keep the drift and the
    // log-mgf accurate when both are tiny.
    double excess = 0.0;
    double first = 0.0;
    for (const Atom& a : atoms) {
      const double e = std::expm1(lambda * a.value);
      excess += a.prob * e;
      first += a.prob * a.value * e;
    }
    const double z = 1.0 + excess;
    t.step_log_mgf = std::max(0.0, std::log1p(excess));
    t.drift = std::max(0.0, first / z);
    for (std::size_t i = 0; i < k; ++i)
      t.probs[i] = atoms[i].prob * (1.0 + std::expm1(lambda * atoms[i].value)) / z;
  } else {
    double peak = -std::numeric_limits<double>::infinity();
    for (const Atom& a : atoms) peak = std::max(peak, std::log(a.prob) + lambda * a.value);
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      t.probs[i] = std::exp(std::log(atoms[i].prob) + lambda * atoms[i].value - peak);
      z += t.probs[i];
    }
    for (double& p : t.probs) p /= z;
    t.step_log_mgf = std::max(0.0, peak + std::log(z));
    double m = 0.0;
    for (std::size_t i = 0; i < k; ++i) m += t.probs[i] * atoms[i].value;
    t.drift = std::max(0.0, m);
  }

  double var = 0.0;
  double run = 0.0;
  t.cdf.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double d = atoms[i].value - t.drift;
    var += t.probs[i] * d * d;
    t.cdf.push_back(run += t.probs[i]);
  }
  t.cdf.back() = 1.0;
  t.variance = var;
  return t;
}

std::size_t TiltedLaw::pick(double u) const {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

double drift_step(const ConditionalLaw& law, double lambda) { return tilt_law(law, lambda).drift; }

TiltCache::TiltCache(const MartingaleModel& model, double lambda) : lambda_(lambda) {
  tilted_.reserve(model.law_count());
  for (std::size_t i = 0; i < model.law_count(); ++i) tilted_.push_back(tilt_law(model.law_in_slot(i), lambda));
}

double TiltedPath::conjugate_terminal() const {
  double b = 0.0;
  for (double v : b_steps) b += v;
  return path.terminal() - b;
}

// ---------------------------------------------------------------------------

nlohmann::json SaddleSolution::to_json() const {
  return {{"x", x},
          {lower ? "lambda_under" : "lambda_bar", lambda},
          {"equation_residual", residual},
          {"c_const", c}};
}

namespace {

void check_saddle_inputs(double x, double rho, double eps, double delta, double c) {
  if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("saddle: x must be finite and nonnegative");
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("saddle: rho must lie in (0, 1]");
  if (!(eps >= 0.0) || !(delta >= 0.0)) throw std::invalid_argument("saddle: eps and delta must be nonnegative");
  if (!(c > 0.0)) throw std::invalid_argument("saddle: c must be positive");
}

// Root of the increasing function f on [lo, hi] with f(lo) <= 0 <= f(hi):
// bisection to adjacent doubles, then a guarded Newton polish.
template <class F, class D>
double bracketed_root(F f, D df, double lo, double hi) {
  for (int it = 0; it < 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  double best = std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi;
  for (int it = 0; it < 4; ++it) {
    const double d = df(best);
    if (!(d > 0.0)) break;
    const double next = best - f(best) / d;
    if (!(next >= lo && next <= hi) || !(std::abs(f(next)) < std::abs(f(best)))) break;
    best = next;
  }
  return best;
}

}  // namespace

SaddleSolution solve_saddle_upper(double x, double rho, double eps, double delta, double c) {
  check_saddle_inputs(x, rho, eps, delta, c);
  const double a = 1.0 + delta * delta;
  const double b = c * std::pow(eps, rho);
  auto f = [&](double l) { return l * a + b * std::pow(l, 1.0 + rho) - x; };
  auto df = [&](double l) { return a + b * (1.0 + rho) * std::pow(l, rho); };
  SaddleSolution s;
  s.x = x;
  s.c = c;
  s.lambda = x == 0.0 ? 0.0 : bracketed_root(f, df, 0.0, x / a);
  s.residual = std::abs(f(s.lambda));
  return s;
}

SaddleSolution solve_saddle_lower(double x, double rho, double eps, double delta, double c) {
  check_saddle_inputs(x, rho, eps, delta, c);
  SaddleSolution s;
  s.x = x;
  s.c = c;
  s.lower = true;
  if (x == 0.0) return s;
  const double a = 1.0 - delta * delta;
  if (!(a > 0.0)) throw NoRootError("saddle (lower): delta^2 >= 1 leaves no positive root");
  const double b = c * std::pow(eps, rho);
  auto f = [&](double l) { return l * a - b * std::pow(l, 1.0 + rho) - x; };
  auto df = [&](double l) { return a - b * (1.0 + rho) * std::pow(l, rho); };
  double hi;
  if (b == 0.0) {
    hi = x / a;
    if (f(hi) < 0.0) hi = std::nextafter(hi, std::numeric_limits<double>::infinity());
  } else {
    hi = std::pow(a / (b * (1.0 + rho)), 1.0 / rho);  // stationary point
    if (f(hi) < 0.0)
      throw NoRootError("saddle (lower): x exceeds the maximum of the left side, " + std::to_string(f(hi) + x));
  }
  s.lambda = bracketed_root(f, df, 0.0, hi);
  s.residual = std::abs(f(s.lambda));
  return s;
}

double saddle_lower_constant(double alpha, double rho, double delta, double c) {
  return 1.0 / (1.0 + delta * delta + c * std::pow(alpha, rho));
}

// ---------------------------------------------------------------------------

TiltChoice choose_tilt(const MartingaleModel& model, double x, std::optional<double> eps_n) {
  if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("choose_tilt: x must be finite and nonnegative");
  TiltChoice t;
  auto finish = [&](TiltChoice& c) -> TiltChoice {
    if (eps_n && *eps_n > 0.0) c.outside_range = c.lambda > 1.0 / *eps_n;
    return c;
  };
  if (x == 0.0) {
    t.solved = true;
    t.method = "newton";
    return finish(t);
  }
  auto fall_back = [&]() {
    t.lambda = x;
    t.fallback = true;
    t.method = "fallback";
    return finish(t);
  };
  if (!model.is_iid()) return fall_back();

  const ConditionalLaw& law = model.law_at(model.initial());
  const double n = static_cast<double>(model.horizon());
  if (x >= n * law.max_value()) return fall_back();

  auto drift = [&](double l) { return n * tilt_law(law, l).drift - x; };
  double lo = 0.0;
  double hi = std::max(x, 1.0);
  for (int it = 0; drift(hi) < 0.0; ++it) {
    if (it > 1000) return fall_back();
    lo = hi;
    hi *= 2.0;
  }
  const double tol = 1e-12 * std::max(1.0, x);
  double l = std::clamp(x, lo, hi);
  for (int it = 0; it < 200; ++it) {
    const TiltedLaw tl = tilt_law(law, l);
    const double f = n * tl.drift - x;
    if (std::abs(f) <= tol) break;
    (f < 0.0 ? lo : hi) = l;
    const double slope = n * tl.variance;
    double next = slope > 0.0 ? l - f / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == l) break;
    l = next;
  }
  t.lambda = l;
  t.residual = drift(l);
  t.solved = std::abs(t.residual) <= 1e-9 * std::max(1.0, x);
  t.method = "newton";
  if (!t.solved) return fall_back();
  return finish(t);
}

// ---------------------------------------------------------------------------

double expm1_minus_linear(double x) {
  if (std::abs(x) >= 0.5) return std::expm1(x) - x;
  double term = x * x / 2.0;
  double sum = term;
  for (int k = 3; k < 40 && std::abs(term) > 1e-18 * std::abs(sum); ++k) sum += term *= x / k;
  return sum;
}

double expm1_minus_quadratic(double x) {
  if (std::abs(x) >= 1.0) return std::expm1(x) - x - 0.5 * x * x;
  double term = x * x * x / 6.0;
  double sum = term;
  for (int k = 4; k < 40 && std::abs(term) > 1e-18 * std::abs(sum); ++k) sum += term *= x / k;
  return sum;
}

namespace {

void record(SuiteResult& r, double lhs, double rhs) {
  ++r.checks;
  if (rhs > 0.0) r.worst_ratio = std::max(r.worst_ratio, lhs / rhs);
  if (!(lhs <= rhs * (1.0 + 1e-12))) ++r.violations;
}

}  // namespace

std::vector<SuiteResult> elementary_inequality_suite(std::size_t draws, std::uint64_t seed) {
  SuiteResult first{"elementary: |x(e^x-1-x)| <= 2|x|^(2+rho) e^(x+)"};
  SuiteResult second{"elementary: |e^x-1-x-x^2/2| <= |x|^(2+rho) e^(x+)"};
  Stream rng(seed, 0);
  for (std::size_t i = 0; i < draws; ++i) {
    const double x = -50.0 + 100.0 * rng.uniform();
    const double rho = 1.0 - rng.uniform();
    const double envelope = std::pow(std::abs(x), 2.0 + rho) * std::exp(std::max(x, 0.0));
    record(first, std::abs(x * expm1_minus_linear(x)), 2.0 * envelope);
    record(second, std::abs(expm1_minus_quadratic(x)), envelope);
  }
  return {first, second};
}

SuiteResult drift_bound_suite(const std::vector<std::size_t>& ns, const std::vector<double>& rhos,
                              std::size_t points) {
  SuiteResult r{"drift: |B_n(lambda) - lambda| <= lambda delta^2 + 6 lambda^(1+rho) eps^rho"};
  for (std::size_t n : ns) {
    const MartingaleModel model = make_rademacher(n);
    const ConditionalLaw& law = model.law_at(model.initial());
    for (double rho : rhos) {
      CertifyOptions opt;
      opt.rho = rho;
      const Certificate cert = certify(model, opt);
      const double top = 1.0 / cert.eps_n;
      for (std::size_t j = 0; j < points; ++j) {
        const double lambda = top * static_cast<double>(j) / static_cast<double>(points - 1);
        const double b = static_cast<double>(n) * drift_step(law, lambda);
        const double rhs = lambda * cert.delta_n * cert.delta_n +
                           6.0 * std::pow(lambda, 1.0 + rho) * std::pow(cert.eps_n, rho);
        record(r, std::abs(b - lambda), rhs);
      }
    }
  }
  return r;
}

SuiteResult cumulant_bound_suite(const std::vector<std::size_t>& ns, const std::vector<double>& rhos,
                                 std::size_t points) {
  SuiteResult r{"cumulant: |Psi_n(lambda) - lambda^2/2| <= 2(1+(lambda eps)^(2-rho)) lambda^(2+rho) eps^rho + lambda^2 delta^2/2"};
  for (std::size_t n : ns) {
    const MartingaleModel model = make_rademacher(n);
    const ConditionalLaw& law = model.law_at(model.initial());
    for (double rho : rhos) {
      CertifyOptions opt;
      opt.rho = rho;
      const Certificate cert = certify(model, opt);
      const double eps = cert.eps_n;
      const double top = 1.0 / eps;
      for (std::size_t j = 0; j < points; ++j) {
        const double lambda = top * static_cast<double>(j) / static_cast<double>(points - 1);
        const double psi = static_cast<double>(n) * tilt_law(law, lambda).step_log_mgf;
        const double rhs = 2.0 * (1.0 + std::pow(lambda * eps, 2.0 - rho)) * std::pow(lambda, 2.0 + rho) *
                               std::pow(eps, rho) +
                           0.5 * lambda * lambda * cert.delta_n * cert.delta_n;
        record(r, std::abs(psi - 0.5 * lambda * lambda), rhs);
      }
    }
  }
  return r;
}

SuiteResult gaussian_sandwich_suite(double top, double step) {
  if (!(step > 0.0) || !(top >= 0.0)) throw std::invalid_argument("gaussian_sandwich_suite: need step > 0, top >= 0");
  SuiteResult r{"sandwich: e^(-x^2/2)/(sqrt(2pi)(1+x)) <= 1-Phi(x) <= e^(-x^2/2)/(sqrt(pi)(1+x))"};
  const auto count = static_cast<std::size_t>(std::floor(top / step + 1e-9));
  for (std::size_t i = 0; i <= count; ++i) {
    const double x = static_cast<double>(i) * step;
    const auto [lo, hi] = gaussian_sandwich(x);
    const double tail = gaussian_tail(x);
    record(r, lo, tail);
    record(r, tail, hi);
  }
  return r;
}

SuiteResult second_moment_suite(const std::vector<MartingaleModel>& models) {
  SuiteResult r{"second moment: E[xi^2] <= eps_n^2 for certified laws"};
  for (const MartingaleModel& m : models) {
    const Certificate cert = certify(m, default_certify_options(m));
    const auto reach = enumerate_reachable(m);
    for (const ConditionalLaw* law : reach.eta_laws) {
      const double xi2 = law->second_moment() / static_cast<double>(m.horizon());
      record(r, xi2, cert.eps_n * cert.eps_n);
    }
  }
  return r;
}

}  // namespace mdev
