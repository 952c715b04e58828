#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdev/law.hpp"
#include "mdev/models.hpp"

namespace mdev {

/// A conditional law reweighted by e^(lambda v) and renormalized.
struct TiltedLaw {
  ConditionalLaw base;
  double lambda = 0.0;
  std::vector<double> probs;  // aligned with base.atoms()
  std::vector<double> cdf;
  double step_log_mgf = 0.0;  // ln E e^(lambda v)
  double drift = 0.0;         // tilted mean
  double variance = 0.0;      // tilted variance, d drift / d lambda

  std::size_t pick(double u) const;
};

TiltedLaw tilt_law(const ConditionalLaw& law, double lambda);

/// E[v e^(lambda v)] / E[e^(lambda v)].
double drift_step(const ConditionalLaw& law, double lambda);

/// Tilted versions of every law slot of a model (xi scale).
class TiltCache {
 public:
  TiltCache(const MartingaleModel& model, double lambda);
  double lambda() const { return lambda_; }
  const TiltedLaw& operator[](std::size_t slot) const { return tilted_[slot]; }

 private:
  double lambda_;
  std::vector<TiltedLaw> tilted_;
};

struct TiltedPath {
  Path path;
  double lambda = 0.0;
  double psi_n = 0.0;           // sum of step log-mgfs
  std::vector<double> b_steps;  // tilted conditional means
  double log_weight = 0.0;      // -lambda X_n + psi_n

  /// Y_n = X_n - sum b_i, the terminal value of the conjugate martingale.
  double conjugate_terminal() const;
};

/// One path drawn under the conjugate measure. Increments are xi-scale.
template <UniformSource U>
TiltedPath sample_tilted_path(const MartingaleModel& model, const TiltCache& cache, U& rng) {
  const std::size_t n = model.horizon();
  TiltedPath tp;
  tp.lambda = cache.lambda();
  Path& path = tp.path;
  path.increments.reserve(n);
  path.partial_sums.reserve(n + 1);
  path.bracket.reserve(n + 1);
  tp.b_steps.reserve(n);
  path.partial_sums.push_back(0.0);
  path.bracket.push_back(0.0);
  HistorySummary s = model.initial();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t slot = model.law_slot(s);
    const ConditionalLaw& law = model.law_in_slot(slot);
    const TiltedLaw& tl = cache[slot];
    const double v = law.atoms()[tl.pick(rng.uniform())].value;
    path.increments.push_back(v);
    path.partial_sums.push_back(path.partial_sums.back() + v);
    path.bracket.push_back(path.bracket.back() + law.second_moment());
    tp.psi_n += tl.step_log_mgf;
    tp.b_steps.push_back(tl.drift);
    s = model.advance(s, v);
  }
  tp.log_weight = -tp.lambda * path.terminal() + tp.psi_n;
  return tp;
}

template <UniformSource U>
TiltedPath sample_tilted_path(const MartingaleModel& model, double lambda, U& rng) {
  const TiltCache cache(model, lambda);
  return sample_tilted_path(model, cache, rng);
}

// ---------------------------------------------------------------------------
// Saddle-point equations.

inline constexpr double kDefaultSaddleConstant = 6.0;

struct SaddleSolution {
  double x = 0.0;
  double lambda = 0.0;
  double residual = 0.0;
  double c = kDefaultSaddleConstant;
  bool lower = false;  // which equation was solved

  nlohmann::json to_json() const;
};

class NoRootError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Root of lambda (1 + delta^2) + c eps^rho lambda^(1+rho) = x.
SaddleSolution solve_saddle_upper(double x, double rho, double eps, double delta,
                                  double c = kDefaultSaddleConstant);

/// Smallest positive root of lambda (1 - delta^2) - c eps^rho lambda^(1+rho) = x.
/// Throws NoRootError when x exceeds the maximum of the left side.
SaddleSolution solve_saddle_lower(double x, double rho, double eps, double delta,
                                  double c = kDefaultSaddleConstant);

/// Lower constant in c x <= upper root, valid for x <= alpha / eps.
double saddle_lower_constant(double alpha, double rho, double delta, double c = kDefaultSaddleConstant);

// ---------------------------------------------------------------------------

struct TiltChoice {
  double lambda = 0.0;
  double residual = 0.0;         // tilted mean of X_n minus x when solved
  bool solved = false;           // drift equation solved to tolerance
  bool fallback = false;         // lambda = x was used instead
  bool outside_range = false;    // lambda > 1 / eps_n
  std::string method;            // "newton", "fallback"
};

/// Tilt for which the tilted mean of X_n equals x (i.i.d. models), else lambda = x.
TiltChoice choose_tilt(const MartingaleModel& model, double x, std::optional<double> eps_n = std::nullopt);

// ---------------------------------------------------------------------------
// Deterministic inequality suites.

struct SuiteResult {
  std::string name;
  std::size_t checks = 0;
  std::size_t violations = 0;
  double worst_ratio = 0.0;  // max lhs / rhs seen
  std::string detail{};

  bool ok() const { return violations == 0; }
};

/// e^x - 1 - x and e^x - 1 - x - x^2/2 without cancellation near zero.
double expm1_minus_linear(double x);
double expm1_minus_quadratic(double x);

/// |x (e^x - 1 - x)| <= 2 |x|^(2+rho) e^(x+) and
/// |e^x - 1 - x - x^2/2| <= |x|^(2+rho) e^(x+), random x in [-50, 50], rho in (0, 1].
std::vector<SuiteResult> elementary_inequality_suite(std::size_t draws, std::uint64_t seed);

/// Rademacher drift bound |B_n - lambda| <= lambda delta^2 + 6 lambda^(1+rho) eps^rho
/// on `points` lambdas in [0, 1/eps].
SuiteResult drift_bound_suite(const std::vector<std::size_t>& ns, const std::vector<double>& rhos,
                              std::size_t points);

/// Rademacher cumulant bound; worst_ratio is the implied constant with c1 = 1.
SuiteResult cumulant_bound_suite(const std::vector<std::size_t>& ns, const std::vector<double>& rhos,
                                 std::size_t points);

/// Lower <= 1 - Phi(x) <= upper for the Gaussian sandwich on [0, top] in `step` increments.
SuiteResult gaussian_sandwich_suite(double top = 10.0, double step = 0.01);

/// E[xi^2] <= eps_n^2 for every certified reachable law.
SuiteResult second_moment_suite(const std::vector<MartingaleModel>& models);

}  // namespace mdev
