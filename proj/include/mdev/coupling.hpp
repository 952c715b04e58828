#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "mdev/models.hpp"

namespace mdev {

/// Phi^{-1}(p) for p in (0, 1).
double normal_quantile(double p);

/// Left-continuous generalized inverse H(s) = inf{x : F(x) >= s}.
class QuantileFunction {
 public:
  enum class Kind { exact_rademacher, empirical, standard_normal };

  /// Law of the normalized Rademacher sum on {(2k - n)/sqrt(n)}.
  static QuantileFunction exact_rademacher(std::size_t n);
  /// Empirical law of the samples (copied and sorted).
  static QuantileFunction empirical(std::vector<double> samples, std::size_t nominal_n = 1);
  /// Phi^{-1} itself; coupling with it is the identity. `nominal_n` only
  /// sets the normalization of the deviation.
  static QuantileFunction standard_normal(std::size_t nominal_n = 1);

  Kind kind() const { return kind_; }
  std::size_t n() const { return n_; }

  /// H(s), s in (0, 1).
  double operator()(double s) const;

  /// H(Phi(z)). For the exact law the comparison Phi(z) <= F_k is done as
  /// z <= Phi^{-1}(F_k), so no CDF value is rounded through Phi.
  double couple(double z) const;

  /// Support points and the Gaussian measure of the z-interval mapped to
  /// each of them (exact law only).
  const std::vector<double>& support() const { return values_; }
  std::vector<double> atom_measure() const;

 private:
  QuantileFunction(Kind kind, std::size_t n) : kind_(kind), n_(n) {}

  Kind kind_;
  std::size_t n_;
  std::vector<double> values_;      // support (exact) or sorted samples (empirical)
  std::vector<double> cdf_;         // F at each support point (exact)
  std::vector<double> thresholds_;  // Phi^{-1}(F_k) (exact), size = support - 1
};

double quantile_exact_rademacher(std::size_t n, double s);
double quantile_empirical(const std::vector<double>& sorted_samples, double s);

struct CouplingSample {
  double z = 0.0;
  double w = 0.0;
  double deviation = 0.0;  // sqrt(n) |w - z| / ln n
};

CouplingSample couple(const QuantileFunction& qf, double z);

struct CouplingOptions {
  double alpha = 0.125;            // event |W| <= alpha sqrt(n)
  std::size_t min_exceedances = 30;
  std::size_t tail_grid = 50;
  std::size_t workers = 1;
};

struct CouplingReport {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::size_t budget = 0;
  double D_hat = 0.0;            // max deviation / (2 (W^2 + 1)) on the event
  double tail_slope = 0.0;       // least squares of ln P(dev > x) on x
  double tail_intercept = 0.0;
  double frac_event = 0.0;
  std::size_t tail_points = 0;
  bool tail_unresolved = false;  // fewer than three usable tail points
};

/// Couples `budget` standard normal draws with the exact quantile function
/// of the n-step Rademacher sum. Draw j uses Stream(seed, j).
CouplingReport coupling_tail_report(std::size_t n, std::size_t budget, std::uint64_t seed,
                                    const CouplingOptions& options = {});
/// Same report for an arbitrary quantile function.
CouplingReport coupling_tail_report(const QuantileFunction& qf, std::size_t budget, std::uint64_t seed,
                                    const CouplingOptions& options = {});

void write_coupling_csv(std::ostream& os, const std::vector<CouplingReport>& rows, const nlohmann::json& config);

/// Constants of the conditional Sakhanenko condition
/// E[|eta|^3 e^{K|eta|} | F] <= L E[eta^2 | F] and |sum E[eta^2|F] - n| <= M:
/// smallest grid L, then the largest grid K for it.
struct SakhanenkoCertificate {
  double K = 0.0;
  double L = 0.0;
  double M = 0.0;
};
SakhanenkoCertificate sakhanenko_certificate(const MartingaleModel& model,
                                             const std::vector<double>& grid = default_certificate_grid());

}  // namespace mdev
