#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mdev/montecarlo.hpp"
#include "mdev/rng.hpp"

namespace mdev {

/// pi with pi P = pi, sum pi = 1. Throws for chains that are not
/// irreducible and aperiodic.
Eigen::VectorXd stationary_dist(const Eigen::MatrixXd& P);

/// Finite, irreducible, aperiodic transition matrix and its stationary law.
class MarkovChain {
 public:
  explicit MarkovChain(Eigen::MatrixXd P);

  std::size_t size() const { return static_cast<std::size_t>(P_.rows()); }
  const Eigen::MatrixXd& P() const { return P_; }
  const Eigen::VectorXd& pi() const { return pi_; }
  Eigen::MatrixXd power(std::size_t n) const;

  /// [[1-a, a], [b, 1-b]].
  static MarkovChain two_state(double a, double b);

 private:
  Eigen::MatrixXd P_;
  Eigen::VectorXd pi_;
};

/// A stationary chain together with a bounded, centered observable.
struct ChainSpec {
  std::string name;
  std::vector<std::string> states;
  MarkovChain chain;
  std::vector<double> f;
  double c3 = 0.0;  // max f

  ChainSpec(std::string name, std::vector<std::string> states, MarkovChain chain, std::vector<double> f);

  /// Two-state chain with f = (pi_1, -pi_0) / sqrt(pi_0 pi_1), centered with unit variance.
  static ChainSpec two_state(double a, double b);

  nlohmann::json to_json() const;
  /// {name, states, P (row-major flat or nested rows), f}.
  static ChainSpec from_json(const nlohmann::json& j);
};

/// sum_i pi_i TV(P^n(i, .), pi).
double beta_coefficient(const MarkovChain& chain, std::size_t n);
/// max_{i,j} |P^n(i,j) / pi_j - 1|, which dominates psi(n) for the stationary chain.
double psi_bar_coefficient(const MarkovChain& chain, std::size_t n);

struct BetaFit {
  double a1 = 0.0;
  double a2 = 0.0;
  double tau = 1.0;
  double max_rel_error = 0.0;  // over the fitted range
  std::size_t fitted_points = 0;
};

/// Fits ln beta(n) = ln a1 - a2 n^tau by least squares over a tau grid, then
/// raises a1 until a1 exp(-a2 n^tau) >= beta(n) on the range.
BetaFit fit_beta_decay(const std::vector<double>& beta);

struct MixingCertificate {
  std::vector<double> beta;      // beta(1..n_max)
  std::vector<double> psi_bar;   // psi_bar(1..n_max)
  BetaFit fit;
  double rho = 1.0;
  double c1 = 0.0;  // max_m (E|S_m|^{2+rho} / m^{1+rho/2})^{1/(2+rho)}
  double c2 = 0.0;  // min_m sqrt(E S_m^2 / m)

  nlohmann::json to_json() const;
};

MixingCertificate certify_mixing(const ChainSpec& spec, std::size_t n_max = 64, std::size_t m_max = 32,
                                 double rho = 1.0);

// ---------------------------------------------------------------------------

struct BlockDecomposition {
  std::size_t m = 0;
  std::size_t k = 0;
  std::vector<double> blocks;  // Y_1..Y_k
  double S = 0.0;
};

/// m = floor(n^alpha), k = floor(n / (2m)).
std::pair<std::size_t, std::size_t> block_sizes(std::size_t n, double alpha);
BlockDecomposition block_decompose(const std::vector<double>& eta, double alpha);

/// Exact law of (block sum, state at the last index) for a block of m
/// consecutive observations started in each state.
class BlockKernel {
 public:
  struct Outcome {
    double sum;
    std::size_t end;
    double prob;
  };

  BlockKernel(const ChainSpec& spec, std::size_t m);

  std::size_t m() const { return m_; }
  const std::vector<Outcome>& outcomes(std::size_t start) const { return table_[start]; }
  const Outcome& draw(std::size_t start, double u) const;

  /// Law of the block sum when the start state is drawn from `start_law`.
  std::vector<std::pair<double, double>> sum_law(const Eigen::VectorXd& start_law) const;

 private:
  std::size_t m_;
  std::vector<std::vector<Outcome>> table_;
  std::vector<std::vector<double>> cdf_;
};

/// Draws an index from a probability vector by inversion.
std::size_t draw_index(const Eigen::VectorXd& p, double u);

struct MaximalCoupling {
  double overlap = 0.0;           // sum_i min(p_i, q_i) = 1 - TV
  Eigen::VectorXd common;         // min(p, q) / overlap
  Eigen::VectorXd residual_p;     // (p - min) / (1 - overlap)
  Eigen::VectorXd residual_q;     // (q - min) / (1 - overlap)
  double tv = 0.0;
};
MaximalCoupling maximal_coupling(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// Draws a pair (a, b) with a ~ p, b ~ q and P(a != b) = TV(p, q).
std::pair<std::size_t, std::size_t> draw_coupled(const MaximalCoupling& c, Stream& rng);

struct BerbeeDraw {
  std::vector<double> blocks;       // Y_1..Y_k
  std::vector<double> copies;       // independent copies
  std::vector<bool> mismatch;       // block-start states differ
};

/// One realization of the interlaced blocks of the stationary chain and of
/// i.i.d. copies built by maximal coupling of each block-start state with pi.
BerbeeDraw berbee_couple(const ChainSpec& spec, const BlockKernel& kernel, std::size_t k, Stream& rng);

struct BerbeeExperiment {
  double p_any = 0.0;
  double se = 0.0;
  double bound = 0.0;  // (k - 1) beta(m)
  std::size_t reps = 0;
};
BerbeeExperiment berbee_mismatch_experiment(const ChainSpec& spec, std::size_t m, std::size_t k, std::size_t reps,
                                            std::uint64_t seed, std::size_t workers = 1);

struct CovarianceCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
  bool holds = true;
};
/// |Cov(f(X_{j+n}), g(X_j))| against 2 psi_bar(n)^{1/p} ||f||_p ||g||_q, exactly.
CovarianceCheck covariance_bound_check(const MarkovChain& chain, std::size_t n, const std::vector<double>& f,
                                       const std::vector<double>& g, double p);

/// sqrt(psi + n psi^2 + k sqrt(psi)).
double tau_n(double psi_m, std::size_t m, std::size_t n, std::size_t k);

/// E S_n^2 for the interlaced sum of the stationary chain, from the exact
/// autocovariances.
double interlaced_second_moment(const ChainSpec& spec, std::size_t m, std::size_t k);

/// Draws the interlaced sum S_n of the stationary chain.
double sample_interlaced_sum(const ChainSpec& spec, const BlockKernel& kernel, const Eigen::MatrixXd& gap,
                             std::size_t k, Stream& rng);

/// Stationary path eta_1..eta_n.
std::vector<double> sample_chain_path(const ChainSpec& spec, std::size_t n, Stream& rng);

struct MixingRow {
  double x = 0.0;
  TailEstimate estimate;
  double gauss_tail = 0.0;
  double ratio = 0.0;
  double ratio_lo = 0.0;
  double ratio_hi = 0.0;
  double bound_lo = 0.0;
  double bound_hi = 0.0;
};

struct MixingReport {
  std::size_t n = 0;
  double alpha = 0.0;
  std::size_t m = 0;
  std::size_t k = 0;
  double es2 = 0.0;
  double psi_m = 0.0;
  double beta_m = 0.0;
  double tau = 0.0;
  bool envelope_undefined = false;  // tau >= 1
  double rho = 1.0;
  std::vector<MixingRow> rows;
};

struct MixingOptions {
  double rho = 1.0;
  double c = 1.0;
  std::size_t workers = 1;
};

/// Plain estimates of P(S_n / sqrt(E S_n^2) > x) with the envelope
/// exp(+-psi_mixing_rhs); every x uses the same simulated sums.
MixingReport mixing_tail_experiment(const ChainSpec& spec, std::size_t n, double alpha,
                                    const std::vector<double>& x_grid, std::size_t budget, std::uint64_t seed,
                                    const MixingOptions& options = {});

void write_mixing_csv(std::ostream& os, const MixingReport& report, const nlohmann::json& config);
void write_mixing_certificate_csv(std::ostream& os, const MixingCertificate& cert, const nlohmann::json& config);

}  // namespace mdev
