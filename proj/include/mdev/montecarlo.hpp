#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mdev/models.hpp"

namespace mdev {

/// Compensated (Neumaier) running sum.
class NeumaierSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  void add(const NeumaierSum& other) {
    add(other.sum_);
    add(other.comp_);
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Samples are processed in fixed-size chunks; sample j always draws from
/// Stream(seed, j) and chunk partials are merged in chunk order, so results
/// do not depend on the worker count.
inline constexpr std::size_t kChunkSize = std::size_t{1} << 14;

/// Runs `body(chunk_begin, chunk_end, partial)` over [0, n) in chunks on
/// `workers` threads and returns the per-chunk partials in chunk order.
template <class Partial, class Body>
std::vector<Partial> run_chunked(std::size_t n, std::size_t workers, Body body) {
  const std::size_t chunks = (n + kChunkSize - 1) / kChunkSize;
  std::vector<Partial> parts(chunks);
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t c = next++; c < chunks; c = next++)
      body(c * kChunkSize, std::min(n, (c + 1) * kChunkSize), parts[c]);
  };
  workers = std::max<std::size_t>(1, std::min(workers, chunks));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return parts;
}

enum class TailEvent {
  greater,        // X_n > x
  greater_equal,  // X_n >= x
  abs_greater     // |X_n| > x (plain estimator only)
};

/// Tolerance for deciding lattice ties in X_n against x, relative to max(1, |x|).
inline constexpr double kTieTolerance = 1e-9;
bool in_event(double terminal, double x, TailEvent event);

struct McOptions {
  std::size_t workers = 1;
  TailEvent event = TailEvent::greater;
  bool force_path_sampling = false;  // skip the multinomial shortcut for i.i.d. models
};

struct TailEstimate {
  double p_hat = 0.0;
  double std_err = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double ess = 0.0;
  std::size_t n_samples = 0;
  std::string estimator;  // "plain" or "tilted"
  double lambda = 0.0;
  bool low_ess = false;   // ess < 10

  nlohmann::json to_json() const;
};

/// Clopper-Pearson interval for k successes out of n at the given level.
std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n, double level = 0.95);

TailEstimate estimate_tail_plain(const MartingaleModel& model, double x, std::size_t n_samples,
                                 std::uint64_t seed, const McOptions& options = {});

/// E_lambda[e^{-lambda X_n + Psi_n} 1{X_n > x}] from n_samples conjugate paths.
TailEstimate estimate_tail_tilted(const MartingaleModel& model, double x, double lambda, std::size_t n_samples,
                                  std::uint64_t seed, const McOptions& options = {});

/// Sums over every path of the model (product of atom counts must stay below 2^22).
double exact_tail(const MartingaleModel& model, double x, TailEvent event = TailEvent::greater);
/// Sum over every path of P_lambda(path) e^{-lambda X_n + Psi_n} 1{event}.
double exact_tilted_expectation(const MartingaleModel& model, double x, double lambda,
                                TailEvent event = TailEvent::greater);

// ---------------------------------------------------------------------------

struct RatioRow {
  double x = 0.0;
  double p_hat = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double gauss_tail = 0.0;
  double ratio = 0.0;
  double log_ratio = 0.0;
  double bound_lo = 0.0;
  double bound_hi = 0.0;
  double ess = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  bool low_ess = false;
  bool outside_range = false;

  double ratio_lo() const { return ci_lo / gauss_tail; }
  double ratio_hi() const { return ci_hi / gauss_tail; }
};

struct RatioOptions {
  double alpha = 1.0;  // x must lie in [0, alpha / eps_n]
  double c = 1.0;      // constant in the bound envelope
  bool delta_from_L = false;  // use L / sqrt(n) instead of N / sqrt(n)
  McOptions mc;
};

struct RatioReport {
  Certificate certificate;
  std::vector<RatioRow> rows;
};

/// Tilted estimates of P(X_n > x) / (1 - Phi(x)) on a grid, with lambda from
/// choose_tilt and the envelope exp(+-thm21_rhs). Row i uses derive_seed(seed, i).
RatioReport ratio_report(const MartingaleModel& model, const std::vector<double>& x_grid, std::size_t budget,
                         std::uint64_t seed, const RatioOptions& options = {});

struct MdpRow {
  std::size_t n = 0;
  double a_n = 0.0;
  double threshold = 0.0;
  TailEstimate estimate;
  double value = 0.0;  // ln(p_hat) / a_n^2
  double value_lo = 0.0;
  double value_hi = 0.0;
};

/// (1/a_n^2) ln P(X_n / a_n >= b) for a_n = n^gamma, 0 < gamma < 1/2.
std::vector<MdpRow> mdp_scan(const std::function<MartingaleModel(std::size_t)>& family,
                             const std::vector<std::size_t>& ns, double gamma, double b, std::size_t budget,
                             std::uint64_t seed, const McOptions& options = {});

// ---------------------------------------------------------------------------
// CSV emission. Every artifact starts with "# " lines echoing the config.

void write_config_header(std::ostream& os, const nlohmann::json& config);
void write_ratio_csv(std::ostream& os, const RatioReport& report, const nlohmann::json& config);
void write_mdp_csv(std::ostream& os, const std::vector<MdpRow>& rows, const nlohmann::json& config);

/// "a:b:step" or "v1,v2,..." into a list of values.
std::vector<double> parse_grid(const std::string& spec);

}  // namespace mdev
