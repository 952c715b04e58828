#pragma once

#include <concepts>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdev/law.hpp"

namespace mdev {

/// Anything that hands out uniforms on (0, 1).
template <class U>
concept UniformSource = requires(U& u) {
  { u.uniform() } -> std::convertible_to<double>;
};

/// Fixed-size summary of the past that determines the next conditional law.
struct HistorySummary {
  std::size_t step = 0;      // increments drawn so far
  int last_sign = 0;         // sign of the last increment, 0 before the first
  std::int64_t budget = 0;   // model-specific variance-budget counter

  friend auto operator<=>(const HistorySummary&, const HistorySummary&) = default;
};

/// Which normalization a law or path is expressed in: xi = eta / sqrt(n).
enum class Scale { xi, eta };

struct Path {
  std::vector<double> increments;    // xi_1..xi_n
  std::vector<double> partial_sums;  // X_0..X_n
  std::vector<double> bracket;       // <X>_0..<X>_n

  double terminal() const { return partial_sums.back(); }
};

/// A martingale-difference process over a fixed horizon with exact
/// finite-support conditional laws. Immutable after construction.
class MartingaleModel {
 public:
  const std::string& name() const { return name_; }
  std::size_t horizon() const { return n_; }
  const nlohmann::json& params() const { return params_; }

  /// True when every step uses the same law regardless of the past.
  bool is_iid() const { return family_ == Family::iid; }

  HistorySummary initial() const { return {}; }
  const ConditionalLaw& law_at(const HistorySummary& s) const { return laws_[law_index(s)].xi; }
  const ConditionalLaw& eta_law_at(const HistorySummary& s) const { return laws_[law_index(s)].eta; }
  const ConditionalLaw& law_at(const HistorySummary& s, Scale scale) const {
    return scale == Scale::xi ? law_at(s) : eta_law_at(s);
  }
  HistorySummary advance(const HistorySummary& s, double increment) const {
    if (family_ == Family::iid) return {s.step + 1, 0, 0};
    const bool bump = (gamma_ > 0.0) & (s.step + 1 < n_) & regime_high(s);
    return {s.step + 1, (increment > 0.0) - (increment < 0.0), s.budget + bump};
  }

  /// Distinct laws are stored in slots; law_at(s) is law_in_slot(law_slot(s)).
  std::size_t law_count() const { return laws_.size(); }
  std::size_t law_slot(const HistorySummary& s) const { return law_index(s); }
  const ConditionalLaw& law_in_slot(std::size_t slot, Scale scale = Scale::xi) const {
    return scale == Scale::xi ? laws_[slot].xi : laws_[slot].eta;
  }

  /// Bracket bound N the construction guarantees, if it declares one.
  std::optional<double> declared_N() const { return declared_N_; }

  nlohmann::json to_json() const;
  static MartingaleModel from_json(const nlohmann::json& spec);

  friend MartingaleModel make_rademacher(std::size_t n);
  friend MartingaleModel make_iid(const ConditionalLaw& eta_law, std::size_t n, std::string name,
                                  nlohmann::json params);
  friend MartingaleModel make_regime_switch(std::size_t n, double gamma);

 private:
  enum class Family { iid, regime_switch };
  struct LawPair {
    ConditionalLaw xi;
    ConditionalLaw eta;
  };

  MartingaleModel(std::string name, std::size_t n, nlohmann::json params, Family family)
      : name_(std::move(name)), n_(n), params_(std::move(params)), family_(family) {}

  std::size_t law_index(const HistorySummary& s) const {
    if (family_ == Family::iid) return 0;
    if (s.step + 1 >= n_) return final_law_.at(s.budget);
    return regime_high(s);
  }

  // High regime after an up-step, low after a down-step, unless that would
  // push the running excess variance further from zero.
  bool regime_high(const HistorySummary& s) const {
    const bool prefer_high = s.last_sign >= 0;
    const double excess = static_cast<double>(s.budget) * up_ -
                          static_cast<double>(static_cast<std::int64_t>(s.step) - s.budget) * down_;
    return (prefer_high & !(excess > 0.0)) | (!prefer_high & (excess < 0.0));
  }
  std::size_t add_law(const ConditionalLaw& eta);

  std::string name_;
  std::size_t n_;
  nlohmann::json params_;
  Family family_;
  std::vector<LawPair> laws_;
  // regime switch: 0 = low, 1 = high, final-step law per budget value
  std::map<std::int64_t, std::size_t> final_law_;
  double gamma_ = 0.0;
  double up_ = 0.0;    // (1+gamma)^2 - 1
  double down_ = 0.0;  // 1 - (1-gamma)^2
  std::optional<double> declared_N_;
};

MartingaleModel make_rademacher(std::size_t n);

/// i.i.d. increments xi = eta / sqrt(n) for the given unit-free law of eta.
MartingaleModel make_iid(const ConditionalLaw& eta_law, std::size_t n, std::string name = "iid",
                         nlohmann::json params = nlohmann::json::object());

/// Symmetric two-point steps whose conditional variance switches between
/// (1-gamma)^2/n and (1+gamma)^2/n with the sign of the previous increment.
/// The running excess variance is kept inside a band, and the final step
/// tops the bracket up towards one, so |<X>_n - 1| <= 4 gamma / n.
MartingaleModel make_regime_switch(std::size_t n, double gamma);

/// i.i.d. increments with one positive atom and a Pareto-like discretized
/// negative tail of `tail_atoms` atoms reaching out to ~1e6 standard
/// deviations: finite (2+rho)th moments, astronomically large negative
/// exponential moments.
MartingaleModel make_heavy_left(std::size_t n, double rho, std::size_t tail_atoms);

template <UniformSource U>
Path sample_path(const MartingaleModel& model, U& rng, Scale scale = Scale::xi) {
  const std::size_t n = model.horizon();
  Path path;
  path.increments.reserve(n);
  path.partial_sums.reserve(n + 1);
  path.bracket.reserve(n + 1);
  path.partial_sums.push_back(0.0);
  path.bracket.push_back(0.0);
  HistorySummary s = model.initial();
  for (std::size_t i = 0; i < n; ++i) {
    const ConditionalLaw& law = model.law_at(s, scale);
    const double v = law.atoms()[law.pick(rng.uniform())].value;
    path.increments.push_back(v);
    path.partial_sums.push_back(path.partial_sums.back() + v);
    path.bracket.push_back(path.bracket.back() + law.second_moment());
    s = model.advance(s, v);
  }
  return path;
}

// ---------------------------------------------------------------------------
// Conditions (A1') / (A2') and their certificate.

/// E[|v|^(2+rho) e^(K v+)] for one law.
double one_sided_moment(const ConditionalLaw& law, double rho, double K);
/// E[|v|^(2+rho) e^(K |v|)]; may be +inf.
double two_sided_moment(const ConditionalLaw& law, double rho, double K);
/// E|v|^(2+rho) e^(K v+) <= L^rho E v^2.
bool one_sided_condition_holds(const ConditionalLaw& law, double rho, double K, double L);
/// Conditional Bernstein condition |E v^k| <= k!/2 H^(k-2) E v^2 for one k.
bool bernstein_condition_holds(const ConditionalLaw& law, int k, double H);
/// ln E[e^(c|v|) 1{v < 0}] computed in log space.
double log_negative_exponential_moment(const ConditionalLaw& law, double c);

std::vector<double> default_certificate_grid();  // 2^j, j = -6..10

struct CertifyOptions {
  double rho = 1.0;
  std::optional<double> fixed_K;
  std::optional<double> fixed_L;
  std::vector<double> grid = default_certificate_grid();
};

/// Options using the model's own rho when its parameters declare one.
CertifyOptions default_certify_options(const MartingaleModel& model);

struct Certificate {
  std::string model;
  std::size_t n = 0;
  double rho = 1.0;
  double K = 0.0;
  double L = 0.0;
  double N = 0.0;        // bracket constant used for delta_n
  double N_exact = 0.0;  // sqrt of the worst reachable |sum E[eta^2|F] - n|
  double eps_n = 0.0;    // max(K, L) / sqrt(n)
  double delta_n = 0.0;  // N / sqrt(n)
  double delta_n_alt = 0.0;  // L / sqrt(n), the alternative normalization
  std::size_t laws_checked = 0;

  nlohmann::json to_json() const;
  static Certificate from_json(const nlohmann::json& j);
};

class CertificationError : public std::runtime_error {
 public:
  CertificationError(const std::string& what, ConditionalLaw witness, std::string inequality, double lhs,
                     double rhs)
      : std::runtime_error(what),
        witness(std::move(witness)),
        inequality(std::move(inequality)),
        lhs(lhs),
        rhs(rhs) {}

  ConditionalLaw witness;
  std::string inequality;
  double lhs;
  double rhs;
};

/// Distinct reachable eta-scale laws and the range of the terminal bracket
/// sum_i E[eta_i^2 | F_{i-1}] over every reachable history.
struct Reachability {
  std::vector<const ConditionalLaw*> eta_laws;
  double bracket_min = 0.0;
  double bracket_max = 0.0;
};
Reachability enumerate_reachable(const MartingaleModel& model);

/// max |sum_i E[eta_i^2 | F] - n| over reachable histories; values at the
/// level of floating-point roundoff (below 1e-9 n) are reported as zero.
double bracket_gap(const Reachability& reach, std::size_t n);

/// Smallest max(K, L) on the grid satisfying (A1') for every reachable law,
/// plus the exact bracket constant. Throws CertificationError with a witness.
Certificate certify(const MartingaleModel& model, const CertifyOptions& options = {});

/// Re-verifies (A1') and (A2') for a certificate against the model.
bool recheck(const MartingaleModel& model, const Certificate& cert);

/// Number of reachable laws violating E[xi^2] <= eps_n^2.
std::size_t second_moment_violations(const MartingaleModel& model, const Certificate& cert);

}  // namespace mdev
