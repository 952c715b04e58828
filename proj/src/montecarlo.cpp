#include "mdev/montecarlo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <boost/math/special_functions/beta.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "mdev/bounds.hpp"
#include "mdev/rng.hpp"
#include "mdev/tilt.hpp"

namespace mdev {

bool in_event(double terminal, double x, TailEvent event) {
  const double tol = kTieTolerance * std::max(1.0, std::abs(x));
  switch (event) {
    case TailEvent::greater:
      return terminal > x + tol;
    case TailEvent::greater_equal:
      return terminal >= x - tol;
    case TailEvent::abs_greater:
      return std::abs(terminal) > x + tol;
  }
  return false;
}

nlohmann::json TailEstimate::to_json() const {
  return {{"p_hat", p_hat}, {"std_err", std_err}, {"ci95", {ci_lo, ci_hi}}, {"ess", ess},
          {"n_samples", n_samples}, {"estimator", estimator}, {"lambda", lambda}, {"low_ess", low_ess}};
}

std::pair<double, double> clopper_pearson(std::size_t k, std::size_t n, double level) {
  if (n == 0 || k > n) throw std::invalid_argument("clopper_pearson: need 0 <= k <= n, n >= 1");
  const double a = 0.5 * (1.0 - level);
  const double kk = static_cast<double>(k);
  const double nn = static_cast<double>(n);
  const double lo = k == 0 ? 0.0 : boost::math::ibeta_inv(kk, nn - kk + 1.0, a);
  const double hi = k == n ? 1.0 : boost::math::ibeta_inv(kk + 1.0, nn - kk, 1.0 - a);
  return {lo, hi};
}

namespace {

struct Partial {
  NeumaierSum w;
  NeumaierSum w2;
  std::size_t hits = 0;
};

// Multinomial shortcut for i.i.d. models: the terminal value only depends
// on how many times each atom was drawn.
class IidTerminal {
 public:
  IidTerminal(const ConditionalLaw& law, std::vector<double> probs, std::size_t n)
      : values_(law.size()), probs_(std::move(probs)), suffix_(law.size()), n_(n) {
    for (std::size_t i = 0; i < law.size(); ++i) values_[i] = law.atoms()[i].value;
    double run = 0.0;
    for (std::size_t i = law.size(); i-- > 0;) suffix_[i] = run += probs_[i];
  }

  double draw(Stream& rng) const {
    long long remaining = static_cast<long long>(n_);
    double x = 0.0;
    for (std::size_t i = 0; i + 1 < values_.size() && remaining > 0; ++i) {
      const double q = std::clamp(probs_[i] / suffix_[i], 0.0, 1.0);
      const long long c = std::binomial_distribution<long long>(remaining, q)(rng);
      x += static_cast<double>(c) * values_[i];
      remaining -= c;
    }
    return x + static_cast<double>(remaining) * values_.back();
  }

 private:
  std::vector<double> values_;
  std::vector<double> probs_;
  std::vector<double> suffix_;
  std::size_t n_;
};

std::vector<double> law_probs(const ConditionalLaw& law) {
  std::vector<double> p;
  for (const Atom& a : law.atoms()) p.push_back(a.prob);
  return p;
}

double plain_terminal(const MartingaleModel& model, Stream& rng) {
  HistorySummary s = model.initial();
  double x = 0.0;
  for (std::size_t i = 0; i < model.horizon(); ++i) {
    const ConditionalLaw& law = model.law_at(s);
    const double v = law.atoms()[law.pick(rng.uniform())].value;
    x += v;
    s = model.advance(s, v);
  }
  return x;
}

Partial merge(const std::vector<Partial>& parts) {
  Partial total;
  for (const Partial& p : parts) {
    total.w.add(p.w);
    total.w2.add(p.w2);
    total.hits += p.hits;
  }
  return total;
}

}  // namespace

TailEstimate estimate_tail_plain(const MartingaleModel& model, double x, std::size_t n_samples, std::uint64_t seed,
                                 const McOptions& options) {
  if (n_samples == 0) throw std::invalid_argument("estimate_tail_plain: n_samples must be at least 1");
  std::optional<IidTerminal> fast;
  if (model.is_iid() && !options.force_path_sampling) {
    const ConditionalLaw& law = model.law_at(model.initial());
    fast.emplace(law, law_probs(law), model.horizon());
  }
  const auto parts = run_chunked<Partial>(n_samples, options.workers, [&](std::size_t b, std::size_t e, Partial& out) {
    for (std::size_t j = b; j < e; ++j) {
      Stream rng(seed, j);
      const double t = fast ? fast->draw(rng) : plain_terminal(model, rng);
      if (in_event(t, x, options.event)) ++out.hits;
    }
  });
  const Partial total = merge(parts);
  TailEstimate est;
  est.estimator = "plain";
  est.n_samples = n_samples;
  const double nn = static_cast<double>(n_samples);
  est.p_hat = static_cast<double>(total.hits) / nn;
  est.std_err = std::sqrt(est.p_hat * (1.0 - est.p_hat) / nn);
  std::tie(est.ci_lo, est.ci_hi) = clopper_pearson(total.hits, n_samples);
  est.ess = nn;
  return est;
}

TailEstimate estimate_tail_tilted(const MartingaleModel& model, double x, double lambda, std::size_t n_samples,
                                  std::uint64_t seed, const McOptions& options) {
  if (n_samples == 0) throw std::invalid_argument("estimate_tail_tilted: n_samples must be at least 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("estimate_tail_tilted: lambda must be finite and nonnegative");
  if (options.event == TailEvent::abs_greater)
    throw std::invalid_argument("estimate_tail_tilted: two-sided events need the plain estimator");

  std::optional<IidTerminal> fast;
  double psi_iid = 0.0;
  if (model.is_iid() && !options.force_path_sampling) {
    const ConditionalLaw& law = model.law_at(model.initial());
    const TiltedLaw tl = tilt_law(law, lambda);
    fast.emplace(law, tl.probs, model.horizon());
    psi_iid = static_cast<double>(model.horizon()) * tl.step_log_mgf;
  }

  const TiltCache cache(model, lambda);
  // Two-point laws: pick by a single comparison.
  bool two_point = true;
  std::vector<std::array<double, 3>> table;  // low value, high value, tilted P(low)
  for (std::size_t i = 0; i < model.law_count(); ++i) {
    const auto atoms = model.law_in_slot(i).atoms();
    two_point = two_point && atoms.size() == 2;
    if (two_point) table.push_back({atoms[0].value, atoms[1].value, cache[i].probs[0]});
  }
  const auto parts = run_chunked<Partial>(n_samples, options.workers, [&](std::size_t b, std::size_t e, Partial& out) {
    for (std::size_t j = b; j < e; ++j) {
      Stream rng(seed, j);
      double t;
      double psi;
      if (fast) {
        t = fast->draw(rng);
        psi = psi_iid;
      } else {
        HistorySummary s = model.initial();
        t = 0.0;
        psi = 0.0;
        for (std::size_t i = 0; i < model.horizon() && two_point; ++i) {
          const std::size_t slot = model.law_slot(s);
          const auto& row = table[slot];
          const double v = rng.uniform() < row[2] ? row[0] : row[1];
          t += v;
          psi += cache[slot].step_log_mgf;
          s = model.advance(s, v);
        }
        for (std::size_t i = 0; i < model.horizon() && !two_point; ++i) {
          const std::size_t slot = model.law_slot(s);
          const TiltedLaw& tl = cache[slot];
          const double v = model.law_in_slot(slot).atoms()[tl.pick(rng.uniform())].value;
          t += v;
          psi += tl.step_log_mgf;
          s = model.advance(s, v);
        }
      }
      if (!in_event(t, x, options.event)) continue;
      const double w = std::exp(-lambda * t + psi);
      ++out.hits;
      out.w.add(w);
      out.w2.add(w * w);
    }
  });
  const Partial total = merge(parts);

  TailEstimate est;
  est.estimator = "tilted";
  est.lambda = lambda;
  est.n_samples = n_samples;
  const double nn = static_cast<double>(n_samples);
  const double sw = total.w.value();
  const double sw2 = total.w2.value();
  est.p_hat = sw / nn;
  const double var = n_samples > 1 ? std::max(0.0, (sw2 - nn * est.p_hat * est.p_hat) / (nn - 1.0)) : 0.0;
  est.std_err = std::sqrt(var / nn);
  est.ess = sw2 > 0.0 ? sw * sw / sw2 : 0.0;
  est.low_ess = est.ess < 10.0;
  if (est.p_hat > 0.0) {
    const double spread = 1.96 * est.std_err / est.p_hat;
    est.ci_lo = est.p_hat * std::exp(-spread);
    est.ci_hi = est.p_hat * std::exp(spread);
  }
  return est;
}

namespace {

constexpr double kMaxLeaves = 4194304.0;  // 2^22

void check_enumerable(const MartingaleModel& model) {
  const auto reach = enumerate_reachable(model);
  std::size_t widest = 0;
  for (const ConditionalLaw* law : reach.eta_laws) widest = std::max(widest, law->size());
  if (std::pow(static_cast<double>(widest), static_cast<double>(model.horizon())) > kMaxLeaves)
    throw std::invalid_argument("exact enumeration: too many paths");
}

template <class Leaf>
void walk(const MartingaleModel& model, const TiltCache& cache, const HistorySummary& s, double x, double prob, double psi,
          NeumaierSum& acc, const Leaf& leaf) {
  if (s.step == model.horizon()) {
    acc.add(leaf(x, prob, psi));
    return;
  }
  const std::size_t slot = model.law_slot(s);
  const TiltedLaw& tl = cache[slot];
  const auto atoms = model.law_in_slot(slot).atoms();
  for (std::size_t i = 0; i < atoms.size(); ++i)
    walk(model, cache, model.advance(s, atoms[i].value), x + atoms[i].value, prob * tl.probs[i],
         psi + tl.step_log_mgf, acc, leaf);
}

}  // namespace

double exact_tail(const MartingaleModel& model, double x, TailEvent event) {
  return exact_tilted_expectation(model, x, 0.0, event);
}

double exact_tilted_expectation(const MartingaleModel& model, double x, double lambda, TailEvent event) {
  check_enumerable(model);
  const TiltCache cache(model, lambda);
  NeumaierSum acc;
  walk(model, cache, model.initial(), 0.0, 1.0, 0.0, acc, [&](double t, double prob, double psi) {
    return in_event(t, x, event) ? prob * std::exp(-lambda * t + psi) : 0.0;
  });
  return acc.value();
}

// ---------------------------------------------------------------------------

RatioReport ratio_report(const MartingaleModel& model, const std::vector<double>& x_grid, std::size_t budget,
                         std::uint64_t seed, const RatioOptions& options) {
  if (x_grid.empty()) throw std::invalid_argument("ratio_report: empty x grid");
  if (budget == 0) throw std::invalid_argument("ratio_report: budget must be at least 1");
  RatioReport report;
  report.certificate = certify(model, default_certify_options(model));
  const Certificate& cert = report.certificate;
  BoundParams params = BoundParams::from_certificate(cert, options.c);
  if (options.delta_from_L) params.delta = cert.delta_n_alt;
  const double top = options.alpha / cert.eps_n;

  for (std::size_t i = 0; i < x_grid.size(); ++i) {
    const double x = x_grid[i];
    if (!(x >= 0.0) || x > top * (1.0 + 1e-12))
      throw std::invalid_argument(fmt::format("ratio_report: x = {} outside [0, alpha/eps_n] = [0, {:.6g}]", x, top));
    const TiltChoice tilt = choose_tilt(model, x, cert.eps_n);
    RatioRow row;
    row.x = x;
    row.seed = derive_seed(seed, i);
    row.lambda = tilt.lambda;
    row.outside_range = tilt.outside_range;
    const TailEstimate est = estimate_tail_tilted(model, x, tilt.lambda, budget, row.seed, options.mc);
    row.p_hat = est.p_hat;
    row.se = est.std_err;
    row.ci_lo = est.ci_lo;
    row.ci_hi = est.ci_hi;
    row.ess = est.ess;
    row.low_ess = est.low_ess;
    row.n_samples = est.n_samples;
    row.gauss_tail = gaussian_tail(x);
    row.ratio = row.p_hat / row.gauss_tail;
    row.log_ratio = std::log(row.p_hat) - log_gaussian_tail(x);
    const double rhs = thm21_rhs(x, params);
    row.bound_lo = std::exp(-rhs);
    row.bound_hi = std::exp(rhs);
    report.rows.push_back(row);
  }
  return report;
}

std::vector<MdpRow> mdp_scan(const std::function<MartingaleModel(std::size_t)>& family,
                             const std::vector<std::size_t>& ns, double gamma, double b, std::size_t budget,
                             std::uint64_t seed, const McOptions& options) {
  if (!(gamma > 0.0 && gamma < 0.5))
    throw std::invalid_argument("mdp_scan: a_n = n^gamma needs 0 < gamma < 1/2 so that a_n -> inf and a_n eps_n -> 0");
  if (!(b >= 0.0)) throw std::invalid_argument("mdp_scan: b must be nonnegative");
  McOptions opt = options;
  opt.event = TailEvent::greater_equal;
  std::vector<MdpRow> rows;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const MartingaleModel model = family(ns[i]);
    MdpRow row;
    row.n = ns[i];
    row.a_n = std::pow(static_cast<double>(ns[i]), gamma);
    row.threshold = b * row.a_n;
    const double lambda = choose_tilt(model, row.threshold).lambda;
    row.estimate = estimate_tail_tilted(model, row.threshold, lambda, budget, derive_seed(seed, i), opt);
    const double a2 = row.a_n * row.a_n;
    row.value = std::log(row.estimate.p_hat) / a2;
    row.value_lo = std::log(row.estimate.ci_lo) / a2;
    row.value_hi = std::log(row.estimate.ci_hi) / a2;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------

void write_config_header(std::ostream& os, const nlohmann::json& config) {
  for (const auto& [key, value] : config.items()) os << "# " << key << ": " << value.dump() << '\n';
}

void write_ratio_csv(std::ostream& os, const RatioReport& report, const nlohmann::json& config) {
  write_config_header(os, config);
  os << "# certificate: " << report.certificate.to_json().dump() << '\n';
  os << "x,p_hat,se,ci_lo,ci_hi,gauss_tail,ratio,log_ratio,bound_lo,bound_hi,ess,n_samples,seed\n";
  for (const RatioRow& r : report.rows) {
    os << fmt::format("{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{},{}\n",
                      r.x, r.p_hat, r.se, r.ci_lo, r.ci_hi, r.gauss_tail, r.ratio, r.log_ratio, r.bound_lo,
                      r.bound_hi, r.ess, r.n_samples, r.seed);
  }
}

void write_mdp_csv(std::ostream& os, const std::vector<MdpRow>& rows, const nlohmann::json& config) {
  write_config_header(os, config);
  os << "n,a_n,threshold,p_hat,se,ci_lo,ci_hi,ess,value,value_lo,value_hi\n";
  for (const MdpRow& r : rows) {
    const TailEstimate& e = r.estimate;
    os << fmt::format("{},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g}\n", r.n,
                      r.a_n, r.threshold, e.p_hat, e.std_err, e.ci_lo, e.ci_hi, e.ess, r.value, r.value_lo,
                      r.value_hi);
  }
}

std::vector<double> parse_grid(const std::string& spec) {
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw std::invalid_argument("grid: cannot parse '" + s + "' in '" + spec + "'");
    return v;
  };
  std::vector<std::string> parts;
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    std::stringstream ss(spec);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
    if (parts.size() != 3) throw std::invalid_argument("grid: expected start:stop:step, got '" + spec + "'");
    const double a = number(parts[0]);
    const double b = number(parts[1]);
    const double step = number(parts[2]);
    if (!(step > 0.0) || b < a) throw std::invalid_argument("grid: need step > 0 and stop >= start in '" + spec + "'");
    const auto count = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) out.push_back(a + static_cast<double>(i) * step);
  } else {
    std::stringstream ss(spec);
    for (std::string part; std::getline(ss, part, ',');) out.push_back(number(part));
  }
  if (out.empty()) throw std::invalid_argument("grid: empty grid '" + spec + "'");
  return out;
}

}  // namespace mdev
