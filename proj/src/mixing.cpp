#include "mdev/mixing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "mdev/bounds.hpp"

namespace mdev {

namespace {

constexpr double kRowTolerance = 1e-12;

std::vector<BlockKernel::Outcome> merge_outcomes(std::vector<BlockKernel::Outcome> v) {
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.end != b.end ? a.end < b.end : a.sum < b.sum;
  });
  std::vector<BlockKernel::Outcome> out;
  for (const auto& o : v) {
    if (o.prob <= 0.0) continue;
    if (!out.empty() && out.back().end == o.end &&
        std::abs(o.sum - out.back().sum) <= 1e-12 * std::max(1.0, std::abs(o.sum)))
      out.back().prob += o.prob;
    else
      out.push_back(o);
  }
  return out;
}

std::vector<BlockKernel::Outcome> extend(const std::vector<BlockKernel::Outcome>& from, const ChainSpec& spec) {
  const Eigen::MatrixXd& P = spec.chain.P();
  std::vector<BlockKernel::Outcome> next;
  next.reserve(from.size() * spec.chain.size());
  for (const auto& o : from)
    for (std::size_t l = 0; l < spec.chain.size(); ++l) {
      const double p = P(static_cast<Eigen::Index>(o.end), static_cast<Eigen::Index>(l));
      if (p > 0.0) next.push_back({o.sum + spec.f[l], l, o.prob * p});
    }
  return merge_outcomes(std::move(next));
}

bool primitive(const Eigen::MatrixXd& P) {
  const Eigen::Index S = P.rows();
  Eigen::MatrixXd A = (P.array() > 0.0).cast<double>().matrix();
  // Wielandt: a primitive matrix has A^k > 0 for k >= (S-1)^2 + 1.
  const double need = static_cast<double>((S - 1) * (S - 1) + 1);
  for (double k = 1.0; k < need; k *= 2.0) A = ((A * A).array() > 0.0).cast<double>().matrix();
  return (A.array() > 0.0).all();
}

}  // namespace

Eigen::VectorXd stationary_dist(const Eigen::MatrixXd& P) {
  const Eigen::Index S = P.rows();
  if (S == 0 || P.cols() != S) throw std::invalid_argument("stationary_dist: P must be square and nonempty");
  if (!primitive(P)) throw std::invalid_argument("stationary_dist: chain is not irreducible and aperiodic");
  Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(S, S);
  A.row(S - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(S);
  b(S - 1) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (lu.rank() < S) throw std::invalid_argument("stationary_dist: singular system, chain is reducible");
  Eigen::VectorXd pi = lu.solve(b);
  // One refinement step brings the residual down to roundoff.
  pi += lu.solve(b - A * pi);
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
  const double residual = (pi.transpose() * P - pi.transpose()).cwiseAbs().maxCoeff();
  if (residual >= 1e-12) throw std::runtime_error(fmt::format("stationary_dist: residual {:.3g} too large", residual));
  return pi;
}

MarkovChain::MarkovChain(Eigen::MatrixXd P) : P_(std::move(P)) {
  if (P_.rows() == 0 || P_.rows() != P_.cols()) throw std::invalid_argument("chain: P must be square and nonempty");
  for (Eigen::Index i = 0; i < P_.rows(); ++i) {
    for (Eigen::Index j = 0; j < P_.cols(); ++j)
      if (!std::isfinite(P_(i, j)) || P_(i, j) < 0.0)
        throw std::invalid_argument(fmt::format("chain: P({}, {}) = {} is not a probability", i, j, P_(i, j)));
    const double s = P_.row(i).sum();
    if (std::abs(s - 1.0) > kRowTolerance)
      throw std::invalid_argument(fmt::format("chain: row {} sums to {:.17g}", i, s));
  }
  pi_ = stationary_dist(P_);
}

Eigen::MatrixXd MarkovChain::power(std::size_t n) const {
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(P_.rows(), P_.cols());
  Eigen::MatrixXd base = P_;
  for (; n > 0; n >>= 1) {
    if (n & 1) result = result * base;
    if (n > 1) base = base * base;
  }
  return result;
}

MarkovChain MarkovChain::two_state(double a, double b) {
  if (!(a > 0.0 && a <= 1.0 && b > 0.0 && b <= 1.0) || (a == 1.0 && b == 1.0))
    throw std::invalid_argument("two_state: need a, b in (0, 1] and not both equal to 1");
  Eigen::MatrixXd P(2, 2);
  P << 1.0 - a, a, b, 1.0 - b;
  return MarkovChain(P);
}

ChainSpec::ChainSpec(std::string name_, std::vector<std::string> states_, MarkovChain chain_, std::vector<double> f_)
    : name(std::move(name_)), states(std::move(states_)), chain(std::move(chain_)), f(std::move(f_)) {
  const std::size_t S = chain.size();
  if (states.empty())
    for (std::size_t i = 0; i < S; ++i) states.push_back(std::to_string(i));
  if (states.size() != S) throw std::invalid_argument("chain spec: states and P disagree in size");
  if (f.size() != S) throw std::invalid_argument("chain spec: f and P disagree in size");
  double mean = 0.0;
  for (std::size_t i = 0; i < S; ++i) {
    if (!std::isfinite(f[i])) throw std::invalid_argument("chain spec: f must be finite");
    mean += chain.pi()(static_cast<Eigen::Index>(i)) * f[i];
  }
  if (std::abs(mean) > 1e-12)
    throw std::invalid_argument(fmt::format("chain spec: stationary mean of f is {:.3g}, must be 0", mean));
  c3 = *std::max_element(f.begin(), f.end());
}

ChainSpec ChainSpec::two_state(double a, double b) {
  MarkovChain chain = MarkovChain::two_state(a, b);
  const double p0 = chain.pi()(0), p1 = chain.pi()(1);
  const double s = std::sqrt(p0 * p1);
  return ChainSpec(fmt::format("two_state(a={},b={})", a, b), {"0", "1"}, std::move(chain), {p1 / s, -p0 / s});
}

nlohmann::json ChainSpec::to_json() const {
  nlohmann::json P = nlohmann::json::array();
  for (Eigen::Index i = 0; i < chain.P().rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < chain.P().cols(); ++j) row.push_back(chain.P()(i, j));
    P.push_back(row);
  }
  return {{"name", name}, {"states", states}, {"P", P}, {"f", f}};
}

ChainSpec ChainSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("chain spec: expected a JSON object");
  for (const char* key : {"P", "f"})
    if (!j.contains(key)) throw std::invalid_argument(fmt::format("chain spec: missing field '{}'", key));
  std::vector<std::string> states;
  if (j.contains("states")) {
    const auto& s = j.at("states");
    if (s.is_number_integer()) {
      if (s.get<long long>() < 1) throw std::invalid_argument("chain spec: 'states' count must be positive");
      for (long long i = 0; i < s.get<long long>(); ++i) states.push_back(std::to_string(i));
    } else if (s.is_array()) {
      for (const auto& e : s) states.push_back(e.is_string() ? e.get<std::string>() : e.dump());
    } else {
      throw std::invalid_argument("chain spec: 'states' must be a list or a count");
    }
  }
  const auto& f_json = j.at("f");
  if (!f_json.is_array() || f_json.empty()) throw std::invalid_argument("chain spec: 'f' must be a nonempty list");
  std::vector<double> f;
  for (const auto& v : f_json) {
    if (!v.is_number()) throw std::invalid_argument("chain spec: 'f' entries must be numbers");
    f.push_back(v.get<double>());
  }
  const auto S = static_cast<Eigen::Index>(f.size());
  const auto& p_json = j.at("P");
  if (!p_json.is_array()) throw std::invalid_argument("chain spec: 'P' must be a list");
  std::vector<double> flat;
  for (const auto& row : p_json) {
    if (row.is_array()) {
      if (static_cast<Eigen::Index>(row.size()) != S)
        throw std::invalid_argument(fmt::format("chain spec: every row of 'P' needs {} entries", S));
      for (const auto& v : row) flat.push_back(v.get<double>());
    } else if (row.is_number()) {
      flat.push_back(row.get<double>());
    } else {
      throw std::invalid_argument("chain spec: 'P' entries must be numbers");
    }
  }
  if (static_cast<Eigen::Index>(flat.size()) != S * S)
    throw std::invalid_argument(fmt::format("chain spec: 'P' has {} entries, expected {}", flat.size(), S * S));
  Eigen::MatrixXd P(S, S);
  for (Eigen::Index i = 0; i < S; ++i)
    for (Eigen::Index c = 0; c < S; ++c) P(i, c) = flat[static_cast<std::size_t>(i * S + c)];
  return ChainSpec(j.value("name", std::string("chain")), std::move(states), MarkovChain(P), std::move(f));
}

// ---------------------------------------------------------------------------

double beta_coefficient(const MarkovChain& chain, std::size_t n) {
  const Eigen::MatrixXd Pn = chain.power(n);
  const Eigen::VectorXd& pi = chain.pi();
  double beta = 0.0;
  for (Eigen::Index i = 0; i < Pn.rows(); ++i)
    beta += pi(i) * 0.5 * (Pn.row(i) - pi.transpose()).cwiseAbs().sum();
  return beta;
}

double psi_bar_coefficient(const MarkovChain& chain, std::size_t n) {
  const Eigen::MatrixXd Pn = chain.power(n);
  const Eigen::VectorXd& pi = chain.pi();
  double psi = 0.0;
  for (Eigen::Index i = 0; i < Pn.rows(); ++i)
    for (Eigen::Index j = 0; j < Pn.cols(); ++j) psi = std::max(psi, std::abs(Pn(i, j) / pi(j) - 1.0));
  return psi;
}

BetaFit fit_beta_decay(const std::vector<double>& beta) {
  // Values below 1e-12 are dominated by roundoff in the matrix powers.
  std::vector<double> ns, ys;
  for (std::size_t i = 0; i < beta.size(); ++i)
    if (beta[i] > 1e-12) {
      ns.push_back(static_cast<double>(i + 1));
      ys.push_back(std::log(beta[i]));
    }
  BetaFit fit;
  fit.fitted_points = ns.size();
  if (ns.empty()) return fit;
  if (ns.size() == 1) {
    fit.a1 = std::exp(ys[0]);
    return fit;
  }
  double best_sse = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 200; ++k) {
    const double tau = k / 100.0;
    double mt = 0.0, my = 0.0;
    std::vector<double> t(ns.size());
    for (std::size_t i = 0; i < ns.size(); ++i) {
      t[i] = std::pow(ns[i], tau);
      mt += t[i];
      my += ys[i];
    }
    mt /= static_cast<double>(ns.size());
    my /= static_cast<double>(ns.size());
    double sty = 0.0, stt = 0.0;
    for (std::size_t i = 0; i < ns.size(); ++i) {
      sty += (t[i] - mt) * (ys[i] - my);
      stt += (t[i] - mt) * (t[i] - mt);
    }
    const double a2 = -sty / stt;
    if (!(a2 > 0.0)) continue;
    const double c = my + a2 * mt;
    double sse = 0.0, lift = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const double r = ys[i] - (c - a2 * t[i]);
      sse += r * r;
      lift = std::max(lift, r);
    }
    if (sse < best_sse) {
      best_sse = sse;
      fit.tau = tau;
      fit.a2 = a2;
      fit.a1 = std::exp(c + lift) * (1.0 + 1e-12);  // absorb exp/log roundoff
    }
  }
  if (!std::isfinite(best_sse)) {
    fit.a1 = std::exp(*std::max_element(ys.begin(), ys.end()));
    fit.a2 = 0.0;
    fit.tau = 1.0;
  }
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double model = fit.a1 * std::exp(-fit.a2 * std::pow(ns[i], fit.tau));
    fit.max_rel_error = std::max(fit.max_rel_error, std::abs(model / std::exp(ys[i]) - 1.0));
  }
  return fit;
}

nlohmann::json MixingCertificate::to_json() const {
  return {{"beta", beta},
          {"psi_bar", psi_bar},
          {"fit", {{"a1", fit.a1}, {"a2", fit.a2}, {"tau", fit.tau}, {"max_rel_error", fit.max_rel_error},
                   {"points", fit.fitted_points}}},
          {"rho", rho},
          {"c1", c1},
          {"c2", c2}};
}

MixingCertificate certify_mixing(const ChainSpec& spec, std::size_t n_max, std::size_t m_max, double rho) {
  if (n_max == 0 || m_max == 0) throw std::invalid_argument("certify_mixing: n_max and m_max must be positive");
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("certify_mixing: rho must lie in (0, 1]");
  MixingCertificate cert;
  cert.rho = rho;
  Eigen::MatrixXd Pn = spec.chain.P();
  const Eigen::VectorXd& pi = spec.chain.pi();
  for (std::size_t n = 1; n <= n_max; ++n) {
    double beta = 0.0, psi = 0.0;
    for (Eigen::Index i = 0; i < Pn.rows(); ++i) {
      beta += pi(i) * 0.5 * (Pn.row(i) - pi.transpose()).cwiseAbs().sum();
      for (Eigen::Index j = 0; j < Pn.cols(); ++j) psi = std::max(psi, std::abs(Pn(i, j) / pi(j) - 1.0));
    }
    cert.beta.push_back(beta);
    cert.psi_bar.push_back(psi);
    Pn = Pn * spec.chain.P();
  }
  cert.fit = fit_beta_decay(cert.beta);

  std::vector<BlockKernel::Outcome> law;
  for (std::size_t s = 0; s < spec.chain.size(); ++s) law.push_back({spec.f[s], s, pi(static_cast<Eigen::Index>(s))});
  law = merge_outcomes(std::move(law));
  cert.c2 = std::numeric_limits<double>::infinity();
  for (std::size_t m = 1; m <= m_max; ++m) {
    if (m > 1) law = extend(law, spec);
    double abs_moment = 0.0, second = 0.0;
    for (const auto& o : law) {
      abs_moment += o.prob * std::pow(std::abs(o.sum), 2.0 + rho);
      second += o.prob * o.sum * o.sum;
    }
    const double mm = static_cast<double>(m);
    cert.c1 = std::max(cert.c1, std::pow(abs_moment / std::pow(mm, 1.0 + rho / 2.0), 1.0 / (2.0 + rho)));
    cert.c2 = std::min(cert.c2, std::sqrt(second / mm));
  }
  return cert;
}

// ---------------------------------------------------------------------------

std::pair<std::size_t, std::size_t> block_sizes(std::size_t n, double alpha) {
  if (!(alpha > 0.0 && alpha <= 0.5)) throw std::invalid_argument("block sizes: alpha must lie in (0, 1/2]");
  const double root = std::pow(static_cast<double>(n), alpha);
  const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(root * (1.0 + 1e-12))));
  const std::size_t k = n / (2 * m);
  if (k == 0) throw std::invalid_argument(fmt::format("block sizes: n = {} leaves no block for m = {}", n, m));
  return {m, k};
}

BlockDecomposition block_decompose(const std::vector<double>& eta, double alpha) {
  BlockDecomposition d;
  std::tie(d.m, d.k) = block_sizes(eta.size(), alpha);
  for (std::size_t j = 0; j < d.k; ++j) {
    double y = 0.0;
    for (std::size_t i = 2 * d.m * j; i < 2 * d.m * j + d.m; ++i) y += eta[i];
    d.blocks.push_back(y);
    d.S += y;
  }
  return d;
}

BlockKernel::BlockKernel(const ChainSpec& spec, std::size_t m) : m_(m) {
  if (m == 0) throw std::invalid_argument("block kernel: m must be positive");
  for (std::size_t s = 0; s < spec.chain.size(); ++s) {
    std::vector<Outcome> law{{spec.f[s], s, 1.0}};
    for (std::size_t step = 1; step < m; ++step) law = extend(law, spec);
    std::vector<double> cdf;
    double run = 0.0;
    for (const Outcome& o : law) cdf.push_back(run += o.prob);
    cdf.back() = 1.0;
    table_.push_back(std::move(law));
    cdf_.push_back(std::move(cdf));
  }
}

const BlockKernel::Outcome& BlockKernel::draw(std::size_t start, double u) const {
  const auto& cdf = cdf_[start];
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
  return table_[start][idx];
}

std::vector<std::pair<double, double>> BlockKernel::sum_law(const Eigen::VectorXd& start_law) const {
  std::vector<std::pair<double, double>> all;
  for (std::size_t s = 0; s < table_.size(); ++s)
    for (const Outcome& o : table_[s]) all.emplace_back(o.sum, start_law(static_cast<Eigen::Index>(s)) * o.prob);
  std::sort(all.begin(), all.end());
  std::vector<std::pair<double, double>> out;
  for (const auto& [v, p] : all) {
    if (p <= 0.0) continue;
    if (!out.empty() && std::abs(v - out.back().first) <= 1e-12 * std::max(1.0, std::abs(v)))
      out.back().second += p;
    else
      out.emplace_back(v, p);
  }
  return out;
}

std::size_t draw_index(const Eigen::VectorXd& p, double u) {
  double run = 0.0;
  Eigen::Index last = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) <= 0.0) continue;
    last = i;
    run += p(i);
    if (u < run) return static_cast<std::size_t>(i);
  }
  return static_cast<std::size_t>(last);
}

MaximalCoupling maximal_coupling(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size() || p.size() == 0) throw std::invalid_argument("maximal_coupling: size mismatch");
  if ((p.array() < 0.0).any() || (q.array() < 0.0).any())
    throw std::invalid_argument("maximal_coupling: negative probability");
  MaximalCoupling c;
  const Eigen::VectorXd low = p.cwiseMin(q);
  c.overlap = low.sum();
  c.tv = 0.5 * (p - q).cwiseAbs().sum();
  c.common = c.overlap > 0.0 ? Eigen::VectorXd(low / c.overlap) : Eigen::VectorXd::Zero(p.size());
  const Eigen::VectorXd rp = p - low, rq = q - low;
  const double sp = rp.sum(), sq = rq.sum();
  c.residual_p = sp > 0.0 ? Eigen::VectorXd(rp / sp) : Eigen::VectorXd::Zero(p.size());
  c.residual_q = sq > 0.0 ? Eigen::VectorXd(rq / sq) : Eigen::VectorXd::Zero(p.size());
  return c;
}

std::pair<std::size_t, std::size_t> draw_coupled(const MaximalCoupling& c, Stream& rng) {
  const double u = rng.uniform();
  if (c.tv <= 0.0 || u < c.overlap) {
    const std::size_t i = draw_index(c.common, rng.uniform());
    return {i, i};
  }
  const std::size_t a = draw_index(c.residual_p, rng.uniform());
  return {a, draw_index(c.residual_q, rng.uniform())};
}

namespace {

struct BerbeePlan {
  std::vector<MaximalCoupling> couplings;  // next block start given the previous block's end

  BerbeePlan(const ChainSpec& spec, std::size_t m) {
    const Eigen::MatrixXd gap = spec.chain.power(m + 1);
    for (Eigen::Index e = 0; e < gap.rows(); ++e)
      couplings.push_back(maximal_coupling(gap.row(e).transpose(), spec.chain.pi()));
  }
};

BerbeeDraw berbee_draw(const ChainSpec& spec, const BlockKernel& kernel, const BerbeePlan& plan, std::size_t k,
                       Stream& rng) {
  BerbeeDraw d;
  std::size_t s = draw_index(spec.chain.pi(), rng.uniform());
  const BlockKernel::Outcome* o = &kernel.draw(s, rng.uniform());
  d.blocks.push_back(o->sum);
  d.copies.push_back(o->sum);
  d.mismatch.push_back(false);
  for (std::size_t j = 1; j < k; ++j) {
    const auto [actual, copy] = draw_coupled(plan.couplings[o->end], rng);
    o = &kernel.draw(actual, rng.uniform());
    d.blocks.push_back(o->sum);
    if (actual == copy) {
      d.copies.push_back(o->sum);
      d.mismatch.push_back(false);
    } else {
      d.copies.push_back(kernel.draw(copy, rng.uniform()).sum);
      d.mismatch.push_back(true);
    }
  }
  return d;
}

}  // namespace

BerbeeDraw berbee_couple(const ChainSpec& spec, const BlockKernel& kernel, std::size_t k, Stream& rng) {
  if (k == 0) throw std::invalid_argument("berbee_couple: k must be positive");
  return berbee_draw(spec, kernel, BerbeePlan(spec, kernel.m()), k, rng);
}

BerbeeExperiment berbee_mismatch_experiment(const ChainSpec& spec, std::size_t m, std::size_t k, std::size_t reps,
                                            std::uint64_t seed, std::size_t workers) {
  if (reps == 0 || k == 0) throw std::invalid_argument("berbee experiment: reps and k must be positive");
  const BlockKernel kernel(spec, m);
  const BerbeePlan plan(spec, m);
  const auto parts = run_chunked<std::size_t>(reps, workers, [&](std::size_t b, std::size_t e, std::size_t& hits) {
    for (std::size_t j = b; j < e; ++j) {
      Stream rng(seed, j);
      const BerbeeDraw d = berbee_draw(spec, kernel, plan, k, rng);
      if (std::any_of(d.mismatch.begin(), d.mismatch.end(), [](bool x) { return x; })) ++hits;
    }
  });
  std::size_t hits = 0;
  for (std::size_t h : parts) hits += h;
  BerbeeExperiment r;
  r.reps = reps;
  const double N = static_cast<double>(reps);
  r.p_any = static_cast<double>(hits) / N;
  r.se = std::sqrt(r.p_any * (1.0 - r.p_any) / N);
  r.bound = static_cast<double>(k - 1) * beta_coefficient(spec.chain, m);
  return r;
}

CovarianceCheck covariance_bound_check(const MarkovChain& chain, std::size_t n, const std::vector<double>& f,
                                       const std::vector<double>& g, double p) {
  if (!(p > 1.0) || !std::isfinite(p)) throw std::invalid_argument("covariance check: p must be finite and > 1");
  if (f.size() != chain.size() || g.size() != chain.size())
    throw std::invalid_argument("covariance check: observables must match the state count");
  const double q = p / (p - 1.0);
  const Eigen::MatrixXd Pn = chain.power(n);
  const Eigen::VectorXd& pi = chain.pi();
  const Eigen::Map<const Eigen::VectorXd> fv(f.data(), static_cast<Eigen::Index>(f.size()));
  const Eigen::Map<const Eigen::VectorXd> gv(g.data(), static_cast<Eigen::Index>(g.size()));
  const Eigen::VectorXd ahead = Pn * fv;
  const double exy = (pi.array() * gv.array() * ahead.array()).sum();
  const double ex = pi.dot(fv), ey = pi.dot(gv);
  const double norm_x = std::pow((pi.array() * fv.array().abs().pow(p)).sum(), 1.0 / p);
  const double norm_y = std::pow((pi.array() * gv.array().abs().pow(q)).sum(), 1.0 / q);
  CovarianceCheck c;
  c.lhs = std::abs(exy - ex * ey);
  c.rhs = 2.0 * std::pow(psi_bar_coefficient(chain, n), 1.0 / p) * norm_x * norm_y;
  c.ratio = c.lhs == 0.0 ? 0.0 : c.lhs / c.rhs;
  c.holds = c.lhs <= c.rhs + 1e-13 * norm_x * norm_y;
  return c;
}

double tau_n(double psi_m, std::size_t /*m*/, std::size_t n, std::size_t k) {
  if (!(psi_m >= 0.0)) throw std::invalid_argument("tau_n: psi must be nonnegative");
  const double nn = static_cast<double>(n), kk = static_cast<double>(k);
  return std::sqrt(psi_m + nn * psi_m * psi_m + kk * std::sqrt(psi_m));
}

double interlaced_second_moment(const ChainSpec& spec, std::size_t m, std::size_t k) {
  if (m == 0 || k == 0) throw std::invalid_argument("interlaced second moment: m and k must be positive");
  const Eigen::VectorXd& pi = spec.chain.pi();
  const Eigen::Map<const Eigen::VectorXd> f(spec.f.data(), static_cast<Eigen::Index>(spec.f.size()));
  const double mean = pi.dot(f);
  const std::size_t H = 2 * m * (k - 1) + m;
  std::vector<double> gamma(H);
  Eigen::VectorXd ahead = f;
  for (std::size_t h = 0; h < H; ++h) {
    gamma[h] = (pi.array() * f.array() * ahead.array()).sum() - mean * mean;
    ahead = spec.chain.P() * ahead;
  }
  auto block_cov = [&](std::size_t d) {
    NeumaierSum c;
    const auto mm = static_cast<long long>(m);
    for (long long r = -(mm - 1); r <= mm - 1; ++r) {
      const long long lag = static_cast<long long>(2 * m * d) + r;
      c.add(static_cast<double>(mm - std::llabs(r)) * gamma[static_cast<std::size_t>(std::llabs(lag))]);
    }
    return c.value();
  };
  NeumaierSum total;
  total.add(static_cast<double>(k) * block_cov(0));
  for (std::size_t d = 1; d < k; ++d) total.add(2.0 * static_cast<double>(k - d) * block_cov(d));
  return total.value();
}

double sample_interlaced_sum(const ChainSpec& spec, const BlockKernel& kernel, const Eigen::MatrixXd& gap,
                             std::size_t k, Stream& rng) {
  std::size_t s = draw_index(spec.chain.pi(), rng.uniform());
  double S = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const BlockKernel::Outcome& o = kernel.draw(s, rng.uniform());
    S += o.sum;
    if (j + 1 < k) s = draw_index(gap.row(static_cast<Eigen::Index>(o.end)).transpose(), rng.uniform());
  }
  return S;
}

std::vector<double> sample_chain_path(const ChainSpec& spec, std::size_t n, Stream& rng) {
  std::vector<double> eta;
  eta.reserve(n);
  if (n == 0) return eta;
  std::size_t s = draw_index(spec.chain.pi(), rng.uniform());
  eta.push_back(spec.f[s]);
  for (std::size_t i = 1; i < n; ++i) {
    s = draw_index(spec.chain.P().row(static_cast<Eigen::Index>(s)).transpose(), rng.uniform());
    eta.push_back(spec.f[s]);
  }
  return eta;
}

MixingReport mixing_tail_experiment(const ChainSpec& spec, std::size_t n, double alpha,
                                    const std::vector<double>& x_grid, std::size_t budget, std::uint64_t seed,
                                    const MixingOptions& options) {
  if (x_grid.empty()) throw std::invalid_argument("mixing experiment: empty x grid");
  if (budget == 0) throw std::invalid_argument("mixing experiment: budget must be at least 1");
  if (!(options.rho > 0.0 && options.rho <= 1.0)) throw std::invalid_argument("mixing experiment: rho must lie in (0, 1]");
  if (!(alpha > 0.0 && alpha < 0.5)) throw std::invalid_argument("mixing experiment: alpha must lie in (0, 1/2)");
  MixingReport r;
  r.n = n;
  r.alpha = alpha;
  r.rho = options.rho;
  std::tie(r.m, r.k) = block_sizes(n, alpha);
  r.es2 = interlaced_second_moment(spec, r.m, r.k);
  if (!(r.es2 > 0.0)) throw std::invalid_argument("mixing experiment: interlaced sum is degenerate");
  r.psi_m = psi_bar_coefficient(spec.chain, r.m);
  r.beta_m = beta_coefficient(spec.chain, r.m);
  r.tau = tau_n(r.psi_m, r.m, n, r.k);
  r.envelope_undefined = r.tau >= 1.0;

  const BlockKernel kernel(spec, r.m);
  const Eigen::MatrixXd gap = spec.chain.power(r.m + 1);
  const double scale = std::sqrt(r.es2);
  const auto parts = run_chunked<std::vector<std::size_t>>(
      budget, options.workers, [&](std::size_t b, std::size_t e, std::vector<std::size_t>& hits) {
        hits.assign(x_grid.size(), 0);
        for (std::size_t j = b; j < e; ++j) {
          Stream rng(seed, j);
          const double w = sample_interlaced_sum(spec, kernel, gap, r.k, rng) / scale;
          for (std::size_t i = 0; i < x_grid.size(); ++i)
            if (in_event(w, x_grid[i], TailEvent::greater)) ++hits[i];
        }
      });

  const double N = static_cast<double>(budget);
  for (std::size_t i = 0; i < x_grid.size(); ++i) {
    std::size_t hits = 0;
    for (const auto& p : parts) hits += p[i];
    MixingRow row;
    row.x = x_grid[i];
    TailEstimate& est = row.estimate;
    est.estimator = "plain";
    est.n_samples = budget;
    est.p_hat = static_cast<double>(hits) / N;
    est.std_err = std::sqrt(est.p_hat * (1.0 - est.p_hat) / N);
    std::tie(est.ci_lo, est.ci_hi) = clopper_pearson(hits, budget);
    est.ess = N;
    row.gauss_tail = gaussian_tail(row.x);
    row.ratio = est.p_hat / row.gauss_tail;
    row.ratio_lo = est.ci_lo / row.gauss_tail;
    row.ratio_hi = est.ci_hi / row.gauss_tail;
    if (r.envelope_undefined) {
      row.bound_lo = std::numeric_limits<double>::quiet_NaN();
      row.bound_hi = std::numeric_limits<double>::quiet_NaN();
    } else {
      const double rhs = psi_mixing_rhs(row.x, static_cast<double>(n), alpha, options.rho, r.tau, options.c);
      row.bound_lo = std::exp(-rhs);
      row.bound_hi = std::exp(rhs);
    }
    r.rows.push_back(row);
  }
  return r;
}

void write_mixing_csv(std::ostream& os, const MixingReport& report, const nlohmann::json& config) {
  write_config_header(os, config);
  os << fmt::format("# blocks: {{\"n\":{},\"alpha\":{},\"m\":{},\"k\":{},\"es2\":{:.12g},\"psi_m\":{:.12g},"
                    "\"beta_m\":{:.12g},\"tau\":{:.12g},\"envelope_undefined\":{}}}\n",
                    report.n, report.alpha, report.m, report.k, report.es2, report.psi_m, report.beta_m, report.tau,
                    report.envelope_undefined);
  os << "x,p_hat,se,ci_lo,ci_hi,gauss_tail,ratio,ratio_lo,ratio_hi,bound_lo,bound_hi,n_samples\n";
  for (const MixingRow& r : report.rows) {
    const TailEstimate& e = r.estimate;
    os << fmt::format("{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{:.12g},{}\n",
                      r.x, e.p_hat, e.std_err, e.ci_lo, e.ci_hi, r.gauss_tail, r.ratio, r.ratio_lo, r.ratio_hi,
                      r.bound_lo, r.bound_hi, e.n_samples);
  }
}

void write_mixing_certificate_csv(std::ostream& os, const MixingCertificate& cert, const nlohmann::json& config) {
  write_config_header(os, config);
  os << fmt::format("# fit: {{\"a1\":{:.12g},\"a2\":{:.12g},\"tau\":{:.12g},\"max_rel_error\":{:.6g}}}\n", cert.fit.a1,
                    cert.fit.a2, cert.fit.tau, cert.fit.max_rel_error);
  os << fmt::format("# moments: {{\"rho\":{},\"c1\":{:.12g},\"c2\":{:.12g}}}\n", cert.rho, cert.c1, cert.c2);
  os << "n,beta,psi_bar,beta_fit\n";
  for (std::size_t i = 0; i < cert.beta.size(); ++i) {
    const double fitted = cert.fit.a1 * std::exp(-cert.fit.a2 * std::pow(static_cast<double>(i + 1), cert.fit.tau));
    os << fmt::format("{},{:.12g},{:.12g},{:.12g}\n", i + 1, cert.beta[i], cert.psi_bar[i], fitted);
  }
}

}  // namespace mdev
