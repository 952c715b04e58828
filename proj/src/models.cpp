#include "mdev/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <tuple>

namespace mdev {

namespace {

std::size_t require_horizon(std::size_t n) {
  if (n == 0) throw std::invalid_argument("model horizon n must be at least 1");
  return n;
}

}  // namespace

std::size_t MartingaleModel::add_law(const ConditionalLaw& eta) {
  laws_.push_back(LawPair{eta.scaled(1.0 / std::sqrt(static_cast<double>(n_))), eta});
  return laws_.size() - 1;
}

nlohmann::json MartingaleModel::to_json() const {
  return {{"name", name_}, {"n", n_}, {"params", params_}};
}

MartingaleModel make_rademacher(std::size_t n) {
  MartingaleModel m("rademacher", require_horizon(n), nlohmann::json::object(),
                    MartingaleModel::Family::iid);
  m.add_law(symmetric_two_point(1.0));
  m.declared_N_ = 0.0;
  return m;
}

MartingaleModel make_iid(const ConditionalLaw& eta_law, std::size_t n, std::string name,
                         nlohmann::json params) {
  if (params.is_null() || params.empty()) {
    params = nlohmann::json::object();
    nlohmann::json atoms = nlohmann::json::array();
    for (const Atom& a : eta_law.atoms()) atoms.push_back({a.value, a.prob});
    params["atoms"] = atoms;
  }
  MartingaleModel m(std::move(name), require_horizon(n), std::move(params), MartingaleModel::Family::iid);
  m.add_law(eta_law);
  return m;
}

MartingaleModel make_regime_switch(std::size_t n, double gamma) {
  if (!(gamma >= 0.0 && gamma < 0.5)) throw std::invalid_argument("regime_switch: gamma must lie in [0, 1/2)");
  MartingaleModel m("regime_switch", require_horizon(n), {{"gamma", gamma}},
                    MartingaleModel::Family::regime_switch);
  m.gamma_ = gamma;
  m.up_ = (1.0 + gamma) * (1.0 + gamma) - 1.0;
  m.down_ = 1.0 - (1.0 - gamma) * (1.0 - gamma);
  m.declared_N_ = std::sqrt(m.up_ + m.down_);
  m.add_law(symmetric_two_point(1.0 - gamma));
  m.add_law(symmetric_two_point(1.0 + gamma));

  // Reachable (last sign, budget) pairs before the final step.
  std::set<std::pair<int, std::int64_t>> states{{0, 0}};
  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::set<std::pair<int, std::int64_t>> next;
    for (const auto& [sign, budget] : states) {
      const HistorySummary s{step, sign, budget};
      const std::int64_t bumped = budget + ((gamma > 0.0 && m.regime_high(s)) ? 1 : 0);
      next.insert({-1, bumped});
      next.insert({1, bumped});
    }
    states = std::move(next);
  }
  const double lo = (1.0 - gamma) * (1.0 - gamma);
  const double hi = (1.0 + gamma) * (1.0 + gamma);
  for (const auto& [sign, budget] : states) {
    if (m.final_law_.contains(budget)) continue;
    const double excess = static_cast<double>(budget) * m.up_ -
                          static_cast<double>(static_cast<std::int64_t>(n - 1) - budget) * m.down_;
    const double var = std::clamp(1.0 - excess, lo, hi);
    m.final_law_[budget] = m.add_law(symmetric_two_point(std::sqrt(var)));
  }
  return m;
}

MartingaleModel make_heavy_left(std::size_t n, double rho, std::size_t tail_atoms) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("heavy_left: rho must lie in (0, 1)");
  if (tail_atoms < 2 || tail_atoms > 4096)
    throw std::invalid_argument("heavy_left: tail_atoms must lie in [2, 4096]");
  require_horizon(n);

  constexpr double kTailMass = 0.25;
  constexpr double kFarthest = 1e6;
  std::vector<double> depth(tail_atoms);
  std::vector<double> mass(tail_atoms);
  double norm = 0.0;
  for (std::size_t j = 0; j < tail_atoms; ++j) {
    depth[j] = std::pow(kFarthest, static_cast<double>(j) / static_cast<double>(tail_atoms - 1));
    mass[j] = std::pow(depth[j], -3.0);
    norm += mass[j];
  }
  double first = 0.0;
  double second = 0.0;
  for (std::size_t j = 0; j < tail_atoms; ++j) {
    mass[j] *= kTailMass / norm;
    first += mass[j] * depth[j];
    second += mass[j] * depth[j] * depth[j];
  }
  const double p_plus = 1.0 - kTailMass;
  const double a = first / p_plus;
  const double sd = std::sqrt(p_plus * a * a + second);

  std::vector<Atom> atoms;
  atoms.push_back({a / sd, p_plus});
  for (std::size_t j = 0; j < tail_atoms; ++j) atoms.push_back({-depth[j] / sd, mass[j]});
  try {
    ConditionalLaw law(std::move(atoms));
    return make_iid(law, n, "heavy_left", {{"rho", rho}, {"tail_atoms", tail_atoms}});
  } catch (const std::invalid_argument& e) {
    throw std::domain_error(std::string("heavy_left: infeasible moment matching: ") + e.what());
  }
}

MartingaleModel MartingaleModel::from_json(const nlohmann::json& spec) {
  auto field = [&](const nlohmann::json& obj, const char* key) -> const nlohmann::json& {
    if (!obj.is_object() || !obj.contains(key))
      throw std::invalid_argument(std::string("model spec: missing field '") + key + "'");
    return obj.at(key);
  };
  const std::string name = field(spec, "name").get<std::string>();
  const auto& n_field = field(spec, "n");
  if (!n_field.is_number_integer() || n_field.get<long long>() < 1)
    throw std::invalid_argument("model spec: field 'n' must be a positive integer");
  const auto n = n_field.get<std::size_t>();
  const nlohmann::json params = spec.value("params", nlohmann::json::object());

  if (name == "rademacher" || name == "regime_switch") {
    MartingaleModel m =
        name == "rademacher" ? make_rademacher(n) : make_regime_switch(n, field(params, "gamma").get<double>());
    // rho only selects the certification regime for these models.
    if (params.contains("rho")) {
      const double rho = params.at("rho").get<double>();
      if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("model spec: field 'params.rho' must lie in (0, 1]");
      m.params_["rho"] = rho;
    }
    return m;
  }
  if (name == "heavy_left")
    return make_heavy_left(n, field(params, "rho").get<double>(), field(params, "tail_atoms").get<std::size_t>());
  if (name == "iid" || params.contains("atoms")) {
    std::vector<Atom> atoms;
    for (const auto& a : field(params, "atoms")) {
      if (!a.is_array() || a.size() != 2)
        throw std::invalid_argument("model spec: field 'params.atoms' entries must be [value, prob]");
      atoms.push_back({a[0].get<double>(), a[1].get<double>()});
    }
    return make_iid(ConditionalLaw(std::move(atoms)), n, name, params);
  }
  throw std::invalid_argument("model spec: unknown model name '" + name + "'");
}

// ---------------------------------------------------------------------------

double one_sided_moment(const ConditionalLaw& law, double rho, double K) {
  double s = 0.0;
  for (const Atom& a : law.atoms())
    s += a.prob * std::pow(std::abs(a.value), 2.0 + rho) * std::exp(K * std::max(a.value, 0.0));
  return s;
}

double two_sided_moment(const ConditionalLaw& law, double rho, double K) {
  double s = 0.0;
  for (const Atom& a : law.atoms())
    s += a.prob * std::pow(std::abs(a.value), 2.0 + rho) * std::exp(K * std::abs(a.value));
  return s;
}

bool one_sided_condition_holds(const ConditionalLaw& law, double rho, double K, double L) {
  return one_sided_moment(law, rho, K) <= std::pow(L, rho) * law.second_moment();
}

bool bernstein_condition_holds(const ConditionalLaw& law, int k, double H) {
  const double moment = law.expect([k](double v) { return std::pow(v, k); });
  return std::abs(moment) <= 0.5 * std::tgamma(k + 1.0) * std::pow(H, k - 2) * law.second_moment();
}

double log_negative_exponential_moment(const ConditionalLaw& law, double c) {
  double peak = -std::numeric_limits<double>::infinity();
  for (const Atom& a : law.atoms())
    if (a.value < 0.0) peak = std::max(peak, std::log(a.prob) - c * a.value);
  if (!std::isfinite(peak)) return peak;
  double s = 0.0;
  for (const Atom& a : law.atoms())
    if (a.value < 0.0) s += std::exp(std::log(a.prob) - c * a.value - peak);
  return peak + std::log(s);
}

std::vector<double> default_certificate_grid() {
  std::vector<double> g;
  for (int j = -6; j <= 10; ++j) g.push_back(std::ldexp(1.0, j));
  return g;
}

CertifyOptions default_certify_options(const MartingaleModel& model) {
  CertifyOptions opt;
  if (model.params().is_object() && model.params().contains("rho")) opt.rho = model.params().at("rho").get<double>();
  return opt;
}

Reachability enumerate_reachable(const MartingaleModel& model) {
  Reachability out;
  std::set<const ConditionalLaw*> seen;
  std::map<HistorySummary, std::pair<double, double>> layer{{model.initial(), {0.0, 0.0}}};
  for (std::size_t step = 0; step < model.horizon(); ++step) {
    std::map<HistorySummary, std::pair<double, double>> next;
    for (const auto& [s, range] : layer) {
      const ConditionalLaw& law = model.eta_law_at(s);
      if (seen.insert(&law).second) out.eta_laws.push_back(&law);
      const double v2 = law.second_moment();
      for (const Atom& a : law.atoms()) {
        const HistorySummary child = model.advance(s, a.value);
        auto [it, fresh] = next.try_emplace(child, range.first + v2, range.second + v2);
        if (!fresh) {
          it->second.first = std::min(it->second.first, range.first + v2);
          it->second.second = std::max(it->second.second, range.second + v2);
        }
      }
    }
    layer = std::move(next);
  }
  out.bracket_min = std::numeric_limits<double>::infinity();
  out.bracket_max = -std::numeric_limits<double>::infinity();
  for (const auto& [s, range] : layer) {
    out.bracket_min = std::min(out.bracket_min, range.first);
    out.bracket_max = std::max(out.bracket_max, range.second);
  }
  return out;
}

double bracket_gap(const Reachability& reach, std::size_t n) {
  const double nn = static_cast<double>(n);
  const double gap = std::max(std::abs(reach.bracket_max - nn), std::abs(reach.bracket_min - nn));
  return gap < 1e-9 * nn ? 0.0 : gap;
}

namespace {

// Largest lhs / rhs ratio of (A1') over the laws and the law attaining it.
std::pair<double, const ConditionalLaw*> worst_ratio(const std::vector<const ConditionalLaw*>& laws, double rho,
                                                     double K, double L) {
  double worst = 0.0;
  const ConditionalLaw* arg = laws.front();
  for (const ConditionalLaw* law : laws) {
    const double r = one_sided_moment(*law, rho, K) / (std::pow(L, rho) * law->second_moment());
    if (!(r <= worst)) {
      worst = r;
      arg = law;
    }
  }
  return {worst, arg};
}

}  // namespace

Certificate certify(const MartingaleModel& model, const CertifyOptions& options) {
  if (!(options.rho > 0.0 && options.rho <= 1.0)) throw std::invalid_argument("certify: rho must lie in (0, 1]");
  const Reachability reach = enumerate_reachable(model);
  const double rho = options.rho;

  std::vector<double> Ks = options.fixed_K ? std::vector<double>{*options.fixed_K} : options.grid;
  std::vector<double> Ls = options.fixed_L ? std::vector<double>{*options.fixed_L} : options.grid;
  std::sort(Ks.begin(), Ks.end());
  std::sort(Ls.begin(), Ls.end());

  // Score: smallest max(K, L); ties prefer the larger K, then the smaller L.
  std::optional<std::tuple<double, double, double>> best;
  for (double K : Ks) {
    for (double L : Ls) {
      if (worst_ratio(reach.eta_laws, rho, K, L).first > 1.0) continue;
      const auto cand = std::make_tuple(std::max(K, L), -K, L);
      if (!best || cand < *best) best = cand;
      break;  // larger L only worsens the score for this K
    }
  }
  if (!best) {
    const double K = Ks.front();
    const double L = Ls.back();
    const auto [ratio, law] = worst_ratio(reach.eta_laws, rho, K, L);
    const double rhs = std::pow(L, rho) * law->second_moment();
    throw CertificationError("certify: no (K, L) on the grid satisfies E|eta|^(2+rho) e^(K eta+) <= L^rho E eta^2",
                             *law, "E|eta|^(2+rho) e^(K eta+) <= L^rho E eta^2", ratio * rhs, rhs);
  }

  Certificate c;
  c.model = model.name();
  c.n = model.horizon();
  c.rho = rho;
  c.K = -std::get<1>(*best);
  c.L = std::get<2>(*best);
  const double n = static_cast<double>(model.horizon());
  const double gap = bracket_gap(reach, model.horizon());
  c.N_exact = std::sqrt(gap);
  c.N = c.N_exact;
  if (const auto declared = model.declared_N()) {
    if (*declared * *declared + 1e-9 * n < gap) {
      throw CertificationError("certify: declared bracket constant N is violated", *reach.eta_laws.front(),
                               "|sum E[eta^2|F] - n| <= N^2", gap, *declared * *declared);
    }
    c.N = *declared;
  }
  const double root_n = std::sqrt(n);
  c.eps_n = std::max(c.K, c.L) / root_n;
  c.delta_n = c.N / root_n;
  c.delta_n_alt = c.L / root_n;
  c.laws_checked = reach.eta_laws.size();
  return c;
}

bool recheck(const MartingaleModel& model, const Certificate& cert) {
  const Reachability reach = enumerate_reachable(model);
  for (const ConditionalLaw* law : reach.eta_laws)
    if (!one_sided_condition_holds(*law, cert.rho, cert.K, cert.L)) return false;
  return bracket_gap(reach, model.horizon()) <= cert.N * cert.N + 1e-9 * static_cast<double>(model.horizon());
}

std::size_t second_moment_violations(const MartingaleModel& model, const Certificate& cert) {
  std::size_t bad = 0;
  for (const ConditionalLaw* law : enumerate_reachable(model).eta_laws) {
    const double xi_var = law->second_moment() / static_cast<double>(model.horizon());
    if (xi_var > cert.eps_n * cert.eps_n) ++bad;
  }
  return bad;
}

nlohmann::json Certificate::to_json() const {
  return {{"model", model},     {"n", n},           {"rho", rho},
          {"K", K},             {"L", L},           {"N", N},
          {"N_exact", N_exact}, {"eps_n", eps_n},   {"delta_n", delta_n},
          {"delta_n_alt", delta_n_alt}, {"laws_checked", laws_checked}};
}

Certificate Certificate::from_json(const nlohmann::json& j) {
  Certificate c;
  c.model = j.at("model").get<std::string>();
  c.n = j.at("n").get<std::size_t>();
  c.rho = j.at("rho").get<double>();
  c.K = j.at("K").get<double>();
  c.L = j.at("L").get<double>();
  c.N = j.at("N").get<double>();
  c.N_exact = j.at("N_exact").get<double>();
  c.eps_n = j.at("eps_n").get<double>();
  c.delta_n = j.at("delta_n").get<double>();
  c.delta_n_alt = j.at("delta_n_alt").get<double>();
  c.laws_checked = j.at("laws_checked").get<std::size_t>();
  return c;
}

}  // namespace mdev
