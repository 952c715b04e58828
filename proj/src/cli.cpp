#include "mdev/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "mdev/bounds.hpp"
#include "mdev/coupling.hpp"
#include "mdev/mixing.hpp"
#include "mdev/models.hpp"
#include "mdev/montecarlo.hpp"
#include "mdev/tilt.hpp"

namespace mdev::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// JSON config files: {"command": "tail", "seed": 7, "x": "0:3:0.5", ...}.
// Keys are long flag names; flags given on the command line win.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      if (opt->count() > 0)
        j[opt->get_lnames()[0]] = opt->as<std::string>();
      else if (default_also && !opt->get_default_str().empty())
        j[opt->get_lnames()[0]] = opt->get_default_str();
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::parse_error& e) {
      throw CLI::ConversionError(fmt::format("config: {}", e.what()));
    }
    if (!j.is_object()) throw CLI::ConversionError("config: top level must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.name = key;
      item.inputs.push_back(scalar(key, value));
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const std::string& key, const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    if (v.is_object()) return v.dump();  // inline model or chain spec
    if (v.is_array()) {
      std::string s;
      for (const auto& e : v) {
        if (!e.is_number() && !e.is_string())
          throw CLI::ConversionError(fmt::format("config field '{}': list entries must be numbers or strings", key));
        s += (s.empty() ? "" : ",") + (e.is_string() ? e.get<std::string>() : e.dump());
      }
      return s;
    }
    throw CLI::ConversionError(fmt::format("config field '{}': unsupported value {}", key, v.dump()));
  }
};

struct Settings {
  std::string command;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::string out_dir = ".";

  std::string model = "rademacher";
  std::size_t n = 100;
  std::string ns = "100,1000,10000";
  std::optional<double> rho;
  double gamma = 0.3;
  std::size_t tail_atoms = 40;

  std::string x = "0:3:0.5";
  std::string budget = "100000";
  std::optional<double> alpha;
  double c = 1.0;
  bool delta_from_L = false;

  double exponent = 0.25;
  double b = 1.0;

  std::size_t draws = 1000000;

  std::string chain;
  double chain_a = 0.3;
  double chain_b = 0.3;
  std::size_t n_max = 64;
};

std::size_t parse_budget(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || used == 0 || !(v >= 1.0) || v != std::floor(v) || v > 1e15)
    throw UsageError(fmt::format("--budget: expected a positive integer, got '{}'", text));
  return static_cast<std::size_t>(v);
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (double v : parse_grid(text)) {
    if (!(v >= 1.0) || v != std::floor(v)) throw UsageError(fmt::format("--ns: '{}' is not a list of positive integers", text));
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError(fmt::format("cannot open '{}'", path));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(fmt::format("{}: {}", path, e.what()));
  }
}

// --model is a name, an inline JSON spec, or a path to a JSON spec file.
json model_spec(const Settings& s, std::size_t n) {
  json spec;
  if (!s.model.empty() && s.model.front() == '{') {
    try {
      spec = json::parse(s.model);
    } catch (const json::parse_error& e) {
      throw UsageError(fmt::format("--model: {}", e.what()));
    }
  } else if (s.model.ends_with(".json")) {
    spec = read_json_file(s.model);
  } else {
    spec = {{"name", s.model}, {"params", json::object()}};
    if (s.model == "regime_switch") spec["params"]["gamma"] = s.gamma;
    if (s.model == "heavy_left") {
      spec["params"]["rho"] = s.rho.value_or(0.5);
      spec["params"]["tail_atoms"] = s.tail_atoms;
    }
  }
  if (!spec.is_object()) throw UsageError("model spec must be a JSON object");
  if (!spec.contains("params")) spec["params"] = json::object();
  if (s.rho && spec.value("name", "") != "heavy_left") spec["params"]["rho"] = *s.rho;
  spec["n"] = n;
  return spec;
}

MartingaleModel build_model(const Settings& s, std::size_t n) { return MartingaleModel::from_json(model_spec(s, n)); }

ChainSpec build_chain(const Settings& s) {
  if (s.chain.empty()) return ChainSpec::two_state(s.chain_a, s.chain_b);
  if (s.chain.front() == '{') {
    try {
      return ChainSpec::from_json(json::parse(s.chain));
    } catch (const json::parse_error& e) {
      throw UsageError(fmt::format("--chain: {}", e.what()));
    }
  }
  return ChainSpec::from_json(read_json_file(s.chain));
}

std::ofstream open_artifact(const Settings& s, const std::string& file) {
  fs::create_directories(s.out_dir);
  const fs::path path = fs::path(s.out_dir) / file;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  return os;
}

// Everything that determines the numbers, and nothing else (the worker count
// never changes results, so it is left out).
json echo(const Settings& s) {
  json j = {{"command", s.command}, {"seed", s.seed}};
  const std::string& c = s.command;
  if (c == "certify" || c == "tail" || c == "mdp") {
    j["model"] = model_spec(s, s.n);
    j["model"].erase("n");
  }
  if (c == "certify" || c == "tail" || c == "mixing") j["n"] = s.n;
  if (c == "mdp" || c == "couple") j["ns"] = s.ns;
  if (c == "tail" || c == "mixing") j["x"] = s.x;
  if (c != "certify" && c != "verify") j["budget"] = parse_budget(s.budget);
  if (c == "tail") {
    j["alpha"] = s.alpha.value_or(1.0);
    j["c"] = s.c;
    j["delta_from_L"] = s.delta_from_L;
  }
  if (c == "mdp") {
    j["exponent"] = s.exponent;
    j["b"] = s.b;
  }
  if (c == "couple") j["alpha"] = s.alpha.value_or(0.125);
  if (c == "verify") j["draws"] = s.draws;
  if (c == "mixing") {
    j["chain"] = build_chain(s).to_json();
    j["alpha"] = s.alpha.value_or(0.3);
    j["rho"] = s.rho.value_or(1.0);
    j["c"] = s.c;
    j["n_max"] = s.n_max;
  }
  return j;
}

int cmd_verify(const Settings& s, std::ostream& out) {
  std::vector<SuiteResult> suites = elementary_inequality_suite(s.draws, s.seed);
  suites.push_back(gaussian_sandwich_suite(10.0, 0.01));
  const std::vector<std::size_t> ns{100, 400, 1600, 6400};
  const std::vector<double> rhos{0.25, 0.5, 1.0};
  suites.push_back(drift_bound_suite(ns, rhos, 1000));
  suites.push_back(second_moment_suite(
      {make_rademacher(100), make_rademacher(1000), make_regime_switch(400, 0.3), make_heavy_left(100, 0.5, 40)}));
  // Reported for the implied constant only; the bound carries an unspecified constant.
  const SuiteResult cumulant = cumulant_bound_suite(ns, rhos, 200);

  std::ofstream csv = open_artifact(s, "verify.csv");
  write_config_header(csv, echo(s));
  csv << "suite,checks,violations,worst_ratio,asserted\n";
  out << fmt::format("{:<72} {:>9} {:>6} {:>12}\n", "suite", "checks", "fail", "worst ratio");
  bool ok = true;
  auto emit = [&](const SuiteResult& r, bool asserted) {
    csv << fmt::format("\"{}\",{},{},{:.12g},{}\n", r.name, r.checks, r.violations, r.worst_ratio, asserted);
    out << fmt::format("{:<72} {:>9} {:>6} {:>12.6g}{}\n", r.name, r.checks, r.violations, r.worst_ratio,
                       asserted ? "" : "  (constant)");
    if (asserted && !r.ok()) ok = false;
  };
  for (const SuiteResult& r : suites) emit(r, true);
  emit(cumulant, false);
  return ok ? kOk : kAssertionFailure;
}

int cmd_certify(const Settings& s, std::ostream& out, std::ostream& err) {
  const MartingaleModel model = build_model(s, s.n);
  CertifyOptions opt = default_certify_options(model);
  try {
    const Certificate cert = certify(model, opt);
    json j = cert.to_json();
    std::ofstream os = open_artifact(s, "certificate.json");
    os << json{{"config", echo(s)}, {"certificate", j}}.dump(2) << '\n';
    out << j.dump(2) << '\n';
    return kOk;
  } catch (const CertificationError& e) {
    err << "error: " << e.what() << '\n'
        << "  inequality: " << e.inequality << "\n  lhs = " << e.lhs << ", rhs = " << e.rhs << '\n';
    return kAssertionFailure;
  }
}

int cmd_tail(const Settings& s, std::ostream& out, std::ostream& err) {
  const MartingaleModel model = build_model(s, s.n);
  RatioOptions opt;
  opt.alpha = s.alpha.value_or(1.0);
  opt.c = s.c;
  opt.delta_from_L = s.delta_from_L;
  opt.mc.workers = s.workers;
  const RatioReport report = ratio_report(model, parse_grid(s.x), parse_budget(s.budget), s.seed, opt);
  std::ofstream csv = open_artifact(s, "tail.csv");
  write_ratio_csv(csv, report, echo(s));
  out << fmt::format("{:>8} {:>14} {:>10} {:>10} {:>22} {:>10}\n", "x", "p_hat", "rel_se", "ratio", "envelope", "ess");
  for (const RatioRow& r : report.rows) {
    out << fmt::format("{:>8.4g} {:>14.6e} {:>10.3g} {:>10.5f} [{:>9.4g},{:>9.4g}] {:>10.4g}\n", r.x, r.p_hat,
                       r.p_hat > 0.0 ? r.se / r.p_hat : 0.0, r.ratio, r.bound_lo, r.bound_hi, r.ess);
    if (r.low_ess) err << fmt::format("warning: x = {}: effective sample size {:.3g} < 10\n", r.x, r.ess);
    if (r.outside_range) err << fmt::format("warning: x = {}: lambda = {:.4g} exceeds 1/eps_n\n", r.x, r.lambda);
  }
  return kOk;
}

int cmd_mdp(const Settings& s, std::ostream& out, std::ostream& err) {
  McOptions opt;
  opt.workers = s.workers;
  const auto rows = mdp_scan([&](std::size_t n) { return build_model(s, n); }, parse_sizes(s.ns), s.exponent, s.b,
                             parse_budget(s.budget), s.seed, opt);
  std::ofstream csv = open_artifact(s, "mdp.csv");
  write_mdp_csv(csv, rows, echo(s));
  out << fmt::format("{:>8} {:>10} {:>14} {:>12} {:>24}\n", "n", "a_n", "p_hat", "value", "ci");
  for (const MdpRow& r : rows) {
    out << fmt::format("{:>8} {:>10.4g} {:>14.6e} {:>12.6f} [{:>10.6f},{:>10.6f}]\n", r.n, r.a_n, r.estimate.p_hat,
                       r.value, r.value_lo, r.value_hi);
    if (r.estimate.low_ess) err << fmt::format("warning: n = {}: low effective sample size\n", r.n);
  }
  return kOk;
}

int cmd_couple(const Settings& s, std::ostream& out, std::ostream& err) {
  CouplingOptions opt;
  opt.alpha = s.alpha.value_or(0.125);
  opt.workers = s.workers;
  const std::size_t budget = parse_budget(s.budget);
  std::vector<CouplingReport> rows;
  const auto ns = parse_sizes(s.ns);
  for (std::size_t i = 0; i < ns.size(); ++i) rows.push_back(coupling_tail_report(ns[i], budget, derive_seed(s.seed, i), opt));
  std::ofstream csv = open_artifact(s, "couple.csv");
  write_coupling_csv(csv, rows, echo(s));
  out << fmt::format("{:>8} {:>12} {:>12} {:>10}\n", "n", "D_hat", "tail_slope", "event");
  for (const CouplingReport& r : rows) {
    out << fmt::format("{:>8} {:>12.6g} {:>12.6g} {:>10.4f}\n", r.n, r.D_hat, r.tail_slope, r.frac_event);
    if (r.tail_unresolved) err << fmt::format("warning: n = {}: too few exceedances to fit the tail\n", r.n);
  }
  return kOk;
}

int cmd_mixing(const Settings& s, std::ostream& out, std::ostream& err) {
  const ChainSpec spec = build_chain(s);
  const double rho = s.rho.value_or(1.0);
  const MixingCertificate cert = certify_mixing(spec, s.n_max, 32, rho);
  MixingOptions opt;
  opt.rho = rho;
  opt.c = s.c;
  opt.workers = s.workers;
  const MixingReport report =
      mixing_tail_experiment(spec, s.n, s.alpha.value_or(0.3), parse_grid(s.x), parse_budget(s.budget), s.seed, opt);
  const json config = echo(s);
  {
    std::ofstream csv = open_artifact(s, "mixing_certificate.csv");
    write_mixing_certificate_csv(csv, cert, config);
  }
  std::ofstream csv = open_artifact(s, "mixing.csv");
  write_mixing_csv(csv, report, config);
  out << fmt::format("m = {}, k = {}, E S^2 = {:.6g}, psi(m) = {:.4g}, beta(m) = {:.4g}, tau = {:.4g}\n", report.m,
                     report.k, report.es2, report.psi_m, report.beta_m, report.tau);
  out << fmt::format("beta fit: a1 = {:.4g}, a2 = {:.4g}, tau = {:.2f}; c1 = {:.4g}, c2 = {:.4g}\n", cert.fit.a1,
                     cert.fit.a2, cert.fit.tau, cert.c1, cert.c2);
  out << fmt::format("{:>8} {:>12} {:>10} {:>22} {:>22}\n", "x", "p_hat", "ratio", "ci", "envelope");
  for (const MixingRow& r : report.rows)
    out << fmt::format("{:>8.4g} {:>12.6g} {:>10.5f} [{:>9.5f},{:>9.5f}] [{:>9.4g},{:>9.4g}]\n", r.x, r.estimate.p_hat,
                       r.ratio, r.ratio_lo, r.ratio_hi, r.bound_lo, r.bound_hi);
  if (report.envelope_undefined)
    err << fmt::format("warning: tau_n = {:.4g} >= 1, the envelope is undefined\n", report.tau);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Settings s;
  CLI::App app{"Moderate-deviation experiments for martingales and mixing chains", "mdev"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file of flag values; command-line flags take precedence");
  app.allow_config_extras(false);
  app.get_formatter()->column_width(34);

  app.add_option("command", s.command, "verify | certify | tail | mdp | couple | mixing")
      ->check(CLI::IsMember({"verify", "certify", "tail", "mdp", "couple", "mixing"}));
  app.add_option("--seed", s.seed, "Base seed")->capture_default_str();
  app.add_option("--workers", s.workers, "Worker threads (never changes results)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--out", s.out_dir, "Directory for artifacts")->capture_default_str();

  app.add_option("--model", s.model, "rademacher | regime_switch | heavy_left | iid, a JSON spec, or a .json file")
      ->capture_default_str();
  app.add_option("--n", s.n, "Horizon")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--ns", s.ns, "List of horizons (mdp, couple)")->capture_default_str();
  app.add_option("--rho", s.rho, "Moment exponent in (0, 1]");
  app.add_option("--gamma", s.gamma, "regime_switch variance swing in [0, 1/2)")->capture_default_str();
  app.add_option("--tail-atoms", s.tail_atoms, "heavy_left tail size")->capture_default_str();

  app.add_option("--x", s.x, "Thresholds: a:b:step or v1,v2,...")->capture_default_str();
  app.add_option("--budget", s.budget, "Samples per estimate (1e6 style accepted)")->capture_default_str();
  app.add_option("--alpha", s.alpha, "tail: x <= alpha/eps_n; couple: |W| <= alpha sqrt(n); mixing: m = n^alpha");
  app.add_option("--c", s.c, "Constant in the bound envelopes")->capture_default_str();
  app.add_flag("--delta-from-L", s.delta_from_L, "Use L/sqrt(n) instead of N/sqrt(n) for delta_n");

  app.add_option("--exponent", s.exponent, "mdp: a_n = n^exponent")->capture_default_str();
  app.add_option("--b", s.b, "mdp: threshold b a_n")->capture_default_str();
  app.add_option("--draws", s.draws, "verify: random draws for the elementary inequalities")->capture_default_str();

  app.add_option("--chain", s.chain, "mixing: chain spec as JSON or a .json file");
  app.add_option("--chain-a", s.chain_a, "mixing: two-state chain P(0 -> 1)")->capture_default_str();
  app.add_option("--chain-b", s.chain_b, "mixing: two-state chain P(1 -> 0)")->capture_default_str();
  app.add_option("--n-max", s.n_max, "mixing: lags in the certificate")->check(CLI::PositiveNumber)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ConfigError& e) {
    std::string msg = e.what();
    const std::string extras = "INI was not able to parse ";
    if (msg.starts_with(extras)) msg = fmt::format("unknown field '{}'", msg.substr(extras.size()));
    err << "error: config: " << msg << '\n';
    return kUsageError;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << "run with --help for usage\n";
    return kUsageError;
  }
  if (s.command.empty()) {
    err << "error: no command given\n" << "run with --help for usage\n";
    return kUsageError;
  }

  try {
    if (s.command == "verify") return cmd_verify(s, out);
    if (s.command == "certify") return cmd_certify(s, out, err);
    if (s.command == "tail") return cmd_tail(s, out, err);
    if (s.command == "mdp") return cmd_mdp(s, out, err);
    if (s.command == "couple") return cmd_couple(s, out, err);
    return cmd_mixing(s, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kAssertionFailure;
  }
}

}  // namespace mdev::cli
