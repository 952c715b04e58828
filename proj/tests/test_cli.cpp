#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <json.hpp>

#include "mdev/cli.hpp"
#include "mdev/rng.hpp"

namespace fs = std::filesystem;
using mdev::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mdev");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  static std::uint64_t counter = 0;
  const fs::path p = fs::temp_directory_path() /
                     ("mdev_cli_" + name + "_" + std::to_string(mdev::derive_seed(::getpid(), counter++) % 1000000));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(invoke({"--help"}).code == 0);
  const Result none = invoke({});
  CHECK(none.code == 2);
  CHECK(none.err.find("no command") != std::string::npos);
  CHECK(invoke({"frobnicate"}).code == 2);
  CHECK(invoke({"tail", "--n", "0"}).code == 2);
  CHECK(invoke({"tail", "--bogus", "1"}).code == 2);
  CHECK(invoke({"tail", "--budget", "0"}).code == 2);
  CHECK(invoke({"tail", "--budget", "1.5"}).code == 2);
  CHECK(invoke({"tail", "--x", "3:1:0.5"}).code == 2);
  CHECK(invoke({"tail", "--model", "nope"}).code == 2);
  CHECK(invoke({"tail", "--rho", "1.5"}).code == 2);
  CHECK(invoke({"mdp", "--exponent", "0.6"}).code == 2);
  CHECK(invoke({"mixing", "--chain", "{\"P\": [1, 0, 0, 1], \"f\": [1, -1]}"}).code == 2);
}

TEST_CASE("verify writes its table and passes") {
  const fs::path dir = scratch("verify");
  const Result r = invoke({"verify", "--draws", "20000", "--out", dir.string()});
  CHECK(r.code == 0);
  const std::string csv = slurp(dir / "verify.csv");
  CHECK(csv.rfind("# command: \"verify\"", 0) == 0);
  CHECK(csv.find("sandwich") != std::string::npos);
  CHECK(csv.find("drift") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("tail output is a pure function of the config") {
  const fs::path dir = scratch("tail");
  const fs::path cfg = dir / "cfg.json";
  write(cfg, R"({"command": "tail", "model": "rademacher", "n": 400, "x": "0:2:1", "budget": 20000, "seed": 17})");
  REQUIRE(invoke({"--config", cfg.string(), "--out", (dir / "a").string()}).code == 0);
  REQUIRE(invoke({"--config", cfg.string(), "--out", (dir / "b").string(), "--workers", "3"}).code == 0);
  const std::string a = slurp(dir / "a" / "tail.csv"), b = slurp(dir / "b" / "tail.csv");
  CHECK(!a.empty());
  CHECK(a == b);
  CHECK(a.find("# seed: 17\n") != std::string::npos);
  CHECK(a.find("workers") == std::string::npos);

  // Flags beat config values.
  REQUIRE(invoke({"--config", cfg.string(), "--out", (dir / "c").string(), "--seed", "18"}).code == 0);
  const std::string c = slurp(dir / "c" / "tail.csv");
  CHECK(c.find("# seed: 18\n") != std::string::npos);
  CHECK(c != a);
  fs::remove_all(dir);
}

TEST_CASE("config diagnostics") {
  const fs::path dir = scratch("config");
  write(dir / "unknown.json", R"({"command": "tail", "seeed": 3})");
  const Result u = invoke({"--config", (dir / "unknown.json").string()});
  CHECK(u.code == 2);
  CHECK(u.err.find("unknown field 'seeed'") != std::string::npos);

  write(dir / "broken.json", "{\"command\": \"tail\",\n  \"seed\": }");
  const Result b = invoke({"--config", (dir / "broken.json").string()});
  CHECK(b.code == 2);
  CHECK(b.err.find("config") != std::string::npos);
  CHECK(b.err.find("line 2") != std::string::npos);

  const Result missing = invoke({"--config", (dir / "absent.json").string()});
  CHECK(missing.code == 2);
  fs::remove_all(dir);
}

TEST_CASE("certify") {
  const fs::path dir = scratch("certify");
  const Result ok = invoke({"certify", "--model", "regime_switch", "--n", "200", "--out", dir.string()});
  CHECK(ok.code == 0);
  const nlohmann::json cert = nlohmann::json::parse(slurp(dir / "certificate.json"));
  CHECK(cert.at("certificate").contains("K"));
  CHECK(cert.at("certificate").contains("L"));
  CHECK(cert.at("config").at("n") == 200);

  // A far-out atom of tiny mass: no (K, L) on the grid works.
  const std::string model =
      R"({"name": "iid", "n": 10, "params": {"atoms": [[2000, 0.001], [-2.002002002002002, 0.999]]}})";
  const Result bad = invoke({"certify", "--model", model, "--out", dir.string()});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("error") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("mdp, couple and mixing artifacts") {
  const fs::path dir = scratch("misc");
  CHECK(invoke({"mdp", "--ns", "100,400", "--budget", "5000", "--out", dir.string()}).code == 0);
  CHECK(slurp(dir / "mdp.csv").find("\nn,a_n,threshold,") != std::string::npos);

  CHECK(invoke({"couple", "--ns", "100", "--budget", "20000", "--out", dir.string()}).code == 0);
  CHECK(slurp(dir / "couple.csv").find("\nn,seed,D_hat,") != std::string::npos);

  const Result mx = invoke({"mixing", "--chain-a", "0.01", "--chain-b", "0.01", "--alpha", "0.2", "--n", "1000",
                            "--x", "1", "--budget", "200", "--out", dir.string()});
  CHECK(mx.code == 0);
  CHECK(mx.err.find("envelope is undefined") != std::string::npos);
  CHECK(fs::exists(dir / "mixing.csv"));
  CHECK(fs::exists(dir / "mixing_certificate.csv"));
  fs::remove_all(dir);
}
