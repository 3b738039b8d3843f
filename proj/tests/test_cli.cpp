#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "invberge/cli.hpp"

using namespace invberge;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("invberge_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name, const std::string& content) const {
    const fs::path p = path / name;
    std::ofstream out(p);
    out << content;
    return p.string();
  }
  std::string at(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kGnepDoc = R"({
  "schema_version": "1",
  "kind": "gnep",
  "grid": {"axes": [[0, 1, 26], [0, 1, 26]]},
  "players": [1, 1],
  "payoffs": ["x2 - x1^2", "2*x1 - x2^2"],
  "constraints": ["x1 <= x2", "x2 <= 1 - x1"],
  "epsilon": 0.0
})";

const char* kInvertDoc = R"({
  "schema_version": "1",
  "kind": "inverse_nash",
  "grid": {"axes": [[0, 1, 21], [0, 1, 21]]},
  "players": [1, 1],
  "constraints": ["x1 <= x2", "x2 <= 1 - x1"],
  "target": "x1 <= x2 && x2 <= 1 - x1",
  "metric": "euclid",
  "epsilon": 0.0
})";

}  // namespace

TEST_CASE("solve emits the unique equilibrium of the constrained game") {
  TempDir tmp;
  const std::string doc = tmp.file("game.json", kGnepDoc);
  const std::string out = tmp.at("equilibria.json");
  REQUIRE(run_command({"solve", doc, "--out", out}) == 0);
  const json r = json::parse(slurp(out));
  REQUIRE(r.at("operation") == "solve");
  REQUIRE(r.at("outputs").at("count") == 1);
  const json pt = r.at("outputs").at("equilibria").at(0).at("point");
  REQUIRE(pt.at(0) == 0.0);
  REQUIRE(pt.at(1) == 0.0);
}

TEST_CASE("invert certifies the triangle target") {
  TempDir tmp;
  const std::string doc = tmp.file("invert.json", kInvertDoc);
  const std::string out = tmp.at("invert_result.json");
  REQUIRE(run_command({"invert", doc, "--out", out}) == 0);
  const json r = json::parse(slurp(out));
  REQUIRE(r.at("outputs").at("match") == true);
  REQUIRE(r.at("outputs").at("mismatch_count") == 0);
}

TEST_CASE("synth writes a field and export converts it to CSV") {
  TempDir tmp;
  const std::string doc = tmp.file("synth.json", R"({
    "schema_version": "1",
    "kind": "synthesis",
    "grid": {"axes": [[0, 1, 101], [0, 1, 101]]},
    "domain_axes": 1,
    "graph": "x2 <= x1",
    "route": "distance"
  })");
  const std::string csv = tmp.at("theta.csv");
  const std::string bin = tmp.at("theta.fld");
  const std::string out = tmp.at("synth_result.json");
  REQUIRE(run_command({"synth", doc, "--csv", csv, "--bin", bin, "--out", out}) == 0);
  const json r = json::parse(slurp(out));
  REQUIRE(r.at("outputs").at("identity").at("equal") == true);
  const std::string exported = tmp.at("exported.csv");
  REQUIRE(run_command({"export", "--in", bin, "--csv", exported}) == 0);
  const std::string text = slurp(exported);
  REQUIRE(text.rfind("x1,x2,theta\n", 0) == 0);
  std::int64_t rows = -1;
  for (char c : text) rows += c == '\n';
  REQUIRE(rows == 101 * 101);
  REQUIRE(text == slurp(csv));  // both artifacts describe the same field
}

TEST_CASE("schema and usage failures exit with code two") {
  TempDir tmp;
  const std::string bad = tmp.file("bad.json", R"({"schema_version":"1","kind":"nep"})");
  REQUIRE(run_command({"solve", bad}) == 2);
  const std::string mis = tmp.file("mis.json", kGnepDoc);
  REQUIRE(run_command({"minimax", mis}) == 2);          // wrong kind for the subcommand
  REQUIRE(run_command({"solve", tmp.at("absent.json")}) == 2);
  REQUIRE(run_command({"frobnicate"}) == 2);
  const std::string broken = tmp.file("broken.json", R"({"kind": )");
  REQUIRE(run_command({"solve", broken}) == 2);
}

TEST_CASE("a failed certificate is a negative verdict, exit code one") {
  TempDir tmp;
  // minimax that fails: rows quasi-concave but peaks forced off the diagonal
  const std::string doc = tmp.file("mm.json", R"({
    "schema_version": "1",
    "kind": "minimax",
    "grid": {"axes": [[0, 1, 8]]},
    "theta": "-(x2 - (1 - x1))^2",
    "epsilon": 0.0
  })");
  const std::string out = tmp.at("mm.json.out");
  const int code = run_command({"minimax", doc, "--out", out});
  const json r = json::parse(slurp(out));
  REQUIRE(r.at("outputs").at("holds") == (code == 0));
  // the even-sized grid misses 0.5, so the diagonal max is negative
  REQUIRE(code == 1);
}

TEST_CASE("check runs the property suite for a game document") {
  TempDir tmp;
  const std::string doc = tmp.file("game.json", kGnepDoc);
  const std::string out = tmp.at("check.json");
  REQUIRE(run_command({"check", doc, "--out", out}) == 0);
  const json r = json::parse(slurp(out));
  REQUIRE(r.at("outputs").at("all_pass") == true);
  bool saw_identity = false;
  for (const auto& c : r.at("outputs").at("checks")) {
    REQUIRE(c.at("pass") == true);
    saw_identity = saw_identity || c.at("name") == "gng_identity";
  }
  REQUIRE(saw_identity);
}

TEST_CASE("fixpoint command certifies through both methods") {
  TempDir tmp;
  const std::string base = R"({
    "schema_version": "1",
    "kind": "fixedpoint",
    "grid": {"axes": [[0, 1, 33]]},
    "theta": "-(x2 - x1/2)^2",
    "method": ")";
  for (const std::string method : {"minimax", "nash"}) {
    const std::string doc = tmp.file("fp_" + method + ".json", base + method + "\"\n}");
    const std::string out = tmp.at("fp_" + method + ".out.json");
    REQUIRE(run_command({"fixpoint", doc, "--out", out}) == 0);
    const json r = json::parse(slurp(out));
    REQUIRE(r.at("outputs").at("certified") == true);
    REQUIRE(r.at("outputs").at("point").at(0) == 0.0);
  }
}

TEST_CASE("result documents are byte-identical across thread counts") {
  TempDir tmp;
  const std::string doc = tmp.file("game.json", kGnepDoc);
  const std::string a = tmp.at("a.json");
  const std::string b = tmp.at("b.json");
  REQUIRE(run_command({"solve", doc, "--threads", "1", "--out", a}) == 0);
  REQUIRE(run_command({"solve", doc, "--threads", "8", "--out", b}) == 0);
  REQUIRE(slurp(a) == slurp(b));

  const std::string sd = tmp.file("synth.json", R"({
    "schema_version": "1",
    "kind": "synthesis",
    "grid": {"axes": [[0, 1, 41], [0, 1, 41]]},
    "domain_axes": 1,
    "graph": "abs(x2 - x1) <= 0.3",
    "route": "urysohn",
    "terms": 12
  })");
  const std::string csv = tmp.at("c.csv"), fld = tmp.at("f.fld"), res = tmp.at("s.json");
  REQUIRE(run_command({"synth", sd, "--threads", "1", "--csv", csv, "--bin", fld, "--out", res}) == 0);
  const std::string csv1 = slurp(csv), fld1 = slurp(fld), res1 = slurp(res);
  REQUIRE(run_command({"synth", sd, "--threads", "8", "--csv", csv, "--bin", fld, "--out", res}) == 0);
  REQUIRE(slurp(fld) == fld1);
  REQUIRE(slurp(csv) == csv1);
  REQUIRE(slurp(res) == res1);
}

TEST_CASE("the envelope route and its property suite run through the CLI") {
  TempDir tmp;
  const std::string doc = tmp.file("tau.json", R"({
    "schema_version": "1",
    "kind": "synthesis",
    "grid": {"axes": [[0, 1, 17], [0, 1, 17]]},
    "domain_axes": 1,
    "graph": "abs(x2 - x1) <= 0.2",
    "ambient": "x2 <= x1 + 0.6",
    "route": "tau",
    "levels": [0.1, 0.2, 0.4, 0.8],
    "metric": "l1"
  })");
  const std::string out = tmp.at("tau_result.json");
  REQUIRE(run_command({"synth", doc, "--csv", tmp.at("tau.csv"), "--bin", tmp.at("tau.fld"),
                       "--out", out}) == 0);
  const json r = json::parse(slurp(out));
  REQUIRE(r.at("outputs").at("identity").at("equal") == true);
  REQUIRE(r.at("outputs").at("route") == "tau");
  const std::string check_out = tmp.at("tau_check.json");
  REQUIRE(run_command({"check", doc, "--out", check_out}) == 0);
  REQUIRE(json::parse(slurp(check_out)).at("outputs").at("all_pass") == true);
}

TEST_CASE("environment variable supplies the default thread count") {
  TempDir tmp;
  const std::string doc = tmp.file("game.json", kGnepDoc);
  ::setenv("INVBERGE_THREADS", "3", 1);
  const std::string out = tmp.at("env.json");
  REQUIRE(run_command({"solve", doc, "--out", out}) == 0);
  ::unsetenv("INVBERGE_THREADS");
  const json r = json::parse(slurp(out));
  REQUIRE(r.at("outputs").at("count") == 1);
}

TEST_CASE("reduce certifies and writes the synthesized payoff fields") {
  TempDir tmp;
  const std::string doc = tmp.file("game.json", kGnepDoc);
  const std::string out = tmp.at("reduce.json");
  REQUIRE(run_command({"reduce", doc, "--out", out, "--bin-prefix", tmp.at("vartheta")}) == 0);
  const json r = json::parse(slurp(out));
  REQUIRE(r.at("outputs").at("match") == true);
  REQUIRE(r.at("outputs").at("nep").at("count") == 1);
  const ScalarField v1 = read_field_binary(tmp.at("vartheta_1.fld"));
  REQUIRE(v1.grid.size() == 26 * 26);
}
