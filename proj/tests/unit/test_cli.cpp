#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "eegnn_cli/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "eegnn");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = eegnn::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "eegnn_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const json& doc, const std::string& name = "config.json") {
  std::ofstream(dir / name) << doc.dump(2);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

json load(const fs::path& p) { return json::parse(slurp(p)); }

// A 30 x 30 minesweeper grid shared by the tests below.
fs::path grid() {
  static const fs::path path = [] {
    fs::path dir = workdir("grid");
    Result r = run({"generate", "--seed", "1", "--out", dir.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return dir / "graph.json";
  }();
  return path;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"train", "--mode", "sideways"}).code, 1);
  fs::path dir = workdir("usage");
  EXPECT_EQ(run({"generate", "--mode", "eval", "--out", dir.string()}).code, 1);
}

TEST(Cli, GenerateIsDeterministic) {
  fs::path a = workdir("gen_a"), b = workdir("gen_b");
  ASSERT_EQ(run({"generate", "--seed", "1", "--out", a.string()}).code, 0);
  ASSERT_EQ(run({"generate", "--seed", "1", "--out", b.string()}).code, 0);
  EXPECT_EQ(slurp(a / "graph.json"), slurp(b / "graph.json"));
  json stats = load(a / "graph_stats.json");
  EXPECT_EQ(stats["n"], 900);
  const double xi = stats["edge_homophily"];
  EXPECT_GT(xi, 0.0);
  EXPECT_LT(xi, 1.0);
  EXPECT_DOUBLE_EQ(xi, 0.7159555815312683);
  EXPECT_TRUE(fs::exists(a / "resolved_config.json"));
}

TEST(Cli, GenerateSbmHomophilicLimit) {
  fs::path dir = workdir("sbm");
  auto cfg = write_config(dir, {{"generator", "sbm"}, {"sizes", {5, 5}}, {"p_in", 1.0}, {"p_out", 0.0}});
  ASSERT_EQ(run({"generate", "--config", cfg.string(), "--out", dir.string()}).code, 0);
  EXPECT_EQ(load(dir / "graph_stats.json")["edge_homophily"], 1.0);
}

TEST(Cli, ConfigProblemsListedTogether) {
  fs::path dir = workdir("badcfg");
  auto cfg = write_config(dir, {{"model", "sas"}, {"layres", 3}, {"tau", 7.0}});
  Result r = run({"train", "--config", cfg.string(), "--out", dir.string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("layres"), std::string::npos);
  EXPECT_NE(r.err.find("tau"), std::string::npos);
  EXPECT_NE(r.err.find("data"), std::string::npos);
}

TEST(Cli, ConfigOverridesFlags) {
  fs::path dir = workdir("override");
  auto cfg = write_config(dir, {{"seed", 5}, {"rows", 4}, {"cols", 4}});
  ASSERT_EQ(run({"generate", "--config", cfg.string(), "--seed", "9", "--out", dir.string()}).code, 0);
  EXPECT_EQ(load(dir / "resolved_config.json")["seed"], 5);
}

TEST(Cli, TrainSasWritesContract) {
  fs::path dir = workdir("train_sas");
  auto cfg = write_config(dir, {{"data", grid().string()}, {"model", "sas"}, {"layers", 10}, {"hidden", 8},
                                {"epochs", 5}, {"metric", "auroc"}});
  Result r = run({"train", "--config", cfg.string(), "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  json m = load(dir / "metrics.json");
  EXPECT_TRUE(m["splits"]["test"].contains("auroc"));
  EXPECT_TRUE(fs::exists(dir / "checkpoint.json"));
  EXPECT_TRUE(fs::exists(dir / "history.csv"));
  EXPECT_FALSE(fs::exists(dir / "exits.csv"));
  json resolved = load(dir / "resolved_config.json");
  EXPECT_EQ(resolved["layers"], 10);
  EXPECT_EQ(resolved["epochs"], 5);

  fs::path ev = workdir("evaluate");
  auto ecfg = write_config(ev, {{"checkpoint", (dir / "checkpoint.json").string()}, {"data", grid().string()},
                                {"split", "test"}});
  ASSERT_EQ(run({"evaluate", "--config", ecfg.string(), "--out", ev.string()}).code, 0);
  EXPECT_EQ(load(ev / "metrics.json")["metrics"]["auroc"], m["splits"]["test"]["auroc"]);
}

TEST(Cli, TrainEegnnExitCsvAndReproducible) {
  fs::path a = workdir("train_ee_a"), b = workdir("train_ee_b");
  json doc{{"data", grid().string()}, {"model", "eegnn"}, {"layers", 20}, {"hidden", 8}, {"epochs", 4}, {"seed", 2}};
  for (const auto& dir : {a, b}) {
    auto cfg = write_config(dir, doc);
    ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", dir.string()}).code, 0);
  }
  json m = load(a / "metrics.json");
  const std::size_t test_count = m["splits"]["test"]["count"];
  std::ifstream in(a / "exits.csv");
  std::string line;
  std::size_t rows = 0;
  std::getline(in, line);
  EXPECT_EQ(line, "agent_id,exit_layer,exit_time");
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, test_count);
  for (const char* f : {"metrics.json", "history.csv", "exits.csv", "checkpoint.json", "resolved_config.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Cli, DiagnoseSpectrumAndDirichlet) {
  fs::path dir = workdir("diag");
  auto cfg = write_config(dir, {{"diagnostics", {"spectrum", "dirichlet"}}, {"data", grid().string()},
                                {"models", {"gcn", "sas"}}, {"layers", 50}, {"hidden", 16}});
  Result r = run({"diagnose", "--config", cfg.string(), "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err << r.out;
  json rep = load(dir / "report.json");
  EXPECT_EQ(rep["diagnostics"]["spectrum"]["status"], "pass");
  EXPECT_LE(rep["diagnostics"]["spectrum"]["max_re_lambda"].get<double>(), 1e-8);
  auto models = rep["diagnostics"]["dirichlet"]["models"];
  EXPECT_EQ(models[0]["collapsed"], true);
  EXPECT_EQ(models[1]["collapsed"], false);
  EXPECT_TRUE(fs::exists(dir / "dirichlet_gcn.csv"));
  EXPECT_TRUE(fs::exists(dir / "dirichlet_sas.csv"));
}

TEST(Cli, DiagnoseUnknownNameListsValidOnes) {
  fs::path dir = workdir("diag_bad");
  auto cfg = write_config(dir, {{"diagnostics", {"spectrum", "curvature"}}});
  Result r = run({"diagnose", "--config", cfg.string(), "--out", dir.string()});
  EXPECT_EQ(r.code, 1);
  for (const auto& name : eegnn::cli::diagnostic_names()) EXPECT_NE(r.err.find(name), std::string::npos);
}

TEST(Cli, DiagnoseToleranceFailureExitCode) {
  fs::path dir = workdir("diag_fail");
  auto cfg = write_config(dir, {{"diagnostics", {"energy_descent"}},
                                {"energy_descent", {{"sigma2", "identity"}, {"weight_scale", 5.0}, {"edge_modes", {"zero"}}}}});
  Result r = run({"diagnose", "--config", cfg.string(), "--out", dir.string()});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_EQ(load(dir / "report.json")["status"], "fail");
}

TEST(Cli, RuntimeFailureExitCode) {
  fs::path dir = workdir("runtime");
  std::ofstream(dir / "isolated.json") << R"({"n": 3, "edges": [[0, 1]], "x": [[1], [2], [3]]})";
  auto cfg = write_config(dir, {{"diagnostics", {"sensitivity"}}, {"data", (dir / "isolated.json").string()},
                                {"models", {"sas"}}});
  // Isolated nodes fail validation before any model runs.
  EXPECT_EQ(run({"diagnose", "--config", cfg.string(), "--out", dir.string()}).code, 1);
  std::ofstream(dir / "ok.json") << R"({"n": 2, "edges": [[0, 1]], "x": [[1], [2]], "y": [0, 1],
    "masks": {"train": [true, false], "val": [false, true], "test": [false, true]}})";
  auto big = write_config(dir, {{"diagnostics", {"sensitivity"}}, {"data", (dir / "ok.json").string()},
                                {"models", {"sas"}}, {"hidden", 4}, {"layers", 2},
                                {"sensitivity", {{"layers", {5}}}}}, "big.json");
  EXPECT_EQ(run({"diagnose", "--config", big.string(), "--out", dir.string()}).code, 1);
}

TEST(Cli, ParamCount) {
  fs::path dir = workdir("params");
  std::size_t totals[2];
  for (int i = 0; i < 2; ++i) {
    auto cfg = write_config(dir, {{"model", "eegnn"}, {"input_dim", 10}, {"layers", i ? 20 : 10}});
    Result r = run({"param-count", "--config", cfg.string(), "--out", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    totals[i] = load(dir / "param_count.json")["total"];
  }
  EXPECT_EQ(totals[0], totals[1]);
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = EEGNN_TOOL_PATH;
  EXPECT_EQ(std::system((bin + " --help > /dev/null").c_str()), 0);
  const int status = std::system((bin + " diagnose --config /nonexistent.json > /dev/null 2>&1").c_str());
  EXPECT_EQ(WEXITSTATUS(status), 1);
}
