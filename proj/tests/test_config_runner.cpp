#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedpca/config.hpp"
#include "fedpca/error.hpp"
#include "fedpca/report_io.hpp"
#include "fedpca/runner.hpp"

using namespace fedpca;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("fedpca_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json reference_json() {
  return nlohmann::json::parse(R"json({
    "scenario": "reference",
    "rounds": {"total_rounds": 50, "warmup_rounds": 10, "q": 1.0, "tau_min": 0.9},
    "methods": ["FedPCA(D)", "FedPCA(HS)", "FedAvg", "LossWeighted(1)"],
    "seeds": [1, 2, 3, 4, 5],
    "output_dir": "out"
  })json");
}

std::string config_error(const nlohmann::json& j) {
  try {
    config::from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

config::ExperimentConfig tiny_matrix(const fs::path& out) {
  auto c = config::from_json(reference_json());
  c.scenario.num_clients = 6;
  c.scenario.samples_per_client = 40;
  c.scenario.test_samples = 60;
  c.rounds.total_rounds = 5;
  c.rounds.warmup_rounds = 2;
  c.rounds.final_window = 2;
  c.methods = {fed::Method::fedpca(fed::StrategyKind::kDrop), fed::Method::fedavg()};
  c.seeds = {11, 12};
  c.output_dir = out;
  return c;
}

}  // namespace

TEST_CASE("reference config parses with the expected values and round trips") {
  const auto c = config::from_json(reference_json());
  CHECK(c.scenario.rho == 0.2);
  CHECK(c.scenario.eta == 1.0);
  CHECK(c.rounds.q == 1.0);
  CHECK(c.rounds.strategy.tau_min == 0.9);
  CHECK(c.rounds.warmup_rounds == 10);
  CHECK(c.methods.size() == 4);
  const auto text = config::serialize_config(c);
  const auto again = config::from_json(nlohmann::json::parse(text));
  CHECK(again == c);
  CHECK(config::serialize_config(again) == text);
}

TEST_CASE("shipped configs parse") {
  const fs::path root = FEDPCA_SOURCE_DIR;
  for (const auto& entry : fs::directory_iterator(root / "configs")) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(config::parse_config(entry.path()));
  }
}

TEST_CASE("config errors name the field") {
  auto j = reference_json();
  j["scenario"] = config::scenario_to_json(config::find_preset("reference")->scenario);
  j["scenario"]["rho"] = 1.5;
  CHECK(config_error(j).find("rho") != std::string::npos);

  j = reference_json();
  j["seeds"] = {1, 2, 2};
  CHECK(config_error(j).find("seeds") != std::string::npos);

  j = reference_json();
  j["rounds"]["warmup"] = 3;
  CHECK(config_error(j).find("rounds.warmup") != std::string::npos);

  j = reference_json();
  j["colour"] = "blue";
  CHECK(config_error(j).find("colour") != std::string::npos);

  j = reference_json();
  j.erase("methods");
  CHECK(config_error(j).find("methods") != std::string::npos);

  j = reference_json();
  j["methods"] = {"FedAvg", "FedAvg"};
  CHECK_FALSE(config_error(j).empty());

  j = reference_json();
  j["rounds"]["q"] = "one";
  CHECK(config_error(j).find("rounds.q") != std::string::npos);

  j = reference_json();
  j["scenario"] = "no-such-preset";
  CHECK(config_error(j).find("scenario") != std::string::npos);
}

TEST_CASE("scenario files round trip and hash stably") {
  const auto dir = scratch("scenario");
  for (const auto& preset : config::scenario_presets()) {
    const auto path = dir / (preset.name + ".json");
    config::save_scenario(path, preset.scenario);
    CHECK(config::load_scenario(path) == preset.scenario);
    CHECK(config::scenario_hash(config::load_scenario(path)) == config::scenario_hash(preset.scenario));
  }
  auto a = config::find_preset("reference")->scenario;
  auto b = a;
  b.seed = a.seed + 1;
  CHECK(config::scenario_hash(a) != config::scenario_hash(b));
  CHECK(config::scenario_hash(a).size() == 16);

  auto j = reference_json();
  j["scenario"] = (dir / "mixed.json").string();
  CHECK(config::from_json(j).scenario == config::find_preset("mixed")->scenario);
}

TEST_CASE("double formatting is shortest round trip") {
  CHECK(io::format_double(0.1) == "0.1");
  CHECK(io::format_double(1.0) == "1");
  CHECK(std::stod(io::format_double(2.0 / 3.0)) == 2.0 / 3.0);
}

TEST_CASE("matrix writes one csv and json per cell plus an index") {
  const auto out = scratch("matrix");
  const auto cfg = tiny_matrix(out);
  const auto result = runner::run_matrix(cfg, {.deterministic = true});
  CHECK(result.all_ok());
  int csv = 0, json = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    if (e.path().filename() == "index.json") continue;
    csv += e.path().extension() == ".csv";
    json += e.path().extension() == ".json";
  }
  CHECK(csv == 4);
  CHECK(json == 4);
  CHECK(fs::exists(out / "index.json"));

  const auto index = nlohmann::json::parse(slurp(out / "index.json"));
  REQUIRE(index["cells"].size() == 4);
  for (const auto& cell : index["cells"]) {
    CHECK(cell["status"] == "ok");
    const auto stem = runner::artifact_stem(fed::Method::parse(cell["method"]), cell["seed"].get<std::uint64_t>(),
                                            cell["scenario_hash"].get<std::string>());
    CHECK(cell["csv"] == stem + ".csv");
    const auto summary = nlohmann::json::parse(slurp(out / (stem + ".json")));
    std::vector<std::string> keys;
    for (const auto& [k, v] : summary.items()) keys.push_back(k);
    CHECK(keys == std::vector<std::string>{"avg_acc", "avg_auc", "method", "scenario_hash", "seed", "std_acc",
                                           "std_auc", "weight_diagnostic", "worst_acc", "worst_auc"});
  }

  // Header and row count of a per-round file.
  const auto text = slurp(out / result.cells[0].csv.filename());
  CHECK(text.rfind("round,method,worst_acc,avg_acc,worst_auc,avg_auc,std_acc,std_auc,tau,w_0,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);
  CHECK(text.find('\r') == std::string::npos);
}

TEST_CASE("rerunning the matrix reproduces every byte") {
  const auto first = scratch("rerun_a");
  const auto second = scratch("rerun_b");
  runner::run_matrix(tiny_matrix(first), {.deterministic = true});
  runner::run_matrix(tiny_matrix(second), {.deterministic = true});
  int compared = 0;
  for (const auto& e : fs::directory_iterator(first)) {
    CHECK(slurp(e.path()) == slurp(second / e.path().filename()));
    ++compared;
  }
  CHECK(compared == 9);
}

TEST_CASE("a failing cell does not stop the matrix") {
  const auto out = scratch("isolation");
  auto cfg = tiny_matrix(out);
  runner::MatrixOptions opts;
  opts.deterministic = true;
  opts.run_cell = [](const synth::Scenario& s, const fed::RoundConfig& r, const fed::Method& m, std::uint64_t seed) {
    if (m.kind == fed::MethodKind::kFedAvg && seed == 12) throw std::runtime_error("injected failure");
    return fed::run_experiment(s, r, m, seed);
  };
  const auto result = runner::run_matrix(cfg, opts);
  CHECK_FALSE(result.all_ok());
  int ok = 0;
  for (const auto& c : result.cells) ok += c.ok;
  CHECK(ok == 3);
  const auto index = nlohmann::json::parse(slurp(out / "index.json"));
  int failed = 0;
  for (const auto& cell : index["cells"]) {
    if (cell["status"] == "failed") {
      ++failed;
      CHECK(cell["method"] == "FedAvg");
      CHECK(cell["seed"] == 12);
      CHECK(cell["error"] == "injected failure");
    }
  }
  CHECK(failed == 1);
}

TEST_CASE("an unusable output directory fails up front") {
  const auto dir = scratch("blocked");
  std::ofstream(dir / "file") << "x";
  auto cfg = tiny_matrix(dir / "file" / "sub");
  CHECK_THROWS_AS(runner::run_matrix(cfg), std::runtime_error);
}
