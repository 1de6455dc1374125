#include "fedpca/runner.hpp"

#include <fstream>
#include <stdexcept>

#include "fedpca/report_io.hpp"

namespace fedpca::runner {

namespace fs = std::filesystem;

bool MatrixResult::all_ok() const {
  for (const auto& c : cells) {
    if (!c.ok) return false;
  }
  return true;
}

std::string artifact_stem(const fed::Method& method, std::uint64_t seed, const std::string& scenario_hash) {
  return method.slug() + "_seed" + std::to_string(seed) + "_" + scenario_hash;
}

namespace {

void ensure_writable(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("output_dir " + dir.string() + " cannot be created");
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream out(probe, std::ios::binary);
    if (!out) throw std::runtime_error("output_dir " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

}  // namespace

MatrixResult run_matrix(const config::ExperimentConfig& config, const MatrixOptions& options) {
  config.validate();
  ensure_writable(config.output_dir);

  fed::RoundConfig rounds = config.rounds;
  if (options.deterministic) rounds.threads = 1;

  MatrixResult result;
  for (const auto& method : config.methods) {
    for (const std::uint64_t seed : config.seeds) {
      CellResult cell;
      cell.method = method;
      cell.seed = seed;
      synth::ScenarioConfig scenario_config = config.scenario;
      scenario_config.seed = seed;
      cell.scenario_hash = config::scenario_hash(scenario_config);
      const std::string stem = artifact_stem(method, seed, cell.scenario_hash);
      try {
        const synth::Scenario scenario = synth::build_scenario(scenario_config);
        const fed::RunReport report = options.run_cell(scenario, rounds, method, seed);
        cell.csv = config.output_dir / (stem + ".csv");
        cell.json = config.output_dir / (stem + ".json");
        io::write_text(cell.csv, io::rounds_csv(report, scenario.clients.size()));
        io::write_text(cell.json, io::summary_json(report, cell.scenario_hash).dump(2) + "\n");
        if (options.dump_analysis && method.kind == fed::MethodKind::kFedPca) {
          cell.analysis_csv = config.output_dir / (stem + "_analysis.csv");
          io::write_text(cell.analysis_csv, io::analysis_csv(report));
        }
        cell.summary = report.summary;
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
        cell.csv.clear();
        cell.json.clear();
        cell.analysis_csv.clear();
      }
      result.cells.push_back(std::move(cell));
    }
  }

  nlohmann::ordered_json index;
  index["config"] = config::to_json(config);
  index["config"].erase("output_dir");
  index["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : result.cells) {
    nlohmann::ordered_json entry;
    entry["method"] = c.method.name();
    entry["seed"] = c.seed;
    entry["scenario_hash"] = c.scenario_hash;
    entry["status"] = c.ok ? "ok" : "failed";
    if (c.ok) {
      entry["csv"] = c.csv.filename().string();
      entry["json"] = c.json.filename().string();
      if (!c.analysis_csv.empty()) entry["analysis_csv"] = c.analysis_csv.filename().string();
    } else {
      entry["error"] = c.error;
    }
    index["cells"].push_back(std::move(entry));
  }
  result.index = config.output_dir / "index.json";
  io::write_text(result.index, index.dump(2) + "\n");
  return result;
}

}  // namespace fedpca::runner
