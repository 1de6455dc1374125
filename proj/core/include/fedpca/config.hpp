#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedpca/federation.hpp"
#include "fedpca/synth_data.hpp"

namespace fedpca::config {

struct ExperimentConfig {
  synth::ScenarioConfig scenario;
  fed::RoundConfig rounds;
  std::vector<fed::Method> methods;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir;

  // Throws ConfigError naming the offending field.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

struct ScenarioPreset {
  std::string name;
  std::string description;
  synth::ScenarioConfig scenario;
};

const std::vector<ScenarioPreset>& scenario_presets();
const ScenarioPreset* find_preset(const std::string& name);

nlohmann::ordered_json scenario_to_json(const synth::ScenarioConfig& s);
synth::ScenarioConfig scenario_from_json(const nlohmann::json& j);

void save_scenario(const std::filesystem::path& path, const synth::ScenarioConfig& s);
synth::ScenarioConfig load_scenario(const std::filesystem::path& path);

// 16 hex digits of FNV-1a over the canonical scenario JSON.
std::string scenario_hash(const synth::ScenarioConfig& s);

nlohmann::ordered_json to_json(const ExperimentConfig& c);

// `base_dir` resolves relative scenario file references.
ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

ExperimentConfig parse_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& c);

}  // namespace fedpca::config
