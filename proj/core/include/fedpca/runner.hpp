#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fedpca/config.hpp"
#include "fedpca/federation.hpp"

namespace fedpca::runner {

using CellFn = std::function<fed::RunReport(const synth::Scenario&, const fed::RoundConfig&, const fed::Method&,
                                            std::uint64_t)>;

struct MatrixOptions {
  bool deterministic = false;  // forces single-threaded client work
  bool dump_analysis = false;  // extra per-client analysis CSV for FedPCA cells
  CellFn run_cell = fed::run_experiment;
};

struct CellResult {
  fed::Method method;
  std::uint64_t seed = 0;
  std::string scenario_hash;
  bool ok = false;
  std::string error;
  std::filesystem::path csv;
  std::filesystem::path json;
  std::filesystem::path analysis_csv;
  eval::RunSummary summary;
};

struct MatrixResult {
  std::vector<CellResult> cells;
  std::filesystem::path index;

  bool all_ok() const;
};

// "<method-slug>_seed<seed>_<scenario-hash>".
std::string artifact_stem(const fed::Method& method, std::uint64_t seed, const std::string& scenario_hash);

// Runs every (method, seed) cell. Each cell builds its scenario with the cell
// seed; a failing cell is recorded in the index and the matrix continues.
// Throws std::runtime_error if output_dir cannot be created or written.
MatrixResult run_matrix(const config::ExperimentConfig& config, const MatrixOptions& options = {});

}  // namespace fedpca::runner
