#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "fedpca/federation.hpp"

namespace fedpca::io {

// Shortest round-trip decimal form ('.' separator, locale independent).
std::string format_double(double v);

// One row per round: round, method, worst_acc, avg_acc, worst_auc, avg_auc,
// std_acc, std_auc, tau, w_0..w_{K-1}, set_0..set_{K-1}. Warm-up rounds have
// an empty tau and '-' sets.
std::string rounds_csv(const fed::RunReport& report, std::size_t num_clients);

// One row per (round, client) for analysed rounds: loss, dispersion, GMM
// responsibilities and the effective set.
std::string analysis_csv(const fed::RunReport& report);

nlohmann::ordered_json summary_json(const fed::RunReport& report, const std::string& scenario_hash);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace fedpca::io
