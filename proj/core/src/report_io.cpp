#include "fedpca/report_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fedpca::io {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string rounds_csv(const fed::RunReport& report, std::size_t num_clients) {
  std::ostringstream out;
  out << "round,method,worst_acc,avg_acc,worst_auc,avg_auc,std_acc,std_auc,tau";
  for (std::size_t k = 0; k < num_clients; ++k) out << ",w_" << k;
  for (std::size_t k = 0; k < num_clients; ++k) out << ",set_" << k;
  out << '\n';
  const std::string method = report.method.name();
  for (const auto& r : report.rounds) {
    const eval::Summary s = eval::summarize(r.metrics);
    out << r.round << ',' << method << ',' << format_double(s.worst_acc) << ',' << format_double(s.avg_acc) << ','
        << format_double(s.worst_auc) << ',' << format_double(s.avg_auc) << ',' << format_double(s.std_acc) << ','
        << format_double(s.std_auc) << ',';
    if (r.analysed) out << format_double(r.tau);
    for (std::size_t k = 0; k < num_clients; ++k) {
      out << ',' << (k < r.weights.weights.size() ? format_double(r.weights.weights[k]) : "");
    }
    for (std::size_t k = 0; k < num_clients; ++k) {
      out << ',' << (r.partition ? analysis::set_code(r.partition->membership[k]) : '-');
    }
    out << '\n';
  }
  return out.str();
}

std::string analysis_csv(const fed::RunReport& report) {
  std::ostringstream out;
  out << "round,client,loss,dispersion,resp_0,resp_1,resp_2,set\n";
  for (const auto& r : report.rounds) {
    if (!r.analysed) continue;
    for (std::size_t k = 0; k < r.pairs.size(); ++k) {
      out << r.round << ',' << k << ',' << format_double(r.pairs[k].loss) << ','
          << format_double(r.pairs[k].dispersion);
      for (std::size_t j = 0; j < 3; ++j) {
        out << ',' << (k < r.responsibilities.size() ? format_double(r.responsibilities[k][j]) : "");
      }
      out << ',' << analysis::set_code(r.partition->membership[k]) << '\n';
    }
  }
  return out.str();
}

nlohmann::ordered_json summary_json(const fed::RunReport& report, const std::string& scenario_hash) {
  const auto& s = report.summary.final_window;
  nlohmann::ordered_json j;
  j["method"] = report.method.name();
  j["scenario_hash"] = scenario_hash;
  j["seed"] = report.seed;
  j["worst_acc"] = s.worst_acc;
  j["avg_acc"] = s.avg_acc;
  j["worst_auc"] = s.worst_auc;
  j["avg_auc"] = s.avg_auc;
  j["std_acc"] = s.std_acc;
  j["std_auc"] = s.std_auc;
  j["weight_diagnostic"] = report.summary.weight_diagnostic;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace fedpca::io
