#include "fedpca/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "fedpca/error.hpp"

namespace fedpca::eval {

double accuracy(const nn::MlpParams& model, const Matrix& features, std::span<const int> labels) {
  require(features.rows() > 0, "accuracy: empty test set");
  require(labels.size() == features.rows(), "accuracy: labels length must equal rows");
  const auto predictions = nn::predict(model, features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i].label == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double binary_auc(std::span<const double> scores, const std::vector<bool>& positive) {
  require(scores.size() == positive.size(), "binary_auc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk tied runs in ascending order; each positive beats every negative
  // strictly below it and splits ties with negatives in its own run.
  double wins = 0.0;
  double negatives_below = 0.0;
  std::size_t num_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    double run_pos = 0.0;
    double run_neg = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (positive[order[j]] ? run_pos : run_neg) += 1.0;
      ++j;
    }
    wins += run_pos * negatives_below + 0.5 * run_pos * run_neg;
    negatives_below += run_neg;
    num_pos += static_cast<std::size_t>(run_pos);
    i = j;
  }
  const std::size_t num_neg = scores.size() - num_pos;
  require(num_pos > 0 && num_neg > 0, "binary_auc: need at least one positive and one negative");
  return wins / (static_cast<double>(num_pos) * static_cast<double>(num_neg));
}

double auc(const Matrix& scores, std::span<const int> labels, std::size_t num_classes) {
  require(scores.rows() == labels.size(), "auc: labels length must equal score rows");
  require(scores.cols() == num_classes && num_classes >= 2, "auc: score columns must equal class count");
  std::vector<double> column(scores.rows());
  std::vector<bool> positive(scores.rows());
  auto one_vs_rest = [&](std::size_t c) -> std::optional<double> {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < scores.rows(); ++i) {
      column[i] = scores(i, c);
      positive[i] = labels[i] == static_cast<int>(c);
      pos += positive[i];
    }
    if (pos == 0 || pos == scores.rows()) return std::nullopt;
    return binary_auc(column, positive);
  };

  if (num_classes == 2) {
    const auto a = one_vs_rest(1);
    if (!a) throw ContractError("auc: both classes must be present");
    return *a;
  }
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (const auto a = one_vs_rest(c)) {
      total += *a;
      ++used;
    }
  }
  if (used == 0) throw ContractError("auc: no class has both positives and negatives");
  return total / static_cast<double>(used);
}

Summary summarize(const DistributionMetrics& m) {
  Summary s;
  s.worst_acc = std::min(m.acc_common, m.acc_rare);
  s.avg_acc = 0.5 * (m.acc_common + m.acc_rare);
  s.worst_auc = std::min(m.auc_common, m.auc_rare);
  s.avg_auc = 0.5 * (m.auc_common + m.auc_rare);
  s.std_acc = 0.5 * std::abs(m.acc_common - m.acc_rare);
  s.std_auc = 0.5 * std::abs(m.auc_common - m.auc_rare);
  return s;
}

double weight_diagnostic(const std::vector<Vector>& weights_per_round, const std::vector<std::size_t>& rare,
                         const std::vector<std::size_t>& mislabeled) {
  if (weights_per_round.empty()) return 0.0;
  double total = 0.0;
  for (const auto& w : weights_per_round) {
    double w_rare = 0.0;
    double w_mislabeled = 0.0;
    for (std::size_t k : rare) w_rare += w.at(k);
    for (std::size_t k : mislabeled) w_mislabeled += w.at(k);
    total += w_rare * (1.0 - w_mislabeled);
  }
  return total / static_cast<double>(weights_per_round.size());
}

Summary mean_summary(std::span<const Summary> rounds) {
  Summary m;
  if (rounds.empty()) return m;
  for (const auto& s : rounds) {
    m.worst_acc += s.worst_acc;
    m.avg_acc += s.avg_acc;
    m.worst_auc += s.worst_auc;
    m.avg_auc += s.avg_auc;
    m.std_acc += s.std_acc;
    m.std_auc += s.std_auc;
  }
  const double n = static_cast<double>(rounds.size());
  m.worst_acc /= n;
  m.avg_acc /= n;
  m.worst_auc /= n;
  m.avg_auc /= n;
  m.std_acc /= n;
  m.std_auc /= n;
  return m;
}

}  // namespace fedpca::eval
