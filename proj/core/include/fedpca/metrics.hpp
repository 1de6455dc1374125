#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedpca/matrix.hpp"
#include "fedpca/mlp.hpp"

namespace fedpca::eval {

struct DistributionMetrics {
  double acc_common = 0.0;
  double acc_rare = 0.0;
  double auc_common = 0.0;
  double auc_rare = 0.0;
};

struct Summary {
  double worst_acc = 0.0;
  double avg_acc = 0.0;
  double worst_auc = 0.0;
  double avg_auc = 0.0;
  double std_acc = 0.0;
  double std_auc = 0.0;
};

struct RunSummary {
  Summary final_window;  // mean of per-round summaries over the last W rounds
  double weight_diagnostic = 0.0;
};

double accuracy(const nn::MlpParams& model, const Matrix& features, std::span<const int> labels);

// Mann-Whitney AUC of scores for positives against negatives, ties count 1/2.
double binary_auc(std::span<const double> scores, const std::vector<bool>& positive);

// C == 2: binary AUC on the class-1 column. C > 2: unweighted mean of the
// one-vs-rest AUCs over classes that have both positives and negatives.
double auc(const Matrix& scores, std::span<const int> labels, std::size_t num_classes);

Summary summarize(const DistributionMetrics& m);

// Mean over rounds of w_r * (1 - w_m), where w_r and w_m are the total weight
// on the given rare and mislabeled clients.
double weight_diagnostic(const std::vector<Vector>& weights_per_round, const std::vector<std::size_t>& rare,
                         const std::vector<std::size_t>& mislabeled);

Summary mean_summary(std::span<const Summary> rounds);

}  // namespace fedpca::eval
