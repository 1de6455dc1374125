#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedpca/analysis.hpp"
#include "fedpca/matrix.hpp"
#include "fedpca/metrics.hpp"
#include "fedpca/mlp.hpp"
#include "fedpca/synth_data.hpp"

namespace fedpca::fed {

enum class StrategyKind { kDrop, kHighConfidence };

struct SelectionStrategy {
  StrategyKind kind = StrategyKind::kDrop;
  double tau_min = 0.9;

  static SelectionStrategy drop() { return {StrategyKind::kDrop, 0.9}; }
  static SelectionStrategy high_confidence(double tau_min) { return {StrategyKind::kHighConfidence, tau_min}; }

  friend bool operator==(const SelectionStrategy&, const SelectionStrategy&) = default;
};

struct ReliableDataset {
  Matrix features;
  Labels labels;
  double reliability = 1.0;

  std::size_t size() const { return features.rows(); }
};

struct AggregationWeights {
  Vector weights;

  double sum() const;
};

struct TrainingConfig {
  std::size_t hidden_units = 16;
  std::size_t batch_size = 32;
  nn::SgdConfig sgd;

  friend bool operator==(const TrainingConfig& a, const TrainingConfig& b) {
    return a.hidden_units == b.hidden_units && a.batch_size == b.batch_size &&
           a.sgd.learning_rate == b.sgd.learning_rate && a.sgd.momentum == b.sgd.momentum &&
           a.sgd.weight_decay == b.sgd.weight_decay;
  }
};

struct RoundConfig {
  std::size_t total_rounds = 50;
  std::size_t warmup_rounds = 10;
  std::size_t local_epochs = 1;
  double q = 1.0;
  SelectionStrategy strategy;
  double weight_smoothing = 0.5;          // beta_w
  double identification_smoothing = 0.7;  // beta_id
  std::size_t final_window = 5;
  bool normalize_dispersion = false;
  // Accept the geometric noisy component only if its mean loss exceeds ln C,
  // the loss of a predictor that ignores its input.
  bool chance_loss_gate = true;
  TrainingConfig training;
  std::size_t threads = 1;  // per-client work; results do not depend on it

  void validate() const;

  friend bool operator==(const RoundConfig&, const RoundConfig&) = default;
};

enum class MethodKind { kFedPca, kFedAvg, kLossWeighted };

struct Method {
  MethodKind kind = MethodKind::kFedPca;
  StrategyKind strategy = StrategyKind::kDrop;  // kFedPca only
  double q = 1.0;                               // kLossWeighted only

  static Method fedpca(StrategyKind s) { return {MethodKind::kFedPca, s, 1.0}; }
  static Method fedavg() { return {MethodKind::kFedAvg, StrategyKind::kDrop, 1.0}; }
  static Method loss_weighted(double q) { return {MethodKind::kLossWeighted, StrategyKind::kDrop, q}; }

  // "FedPCA(D)", "FedPCA(HS)", "FedAvg", "LossWeighted(q)".
  std::string name() const;
  // Filesystem-safe form of name().
  std::string slug() const;
  static Method parse(const std::string& name);

  friend bool operator==(const Method&, const Method&) = default;
};

// Threshold for High-Confidence Sampling from per-client lists of predicted
// probabilities on correctly classified samples (any order).
double tau_from_correct_probabilities(const std::vector<std::vector<double>>& per_client, std::size_t round,
                                      std::size_t total_rounds, double tau_min);

double compute_tau(std::size_t round, std::size_t total_rounds, const std::vector<std::size_t>& common_clients,
                   const std::vector<synth::ClientDataset>& clients, const nn::MlpParams& model, double tau_min);

// select_noisy_component followed by the optional chance-level loss gate.
std::optional<std::size_t> gated_noisy_component(const analysis::Gmm3& gmm, std::size_t num_classes, bool gate);

ReliableDataset build_reliable_dataset(const synth::ClientDataset& client, analysis::ClientSet membership,
                                       const nn::MlpParams& model, double tau, const SelectionStrategy& strategy);

// w_k proportional to N_k * r_k * exp(-q S_k). Throws NoTrainableDataError when
// every client has N_k = 0.
AggregationWeights fedpca_weights(const std::vector<std::size_t>& sizes, const Vector& reliability,
                                  const Vector& dispersion, double q);

AggregationWeights fedavg_weights(const std::vector<std::size_t>& sizes);

// Simplified q-FedAvg: w_k proportional to N_k * loss_k^q.
AggregationWeights loss_weighted_baseline(const std::vector<std::size_t>& sizes, const Vector& losses, double q);

// beta * previous + (1 - beta) * current, with clients that trained on no
// data pinned to zero, renormalized.
AggregationWeights smooth_weights(const AggregationWeights& previous, const AggregationWeights& current,
                                  const std::vector<std::size_t>& sizes, double beta);

nn::MlpParams aggregate(const std::vector<nn::MlpParams>& models, const AggregationWeights& weights);

nn::MlpParams local_train(const nn::MlpParams& model, const ReliableDataset& data, std::size_t epochs,
                          std::size_t batch_size, const nn::SgdConfig& sgd, std::uint64_t seed);

struct RoundRecord {
  std::size_t round = 0;
  bool analysed = false;  // identification ran this round
  eval::DistributionMetrics metrics;
  AggregationWeights weights;
  std::optional<analysis::ClientPartition> partition;  // effective sets
  double tau = 0.0;
  std::vector<analysis::LossDispersionPair> pairs;
  std::vector<std::array<double, 3>> responsibilities;
  std::vector<std::size_t> reliable_sizes;
  Vector reliability;
  std::string warning;
};

struct RunReport {
  Method method;
  std::uint64_t seed = 0;
  std::size_t warmup_rounds = 0;
  std::vector<RoundRecord> rounds;
  eval::RunSummary summary;
};

RunReport run_experiment(const synth::Scenario& scenario, const RoundConfig& config, const Method& method,
                         std::uint64_t seed);

}  // namespace fedpca::fed
