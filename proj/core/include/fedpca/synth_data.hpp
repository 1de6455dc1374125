#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedpca/matrix.hpp"

namespace fedpca::synth {

enum class PartitionKind { kIid, kDirichlet, kMixed };
enum class NoisePlacement { kCommonOnly, kUniform };

struct PartitionSpec {
  PartitionKind kind = PartitionKind::kIid;
  double dirichlet_beta = 2.0;       // kDirichlet only
  std::vector<double> mixed_alphas;  // kMixed only; one entry per rare client

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;
};

struct ScenarioConfig {
  std::size_t num_clients = 20;
  std::size_t num_classes = 3;
  std::size_t input_dim = 10;
  std::size_t samples_per_client = 200;
  std::size_t test_samples = 1000;  // per distribution
  double rare_client_fraction = 0.2;
  double corruption_sigma = 2.0;
  double rho = 0.2;
  double eta = 1.0;
  PartitionSpec partition;
  NoisePlacement noise_placement = NoisePlacement::kCommonOnly;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the first offending field.
  void validate() const;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

enum class DistributionKind { kCommon, kRare, kMixed };

struct DistributionTag {
  DistributionKind kind = DistributionKind::kCommon;
  double alpha = 1.0;  // share of common samples; meaningful for kMixed

  std::string to_string() const;
};

struct ClientDataset {
  Matrix features;
  Labels observed_labels;
  Labels true_labels;  // evaluation only
  DistributionTag distribution;
  bool truly_mislabeled = false;  // evaluation only
  std::size_t corrupted_samples = 0;

  std::size_t size() const { return features.rows(); }
};

struct LabeledSet {
  Matrix features;
  Labels labels;
};

struct TestSets {
  LabeledSet common;
  LabeledSet rare;
};

struct Scenario {
  ScenarioConfig config;
  std::vector<ClientDataset> clients;
  TestSets tests;

  std::vector<std::size_t> rare_clients() const;
  std::vector<std::size_t> mislabeled_clients() const;
};

// Class means: vertices of a regular simplex with pairwise distance 6.
inline constexpr double kClassMeanSpacing = 6.0;

Matrix class_means(std::size_t num_classes, std::size_t input_dim);

// Class-balanced samples (label i mod C before shuffling) from unit-covariance
// Gaussians around class_means().
LabeledSet generate_base(std::size_t num_classes, std::size_t input_dim, std::size_t n, std::uint64_t seed);

// Adds i.i.d. N(0, sigma^2) noise to every element.
Matrix corrupt(const Matrix& features, double sigma, std::uint64_t seed);

// Flips exactly round_half_up(eta * N) positions to a different class.
Labels flip_labels(const Labels& labels, double eta, std::size_t num_classes, std::uint64_t seed);

// Per class, proportions ~ Dir(beta * 1_K). The whole draw is repeated (up to
// kDirichletRetries times) until every client holds at least C samples from
// at least two classes; C is the number of distinct labels.
std::vector<std::vector<std::size_t>> partition_dirichlet(const Labels& labels, std::size_t num_clients,
                                                          double beta, std::uint64_t seed);

inline constexpr int kDirichletRetries = 100;

Scenario build_scenario(const ScenarioConfig& config);

std::size_t round_half_up(double x);

}  // namespace fedpca::synth
