#include "fedpca/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <map>
#include <set>

#include "fedpca/error.hpp"
#include "fedpca/rng.hpp"

namespace fedpca::synth {

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

namespace {

void check_unit(double v, const char* field) {
  if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(field) + " must lie in [0, 1]");
}

}  // namespace

void ScenarioConfig::validate() const {
  if (num_clients < 3) throw ConfigError("num_clients must be at least 3");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (input_dim < 2 || input_dim + 1 < num_classes) {
    throw ConfigError("input_dim must be at least max(2, num_classes - 1)");
  }
  if (samples_per_client < num_classes) throw ConfigError("samples_per_client must be at least num_classes");
  if (test_samples < num_classes) throw ConfigError("test_samples must be at least num_classes");
  check_unit(rare_client_fraction, "rare_client_fraction");
  if (!(corruption_sigma >= 0.0) || !std::isfinite(corruption_sigma)) {
    throw ConfigError("corruption_sigma must be nonnegative");
  }
  check_unit(rho, "rho");
  check_unit(eta, "eta");
  const std::size_t rare = round_half_up(rare_client_fraction * static_cast<double>(num_clients));
  switch (partition.kind) {
    case PartitionKind::kIid:
      break;
    case PartitionKind::kDirichlet:
      if (!(partition.dirichlet_beta > 0.0)) throw ConfigError("partition.beta must be positive");
      break;
    case PartitionKind::kMixed:
      for (double a : partition.mixed_alphas) check_unit(a, "partition.alphas");
      if (partition.mixed_alphas.size() != rare) {
        throw ConfigError("partition.alphas must list one value per rare client (" + std::to_string(rare) + ")");
      }
      break;
  }
  const std::size_t mislabeled = round_half_up(rho * static_cast<double>(num_clients));
  if (noise_placement == NoisePlacement::kCommonOnly && mislabeled > num_clients - rare) {
    throw ConfigError("rho demands " + std::to_string(mislabeled) + " mislabeled common clients but only " +
                      std::to_string(num_clients - rare) + " common clients exist");
  }
}

std::string DistributionTag::to_string() const {
  switch (kind) {
    case DistributionKind::kCommon:
      return "common";
    case DistributionKind::kRare:
      return "rare";
    case DistributionKind::kMixed:
      return "mixed";
  }
  return "unknown";
}

std::vector<std::size_t> Scenario::rare_clients() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    if (clients[k].distribution.kind != DistributionKind::kCommon) out.push_back(k);
  }
  return out;
}

std::vector<std::size_t> Scenario::mislabeled_clients() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    if (clients[k].truly_mislabeled) out.push_back(k);
  }
  return out;
}

Matrix class_means(std::size_t num_classes, std::size_t input_dim) {
  require(num_classes >= 2, "class_means: need at least two classes");
  require(input_dim + 1 >= num_classes, "class_means: input_dim must be at least num_classes - 1");
  // Coordinates of the centred simplex s * (e_i - 1/C) in a Helmert basis of
  // the sum-zero subspace; pairwise distance is s * sqrt(2).
  const double scale = kClassMeanSpacing / std::sqrt(2.0);
  Matrix means(num_classes, input_dim);
  for (std::size_t k = 1; k < num_classes; ++k) {
    const double norm = std::sqrt(static_cast<double>(k * (k + 1)));
    for (std::size_t i = 0; i < num_classes; ++i) {
      double h = 0.0;
      if (i < k) {
        h = 1.0 / norm;
      } else if (i == k) {
        h = -static_cast<double>(k) / norm;
      }
      means(i, k - 1) = scale * h;
    }
  }
  return means;
}

LabeledSet generate_base(std::size_t num_classes, std::size_t input_dim, std::size_t n, std::uint64_t seed) {
  require(num_classes >= 2 && input_dim >= 2 && n >= num_classes, "generate_base: need C >= 2, d >= 2, n >= C");
  const Matrix means = class_means(num_classes, input_dim);
  Rng rng = make_rng(seed, Stream::kBaseData);
  Labels labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % num_classes);
  std::shuffle(labels.begin(), labels.end(), rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix features(n, input_dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto mean = means.row(static_cast<std::size_t>(labels[i]));
    auto row = features.row(i);
    for (std::size_t j = 0; j < input_dim; ++j) row[j] = mean[j] + noise(rng);
  }
  return {std::move(features), std::move(labels)};
}

Matrix corrupt(const Matrix& features, double sigma, std::uint64_t seed) {
  require(sigma >= 0.0, "corrupt: sigma must be nonnegative");
  Matrix out = features;
  if (sigma == 0.0) return out;
  Rng rng = make_rng(seed, Stream::kCorruption);
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : out.values()) v += noise(rng);
  return out;
}

Labels flip_labels(const Labels& labels, double eta, std::size_t num_classes, std::uint64_t seed) {
  require(eta >= 0.0 && eta <= 1.0, "flip_labels: eta must lie in [0, 1]");
  require(num_classes >= 2, "flip_labels: need at least two classes");
  Labels out = labels;
  const std::size_t count = std::min(round_half_up(eta * static_cast<double>(labels.size())), labels.size());
  if (count == 0) return out;
  Rng rng = make_rng(seed, Stream::kLabelFlip);
  std::vector<std::size_t> positions(labels.size());
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `count` entries are a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, positions.size() - 1);
    std::swap(positions[i], positions[pick(rng)]);
  }
  std::uniform_int_distribution<int> offset(1, static_cast<int>(num_classes) - 1);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t p = positions[i];
    out[p] = (labels[p] + offset(rng)) % static_cast<int>(num_classes);
  }
  return out;
}

std::vector<std::vector<std::size_t>> partition_dirichlet(const Labels& labels, std::size_t num_clients,
                                                          double beta, std::uint64_t seed) {
  require(beta > 0.0, "partition_dirichlet: beta must be positive");
  require(num_clients >= 1, "partition_dirichlet: need at least one client");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  const std::size_t num_classes = by_class.size();
  if (num_clients == 1) {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return {all};
  }

  Rng rng = make_rng(seed, Stream::kPartition);
  std::gamma_distribution<double> gamma(beta, 1.0);
  const std::size_t min_classes = std::min<std::size_t>(2, num_classes);
  for (int attempt = 0; attempt < kDirichletRetries; ++attempt) {
    std::vector<std::vector<std::size_t>> parts(num_clients);
    for (auto [label, members] : by_class) {
      std::shuffle(members.begin(), members.end(), rng);
      std::vector<double> share(num_clients);
      double total = 0.0;
      for (double& s : share) total += (s = gamma(rng));
      if (!(total > 0.0)) {
        // Every draw underflowed (tiny beta); fall back to one random owner.
        std::uniform_int_distribution<std::size_t> owner(0, num_clients - 1);
        std::fill(share.begin(), share.end(), 0.0);
        share[owner(rng)] = total = 1.0;
      }
      double cumulative = 0.0;
      std::size_t begin = 0;
      for (std::size_t k = 0; k < num_clients; ++k) {
        cumulative += share[k] / total;
        const std::size_t end = k + 1 == num_clients
                                    ? members.size()
                                    : std::min(members.size(), round_half_up(cumulative * static_cast<double>(members.size())));
        for (std::size_t i = begin; i < end; ++i) parts[k].push_back(members[i]);
        begin = std::max(begin, end);
      }
    }
    const bool ok = std::all_of(parts.begin(), parts.end(), [&](const std::vector<std::size_t>& part) {
      if (part.size() < num_classes) return false;
      std::set<int> present;
      for (std::size_t i : part) present.insert(labels[i]);
      return present.size() >= min_classes;
    });
    if (ok) {
      for (auto& part : parts) std::sort(part.begin(), part.end());
      return parts;
    }
  }
  throw FitError("partition_dirichlet: retry budget exhausted without a valid partition");
}

Scenario build_scenario(const ScenarioConfig& config) {
  config.validate();
  const std::size_t K = config.num_clients;
  const std::size_t C = config.num_classes;
  const std::size_t d = config.input_dim;
  const std::size_t N = config.samples_per_client;
  const std::size_t rare = round_half_up(config.rare_client_fraction * static_cast<double>(K));
  const std::size_t first_rare = K - rare;
  const std::size_t mislabeled = round_half_up(config.rho * static_cast<double>(K));

  Scenario scenario;
  scenario.config = config;
  scenario.clients.resize(K);

  if (config.partition.kind == PartitionKind::kDirichlet) {
    LabeledSet pool = generate_base(C, d, K * N, derive_seed(config.seed, {0}));
    const auto parts = partition_dirichlet(pool.labels, K, config.partition.dirichlet_beta,
                                           derive_seed(config.seed, {1}));
    for (std::size_t k = 0; k < K; ++k) {
      auto& client = scenario.clients[k];
      client.features = pool.features.select_rows(parts[k]);
      for (std::size_t i : parts[k]) client.true_labels.push_back(pool.labels[i]);
    }
  } else {
    for (std::size_t k = 0; k < K; ++k) {
      LabeledSet base = generate_base(C, d, N, derive_seed(config.seed, {2, k}));
      scenario.clients[k].features = std::move(base.features);
      scenario.clients[k].true_labels = std::move(base.labels);
    }
  }

  for (std::size_t k = first_rare; k < K; ++k) {
    auto& client = scenario.clients[k];
    const std::uint64_t corruption_seed = derive_seed(config.seed, {3, k});
    if (config.partition.kind == PartitionKind::kMixed) {
      const double alpha = config.partition.mixed_alphas[k - first_rare];
      const std::size_t n = client.size();
      const std::size_t rare_count = std::min(n, round_half_up((1.0 - alpha) * static_cast<double>(n)));
      std::vector<std::size_t> tail(rare_count);
      std::iota(tail.begin(), tail.end(), n - rare_count);
      const Matrix noisy = corrupt(client.features.select_rows(tail), config.corruption_sigma, corruption_seed);
      for (std::size_t i = 0; i < rare_count; ++i) {
        std::copy(noisy.row(i).begin(), noisy.row(i).end(), client.features.row(tail[i]).begin());
      }
      client.corrupted_samples = rare_count;
      client.distribution = {DistributionKind::kMixed, alpha};
    } else {
      client.features = corrupt(client.features, config.corruption_sigma, corruption_seed);
      client.corrupted_samples = client.size();
      client.distribution = {DistributionKind::kRare, 0.0};
    }
  }

  std::vector<std::size_t> noisy_clients;
  if (config.noise_placement == NoisePlacement::kCommonOnly) {
    for (std::size_t k = 0; k < mislabeled; ++k) noisy_clients.push_back(k);
  } else {
    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(config.seed, Stream::kNoisePlacement);
    std::shuffle(order.begin(), order.end(), rng);
    noisy_clients.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(mislabeled));
    std::sort(noisy_clients.begin(), noisy_clients.end());
  }

  for (std::size_t k = 0; k < K; ++k) {
    auto& client = scenario.clients[k];
    client.observed_labels = client.true_labels;
  }
  for (std::size_t k : noisy_clients) {
    auto& client = scenario.clients[k];
    client.observed_labels = flip_labels(client.true_labels, config.eta, C, derive_seed(config.seed, {4, k}));
    client.truly_mislabeled = client.observed_labels != client.true_labels;
  }

  LabeledSet common = generate_base(C, d, config.test_samples, make_rng(config.seed, Stream::kTestCommon)());
  LabeledSet rare_test = generate_base(C, d, config.test_samples, make_rng(config.seed, Stream::kTestRare)());
  rare_test.features = corrupt(rare_test.features, config.corruption_sigma, derive_seed(config.seed, {5}));
  scenario.tests = {std::move(common), std::move(rare_test)};
  return scenario;
}

}  // namespace fedpca::synth
