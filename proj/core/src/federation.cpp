#include "fedpca/federation.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedpca/error.hpp"
#include "fedpca/rng.hpp"
#include "parallel.hpp"

namespace fedpca::fed {

using analysis::ClientSet;

double AggregationWeights::sum() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

void RoundConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& rule) { throw ConfigError(field + " " + rule); };
  if (total_rounds < 1) fail("rounds.total_rounds", "must be at least 1");
  if (warmup_rounds >= total_rounds) fail("rounds.warmup_rounds", "must be smaller than total_rounds");
  if (local_epochs < 1) fail("rounds.local_epochs", "must be at least 1");
  if (!(q >= 0.0) || !std::isfinite(q)) fail("rounds.q", "must be nonnegative");
  if (!(strategy.tau_min > 0.0 && strategy.tau_min < 1.0)) fail("rounds.tau_min", "must lie in (0, 1)");
  if (!(weight_smoothing >= 0.0 && weight_smoothing < 1.0)) fail("rounds.weight_smoothing", "must lie in [0, 1)");
  if (!(identification_smoothing >= 0.0 && identification_smoothing < 1.0)) {
    fail("rounds.identification_smoothing", "must lie in [0, 1)");
  }
  if (final_window < 1) fail("rounds.final_window", "must be at least 1");
  if (training.hidden_units < 1) fail("training.hidden_units", "must be at least 1");
  if (training.batch_size < 1) fail("training.batch_size", "must be at least 1");
  if (!(training.sgd.learning_rate > 0.0)) fail("training.learning_rate", "must be positive");
  if (!(training.sgd.momentum >= 0.0 && training.sgd.momentum < 1.0)) fail("training.momentum", "must lie in [0, 1)");
  if (!(training.sgd.weight_decay >= 0.0)) fail("training.weight_decay", "must be nonnegative");
  if (threads < 1) fail("threads", "must be at least 1");
}

namespace {

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

std::string Method::name() const {
  switch (kind) {
    case MethodKind::kFedPca:
      return strategy == StrategyKind::kDrop ? "FedPCA(D)" : "FedPCA(HS)";
    case MethodKind::kFedAvg:
      return "FedAvg";
    case MethodKind::kLossWeighted:
      return "LossWeighted(" + format_number(q) + ")";
  }
  return "unknown";
}

std::string Method::slug() const {
  switch (kind) {
    case MethodKind::kFedPca:
      return strategy == StrategyKind::kDrop ? "fedpca-d" : "fedpca-hs";
    case MethodKind::kFedAvg:
      return "fedavg";
    case MethodKind::kLossWeighted: {
      std::string q_text = format_number(q);
      std::replace(q_text.begin(), q_text.end(), '.', 'p');
      return "lossweighted-q" + q_text;
    }
  }
  return "unknown";
}

Method Method::parse(const std::string& name) {
  const std::string key = lower(name);
  if (key == "fedpca(d)") return fedpca(StrategyKind::kDrop);
  if (key == "fedpca(hs)") return fedpca(StrategyKind::kHighConfidence);
  if (key == "fedavg") return fedavg();
  const std::string prefix = "lossweighted(";
  if (key.rfind(prefix, 0) == 0 && key.back() == ')') {
    const std::string arg = key.substr(prefix.size(), key.size() - prefix.size() - 1);
    double q = 0.0;
    const auto res = std::from_chars(arg.data(), arg.data() + arg.size(), q);
    if (res.ec == std::errc() && res.ptr == arg.data() + arg.size() && q >= 0.0 && std::isfinite(q)) {
      return loss_weighted(q);
    }
  }
  throw ConfigError("methods: unknown method '" + name + "'");
}

double tau_from_correct_probabilities(const std::vector<std::vector<double>>& per_client, std::size_t round,
                                      std::size_t total_rounds, double tau_min) {
  require(round >= 1 && total_rounds >= round, "compute_tau: need 1 <= t <= T");
  double total = 0.0;
  std::size_t contributing = 0;
  for (std::vector<double> probs : per_client) {
    if (probs.empty()) continue;
    std::sort(probs.begin(), probs.end(), std::greater<>());
    const std::size_t n = probs.size();
    const std::size_t top = std::max<std::size_t>(1, (round * n + total_rounds - 1) / total_rounds);
    total += std::accumulate(probs.begin(), probs.begin() + static_cast<std::ptrdiff_t>(top), 0.0) /
             static_cast<double>(top);
    ++contributing;
  }
  if (contributing == 0) return tau_min;
  return std::max(total / static_cast<double>(contributing), tau_min);
}

double compute_tau(std::size_t round, std::size_t total_rounds, const std::vector<std::size_t>& common_clients,
                   const std::vector<synth::ClientDataset>& clients, const nn::MlpParams& model, double tau_min) {
  std::vector<std::vector<double>> per_client;
  per_client.reserve(common_clients.size());
  for (std::size_t k : common_clients) {
    const auto& client = clients.at(k);
    const auto predictions = nn::predict(model, client.features);
    std::vector<double> correct;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      if (predictions[i].label == client.observed_labels[i]) correct.push_back(predictions[i].confidence);
    }
    per_client.push_back(std::move(correct));
  }
  return tau_from_correct_probabilities(per_client, round, total_rounds, tau_min);
}

std::optional<std::size_t> gated_noisy_component(const analysis::Gmm3& gmm, std::size_t num_classes, bool gate) {
  const auto noisy = analysis::select_noisy_component(gmm);
  if (!noisy || !gate) return noisy;
  if (gmm.means[*noisy].y > std::log(static_cast<double>(num_classes))) return noisy;
  return std::nullopt;
}

ReliableDataset build_reliable_dataset(const synth::ClientDataset& client, ClientSet membership,
                                       const nn::MlpParams& model, double tau, const SelectionStrategy& strategy) {
  if (membership != ClientSet::kNoisy) return {client.features, client.observed_labels, 1.0};
  ReliableDataset out{Matrix(0, client.features.cols()), {}, 0.0};
  if (strategy.kind == StrategyKind::kDrop) return out;

  const auto predictions = nn::predict(model, client.features);
  std::vector<std::size_t> keep;
  double confidence = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].confidence > tau) {
      keep.push_back(i);
      out.labels.push_back(predictions[i].label);
      confidence += predictions[i].confidence;
    }
  }
  if (keep.empty()) return out;
  out.features = client.features.select_rows(keep);
  out.reliability = confidence / static_cast<double>(keep.size());
  return out;
}

namespace {

AggregationWeights normalized(Vector raw) {
  const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
  for (double& w : raw) w /= total;
  return {std::move(raw)};
}

}  // namespace

AggregationWeights fedpca_weights(const std::vector<std::size_t>& sizes, const Vector& reliability,
                                  const Vector& dispersion, double q) {
  require(sizes.size() == reliability.size() && sizes.size() == dispersion.size(),
          "fedpca_weights: list lengths differ");
  require(q >= 0.0, "fedpca_weights: q must be nonnegative");
  if (std::all_of(sizes.begin(), sizes.end(), [](std::size_t n) { return n == 0; })) {
    throw NoTrainableDataError("no trainable data this round");
  }
  // Work with log numerators so exp(-q S) cannot overflow for large q.
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Vector log_num(sizes.size(), kNegInf);
  double top = kNegInf;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] == 0 || !(reliability[k] > 0.0)) continue;
    log_num[k] = std::log(static_cast<double>(sizes[k])) + std::log(reliability[k]) - q * dispersion[k];
    top = std::max(top, log_num[k]);
  }
  Vector raw(sizes.size(), 0.0);
  if (top == kNegInf) {
    for (std::size_t k = 0; k < sizes.size(); ++k) raw[k] = sizes[k] > 0 ? 1.0 : 0.0;
    return normalized(std::move(raw));
  }
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (log_num[k] != kNegInf) raw[k] = std::exp(log_num[k] - top);
  }
  return normalized(std::move(raw));
}

AggregationWeights fedavg_weights(const std::vector<std::size_t>& sizes) {
  require(!sizes.empty(), "fedavg_weights: no clients");
  Vector raw(sizes.begin(), sizes.end());
  if (std::accumulate(raw.begin(), raw.end(), 0.0) <= 0.0) throw NoTrainableDataError("fedavg_weights: total size is 0");
  return normalized(std::move(raw));
}

AggregationWeights loss_weighted_baseline(const std::vector<std::size_t>& sizes, const Vector& losses, double q) {
  require(sizes.size() == losses.size() && !sizes.empty(), "loss_weighted_baseline: list lengths differ");
  require(q >= 0.0, "loss_weighted_baseline: q must be nonnegative");
  Vector raw(sizes.size());
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    raw[k] = static_cast<double>(sizes[k]) * std::pow(losses[k], q);
  }
  if (std::accumulate(raw.begin(), raw.end(), 0.0) <= 0.0) std::fill(raw.begin(), raw.end(), 1.0);
  return normalized(std::move(raw));
}

AggregationWeights smooth_weights(const AggregationWeights& previous, const AggregationWeights& current,
                                  const std::vector<std::size_t>& sizes, double beta) {
  require(previous.weights.size() == current.weights.size() && sizes.size() == current.weights.size(),
          "smooth_weights: length mismatch");
  Vector raw(current.weights.size());
  for (std::size_t k = 0; k < raw.size(); ++k) {
    raw[k] = sizes[k] == 0 ? 0.0 : beta * previous.weights[k] + (1.0 - beta) * current.weights[k];
  }
  if (std::accumulate(raw.begin(), raw.end(), 0.0) <= 0.0) return current;
  return normalized(std::move(raw));
}

nn::MlpParams aggregate(const std::vector<nn::MlpParams>& models, const AggregationWeights& weights) {
  require(!models.empty(), "aggregate: no models");
  require(models.size() == weights.weights.size(), "aggregate: one weight per model required");
  nn::MlpParams out = nn::MlpParams::zeros(models[0].input_dim(), models[0].hidden(), models[0].num_classes());
  auto dst = out.blocks();
  for (std::size_t m = 0; m < models.size(); ++m) {
    if (!models[m].same_shape(models[0])) throw ContractError("aggregate: model shapes differ");
    const double w = weights.weights[m];
    auto src = models[m].blocks();
    for (std::size_t b = 0; b < dst.size(); ++b) {
      for (std::size_t i = 0; i < dst[b].size(); ++i) dst[b][i] += w * src[b][i];
    }
  }
  return out;
}

nn::MlpParams local_train(const nn::MlpParams& model, const ReliableDataset& data, std::size_t epochs,
                          std::size_t batch_size, const nn::SgdConfig& sgd, std::uint64_t seed) {
  require(batch_size >= 1, "local_train: batch size must be positive");
  nn::MlpParams params = model;
  if (data.size() == 0) return params;
  nn::SgdState state = nn::SgdState::fresh(sgd, params);
  Rng rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> batch;
  Labels labels;
  for (std::size_t e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end));
      labels.clear();
      for (std::size_t i : batch) labels.push_back(data.labels[i]);
      const nn::ForwardTrace trace = nn::forward(params, data.features.select_rows(batch));
      nn::sgd_step(params, nn::backward(params, trace, labels), state);
    }
  }
  return params;
}

namespace {

eval::DistributionMetrics evaluate(const nn::MlpParams& model, const synth::TestSets& tests, std::size_t classes) {
  const nn::ForwardTrace common = nn::forward(model, tests.common.features);
  const nn::ForwardTrace rare = nn::forward(model, tests.rare.features);
  auto acc = [](const nn::ForwardTrace& t, const Labels& labels) {
    const auto predictions = nn::predict(t);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i].label == labels[i];
    return static_cast<double>(correct) / static_cast<double>(labels.size());
  };
  eval::DistributionMetrics m;
  m.acc_common = acc(common, tests.common.labels);
  m.acc_rare = acc(rare, tests.rare.labels);
  m.auc_common = eval::auc(common.probs, tests.common.labels, classes);
  m.auc_rare = eval::auc(rare.probs, tests.rare.labels, classes);
  return m;
}

std::uint64_t client_seed(std::uint64_t seed, Stream purpose, std::size_t round, std::size_t client) {
  return derive_seed(seed, {static_cast<std::uint64_t>(purpose), round, client});
}

}  // namespace

RunReport run_experiment(const synth::Scenario& scenario, const RoundConfig& config, const Method& method,
                         std::uint64_t seed) {
  config.validate();
  const auto& clients = scenario.clients;
  const std::size_t K = clients.size();
  const std::size_t C = scenario.config.num_classes;
  require(K >= 1, "run_experiment: scenario has no clients");
  const bool is_fedpca = method.kind == MethodKind::kFedPca;
  if (is_fedpca) require(K >= 3, "run_experiment: FedPCA needs at least 3 clients");

  SelectionStrategy strategy = config.strategy;
  strategy.kind = method.strategy;

  Rng init_rng = make_rng(seed, Stream::kModelInit);
  nn::MlpParams global = nn::MlpParams::init(scenario.config.input_dim, config.training.hidden_units, C, init_rng);

  std::vector<std::size_t> sizes(K);
  for (std::size_t k = 0; k < K; ++k) sizes[k] = clients[k].size();

  analysis::SmoothingState identification = analysis::SmoothingState::start(K, config.identification_smoothing);
  std::optional<AggregationWeights> previous;

  RunReport report;
  report.method = method;
  report.seed = seed;
  report.warmup_rounds = config.warmup_rounds;

  for (std::size_t t = 1; t <= config.total_rounds; ++t) {
    RoundRecord rec;
    rec.round = t;
    const bool analysed = is_fedpca && t > config.warmup_rounds;
    rec.analysed = analysed;
    std::vector<ReliableDataset> data(K);
    Vector losses(K, 0.0);

    if (analysed) {
      rec.pairs.resize(K);
      detail::parallel_for(K, config.threads, [&](std::size_t k) {
        rec.pairs[k] = analysis::client_vector(global, clients[k].features, clients[k].observed_labels, C,
                                               config.normalize_dispersion,
                                               client_seed(seed, Stream::kClientKMeans, t, k));
      });
      analysis::ClientPartition instant;
      try {
        const analysis::GmmFit fit = analysis::fit_gmm3(rec.pairs, derive_seed(seed, {static_cast<std::uint64_t>(Stream::kGmm), t}));
        instant = analysis::assign_sets(fit, gated_noisy_component(fit.model, C, config.chance_loss_gate));
        rec.responsibilities = fit.responsibilities;
      } catch (const FitError& e) {
        instant = analysis::ClientPartition::all_common(K);
        rec.warning = std::string("identification skipped: ") + e.what();
      }
      const analysis::ClientPartition effective = analysis::smooth_identification(identification, instant);
      rec.tau = compute_tau(t, config.total_rounds, effective.members(ClientSet::kCommon), clients, global,
                            strategy.tau_min);
      detail::parallel_for(K, config.threads, [&](std::size_t k) {
        data[k] = build_reliable_dataset(clients[k], effective.membership[k], global, rec.tau, strategy);
      });
      rec.partition = effective;
    } else {
      for (std::size_t k = 0; k < K; ++k) data[k] = {clients[k].features, clients[k].observed_labels, 1.0};
      if (method.kind == MethodKind::kLossWeighted) {
        detail::parallel_for(K, config.threads, [&](std::size_t k) {
          losses[k] = nn::cross_entropy(nn::forward(global, clients[k].features), clients[k].observed_labels);
        });
      }
    }

    rec.reliable_sizes.resize(K);
    rec.reliability.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      rec.reliable_sizes[k] = data[k].size();
      rec.reliability[k] = data[k].reliability;
    }

    std::vector<nn::MlpParams> local(K);
    detail::parallel_for(K, config.threads, [&](std::size_t k) {
      local[k] = local_train(global, data[k], config.local_epochs, config.training.batch_size, config.training.sgd,
                             client_seed(seed, Stream::kLocalTrain, t, k));
    });

    try {
      AggregationWeights weights;
      if (analysed) {
        Vector dispersion(K);
        for (std::size_t k = 0; k < K; ++k) dispersion[k] = rec.pairs[k].dispersion;
        weights = fedpca_weights(rec.reliable_sizes, rec.reliability, dispersion, config.q);
        if (previous) weights = smooth_weights(*previous, weights, rec.reliable_sizes, config.weight_smoothing);
      } else if (method.kind == MethodKind::kLossWeighted) {
        weights = loss_weighted_baseline(sizes, losses, method.q);
      } else {
        weights = fedavg_weights(sizes);
      }
      global = aggregate(local, weights);
      previous = weights;
      rec.weights = std::move(weights);
    } catch (const NoTrainableDataError& e) {
      rec.weights.weights.assign(K, 0.0);
      rec.warning += (rec.warning.empty() ? "" : "; ") + std::string(e.what()) + ", previous global model kept";
    }

    rec.metrics = evaluate(global, scenario.tests, C);
    report.rounds.push_back(std::move(rec));
  }

  const std::size_t window = std::min(config.final_window, report.rounds.size());
  std::vector<eval::Summary> tail;
  for (std::size_t i = report.rounds.size() - window; i < report.rounds.size(); ++i) {
    tail.push_back(eval::summarize(report.rounds[i].metrics));
  }
  report.summary.final_window = eval::mean_summary(tail);

  std::vector<Vector> post_warmup;
  for (const auto& r : report.rounds) {
    if (r.round > config.warmup_rounds && r.weights.sum() > 0.0) post_warmup.push_back(r.weights.weights);
  }
  report.summary.weight_diagnostic =
      eval::weight_diagnostic(post_warmup, scenario.rare_clients(), scenario.mislabeled_clients());
  return report;
}

}  // namespace fedpca::fed
