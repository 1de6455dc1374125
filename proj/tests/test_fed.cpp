#include <doctest.h>

#include <cmath>

#include "fedpca/error.hpp"
#include "fedpca/federation.hpp"
#include "oracles.hpp"

using namespace fedpca;
using namespace fedpca::fed;
using analysis::ClientSet;

namespace {

// 1-input, 2-class net whose class-0 probability is sigmoid(x) for x >= 0.
nn::MlpParams sigmoid_net() {
  nn::MlpParams p = nn::MlpParams::zeros(1, 1, 2);
  p.w1(0, 0) = 1.0;
  p.w2(0, 0) = 1.0;
  return p;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

synth::Scenario small_scenario(double rho, std::uint64_t seed) {
  synth::ScenarioConfig cfg;
  cfg.num_clients = 8;
  cfg.samples_per_client = 60;
  cfg.test_samples = 150;
  cfg.rho = rho;
  cfg.seed = seed;
  return synth::build_scenario(cfg);
}

RoundConfig small_rounds() {
  RoundConfig rc;
  rc.total_rounds = 12;
  rc.warmup_rounds = 3;
  rc.final_window = 3;
  return rc;
}

}  // namespace

TEST_CASE("tau schedule") {
  CHECK(tau_from_correct_probabilities({{0.99, 0.8, 0.6}}, 1, 3, 0.9) == doctest::Approx(0.99));
  CHECK(tau_from_correct_probabilities({{0.6, 0.99, 0.8}}, 3, 3, 0.5) == doctest::Approx((0.99 + 0.8 + 0.6) / 3));
  CHECK(tau_from_correct_probabilities({{0.5, 0.6}, {0.7}}, 5, 5, 0.9) == 0.9);
  CHECK(tau_from_correct_probabilities({}, 1, 5, 0.9) == 0.9);
  CHECK(tau_from_correct_probabilities({{}, {}}, 1, 5, 0.9) == 0.9);
  // Two clients averaged: {1.0} and top half of {0.98, 0.96, 0.5, 0.4}.
  CHECK(tau_from_correct_probabilities({{1.0}, {0.98, 0.96, 0.5, 0.4}}, 1, 2, 0.9) ==
        doctest::Approx((1.0 + 0.97) / 2));
  CHECK_THROWS_AS(tau_from_correct_probabilities({{0.9}}, 0, 5, 0.9), ContractError);
  CHECK_THROWS_AS(tau_from_correct_probabilities({{0.9}}, 6, 5, 0.9), ContractError);
}

TEST_CASE("tau stays within bounds for any quantile") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> probs(10);
    for (double& p : probs) p = 0.5 + 0.5 * u(rng);
    const double top = *std::max_element(probs.begin(), probs.end());
    for (std::size_t t = 1; t <= 20; ++t) {
      const double tau = tau_from_correct_probabilities({probs}, t, 20, 0.6);
      CHECK(tau >= 0.6);
      CHECK(tau <= std::max(top, 0.6) + 1e-15);
    }
  }
}

TEST_CASE("compute_tau uses correctly classified samples only") {
  synth::ClientDataset client;
  client.features = Matrix{{logit(0.99)}, {logit(0.8)}, {logit(0.6)}, {logit(0.95)}};
  client.observed_labels = {0, 0, 0, 1};  // last sample is misclassified
  client.true_labels = client.observed_labels;
  CHECK(compute_tau(1, 3, {0}, {client}, sigmoid_net(), 0.9) == doctest::Approx(0.99).epsilon(1e-12));
  CHECK(compute_tau(1, 3, {}, {client}, sigmoid_net(), 0.9) == 0.9);
}

TEST_CASE("reliable dataset construction") {
  synth::ClientDataset client;
  client.features = Matrix{{logit(0.95)}, {logit(0.85)}, {logit(0.92)}};
  client.observed_labels = {1, 1, 0};
  client.true_labels = client.observed_labels;
  const auto model = sigmoid_net();

  const auto same = build_reliable_dataset(client, ClientSet::kRare, model, 0.9, SelectionStrategy::drop());
  CHECK(same.features == client.features);
  CHECK(same.labels == client.observed_labels);
  CHECK(same.reliability == 1.0);

  const auto dropped = build_reliable_dataset(client, ClientSet::kNoisy, model, 0.9, SelectionStrategy::drop());
  CHECK(dropped.size() == 0);
  CHECK(dropped.reliability == 0.0);

  const auto hs =
      build_reliable_dataset(client, ClientSet::kNoisy, model, 0.9, SelectionStrategy::high_confidence(0.9));
  CHECK(hs.size() == 2);
  CHECK(hs.labels == Labels{0, 0});
  CHECK(hs.reliability == doctest::Approx(0.935).epsilon(1e-12));

  const auto none =
      build_reliable_dataset(client, ClientSet::kNoisy, model, 0.99, SelectionStrategy::high_confidence(0.9));
  CHECK(none.size() == 0);
  CHECK(none.reliability == 0.0);

  // The threshold comparison is strict.
  synth::ClientDataset edge;
  edge.features = Matrix{{0.0}};
  edge.observed_labels = {1};
  const auto at = build_reliable_dataset(edge, ClientSet::kNoisy, model, 0.5, SelectionStrategy::high_confidence(0.9));
  CHECK(at.size() == 0);
}

TEST_CASE("fedpca weights") {
  const auto even = fedpca_weights({100, 100}, {1.0, 1.0}, {0.3, -2.0}, 0.0);
  CHECK(even.weights == Vector{0.5, 0.5});
  const auto dispersed = fedpca_weights({100, 100}, {1.0, 1.0}, {0.0, std::log(2.0)}, 1.0);
  CHECK(dispersed.weights[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(dispersed.weights[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const auto dropped = fedpca_weights({100, 0, 50}, {1.0, 0.0, 1.0}, {1.0, 1.0, 1.0}, 1.0);
  CHECK(dropped.weights[1] == 0.0);
  CHECK(dropped.sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(fedpca_weights({0, 0}, {0.0, 0.0}, {1.0, 1.0}, 1.0), NoTrainableDataError);
  // Huge q does not overflow.
  const auto extreme = fedpca_weights({10, 10}, {1.0, 1.0}, {-500.0, -400.0}, 10.0);
  CHECK(std::isfinite(extreme.weights[0]));
  CHECK(extreme.weights[0] == doctest::Approx(1.0));
}

TEST_CASE("fedpca weight falls as dispersion rises") {
  Rng rng(12);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vector s{u(rng), u(rng), u(rng)};
    const Vector r{u(rng) / 3.0, u(rng) / 3.0, 1.0};
    const std::vector<std::size_t> n{50, 80, 20};
    const auto before = fedpca_weights(n, r, s, 0.7);
    s[1] += 0.25;
    const auto after = fedpca_weights(n, r, s, 0.7);
    CHECK(after.weights[1] < before.weights[1]);
    CHECK(std::abs(after.sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("fedavg and loss weighted baselines") {
  CHECK(fedavg_weights({5, 5, 5, 5}).weights == Vector{0.25, 0.25, 0.25, 0.25});
  CHECK(fedavg_weights({100, 300}).weights == Vector{0.25, 0.75});
  CHECK(fedavg_weights({7}).weights == Vector{1.0});
  CHECK_THROWS(fedavg_weights({0, 0}));

  CHECK(loss_weighted_baseline({100, 300}, {0.3, 2.0}, 0.0).weights == fedavg_weights({100, 300}).weights);
  const auto w = loss_weighted_baseline({10, 10}, {1.0, 2.0}, 1.0);
  CHECK(w.weights[0] == doctest::Approx(1.0 / 3.0));
  CHECK(w.weights[1] == doctest::Approx(2.0 / 3.0));
  CHECK(loss_weighted_baseline({10, 10}, {0.0, 0.0}, 1.0).weights == Vector{0.5, 0.5});

  Rng rng(2);
  std::uniform_real_distribution<double> u(0.01, 4.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vector loss{u(rng), u(rng), u(rng)};
    const double before = loss_weighted_baseline({10, 20, 30}, loss, 1.5).weights[0];
    loss[0] += u(rng);
    CHECK(loss_weighted_baseline({10, 20, 30}, loss, 1.5).weights[0] >= before);
  }
}

TEST_CASE("weight smoothing keeps dropped clients at zero") {
  const AggregationWeights prev{{0.5, 0.25, 0.25}};
  const AggregationWeights cur{{0.5, 0.0, 0.5}};
  const auto s = smooth_weights(prev, cur, {10, 0, 10}, 0.5);
  CHECK(s.weights[1] == 0.0);
  CHECK(s.weights[0] == doctest::Approx(0.5 / 0.875));
  CHECK(s.sum() == doctest::Approx(1.0));
  CHECK(smooth_weights(prev, cur, {10, 10, 10}, 0.0).weights == cur.weights);
}

TEST_CASE("aggregate") {
  Rng rng(1);
  const auto a = nn::MlpParams::init(3, 4, 2, rng);
  CHECK(aggregate({a}, {{1.0}}) == a);
  const auto same = aggregate({a, a}, {{0.3, 0.7}});
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t i = 0; i < a.blocks()[b].size(); ++i) {
      CHECK(same.blocks()[b][i] == doctest::Approx(a.blocks()[b][i]).epsilon(1e-15));
    }
  }
  nn::MlpParams triple = a;
  for (auto block : triple.blocks()) {
    for (double& v : block) v *= 3.0;
  }
  const auto mid = aggregate({a, triple}, {{0.5, 0.5}});
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t i = 0; i < a.blocks()[b].size(); ++i) CHECK(mid.blocks()[b][i] == 2.0 * a.blocks()[b][i]);
  }
  CHECK_THROWS_AS(aggregate({a, nn::MlpParams::zeros(3, 5, 2)}, {{0.5, 0.5}}), ContractError);
}

TEST_CASE("local training") {
  Rng rng(8);
  const auto model = nn::MlpParams::init(4, 5, 3, rng);
  const nn::SgdConfig sgd{0.1, 0.9, 5e-4};

  ReliableDataset empty{Matrix(0, 4), {}, 0.0};
  CHECK(local_train(model, empty, 3, 32, sgd, 1) == model);

  ReliableDataset data{oracle::random_matrix(20, 4, rng), oracle::random_labels(20, 3, rng), 1.0};
  const auto trained = local_train(model, data, 1, 32, sgd, 5);
  nn::MlpParams manual = model;
  auto state = nn::SgdState::fresh(sgd, manual);
  nn::sgd_step(manual, nn::backward(manual, nn::forward(manual, data.features), data.labels), state);
  for (std::size_t b = 0; b < 4; ++b) {
    for (std::size_t i = 0; i < model.blocks()[b].size(); ++i) {
      CHECK(trained.blocks()[b][i] == doctest::Approx(manual.blocks()[b][i]).epsilon(1e-12));
    }
  }
  CHECK(local_train(model, data, 2, 7, sgd, 5) == local_train(model, data, 2, 7, sgd, 5));
  CHECK_FALSE(local_train(model, data, 2, 7, sgd, 5) == local_train(model, data, 2, 7, sgd, 6));
}

TEST_CASE("method names round trip") {
  for (const auto& m : {Method::fedpca(StrategyKind::kDrop), Method::fedpca(StrategyKind::kHighConfidence),
                        Method::fedavg(), Method::loss_weighted(1.0), Method::loss_weighted(0.4)}) {
    CHECK(Method::parse(m.name()) == m);
  }
  CHECK(Method::loss_weighted(0.4).slug() == "lossweighted-q0p4");
  CHECK(Method::fedpca(StrategyKind::kHighConfidence).name() == "FedPCA(HS)");
  CHECK_THROWS_AS(Method::parse("FedProx"), ConfigError);
}

TEST_CASE("round config validation names fields") {
  RoundConfig rc;
  rc.warmup_rounds = rc.total_rounds;
  CHECK_THROWS_WITH_AS(rc.validate(), doctest::Contains("warmup_rounds"), ConfigError);
  rc = {};
  rc.strategy.tau_min = 1.0;
  CHECK_THROWS_WITH_AS(rc.validate(), doctest::Contains("tau_min"), ConfigError);
}

TEST_CASE("fedavg run never partitions") {
  const auto scenario = small_scenario(0.25, 3);
  const auto report = run_experiment(scenario, small_rounds(), Method::fedavg(), 1);
  REQUIRE(report.rounds.size() == 12);
  const auto expected = fedavg_weights(std::vector<std::size_t>(8, 60));
  for (const auto& r : report.rounds) {
    CHECK_FALSE(r.analysed);
    CHECK_FALSE(r.partition.has_value());
    CHECK(r.weights.weights == expected.weights);
  }
}

TEST_CASE("fedpca run records consistent rounds") {
  const auto scenario = small_scenario(0.25, 4);
  const auto report = run_experiment(scenario, small_rounds(), Method::fedpca(StrategyKind::kDrop), 2);
  for (const auto& r : report.rounds) {
    CHECK(std::abs(r.weights.sum() - 1.0) < 1e-9);
    CHECK(r.analysed == (r.round > 3));
    for (double w : r.weights.weights) CHECK(w >= 0.0);
    if (!r.partition) continue;
    CHECK(r.partition->size() == 8);
    CHECK(r.tau >= 0.9);
    for (std::size_t k : r.partition->members(ClientSet::kNoisy)) {
      CHECK(r.weights.weights[k] == 0.0);
      CHECK(r.reliable_sizes[k] == 0);
    }
    CHECK(r.pairs.size() == 8);
  }
  const auto m = report.summary.final_window;
  CHECK(m.worst_acc <= m.avg_acc);
  CHECK(report.summary.weight_diagnostic >= 0.0);
  CHECK(report.summary.weight_diagnostic <= 1.0);
}

TEST_CASE("run_experiment is reproducible and thread-count independent") {
  const auto scenario = small_scenario(0.25, 5);
  auto rc = small_rounds();
  for (const auto& method : {Method::fedpca(StrategyKind::kHighConfidence), Method::loss_weighted(1.0)}) {
    const auto a = run_experiment(scenario, rc, method, 9);
    rc.threads = 3;
    const auto b = run_experiment(scenario, rc, method, 9);
    rc.threads = 1;
    REQUIRE(a.rounds.size() == b.rounds.size());
    for (std::size_t i = 0; i < a.rounds.size(); ++i) {
      CHECK(a.rounds[i].weights.weights == b.rounds[i].weights.weights);
      CHECK(a.rounds[i].metrics.acc_common == b.rounds[i].metrics.acc_common);
      CHECK(a.rounds[i].metrics.auc_rare == b.rounds[i].metrics.auc_rare);
      CHECK(a.rounds[i].tau == b.rounds[i].tau);
    }
    CHECK(a.summary.final_window.avg_auc == b.summary.final_window.avg_auc);
  }
}

TEST_CASE("chance gate keeps low-loss components out of the noisy set") {
  analysis::Gmm3 g;
  g.means = {analysis::Point2{1.0, 0.2}, analysis::Point2{0.2, 1.0}, analysis::Point2{1.0, 1.05}};
  g.standardized_means = g.means;
  CHECK(analysis::select_noisy_component(g) == std::optional<std::size_t>(2));
  CHECK_FALSE(gated_noisy_component(g, 3, true).has_value());  // 1.05 < ln 3
  CHECK(gated_noisy_component(g, 2, true) == std::optional<std::size_t>(2));
  CHECK(gated_noisy_component(g, 3, false) == std::optional<std::size_t>(2));
}
