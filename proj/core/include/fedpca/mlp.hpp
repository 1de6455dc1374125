#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "fedpca/matrix.hpp"
#include "fedpca/rng.hpp"

namespace fedpca::nn {

// Storage shared by parameters and gradients of the two-layer network.
// Layer 1 (w1, b1) is the feature extractor, layer 2 (w2, b2) the classifier.
struct LayerTensors {
  Matrix w1;  // hidden x input_dim
  Vector b1;  // hidden
  Matrix w2;  // num_classes x hidden
  Vector b2;  // num_classes

  std::size_t input_dim() const { return w1.cols(); }
  std::size_t hidden() const { return w1.rows(); }
  std::size_t num_classes() const { return w2.rows(); }

  std::array<std::span<double>, 4> blocks();
  std::array<std::span<const double>, 4> blocks() const;
  std::size_t size() const;

  bool same_shape(const LayerTensors& other) const;
  bool all_finite() const;
  // Throws ContractError unless the layer shapes agree with each other.
  void check_consistent() const;

  friend bool operator==(const LayerTensors&, const LayerTensors&) = default;
};

struct MlpParams : LayerTensors {
  static MlpParams zeros(std::size_t input_dim, std::size_t hidden, std::size_t num_classes);
  // Per-layer uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static MlpParams init(std::size_t input_dim, std::size_t hidden, std::size_t num_classes, Rng& rng);
};

struct GradientSet : LayerTensors {
  static GradientSet zeros_like(const LayerTensors& shape);
  double max_abs() const;
};

struct ForwardTrace {
  Matrix inputs;
  Matrix features;  // post-ReLU hidden activations
  Matrix logits;
  Matrix probs;

  std::size_t batch() const { return probs.rows(); }
};

struct SgdConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

struct SgdState {
  SgdConfig config;
  GradientSet velocity;

  static SgdState fresh(const SgdConfig& config, const LayerTensors& shape);
};

struct Prediction {
  int label = 0;
  double confidence = 0.0;
};

inline constexpr double kProbabilityFloor = 1e-12;

ForwardTrace forward(const MlpParams& params, const Matrix& batch);

// Mean cross-entropy; probabilities are floored at kProbabilityFloor.
double cross_entropy(const ForwardTrace& trace, std::span<const int> labels);

// Exact gradients of the mean cross-entropy (unfloored) w.r.t. all parameters.
GradientSet backward(const MlpParams& params, const ForwardTrace& trace, std::span<const int> labels);

void sgd_step(MlpParams& params, const GradientSet& grads, SgdState& state);

// Argmax of each probability row; ties resolve to the lowest class index.
std::vector<Prediction> predict(const ForwardTrace& trace);
std::vector<Prediction> predict(const MlpParams& params, const Matrix& batch);

}  // namespace fedpca::nn
