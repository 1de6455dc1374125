#include "fedpca/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "fedpca/error.hpp"

namespace fedpca::nn {

std::array<std::span<double>, 4> LayerTensors::blocks() {
  return {w1.values(), std::span<double>(b1), w2.values(), std::span<double>(b2)};
}

std::array<std::span<const double>, 4> LayerTensors::blocks() const {
  return {w1.values(), std::span<const double>(b1), w2.values(), std::span<const double>(b2)};
}

std::size_t LayerTensors::size() const {
  return w1.values().size() + b1.size() + w2.values().size() + b2.size();
}

bool LayerTensors::same_shape(const LayerTensors& other) const {
  return w1.rows() == other.w1.rows() && w1.cols() == other.w1.cols() &&
         w2.rows() == other.w2.rows() && w2.cols() == other.w2.cols() &&
         b1.size() == other.b1.size() && b2.size() == other.b2.size();
}

bool LayerTensors::all_finite() const {
  for (auto block : blocks()) {
    for (double v : block) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void LayerTensors::check_consistent() const {
  require(w2.cols() == w1.rows(), "mlp: w2 cols must equal w1 rows");
  require(b1.size() == w1.rows(), "mlp: b1 length must equal hidden size");
  require(b2.size() == w2.rows(), "mlp: b2 length must equal class count");
}

MlpParams MlpParams::zeros(std::size_t input_dim, std::size_t hidden, std::size_t num_classes) {
  MlpParams p;
  p.w1 = Matrix(hidden, input_dim);
  p.b1.assign(hidden, 0.0);
  p.w2 = Matrix(num_classes, hidden);
  p.b2.assign(num_classes, 0.0);
  return p;
}

MlpParams MlpParams::init(std::size_t input_dim, std::size_t hidden, std::size_t num_classes, Rng& rng) {
  MlpParams p = zeros(input_dim, hidden, num_classes);
  auto fill = [&rng](std::span<double> values, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : values) v = dist(rng);
  };
  fill(p.w1.values(), input_dim);
  fill(p.b1, input_dim);
  fill(p.w2.values(), hidden);
  fill(p.b2, hidden);
  return p;
}

GradientSet GradientSet::zeros_like(const LayerTensors& shape) {
  GradientSet g;
  g.w1 = Matrix(shape.w1.rows(), shape.w1.cols());
  g.b1.assign(shape.b1.size(), 0.0);
  g.w2 = Matrix(shape.w2.rows(), shape.w2.cols());
  g.b2.assign(shape.b2.size(), 0.0);
  return g;
}

double GradientSet::max_abs() const {
  double m = 0.0;
  for (auto block : blocks()) {
    for (double v : block) m = std::max(m, std::abs(v));
  }
  return m;
}

SgdState SgdState::fresh(const SgdConfig& config, const LayerTensors& shape) {
  return SgdState{config, GradientSet::zeros_like(shape)};
}

namespace {

// out = in * w^T + b, row by row.
Matrix affine(const Matrix& in, const Matrix& w, const Vector& b) {
  Matrix out(in.rows(), w.rows());
  for (std::size_t i = 0; i < in.rows(); ++i) {
    auto x = in.row(i);
    for (std::size_t j = 0; j < w.rows(); ++j) {
      auto wj = w.row(j);
      double s = b[j];
      for (std::size_t k = 0; k < x.size(); ++k) s += wj[k] * x[k];
      out(i, j) = s;
    }
  }
  return out;
}

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t num_classes) {
  require(labels.size() == rows, "labels length must equal batch rows");
  for (int y : labels) {
    require(y >= 0 && static_cast<std::size_t>(y) < num_classes, "label out of range");
  }
}

}  // namespace

ForwardTrace forward(const MlpParams& params, const Matrix& batch) {
  params.check_consistent();
  require(batch.cols() == params.input_dim() || batch.rows() == 0,
          "forward: batch cols must equal input_dim");
  ForwardTrace t;
  t.inputs = batch.rows() == 0 ? Matrix(0, params.input_dim()) : batch;
  t.features = affine(t.inputs, params.w1, params.b1);
  for (double& v : t.features.values()) v = std::max(v, 0.0);
  t.logits = affine(t.features, params.w2, params.b2);
  t.probs = Matrix(t.logits.rows(), t.logits.cols());
  for (std::size_t i = 0; i < t.logits.rows(); ++i) {
    auto z = t.logits.row(i);
    auto p = t.probs.row(i);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      p[c] = std::exp(z[c] - zmax);
      sum += p[c];
    }
    for (double& v : p) v /= sum;
  }
  return t;
}

double cross_entropy(const ForwardTrace& trace, std::span<const int> labels) {
  check_labels(labels, trace.batch(), trace.probs.cols());
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    total -= std::log(std::max(trace.probs(i, static_cast<std::size_t>(labels[i])), kProbabilityFloor));
  }
  return total / static_cast<double>(labels.size());
}

GradientSet backward(const MlpParams& params, const ForwardTrace& trace, std::span<const int> labels) {
  check_labels(labels, trace.batch(), params.num_classes());
  require(trace.features.cols() == params.hidden(), "backward: trace does not match params");
  GradientSet g = GradientSet::zeros_like(params);
  const std::size_t n = trace.batch();
  if (n == 0) return g;
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t classes = params.num_classes();
  const std::size_t hidden = params.hidden();

  Vector dlogits(classes);
  Vector dhidden(hidden);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = trace.probs.row(i);
    auto h = trace.features.row(i);
    auto x = trace.inputs.row(i);
    for (std::size_t c = 0; c < classes; ++c) {
      dlogits[c] = (p[c] - (static_cast<int>(c) == labels[i] ? 1.0 : 0.0)) * inv_n;
    }
    std::fill(dhidden.begin(), dhidden.end(), 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      g.b2[c] += dlogits[c];
      auto gw2 = g.w2.row(c);
      auto w2 = params.w2.row(c);
      for (std::size_t j = 0; j < hidden; ++j) {
        gw2[j] += dlogits[c] * h[j];
        dhidden[j] += dlogits[c] * w2[j];
      }
    }
    for (std::size_t j = 0; j < hidden; ++j) {
      if (h[j] <= 0.0) continue;
      g.b1[j] += dhidden[j];
      auto gw1 = g.w1.row(j);
      for (std::size_t k = 0; k < x.size(); ++k) gw1[k] += dhidden[j] * x[k];
    }
  }
  return g;
}

void sgd_step(MlpParams& params, const GradientSet& grads, SgdState& state) {
  require(params.same_shape(grads) && params.same_shape(state.velocity), "sgd_step: shape mismatch");
  const auto& cfg = state.config;
  auto p_blocks = params.blocks();
  auto g_blocks = grads.blocks();
  auto v_blocks = state.velocity.blocks();
  for (std::size_t b = 0; b < p_blocks.size(); ++b) {
    auto p = p_blocks[b];
    auto g = g_blocks[b];
    auto v = v_blocks[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = cfg.momentum * v[i] + g[i] + cfg.weight_decay * p[i];
      p[i] -= cfg.learning_rate * v[i];
    }
  }
}

std::vector<Prediction> predict(const ForwardTrace& trace) {
  std::vector<Prediction> out(trace.batch());
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto p = trace.probs.row(i);
    const auto best = std::max_element(p.begin(), p.end());  // first maximum
    out[i] = {static_cast<int>(best - p.begin()), *best};
  }
  return out;
}

std::vector<Prediction> predict(const MlpParams& params, const Matrix& batch) {
  return predict(forward(params, batch));
}

}  // namespace fedpca::nn
