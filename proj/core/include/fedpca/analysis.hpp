#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "fedpca/matrix.hpp"
#include "fedpca/mlp.hpp"
#include "fedpca/synth_data.hpp"

namespace fedpca::analysis {

// Per-client summary sent to the server: how well the global model fits the
// observed labels (loss) and how well it separates the inputs (dispersion).
struct LossDispersionPair {
  double loss = 0.0;
  double dispersion = 0.0;
};

struct KMeansResult {
  Matrix centroids;  // k x dim
  std::vector<std::size_t> assignments;
  std::vector<std::size_t> counts;
  Vector global_mean;
  int iterations = 0;
};

inline constexpr int kKMeansMaxIterations = 100;
inline constexpr double kKMeansTolerance = 1e-6;

// k-means++ seeding followed by Lloyd iterations until the largest centroid
// shift drops below kKMeansTolerance. Empty clusters are reseeded at the point
// farthest from its centroid (taken from a cluster with more than one member),
// so every returned cluster is nonempty.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed);

inline constexpr double kDispersionFloor = 1e-12;

// log( sum_j n_j * |mean - centroid_j|^2 / (C - 1) ), argument floored at
// kDispersionFloor. With normalize_by_size, n_j becomes n_j / N.
double dispersion_score(const KMeansResult& km, std::size_t num_classes, bool normalize_by_size);

// Loss of the model on the observed labels and dispersion of its hidden-layer
// features (k-means with k = C). Labels never enter the dispersion term.
LossDispersionPair client_vector(const nn::MlpParams& params, const Matrix& features, const Labels& observed,
                                 std::size_t num_classes, bool normalize_by_size, std::uint64_t kmeans_seed);

struct Point2 {
  double x = 0.0;  // dispersion
  double y = 0.0;  // loss
};

struct Covariance2 {
  double xx = 1.0;
  double xy = 0.0;
  double yy = 1.0;

  double determinant() const { return xx * yy - xy * xy; }
  std::array<double, 2> eigenvalues() const;
};

struct Gmm3 {
  std::array<double, 3> weights{};
  std::array<Point2, 3> means{};               // original units
  std::array<Point2, 3> standardized_means{};  // z-scored units
  std::array<Covariance2, 3> covariances{};    // z-scored units
  double log_likelihood = 0.0;
};

struct GmmFit {
  Gmm3 model;
  std::vector<std::array<double, 3>> responsibilities;  // one row per client
  std::vector<double> log_likelihood_trace;             // one entry per E-step
  Point2 center;                                        // standardization offset
  Point2 scale;                                         // standardization scale
};

inline constexpr int kGmmMaxIterations = 200;
inline constexpr double kGmmTolerance = 1e-8;
inline constexpr double kCovarianceFloor = 1e-6;

// EM for a full-covariance 3-component mixture over z-scored (dispersion,
// loss) points. Covariances carry a conjugate penalty so that every
// eigenvalue stays above kCovarianceFloor; log_likelihood (and its trace) is
// the penalized objective that EM increases monotonically.
GmmFit fit_gmm3(const std::vector<LossDispersionPair>& pairs, std::uint64_t seed);

// Signed perpendicular offset of each component mean from the line through
// the other two, with the normal pointing toward higher loss. Returns the
// component with the largest positive offset, or nullopt.
std::optional<std::size_t> select_noisy_component(const Gmm3& gmm);
std::array<double, 3> component_offsets(const Gmm3& gmm);

enum class ClientSet : std::uint8_t { kCommon, kRare, kNoisy };

char set_code(ClientSet s);

struct ClientPartition {
  std::vector<ClientSet> membership;

  std::vector<std::size_t> members(ClientSet s) const;
  std::size_t size() const { return membership.size(); }

  static ClientPartition all_common(std::size_t num_clients);
};

ClientPartition assign_sets(const GmmFit& fit, std::optional<std::size_t> noisy_component);

struct SmoothingState {
  std::vector<double> scores;
  double decay = 0.7;

  static SmoothingState start(std::size_t num_clients, double decay);
};

inline constexpr double kNoisyScoreThreshold = 0.5;

// EMA of the noisy indicator; clients at or above kNoisyScoreThreshold form
// the effective noisy set. Other clients keep their instantaneous set, with
// instantaneous-noisy clients that are not effectively noisy moved to S_r.
ClientPartition smooth_identification(SmoothingState& state, const ClientPartition& instant);

}  // namespace fedpca::analysis
