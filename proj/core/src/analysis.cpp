#include "fedpca/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fedpca/error.hpp"
#include "fedpca/rng.hpp"

namespace fedpca::analysis {

// ---------------------------------------------------------------------------
// k-means

namespace {

std::size_t nearest(const Matrix& centroids, std::span<const double> x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < centroids.rows(); ++j) {
    const double d = squared_distance(centroids.row(j), x);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

Matrix plus_plus_seeding(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(k, points.cols());
  std::vector<bool> chosen(n, false);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < k; ++c) {
    chosen[pick] = true;
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
    if (c + 1 == k) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(c)));
      total += d2[i];
    }
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      const double target = u(rng);
      double acc = 0.0;
      pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc >= target) break;
      }
    } else {
      // Every remaining point coincides with a centroid: take the first unused one.
      pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
    }
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed) {
  require(k >= 1, "kmeans: k must be positive");
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  if (n < k) throw FitError("kmeans: fewer samples than clusters");

  Rng rng(seed);
  KMeansResult r;
  r.centroids = plus_plus_seeding(points, k, rng);
  r.assignments.assign(n, 0);
  r.counts.assign(k, 0);

  for (r.iterations = 1; r.iterations <= kKMeansMaxIterations; ++r.iterations) {
    std::fill(r.counts.begin(), r.counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      r.assignments[i] = nearest(r.centroids, points.row(i));
      ++r.counts[r.assignments[i]];
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (r.counts[j] != 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (r.counts[r.assignments[i]] < 2) continue;
        const double d = squared_distance(points.row(i), r.centroids.row(r.assignments[i]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      --r.counts[r.assignments[far]];
      r.assignments[far] = j;
      r.counts[j] = 1;
      std::copy(points.row(far).begin(), points.row(far).end(), r.centroids.row(j).begin());
    }

    Matrix updated(k, dim);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = updated.row(r.assignments[i]);
      auto x = points.row(i);
      for (std::size_t c = 0; c < dim; ++c) dst[c] += x[c];
    }
    double shift = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      for (double& v : updated.row(j)) v /= static_cast<double>(r.counts[j]);
      shift = std::max(shift, std::sqrt(squared_distance(updated.row(j), r.centroids.row(j))));
    }
    r.centroids = std::move(updated);
    if (shift < kKMeansTolerance) break;
  }
  r.iterations = std::min(r.iterations, kKMeansMaxIterations);

  r.global_mean.assign(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = points.row(i);
    for (std::size_t c = 0; c < dim; ++c) r.global_mean[c] += x[c];
  }
  for (double& v : r.global_mean) v /= static_cast<double>(n);
  return r;
}

double dispersion_score(const KMeansResult& km, std::size_t num_classes, bool normalize_by_size) {
  require(num_classes >= 2, "dispersion_score: need at least two classes");
  double total_count = 0.0;
  for (std::size_t c : km.counts) total_count += static_cast<double>(c);
  double scatter = 0.0;
  for (std::size_t j = 0; j < km.centroids.rows(); ++j) {
    double weight = static_cast<double>(km.counts[j]);
    if (normalize_by_size && total_count > 0.0) weight /= total_count;
    scatter += weight * squared_distance(km.global_mean, km.centroids.row(j));
  }
  const double argument = scatter / static_cast<double>(num_classes - 1);
  return std::log(std::max(argument, kDispersionFloor));
}

LossDispersionPair client_vector(const nn::MlpParams& params, const Matrix& features, const Labels& observed,
                                 std::size_t num_classes, bool normalize_by_size, std::uint64_t kmeans_seed) {
  require(features.rows() >= 1, "client_vector: client has no samples");
  const nn::ForwardTrace trace = nn::forward(params, features);
  LossDispersionPair pair;
  pair.loss = nn::cross_entropy(trace, observed);
  const std::size_t k = std::min(num_classes, features.rows());
  pair.dispersion = dispersion_score(kmeans(trace.features, k, kmeans_seed), num_classes, normalize_by_size);
  return pair;
}

// ---------------------------------------------------------------------------
// Gaussian mixture

std::array<double, 2> Covariance2::eigenvalues() const {
  const double mean = 0.5 * (xx + yy);
  const double radius = std::sqrt(0.25 * (xx - yy) * (xx - yy) + xy * xy);
  return {mean - radius, mean + radius};
}

namespace {

constexpr std::size_t kComponents = 3;

double log_gaussian(const Point2& z, const Point2& mean, const Covariance2& cov) {
  const double det = cov.determinant();
  const double dx = z.x - mean.x;
  const double dy = z.y - mean.y;
  const double quad = (cov.yy * dx * dx - 2.0 * cov.xy * dx * dy + cov.xx * dy * dy) / det;
  return -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * quad;
}

double trace_of_inverse(const Covariance2& cov) { return (cov.xx + cov.yy) / cov.determinant(); }

struct EStep {
  double objective = 0.0;
};

EStep expectation(const std::vector<Point2>& z, const Gmm3& g, double penalty,
                  std::vector<std::array<double, 3>>& resp) {
  double loglik = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    std::array<double, kComponents> logp{};
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < kComponents; ++j) {
      logp[j] = g.weights[j] > 0.0 ? std::log(g.weights[j]) + log_gaussian(z[i], g.standardized_means[j], g.covariances[j])
                                   : -std::numeric_limits<double>::infinity();
      top = std::max(top, logp[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < kComponents; ++j) sum += std::exp(logp[j] - top);
    const double lse = top + std::log(sum);
    for (std::size_t j = 0; j < kComponents; ++j) resp[i][j] = std::exp(logp[j] - lse);
    loglik += lse;
  }
  double prior = 0.0;
  for (std::size_t j = 0; j < kComponents; ++j) prior += trace_of_inverse(g.covariances[j]);
  return {loglik - 0.5 * penalty * prior};
}

void maximization(const std::vector<Point2>& z, const std::vector<std::array<double, 3>>& resp, double penalty,
                  Gmm3& g) {
  const double n = static_cast<double>(z.size());
  for (std::size_t j = 0; j < kComponents; ++j) {
    double nj = 0.0;
    Point2 mean;
    for (std::size_t i = 0; i < z.size(); ++i) {
      nj += resp[i][j];
      mean.x += resp[i][j] * z[i].x;
      mean.y += resp[i][j] * z[i].y;
    }
    if (!(nj > std::numeric_limits<double>::min())) {
      // Component lost all mass; its parameters no longer affect the fit.
      g.weights[j] = 0.0;
      continue;
    }
    mean.x /= nj;
    mean.y /= nj;
    Covariance2 cov{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double dx = z[i].x - mean.x;
      const double dy = z[i].y - mean.y;
      cov.xx += resp[i][j] * dx * dx;
      cov.xy += resp[i][j] * dx * dy;
      cov.yy += resp[i][j] * dy * dy;
    }
    cov.xx = cov.xx / nj + penalty / nj;
    cov.xy = cov.xy / nj;
    cov.yy = cov.yy / nj + penalty / nj;
    g.weights[j] = nj / n;
    g.standardized_means[j] = mean;
    g.covariances[j] = cov;
  }
  double total = g.weights[0] + g.weights[1] + g.weights[2];
  for (double& w : g.weights) w /= total;
}

}  // namespace

GmmFit fit_gmm3(const std::vector<LossDispersionPair>& pairs, std::uint64_t seed) {
  if (pairs.size() < kComponents) throw FitError("fit_gmm3: need at least 3 clients");
  const std::size_t n = pairs.size();
  const double nd = static_cast<double>(n);

  GmmFit fit;
  for (const auto& p : pairs) {
    if (!std::isfinite(p.loss) || !std::isfinite(p.dispersion)) throw FitError("fit_gmm3: non-finite input");
    fit.center.x += p.dispersion / nd;
    fit.center.y += p.loss / nd;
  }
  for (const auto& p : pairs) {
    fit.scale.x += (p.dispersion - fit.center.x) * (p.dispersion - fit.center.x) / nd;
    fit.scale.y += (p.loss - fit.center.y) * (p.loss - fit.center.y) / nd;
  }
  fit.scale.x = fit.scale.x > 1e-24 ? std::sqrt(fit.scale.x) : 1.0;
  fit.scale.y = fit.scale.y > 1e-24 ? std::sqrt(fit.scale.y) : 1.0;

  std::vector<Point2> z(n);
  Matrix zm(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = {(pairs[i].dispersion - fit.center.x) / fit.scale.x, (pairs[i].loss - fit.center.y) / fit.scale.y};
    zm(i, 0) = z[i].x;
    zm(i, 1) = z[i].y;
  }

  Covariance2 data_cov{0.0, 0.0, 0.0};
  for (const auto& p : z) {
    data_cov.xx += p.x * p.x / nd;
    data_cov.xy += p.x * p.y / nd;
    data_cov.yy += p.y * p.y / nd;
  }
  data_cov.xx += kCovarianceFloor;
  data_cov.yy += kCovarianceFloor;

  const KMeansResult init = kmeans(zm, kComponents, seed);
  Gmm3& g = fit.model;
  for (std::size_t j = 0; j < kComponents; ++j) {
    g.weights[j] = 1.0 / 3.0;
    g.standardized_means[j] = {init.centroids(j, 0), init.centroids(j, 1)};
    g.covariances[j] = data_cov;
  }

  // Penalty -(lambda/2) tr(Sigma^-1) per component; the M-step then adds
  // lambda / N_j >= kCovarianceFloor to the diagonal.
  const double penalty = kCovarianceFloor * nd;
  fit.responsibilities.assign(n, {});
  for (int it = 0; it < kGmmMaxIterations; ++it) {
    const EStep e = expectation(z, g, penalty, fit.responsibilities);
    if (!std::isfinite(e.objective)) throw FitError("fit_gmm3: EM diverged");
    fit.log_likelihood_trace.push_back(e.objective);
    g.log_likelihood = e.objective;
    const std::size_t m = fit.log_likelihood_trace.size();
    if (m >= 2 && fit.log_likelihood_trace[m - 1] - fit.log_likelihood_trace[m - 2] < kGmmTolerance) break;
    if (it + 1 == kGmmMaxIterations) break;
    maximization(z, fit.responsibilities, penalty, g);
  }

  for (std::size_t j = 0; j < kComponents; ++j) {
    g.means[j] = {g.standardized_means[j].x * fit.scale.x + fit.center.x,
                  g.standardized_means[j].y * fit.scale.y + fit.center.y};
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Mislabeled-component geometry

namespace {

double distance(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

constexpr double kCoincident = 1e-6;

}  // namespace

std::array<double, 3> component_offsets(const Gmm3& gmm) {
  std::array<double, 3> offsets{};
  for (std::size_t c = 0; c < kComponents; ++c) {
    const std::size_t a = (c + 1) % kComponents;
    const std::size_t b = (c + 2) % kComponents;
    const Point2& pa = gmm.means[a];
    const Point2& pb = gmm.means[b];
    const Point2& pc = gmm.means[c];
    if (distance(gmm.standardized_means[a], gmm.standardized_means[b]) < kCoincident) {
      const Point2 mid{0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y)};
      const double dx = pc.x - mid.x;
      const double dy = pc.y - mid.y;
      offsets[c] = (dy > 0.0 && dx >= 0.0) ? std::hypot(dx, dy) : 0.0;
      continue;
    }
    double nx = -(pb.y - pa.y);
    double ny = pb.x - pa.x;
    if (ny < 0.0 || (ny == 0.0 && nx < 0.0)) {
      nx = -nx;
      ny = -ny;
    }
    const double len = std::hypot(nx, ny);
    offsets[c] = (nx * (pc.x - pa.x) + ny * (pc.y - pa.y)) / len;
  }
  return offsets;
}

std::optional<std::size_t> select_noisy_component(const Gmm3& gmm) {
  const auto& s = gmm.standardized_means;
  if (distance(s[0], s[1]) < kCoincident && distance(s[0], s[2]) < kCoincident && distance(s[1], s[2]) < kCoincident) {
    return std::nullopt;
  }
  const auto offsets = component_offsets(gmm);
  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < kComponents; ++c) {
    if (offsets[c] > 0.0 && (!best || offsets[c] > offsets[*best])) best = c;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Partitions

char set_code(ClientSet s) {
  switch (s) {
    case ClientSet::kCommon:
      return 'c';
    case ClientSet::kRare:
      return 'r';
    case ClientSet::kNoisy:
      return 'n';
  }
  return '?';
}

std::vector<std::size_t> ClientPartition::members(ClientSet s) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < membership.size(); ++k) {
    if (membership[k] == s) out.push_back(k);
  }
  return out;
}

ClientPartition ClientPartition::all_common(std::size_t num_clients) {
  return {std::vector<ClientSet>(num_clients, ClientSet::kCommon)};
}

ClientPartition assign_sets(const GmmFit& fit, std::optional<std::size_t> noisy_component) {
  const auto& means = fit.model.means;
  std::array<ClientSet, 3> role{};
  // S_c is the higher-dispersion component; ties go to the lower loss.
  auto more_common = [&](std::size_t a, std::size_t b) {
    if (means[a].x != means[b].x) return means[a].x > means[b].x;
    return means[a].y < means[b].y;
  };
  std::size_t set_aside = 0;
  if (noisy_component) {
    set_aside = *noisy_component;
    role[set_aside] = ClientSet::kNoisy;
  } else {
    for (std::size_t j = 1; j < kComponents; ++j) {
      if (means[j].y > means[set_aside].y) set_aside = j;
    }
    role[set_aside] = ClientSet::kRare;
  }
  const std::size_t a = (set_aside + 1) % kComponents;
  const std::size_t b = (set_aside + 2) % kComponents;
  const bool a_common = more_common(a, b);
  role[a] = a_common ? ClientSet::kCommon : ClientSet::kRare;
  role[b] = a_common ? ClientSet::kRare : ClientSet::kCommon;

  ClientPartition partition;
  partition.membership.reserve(fit.responsibilities.size());
  for (const auto& r : fit.responsibilities) {
    const auto best = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    partition.membership.push_back(role[best]);
  }
  return partition;
}

SmoothingState SmoothingState::start(std::size_t num_clients, double decay) {
  require(decay >= 0.0 && decay < 1.0, "SmoothingState: decay must lie in [0, 1)");
  return {std::vector<double>(num_clients, 0.0), decay};
}

ClientPartition smooth_identification(SmoothingState& state, const ClientPartition& instant) {
  require(state.scores.size() == instant.size(), "smooth_identification: client count mismatch");
  ClientPartition effective = instant;
  for (std::size_t k = 0; k < instant.size(); ++k) {
    const double flagged = instant.membership[k] == ClientSet::kNoisy ? 1.0 : 0.0;
    state.scores[k] = state.decay * state.scores[k] + (1.0 - state.decay) * flagged;
    if (state.scores[k] >= kNoisyScoreThreshold) {
      effective.membership[k] = ClientSet::kNoisy;
    } else if (instant.membership[k] == ClientSet::kNoisy) {
      effective.membership[k] = ClientSet::kRare;
    }
  }
  return effective;
}

}  // namespace fedpca::analysis
