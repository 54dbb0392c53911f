#pragma once

#include <cstdint>
#include <vector>

#include "ic/gru.hpp"

namespace ic {

enum class ClusterMetric { Euclidean, Cosine };

struct KMeansOptions {
  std::size_t restarts = 10;
  std::size_t max_iterations = 100;
  ClusterMetric metric = ClusterMetric::Euclidean;
};

struct Clustering {
  std::vector<std::size_t> assignments;  // one per point, in [0, M)
  Matrix centers;                        // dim x M
  std::vector<double> distances;         // Euclidean distance to own center
  double inertia = 0.0;                  // sum of squared distances
  std::vector<double> inertia_trace;     // per Lloyd iteration of the kept restart

  std::size_t cluster_count() const { return static_cast<std::size_t>(centers.cols()); }
};

/// Lloyd's algorithm with k-means++ seeding over the columns of `points`.
/// Keeps the restart with the lowest inertia. Empty clusters are repaired
/// by moving the point farthest from its center into them.
/// Throws std::invalid_argument when clusters == 0 or clusters > point count.
Clustering cluster_latents(const Matrix& points, std::size_t clusters, std::uint64_t seed,
                           const KMeansOptions& options = {});

}  // namespace ic
