#include "ic/kmeans.hpp"

#include <limits>
#include <stdexcept>

#include "ic/rng.hpp"

namespace ic {

namespace {

struct Run {
  std::vector<std::size_t> assign;
  Matrix centers;
  std::vector<double> sq_dist;
  double inertia = 0.0;
  std::vector<double> trace;
};

Matrix seed_centers(const Matrix& x, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.cols());
  Matrix centers(x.rows(), static_cast<Index>(k));
  std::vector<char> chosen(n, 0);
  std::size_t first = rng.index(n);
  centers.col(0) = x.col(static_cast<Index>(first));
  chosen[first] = 1;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (x.col(static_cast<Index>(i)) - centers.col(0)).squaredNorm();

  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        pick = i;
        target -= d2[i];
        if (target < 0.0) break;
      }
    }
    if (pick == n) {
      // Every remaining point coincides with a center: take an unused index.
      std::vector<std::size_t> unused;
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) unused.push_back(i);
      pick = unused[rng.index(unused.size())];
    }
    chosen[pick] = 1;
    centers.col(static_cast<Index>(c)) = x.col(static_cast<Index>(pick));
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], (x.col(static_cast<Index>(i)) - centers.col(static_cast<Index>(c))).squaredNorm());
  }
  return centers;
}

double assign_points(const Matrix& x, const Matrix& centers, std::vector<std::size_t>& assign,
                     std::vector<double>& sq_dist) {
  double inertia = 0.0;
  for (Index i = 0; i < x.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (Index c = 0; c < centers.cols(); ++c) {
      const double d = (x.col(i) - centers.col(c)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<std::size_t>(c);
      }
    }
    assign[static_cast<std::size_t>(i)] = arg;
    sq_dist[static_cast<std::size_t>(i)] = best;
    inertia += best;
  }
  return inertia;
}

/// Returns the inertia after repair.
double repair_empty(const Matrix& x, Matrix& centers, std::vector<std::size_t>& assign, std::vector<double>& sq_dist,
                    double inertia) {
  const auto k = static_cast<std::size_t>(centers.cols());
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t a : assign) ++sizes[a];
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] != 0) continue;
    std::size_t far = assign.size();
    for (std::size_t i = 0; i < assign.size(); ++i) {
      if (sizes[assign[i]] < 2) continue;
      if (far == assign.size() || sq_dist[i] > sq_dist[far]) far = i;
    }
    if (far == assign.size()) continue;
    --sizes[assign[far]];
    ++sizes[c];
    inertia -= sq_dist[far];
    assign[far] = c;
    sq_dist[far] = 0.0;
    centers.col(static_cast<Index>(c)) = x.col(static_cast<Index>(far));
  }
  return inertia;
}

void update_centers(const Matrix& x, const std::vector<std::size_t>& assign, Matrix& centers) {
  const Matrix previous = centers;
  centers.setZero();
  std::vector<std::size_t> sizes(static_cast<std::size_t>(centers.cols()), 0);
  for (std::size_t i = 0; i < assign.size(); ++i) {
    centers.col(static_cast<Index>(assign[i])) += x.col(static_cast<Index>(i));
    ++sizes[assign[i]];
  }
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    if (sizes[c] > 0)
      centers.col(static_cast<Index>(c)) /= static_cast<double>(sizes[c]);
    else
      centers.col(static_cast<Index>(c)) = previous.col(static_cast<Index>(c));
  }
}

Run lloyd(const Matrix& x, std::size_t k, Rng& rng, std::size_t max_iterations) {
  Run run;
  const auto n = static_cast<std::size_t>(x.cols());
  run.centers = seed_centers(x, k, rng);
  run.assign.assign(n, k);
  run.sq_dist.assign(n, 0.0);
  std::vector<std::size_t> previous;
  for (std::size_t it = 0; it < max_iterations; ++it) {
    previous = run.assign;
    double inertia = assign_points(x, run.centers, run.assign, run.sq_dist);
    inertia = repair_empty(x, run.centers, run.assign, run.sq_dist, inertia);
    run.trace.push_back(inertia);
    if (run.assign == previous) break;
    update_centers(x, run.assign, run.centers);
  }
  update_centers(x, run.assign, run.centers);
  run.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    run.sq_dist[i] = (x.col(static_cast<Index>(i)) - run.centers.col(static_cast<Index>(run.assign[i]))).squaredNorm();
    run.inertia += run.sq_dist[i];
  }
  return run;
}

}  // namespace

Clustering cluster_latents(const Matrix& points, std::size_t clusters, std::uint64_t seed,
                           const KMeansOptions& options) {
  const auto n = static_cast<std::size_t>(points.cols());
  if (clusters == 0) throw std::invalid_argument("cluster_latents: cluster count must be >= 1");
  if (clusters > n)
    throw std::invalid_argument("cluster_latents: " + std::to_string(clusters) + " clusters requested for " +
                                std::to_string(n) + " points");
  Matrix x = points;
  if (options.metric == ClusterMetric::Cosine) {
    for (Index i = 0; i < x.cols(); ++i) {
      const double norm = x.col(i).norm();
      if (norm > 0.0) x.col(i) /= norm;
    }
  }

  Rng rng(seed);
  Run best;
  bool have = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, options.restarts); ++r) {
    Run run = lloyd(x, clusters, rng, std::max<std::size_t>(1, options.max_iterations));
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }

  Clustering out;
  out.assignments = std::move(best.assign);
  out.centers = std::move(best.centers);
  out.inertia = best.inertia;
  out.inertia_trace = std::move(best.trace);
  out.distances.reserve(n);
  for (double d2 : best.sq_dist) out.distances.push_back(std::sqrt(d2));
  return out;
}

}  // namespace ic
