#include "duet/kmeans.hpp"

#include <cmath>
#include <limits>

#include "duet/binio.hpp"
#include "duet/errors.hpp"
#include "duet/rng.hpp"

namespace duet {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

// k-means++ style seeding: first centroid uniform, the rest D^2-sampled.
Matrix seed_centroids(const Matrix& points, std::size_t k, Rng& rng) {
  std::size_t n = points.rows();
  Matrix centroids(k, points.cols());
  std::vector<double> best_d2(n, std::numeric_limits<double>::infinity());

  std::size_t first = rng.uniform_int(n);
  for (std::size_t c = 0; c < points.cols(); ++c) centroids(0, c) = points(first, c);

  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best_d2[i] = std::min(best_d2[i], squared_distance(points.row(i),
                                                         centroids.row(j - 1)));
      total += best_d2[i];
    }
    std::size_t pick;
    if (total > 0.0) {
      double threshold = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += best_d2[i];
        if (acc >= threshold) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_int(n);
    }
    for (std::size_t c = 0; c < points.cols(); ++c) centroids(j, c) = points(pick, c);
  }
  return centroids;
}

}  // namespace

ClusterIndex kmeans(const Matrix& points, std::size_t k, std::size_t max_iters,
                    std::uint64_t seed) {
  std::size_t n = points.rows();
  if (k < 1) throw DataError("kmeans: k must be >= 1");
  if (n < k) throw DataError("kmeans: need at least k points");
  if (!all_finite(points.values())) throw DataError("kmeans: non-finite input");

  Rng rng(Rng::derive_seed(seed, "kmeans"));
  ClusterIndex index;
  index.centroids = seed_centroids(points, k, rng);

  std::vector<std::size_t> assignment(n, 0), previous;
  std::vector<std::size_t> cluster_size(k, 0);

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    // Assign to the nearest centroid; ties go to the lower cluster id.
    cluster_size.assign(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d2 = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        double d2 = squared_distance(points.row(i), index.centroids.row(j));
        if (d2 < best_d2) {
          best_d2 = d2;
          best = j;
        }
      }
      assignment[i] = best;
      ++cluster_size[best];
    }

    // Reseed empty clusters with the point farthest from its own centroid.
    // Never rob a singleton cluster, so the move always lowers the
    // objective and can be repeated until no cluster is empty.
    for (std::size_t j = 0; j < k; ++j) {
      if (cluster_size[j] > 0) continue;
      std::size_t farthest = n;
      double farthest_d2 = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (cluster_size[assignment[i]] < 2) continue;
        double d2 = squared_distance(points.row(i), index.centroids.row(assignment[i]));
        if (d2 > farthest_d2) {
          farthest_d2 = d2;
          farthest = i;
        }
      }
      --cluster_size[assignment[farthest]];
      assignment[farthest] = j;
      ++cluster_size[j];
    }

    // Means of the new assignment.
    Matrix sums(k, points.cols());
    for (std::size_t i = 0; i < n; ++i) {
      auto row = sums.row(assignment[i]);
      auto p = points.row(i);
      for (std::size_t c = 0; c < p.size(); ++c) row[c] += p[c];
    }
    for (std::size_t j = 0; j < k; ++j) {
      auto row = sums.row(j);
      for (double& v : row) v /= static_cast<double>(cluster_size[j]);
      auto dst = index.centroids.row(j);
      for (std::size_t c = 0; c < row.size(); ++c) dst[c] = row[c];
    }

    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      objective += squared_distance(points.row(i), index.centroids.row(assignment[i]));
    index.iteration_log.push_back(objective);

    if (assignment == previous) break;
    previous = assignment;
  }
  return index;
}

std::size_t nearest_centroid(std::span<const double> point, const ClusterIndex& index) {
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < index.k(); ++j) {
    double d2 = squared_distance(point, index.centroids.row(j));
    if (d2 < best_d2) {
      best_d2 = d2;
      best = j;
    }
  }
  return best;
}

void save_cluster_index(const std::filesystem::path& path, const ClusterIndex& index) {
  write_matrix_file(path, index.centroids);
}

ClusterIndex load_cluster_index(const std::filesystem::path& path) {
  ClusterIndex index;
  index.centroids = read_matrix_file(path);
  return index;
}

}  // namespace duet
