#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "duet/matrix.hpp"

namespace duet {

struct ClusterIndex {
  Matrix centroids;  // k x d
  std::vector<double> iteration_log;  // objective after each Lloyd iteration

  std::size_t k() const { return centroids.rows(); }
  std::size_t dim() const { return centroids.cols(); }
};

/// Lloyd's algorithm with k-means++ seeding, deterministic given seed.
/// Stops when assignments are stable or after max_iters. An iteration
/// that empties a cluster reseeds it to the point farthest from its own
/// centroid (singleton clusters are never robbed), which keeps the
/// objective nonincreasing. Requires n >= k >= 1.
ClusterIndex kmeans(const Matrix& points, std::size_t k, std::size_t max_iters,
                    std::uint64_t seed);

/// Index of the nearest centroid by Euclidean distance, ties to the lower
/// cluster id.
std::size_t nearest_centroid(std::span<const double> point, const ClusterIndex& index);

/// Same binary layout as every embedding file: k and d as 64-bit
/// little-endian integers, then row-major 64-bit floats. The iteration
/// log is not persisted.
void save_cluster_index(const std::filesystem::path& path, const ClusterIndex& index);
ClusterIndex load_cluster_index(const std::filesystem::path& path);

}  // namespace duet
