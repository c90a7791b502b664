#pragma once

#include <array>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "duet/corpus.hpp"
#include "duet/kmeans.hpp"
#include "duet/matrix.hpp"

namespace duet {

/// Embeddings with aligned string ids (and nothing else); the common
/// currency of the dedup and retrieval pipelines.
struct EmbeddingSet {
  std::vector<std::string> ids;
  Matrix embeddings;
};

/// Canonical bucket: a sorted combo-subset of cluster ids.
using BucketId = std::vector<std::size_t>;

/// The top_c nearest centroids by Euclidean distance (ties to the lower
/// cluster id), expanded into all sorted combo-subsets: C(top_c, combo)
/// buckets per item. Requires index.k() >= top_c.
std::vector<BucketId> assign_buckets(std::span<const double> embedding,
                                     const ClusterIndex& index, std::size_t top_c = 10,
                                     std::size_t combo = 3);

struct DuplicatePair {
  std::string query_id;
  std::string index_id;
  double cosine = 0.0;
};

/// Candidate pairs are query/index items sharing at least one bucket;
/// pairs whose cosine exceeds threshold are reported, sorted by
/// (query_id, index_id). Embeddings are normalized internally when
/// needed, so precision against the threshold is 1 by construction.
std::vector<DuplicatePair> find_near_duplicates(const EmbeddingSet& queries,
                                                const EmbeddingSet& index_items,
                                                const ClusterIndex& cluster_index,
                                                double threshold = 0.975,
                                                std::size_t top_c = 10,
                                                std::size_t combo = 3);

/// Corpus minus every query item that appears in a DuplicatePair against
/// the test embeddings. corpus_embeddings must cover every corpus id.
std::pair<Corpus, std::vector<std::string>> remove_duplicates(
    const Corpus& corpus, const EmbeddingSet& corpus_embeddings,
    const EmbeddingSet& test_embeddings, const ClusterIndex& cluster_index,
    double threshold = 0.975);

/// JSONL of (query_id, index_id, cosine).
void save_duplicate_report(const std::filesystem::path& path,
                           const std::vector<DuplicatePair>& pairs);

}  // namespace duet
