#include "duet/dedup.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <json.hpp>

#include "duet/errors.hpp"

namespace duet {

namespace {

void check_embedding_set(const EmbeddingSet& set, const char* which) {
  if (set.ids.size() != set.embeddings.rows())
    throw DataError(std::string(which) + ": ids and embedding rows differ");
  std::set<std::string> seen(set.ids.begin(), set.ids.end());
  if (seen.size() != set.ids.size())
    throw DataError(std::string(which) + ": duplicate ids");
}

Matrix normalized_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double norm = l2_norm(row);
    if (!(norm > 1e-300))
      throw NumericError("cannot normalize zero-norm embedding row " + std::to_string(r));
    if (std::abs(norm - 1.0) > 1e-12) {
      for (double& v : row) v /= norm;
    }
  }
  return out;
}

}  // namespace

std::vector<BucketId> assign_buckets(std::span<const double> embedding,
                                     const ClusterIndex& index, std::size_t top_c,
                                     std::size_t combo) {
  if (index.k() < top_c)
    throw DataError("assign_buckets: index has fewer clusters than top_c");
  if (combo < 1 || combo > top_c)
    throw DataError("assign_buckets: need 1 <= combo <= top_c");
  if (embedding.size() != index.dim())
    throw DataError("assign_buckets: dimension mismatch");

  // top_c nearest centroids, ties to the lower cluster id.
  std::vector<std::pair<double, std::size_t>> dist(index.k());
  for (std::size_t j = 0; j < index.k(); ++j) {
    double d2 = 0.0;
    auto c = index.centroids.row(j);
    for (std::size_t t = 0; t < c.size(); ++t) {
      double d = embedding[t] - c[t];
      d2 += d * d;
    }
    dist[j] = {d2, j};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(top_c),
                    dist.end());
  std::vector<std::size_t> nearest(top_c);
  for (std::size_t t = 0; t < top_c; ++t) nearest[t] = dist[t].second;
  std::sort(nearest.begin(), nearest.end());

  // All sorted combo-subsets of the nearest cluster ids.
  std::vector<BucketId> buckets;
  std::vector<std::size_t> choose(combo);
  for (std::size_t t = 0; t < combo; ++t) choose[t] = t;
  while (true) {
    BucketId bucket(combo);
    for (std::size_t t = 0; t < combo; ++t) bucket[t] = nearest[choose[t]];
    buckets.push_back(std::move(bucket));

    std::size_t pos = combo;
    while (pos > 0 && choose[pos - 1] == top_c - combo + pos - 1) --pos;
    if (pos == 0) break;
    ++choose[pos - 1];
    for (std::size_t t = pos; t < combo; ++t) choose[t] = choose[t - 1] + 1;
  }
  return buckets;
}

std::vector<DuplicatePair> find_near_duplicates(const EmbeddingSet& queries,
                                                const EmbeddingSet& index_items,
                                                const ClusterIndex& cluster_index,
                                                double threshold, std::size_t top_c,
                                                std::size_t combo) {
  check_embedding_set(queries, "queries");
  check_embedding_set(index_items, "index_items");
  Matrix q = normalized_rows(queries.embeddings);
  Matrix x = normalized_rows(index_items.embeddings);

  std::map<BucketId, std::vector<std::size_t>> bucket_members;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (BucketId& b : assign_buckets(x.row(i), cluster_index, top_c, combo))
      bucket_members[std::move(b)].push_back(i);
  }

  std::vector<DuplicatePair> pairs;
  for (std::size_t qi = 0; qi < q.rows(); ++qi) {
    std::set<std::size_t> candidates;
    for (const BucketId& b : assign_buckets(q.row(qi), cluster_index, top_c, combo)) {
      auto it = bucket_members.find(b);
      if (it == bucket_members.end()) continue;
      candidates.insert(it->second.begin(), it->second.end());
    }
    for (std::size_t xi : candidates) {
      double cosine = dot(q.row(qi), x.row(xi));
      if (cosine > threshold)
        pairs.push_back({queries.ids[qi], index_items.ids[xi], cosine});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const DuplicatePair& a, const DuplicatePair& b) {
    if (a.query_id != b.query_id) return a.query_id < b.query_id;
    return a.index_id < b.index_id;
  });
  return pairs;
}

std::pair<Corpus, std::vector<std::string>> remove_duplicates(
    const Corpus& corpus, const EmbeddingSet& corpus_embeddings,
    const EmbeddingSet& test_embeddings, const ClusterIndex& cluster_index,
    double threshold) {
  check_embedding_set(corpus_embeddings, "corpus_embeddings");
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < corpus_embeddings.ids.size(); ++i)
    row_of[corpus_embeddings.ids[i]] = i;

  EmbeddingSet queries;
  queries.embeddings = Matrix(corpus.size(), corpus_embeddings.embeddings.cols());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto it = row_of.find(corpus[i].id);
    if (it == row_of.end())
      throw DataError("remove_duplicates: missing embedding for id " + corpus[i].id);
    queries.ids.push_back(corpus[i].id);
    auto src = corpus_embeddings.embeddings.row(it->second);
    auto dst = queries.embeddings.row(i);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c];
  }

  std::vector<DuplicatePair> pairs =
      find_near_duplicates(queries, test_embeddings, cluster_index, threshold);
  std::set<std::string> flagged;
  for (const DuplicatePair& p : pairs) flagged.insert(p.query_id);

  Corpus kept;
  std::vector<std::string> removed;
  for (const ImageTextPair& pair : corpus) {
    if (flagged.contains(pair.id)) {
      removed.push_back(pair.id);
    } else {
      kept.push_back(pair);
    }
  }
  return {std::move(kept), std::move(removed)};
}

void save_duplicate_report(const std::filesystem::path& path,
                           const std::vector<DuplicatePair>& pairs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (const DuplicatePair& p : pairs) {
    nlohmann::json j;
    j["query_id"] = p.query_id;
    j["index_id"] = p.index_id;
    j["cosine"] = p.cosine;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace duet
