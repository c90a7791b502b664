#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "duet/encoder.hpp"
#include "duet/matrix.hpp"
#include "duet/vocab.hpp"

namespace duet {

/// Immutable brute-force cosine index: unit-norm rows, unique ids,
/// optional per-row class labels.
struct RetrievalIndex {
  std::vector<std::string> ids;
  Matrix embeddings;
  std::vector<int> labels;  // empty, or one per row
};

/// Normalizes rows and checks id uniqueness / label length.
RetrievalIndex make_index(std::vector<std::string> ids, Matrix embeddings,
                          std::vector<int> labels = {});

struct ScoredId {
  std::string id;
  double score = 0.0;
};
using RankedResult = std::vector<ScoredId>;

/// Exact top-k by dot product (cosine on unit vectors); ties break by id
/// ascending. k larger than the index returns everything.
RankedResult topk(std::span<const double> query, const RetrievalIndex& index,
                  std::size_t k);

/// Fraction of queries with any groundtruth id in their top-k.
double recall_at_k(const std::vector<RankedResult>& results,
                   const std::vector<std::set<std::string>>& groundtruth,
                   std::size_t k);

/// Arithmetic mean of R@1/5/10 over both directions.
double mean_recall(double i2t_r1, double i2t_r5, double i2t_r10, double t2i_r1,
                   double t2i_r5, double t2i_r10);

/// Per query, success iff the query's label appears among the labels of
/// its top-k neighbours in the train index.
double knn_eval(const Matrix& query_embeddings, const std::vector<int>& query_labels,
                const RetrievalIndex& train_index, std::size_t k);

/// L2-normalized mean of the rows (the prompt-ensembling combiner).
std::vector<double> ensemble_embedding(const Matrix& template_embeddings);

/// Class embedding = L2-normalized mean of the per-template text
/// embeddings, one row per class.
Matrix zero_shot_class_embeddings(const std::vector<std::vector<std::string>>& prompts,
                                  const EncoderParams& params, const Vocab& vocab,
                                  std::size_t max_len = kDefaultMaxTokens);

/// argmax cosine against the class embeddings; ties to the lower class id.
int zero_shot_classify(std::span<const double> image_embedding,
                       const Matrix& class_embeddings);

/// q = normalize(image_weight * img + sign * text_weight * txt), then
/// topk. sign -1 subtracts the text. Throws NumericError on a zero-norm
/// combination.
RankedResult composite_query(std::span<const double> image_embedding,
                             std::span<const double> text_embedding,
                             const RetrievalIndex& index, std::size_t k,
                             double text_weight = 2.0, double image_weight = 1.0,
                             int sign = +1);

/// Spearman rank correlation with mean ranks on ties.
double spearman(std::span<const double> predicted, std::span<const double> judgments);

struct SpearmanBootstrap {
  double avg = 0.0;
  double std = 0.0;
};

/// Seeded bootstrap over index resamples; avg and sample std of rho
/// across resamples.
SpearmanBootstrap spearman_bootstrap(std::span<const double> predicted,
                                     std::span<const double> judgments,
                                     std::size_t resamples = 1000,
                                     std::uint64_t seed = 0);

struct EvalReport {
  double i2t_r1 = 0.0, i2t_r5 = 0.0, i2t_r10 = 0.0;
  double t2i_r1 = 0.0, t2i_r5 = 0.0, t2i_r10 = 0.0;
  double mean_recall = 0.0;
  std::optional<double> knn_acc;
  std::optional<double> zeroshot_acc;
  std::optional<double> spearman_avg;
  std::optional<double> spearman_std;
};

/// JSON object with fixed key names; optional metrics appear only when
/// computed.
void save_eval_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport load_eval_report(const std::filesystem::path& path);

/// Embedding matrix in the shared binary format plus a JSONL sidecar of
/// ids (and labels when present) at path + ".meta.jsonl".
void save_retrieval_index(const std::filesystem::path& path, const RetrievalIndex& index);
RetrievalIndex load_retrieval_index(const std::filesystem::path& path);

}  // namespace duet
