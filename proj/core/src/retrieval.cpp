#include "duet/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "duet/binio.hpp"
#include "duet/errors.hpp"
#include "duet/rng.hpp"

namespace duet {

RetrievalIndex make_index(std::vector<std::string> ids, Matrix embeddings,
                          std::vector<int> labels) {
  if (ids.size() != embeddings.rows())
    throw DataError("make_index: ids and embedding rows differ");
  if (!labels.empty() && labels.size() != ids.size())
    throw DataError("make_index: labels must be empty or one per row");
  std::set<std::string> seen(ids.begin(), ids.end());
  if (seen.size() != ids.size()) throw DataError("make_index: duplicate ids");

  for (std::size_t r = 0; r < embeddings.rows(); ++r) {
    auto row = embeddings.row(r);
    double norm = l2_norm(row);
    if (!(norm > 1e-300))
      throw NumericError("make_index: zero-norm embedding for id " + ids[r]);
    if (std::abs(norm - 1.0) > 1e-12) {
      for (double& v : row) v /= norm;
    }
  }
  return {std::move(ids), std::move(embeddings), std::move(labels)};
}

RankedResult topk(std::span<const double> query, const RetrievalIndex& index,
                  std::size_t k) {
  if (query.size() != index.embeddings.cols())
    throw DataError("topk: query dimension mismatch");
  std::size_t m = index.embeddings.rows();
  std::vector<std::size_t> order(m);
  std::vector<double> scores(m);
  for (std::size_t i = 0; i < m; ++i) {
    order[i] = i;
    scores[i] = dot(query, index.embeddings.row(i));
  }
  std::size_t take = std::min(k, m);
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return index.ids[a] < index.ids[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                    order.end(), better);

  RankedResult out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({index.ids[order[i]], scores[order[i]]});
  return out;
}

double recall_at_k(const std::vector<RankedResult>& results,
                   const std::vector<std::set<std::string>>& groundtruth,
                   std::size_t k) {
  if (results.size() != groundtruth.size())
    throw DataError("recall_at_k: results and groundtruth sizes differ");
  if (results.empty()) throw DataError("recall_at_k: no queries");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    if (groundtruth[q].empty())
      throw DataError("recall_at_k: query without groundtruth");
    std::size_t limit = std::min(k, results[q].size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (groundtruth[q].contains(results[q][i].id)) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

double mean_recall(double i2t_r1, double i2t_r5, double i2t_r10, double t2i_r1,
                   double t2i_r5, double t2i_r10) {
  return (i2t_r1 + i2t_r5 + i2t_r10 + t2i_r1 + t2i_r5 + t2i_r10) / 6.0;
}

double knn_eval(const Matrix& query_embeddings, const std::vector<int>& query_labels,
                const RetrievalIndex& train_index, std::size_t k) {
  if (query_embeddings.rows() != query_labels.size())
    throw DataError("knn_eval: queries and labels differ");
  if (train_index.labels.empty()) throw DataError("knn_eval: index has no labels");
  if (query_embeddings.rows() == 0) throw DataError("knn_eval: no queries");

  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < train_index.ids.size(); ++i) row_of[train_index.ids[i]] = i;

  std::size_t hits = 0;
  for (std::size_t q = 0; q < query_embeddings.rows(); ++q) {
    for (const ScoredId& entry : topk(query_embeddings.row(q), train_index, k)) {
      if (train_index.labels[row_of.at(entry.id)] == query_labels[q]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(query_embeddings.rows());
}

std::vector<double> ensemble_embedding(const Matrix& template_embeddings) {
  if (template_embeddings.rows() == 0)
    throw DataError("ensemble_embedding: no templates");
  std::vector<double> mean(template_embeddings.cols(), 0.0);
  for (std::size_t r = 0; r < template_embeddings.rows(); ++r) {
    auto row = template_embeddings.row(r);
    for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += row[d];
  }
  for (double& v : mean) v /= static_cast<double>(template_embeddings.rows());
  normalize_in_place(mean);
  return mean;
}

Matrix zero_shot_class_embeddings(const std::vector<std::vector<std::string>>& prompts,
                                  const EncoderParams& params, const Vocab& vocab,
                                  std::size_t max_len) {
  if (prompts.empty()) throw DataError("zero_shot: no classes");
  Matrix classes(prompts.size(), params.embed_dim());
  for (std::size_t c = 0; c < prompts.size(); ++c) {
    if (prompts[c].empty())
      throw DataError("zero_shot: class " + std::to_string(c) + " has no prompts");
    std::vector<std::vector<int>> token_ids;
    for (const std::string& p : prompts[c]) token_ids.push_back(tokenize(p, vocab, max_len));
    std::vector<double> cls = ensemble_embedding(encode_text(token_ids, params));
    auto row = classes.row(c);
    for (std::size_t d = 0; d < cls.size(); ++d) row[d] = cls[d];
  }
  return classes;
}

int zero_shot_classify(std::span<const double> image_embedding,
                       const Matrix& class_embeddings) {
  if (image_embedding.size() != class_embeddings.cols())
    throw DataError("zero_shot_classify: dimension mismatch");
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < class_embeddings.rows(); ++c) {
    double s = dot(image_embedding, class_embeddings.row(c));
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(c);
    }
  }
  return best;
}

RankedResult composite_query(std::span<const double> image_embedding,
                             std::span<const double> text_embedding,
                             const RetrievalIndex& index, std::size_t k,
                             double text_weight, double image_weight, int sign) {
  if (image_embedding.size() != text_embedding.size())
    throw DataError("composite_query: embedding dimensions differ");
  if (sign != 1 && sign != -1) throw DataError("composite_query: sign must be +1 or -1");
  std::vector<double> q(image_embedding.size());
  for (std::size_t i = 0; i < q.size(); ++i)
    q[i] = image_weight * image_embedding[i] + sign * text_weight * text_embedding[i];
  double norm = l2_norm(q);
  if (!(norm > 1e-12))
    throw NumericError("composite_query: combined query has zero norm");
  for (double& v : q) v /= norm;
  return topk(q, index, k);
}

namespace {

std::vector<double> average_ranks(std::span<const double> values) {
  std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  auto n = static_cast<double>(a.size());
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double da = a[i] - mean_a;
    double db = b[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  // All-tied inputs carry no rank signal; report zero correlation.
  if (var_a == 0.0 || var_b == 0.0) return 0.0;
  return cov / std::sqrt(var_a * var_b);
}

}  // namespace

double spearman(std::span<const double> predicted, std::span<const double> judgments) {
  if (predicted.size() != judgments.size())
    throw DataError("spearman: input lengths differ");
  if (predicted.size() < 2) throw DataError("spearman: need at least two pairs");
  std::vector<double> ra = average_ranks(predicted);
  std::vector<double> rb = average_ranks(judgments);
  return pearson(ra, rb);
}

SpearmanBootstrap spearman_bootstrap(std::span<const double> predicted,
                                     std::span<const double> judgments,
                                     std::size_t resamples, std::uint64_t seed) {
  if (predicted.size() != judgments.size())
    throw DataError("spearman: input lengths differ");
  if (predicted.size() < 2) throw DataError("spearman: need at least two pairs");
  if (resamples < 2) throw DataError("spearman_bootstrap: need at least two resamples");

  Rng rng(Rng::derive_seed(seed, "spearman-bootstrap"));
  std::size_t n = predicted.size();
  std::vector<double> rhos(resamples);
  std::vector<double> a(n), b(n);
  for (std::size_t r = 0; r < resamples; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t pick = rng.uniform_int(n);
      a[i] = predicted[pick];
      b[i] = judgments[pick];
    }
    std::vector<double> ra = average_ranks(a);
    std::vector<double> rb = average_ranks(b);
    rhos[r] = pearson(ra, rb);
  }

  SpearmanBootstrap out;
  for (double r : rhos) out.avg += r;
  out.avg /= static_cast<double>(resamples);
  double ss = 0.0;
  for (double r : rhos) ss += (r - out.avg) * (r - out.avg);
  out.std = std::sqrt(ss / static_cast<double>(resamples - 1));
  return out;
}

void save_eval_report(const std::filesystem::path& path, const EvalReport& report) {
  nlohmann::json j;
  j["i2t_r1"] = report.i2t_r1;
  j["i2t_r5"] = report.i2t_r5;
  j["i2t_r10"] = report.i2t_r10;
  j["t2i_r1"] = report.t2i_r1;
  j["t2i_r5"] = report.t2i_r5;
  j["t2i_r10"] = report.t2i_r10;
  j["mean_recall"] = report.mean_recall;
  if (report.knn_acc) j["knn_acc"] = *report.knn_acc;
  if (report.zeroshot_acc) j["zeroshot_acc"] = *report.zeroshot_acc;
  if (report.spearman_avg) j["spearman_avg"] = *report.spearman_avg;
  if (report.spearman_std) j["spearman_std"] = *report.spearman_std;

  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

EvalReport load_eval_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("bad eval report: " + std::string(e.what()));
  }
  EvalReport report;
  report.i2t_r1 = j.at("i2t_r1").get<double>();
  report.i2t_r5 = j.at("i2t_r5").get<double>();
  report.i2t_r10 = j.at("i2t_r10").get<double>();
  report.t2i_r1 = j.at("t2i_r1").get<double>();
  report.t2i_r5 = j.at("t2i_r5").get<double>();
  report.t2i_r10 = j.at("t2i_r10").get<double>();
  report.mean_recall = j.at("mean_recall").get<double>();
  if (j.contains("knn_acc")) report.knn_acc = j["knn_acc"].get<double>();
  if (j.contains("zeroshot_acc")) report.zeroshot_acc = j["zeroshot_acc"].get<double>();
  if (j.contains("spearman_avg")) report.spearman_avg = j["spearman_avg"].get<double>();
  if (j.contains("spearman_std")) report.spearman_std = j["spearman_std"].get<double>();
  return report;
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return path.string() + ".meta.jsonl";
}

}  // namespace

void save_retrieval_index(const std::filesystem::path& path, const RetrievalIndex& index) {
  write_matrix_file(path, index.embeddings);
  std::ofstream out(sidecar_path(path));
  if (!out) throw DataError("cannot open for writing: " + sidecar_path(path).string());
  for (std::size_t i = 0; i < index.ids.size(); ++i) {
    nlohmann::json j;
    j["id"] = index.ids[i];
    if (!index.labels.empty()) j["label"] = index.labels[i];
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write failed: " + sidecar_path(path).string());
}

RetrievalIndex load_retrieval_index(const std::filesystem::path& path) {
  Matrix embeddings = read_matrix_file(path);
  std::ifstream in(sidecar_path(path));
  if (!in) throw DataError("cannot open: " + sidecar_path(path).string());
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    ids.push_back(j.at("id").get<std::string>());
    if (j.contains("label")) labels.push_back(j["label"].get<int>());
  }
  if (!labels.empty() && labels.size() != ids.size())
    throw DataError("index sidecar mixes labelled and unlabelled rows");
  if (ids.size() != embeddings.rows())
    throw DataError("index sidecar row count does not match embeddings");
  return make_index(std::move(ids), std::move(embeddings), std::move(labels));
}

}  // namespace duet
