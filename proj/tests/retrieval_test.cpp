#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "duet/corpus.hpp"
#include "duet/errors.hpp"
#include "duet/retrieval.hpp"
#include "duet/rng.hpp"
#include "test_util.hpp"

using namespace duet;
using duet::testing::TempDir;
using duet::testing::random_unit_rows;

namespace {

RetrievalIndex small_index(std::size_t m, std::size_t d, std::uint64_t seed,
                           std::vector<int> labels = {}) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < m; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "item%03zu", i);
    ids.push_back(buf);
  }
  return make_index(std::move(ids), random_unit_rows(m, d, seed), std::move(labels));
}

// Full-sort reference for topk.
RankedResult topk_oracle(std::span<const double> query, const RetrievalIndex& index,
                         std::size_t k) {
  std::vector<ScoredId> all;
  for (std::size_t i = 0; i < index.embeddings.rows(); ++i)
    all.push_back({index.ids[i], dot(query, index.embeddings.row(i))});
  std::sort(all.begin(), all.end(), [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

}  // namespace

TEST_CASE("topk finds an exact match first with score 1") {
  RetrievalIndex index = small_index(12, 6, 1);
  std::vector<double> query(index.embeddings.row(4).begin(),
                            index.embeddings.row(4).end());
  RankedResult r = topk(query, index, 3);
  REQUIRE(r.size() == 3);
  CHECK(r[0].id == "item004");
  CHECK(r[0].score == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r[0].score >= r[1].score);
  CHECK(r[1].score >= r[2].score);
}

TEST_CASE("topk with k larger than the index returns everything") {
  RetrievalIndex index = small_index(5, 4, 2);
  std::vector<double> query(4, 0.5);
  CHECK(topk(query, index, 50).size() == 5);
}

TEST_CASE("topk agrees with the full-sort oracle on random instances") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RetrievalIndex index = small_index(20, 5, 300 + seed);
    Matrix queries = random_unit_rows(4, 5, 400 + seed);
    for (std::size_t q = 0; q < queries.rows(); ++q) {
      for (std::size_t k : {1u, 3u, 7u, 20u}) {
        RankedResult got = topk(queries.row(q), index, k);
        RankedResult want = topk_oracle(queries.row(q), index, k);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
          CHECK(got[i].id == want[i].id);
          CHECK(got[i].score == want[i].score);
        }
      }
    }
  }
}

TEST_CASE("topk breaks score ties by ascending id") {
  Matrix emb(3, 2);
  emb(0, 0) = 1.0;
  emb(1, 0) = 1.0;  // duplicate of row 0
  emb(2, 1) = 1.0;
  RetrievalIndex index = make_index({"zz", "aa", "mm"}, emb);
  std::vector<double> query{1.0, 0.0};
  RankedResult r = topk(query, index, 3);
  CHECK(r[0].id == "aa");
  CHECK(r[1].id == "zz");
  CHECK(r[2].id == "mm");
}

TEST_CASE("recall_at_k counts queries with a hit in the prefix") {
  RankedResult ranked;
  for (int i = 0; i < 10; ++i) ranked.push_back({"r" + std::to_string(i), 1.0 - 0.05 * i});

  SUBCASE("groundtruth at rank 1") {
    CHECK(recall_at_k({ranked}, {{"r0"}}, 1) == 1.0);
  }
  SUBCASE("groundtruth at rank 7") {
    CHECK(recall_at_k({ranked}, {{"r6"}}, 5) == 0.0);
    CHECK(recall_at_k({ranked}, {{"r6"}}, 10) == 1.0);
  }
  SUBCASE("mixed ranks give fractional recall") {
    CHECK(recall_at_k({ranked, ranked}, {{"r0"}, {"r2"}}, 1) == 0.5);
  }
  SUBCASE("recall is monotone in k") {
    std::vector<std::set<std::string>> gt{{"r4"}};
    double prev = 0.0;
    for (std::size_t k = 1; k <= 10; ++k) {
      double r = recall_at_k({ranked}, gt, k);
      CHECK(r >= prev);
      prev = r;
    }
  }
  SUBCASE("empty groundtruth is rejected") {
    CHECK_THROWS_AS(recall_at_k({ranked}, {{}}, 1), DataError);
  }
}

TEST_CASE("mean_recall averages its six inputs") {
  CHECK(mean_recall(1, 1, 1, 1, 1, 1) == 1.0);
  CHECK(mean_recall(0.6, 0.8, 1.0, 0.4, 0.6, 0.8) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(mean_recall(0.4, 0.6, 0.8, 0.6, 0.8, 1.0) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("knn_eval scores label presence in the top-k") {
  Matrix emb(4, 3);
  emb(0, 0) = 1.0;
  emb(1, 1) = 1.0;
  emb(2, 2) = 1.0;
  emb(3, 0) = 0.9;
  emb(3, 1) = 0.1;
  RetrievalIndex index = make_index({"a", "b", "c", "d"}, emb, {0, 1, 2, 0});

  Matrix query(1, 3);
  query(0, 0) = 1.0;
  SUBCASE("identical item with the same label succeeds at k=1") {
    CHECK(knn_eval(query, {0}, index, 1) == 1.0);
  }
  SUBCASE("label absent from the index contributes zero") {
    CHECK(knn_eval(query, {9}, index, 4) == 0.0);
  }
  SUBCASE("larger k rescues a near miss") {
    CHECK(knn_eval(query, {1}, index, 1) == 0.0);
    CHECK(knn_eval(query, {1}, index, 3) == 1.0);
  }
}

TEST_CASE("knn_eval matches an exhaustive oracle on a 30-item instance") {
  Rng rng(77);
  Matrix emb = random_unit_rows(30, 6, 501);
  std::vector<int> labels(30);
  for (int& l : labels) l = static_cast<int>(rng.uniform_int(4));
  std::vector<std::string> ids;
  for (int i = 0; i < 30; ++i) ids.push_back("t" + std::to_string(i));
  RetrievalIndex index = make_index(ids, emb, labels);

  Matrix queries = random_unit_rows(12, 6, 502);
  std::vector<int> qlabels(12);
  for (int& l : qlabels) l = static_cast<int>(rng.uniform_int(4));

  for (std::size_t k : {1u, 3u, 10u}) {
    double got = knn_eval(queries, qlabels, index, k);

    std::size_t hits = 0;
    for (std::size_t q = 0; q < queries.rows(); ++q) {
      std::vector<std::pair<double, std::size_t>> scored;
      for (std::size_t i = 0; i < emb.rows(); ++i)
        scored.push_back({dot(queries.row(q), emb.row(i)), i});
      std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return ids[a.second] < ids[b.second];
      });
      bool hit = false;
      for (std::size_t i = 0; i < k && i < scored.size(); ++i)
        hit = hit || labels[scored[i].second] == qlabels[q];
      if (hit) ++hits;
    }
    CHECK(got == doctest::Approx(hits / 12.0).epsilon(1e-12));
  }
}

TEST_CASE("ensemble_embedding is the normalized template mean") {
  Matrix templates(2, 2);
  templates(0, 0) = 1.0;  // e1 = (1, 0)
  templates(1, 1) = 1.0;  // e2 = (0, 1)
  std::vector<double> cls = ensemble_embedding(templates);
  double half_sqrt2 = std::sqrt(2.0) / 2.0;
  CHECK(cls[0] == doctest::Approx(half_sqrt2).epsilon(1e-12));
  CHECK(cls[1] == doctest::Approx(half_sqrt2).epsilon(1e-12));
}

TEST_CASE("zero-shot classification picks the nearest class embedding") {
  Corpus corpus = generate_synthetic_corpus(64, 4, 6, 0.0, 91);
  Vocab vocab = build_vocab(corpus, 256);
  EncoderParams params = init_params(6, 8, 8, 8, vocab.size(), 13);
  auto prompts = synthetic_class_prompts(4, 3, 91);

  Matrix classes = zero_shot_class_embeddings(prompts, params, vocab);
  REQUIRE(classes.rows() == 4);
  for (std::size_t c = 0; c < 4; ++c)
    CHECK(std::abs(l2_norm(classes.row(c)) - 1.0) < 1e-9);

  // An image embedding equal to a class embedding retrieves that class.
  for (std::size_t c = 0; c < 4; ++c)
    CHECK(zero_shot_classify(classes.row(c), classes) == static_cast<int>(c));

  // Doubling every template of a class leaves its mean, and therefore the
  // class embedding, unchanged.
  auto doubled = prompts;
  doubled[2].insert(doubled[2].end(), prompts[2].begin(), prompts[2].end());
  Matrix doubled_classes = zero_shot_class_embeddings(doubled, params, vocab);
  for (std::size_t d = 0; d < classes.cols(); ++d)
    CHECK(doubled_classes(2, d) == doctest::Approx(classes(2, d)).epsilon(1e-12));

  // One template per class reduces to nearest-template classification.
  std::vector<std::vector<std::string>> single{{prompts[0][0]}, {prompts[1][0]}};
  Matrix single_classes = zero_shot_class_embeddings(single, params, vocab);
  Matrix t0 = encode_text({tokenize(prompts[0][0], vocab)}, params);
  for (std::size_t d = 0; d < t0.cols(); ++d)
    CHECK(single_classes(0, d) == doctest::Approx(t0(0, d)).epsilon(1e-12));
}

TEST_CASE("zero_shot_classify breaks ties toward the lower class id") {
  Matrix classes(2, 2);
  classes(0, 0) = 1.0;
  classes(1, 0) = 1.0;  // identical class embeddings
  std::vector<double> img{1.0, 0.0};
  CHECK(zero_shot_classify(img, classes) == 0);
}

TEST_CASE("composite query algebra") {
  RetrievalIndex index = small_index(15, 4, 61);
  Matrix pair = random_unit_rows(2, 4, 62);
  std::vector<double> img(pair.row(0).begin(), pair.row(0).end());
  std::vector<double> txt(pair.row(1).begin(), pair.row(1).end());

  SUBCASE("zero text weight reduces to the pure image query") {
    RankedResult composite = composite_query(img, txt, index, 10, 0.0, 1.0, +1);
    RankedResult pure = topk(img, index, 10);
    REQUIRE(composite.size() == pure.size());
    for (std::size_t i = 0; i < pure.size(); ++i) {
      CHECK(composite[i].id == pure[i].id);
      CHECK(composite[i].score == doctest::Approx(pure[i].score).epsilon(1e-12));
    }
  }
  SUBCASE("identical image and text collapse to the image") {
    RankedResult composite = composite_query(img, img, index, 5, 2.0, 1.0, +1);
    RankedResult pure = topk(img, index, 5);
    for (std::size_t i = 0; i < pure.size(); ++i) {
      CHECK(composite[i].id == pure[i].id);
      CHECK(composite[i].score == doctest::Approx(pure[i].score).epsilon(1e-12));
    }
  }
  SUBCASE("opposite vectors with matching weights are an error") {
    std::vector<double> neg(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) neg[i] = -img[i];
    CHECK_THROWS_AS(composite_query(img, neg, index, 5, 1.0, 1.0, +1), NumericError);
    // Subtraction of the image itself likewise cancels.
    CHECK_THROWS_AS(composite_query(img, img, index, 5, 1.0, 1.0, -1), NumericError);
  }
  SUBCASE("scaling both weights together never changes the ranking") {
    RankedResult a = composite_query(img, txt, index, 15, 2.0, 1.0, +1);
    RankedResult b = composite_query(img, txt, index, 15, 4.0, 2.0, +1);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);
  }
  SUBCASE("subtraction pushes results away from the text") {
    RankedResult plus = composite_query(img, txt, index, 15, 2.0, 1.0, +1);
    RankedResult minus = composite_query(img, txt, index, 15, 2.0, 1.0, -1);
    CHECK(plus[0].id != minus[0].id);
  }
}

TEST_CASE("spearman handles monotone, reversed, and tied inputs") {
  std::vector<double> inc{1.0, 2.0, 3.0, 4.0, 5.0};
  std::vector<double> also_inc{10.0, 20.0, 25.0, 40.0, 100.0};
  CHECK(spearman(inc, also_inc) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> dec(inc.rbegin(), inc.rend());
  CHECK(spearman(inc, dec) == doctest::Approx(-1.0).epsilon(1e-12));

  // Tied case against an explicit mean-rank computation: pred ranks are
  // (1, 2.5, 2.5, 4), judgment ranks (1, 2, 3, 4).
  std::vector<double> pred{1.0, 2.0, 2.0, 3.0};
  std::vector<double> judg{10.0, 20.0, 30.0, 40.0};
  std::vector<double> ra{1.0, 2.5, 2.5, 4.0};
  std::vector<double> rb{1.0, 2.0, 3.0, 4.0};
  double mean_a = 2.5, mean_b = 2.5;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    cov += (ra[i] - mean_a) * (rb[i] - mean_b);
    va += (ra[i] - mean_a) * (ra[i] - mean_a);
    vb += (rb[i] - mean_b) * (rb[i] - mean_b);
  }
  double oracle = cov / std::sqrt(va * vb);
  CHECK(spearman(pred, judg) == doctest::Approx(oracle).epsilon(1e-12));

  std::vector<double> one{1.0}, two{1.0, 2.0}, three{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(spearman(one, one), DataError);
  CHECK_THROWS_AS(spearman(two, three), DataError);
}

TEST_CASE("spearman is invariant under strictly monotone transforms") {
  Rng rng(83);
  std::vector<double> a(20), b(20);
  for (std::size_t i = 0; i < 20; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
  }
  double base = spearman(a, b);
  CHECK(base >= -1.0);
  CHECK(base <= 1.0);

  std::vector<double> ta(20), tb(20);
  for (std::size_t i = 0; i < 20; ++i) {
    ta[i] = std::exp(a[i]);            // strictly increasing
    tb[i] = 2.0 * std::atan(b[i]) + 7; // strictly increasing
  }
  CHECK(spearman(ta, tb) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("spearman bootstrap is seeded and summarizes resamples") {
  Rng rng(97);
  std::vector<double> a(30), b(30);
  for (std::size_t i = 0; i < 30; ++i) {
    a[i] = rng.normal();
    b[i] = 0.7 * a[i] + 0.3 * rng.normal();
  }
  SpearmanBootstrap s1 = spearman_bootstrap(a, b, 200, 5);
  SpearmanBootstrap s2 = spearman_bootstrap(a, b, 200, 5);
  CHECK(s1.avg == s2.avg);
  CHECK(s1.std == s2.std);
  CHECK(s1.std > 0.0);
  CHECK(std::abs(s1.avg - spearman(a, b)) < 0.2);

  SpearmanBootstrap s3 = spearman_bootstrap(a, b, 200, 6);
  CHECK(s1.avg != s3.avg);
}

TEST_CASE("retrieval index round-trips through its binary + sidecar") {
  TempDir dir("index");
  RetrievalIndex index = small_index(10, 4, 71, {0, 1, 2, 0, 1, 2, 0, 1, 2, 0});
  save_retrieval_index(dir / "items.emb", index);
  RetrievalIndex loaded = load_retrieval_index(dir / "items.emb");
  CHECK(loaded.ids == index.ids);
  CHECK(loaded.labels == index.labels);
  CHECK(loaded.embeddings == index.embeddings);

  RetrievalIndex unlabelled = small_index(4, 4, 72);
  save_retrieval_index(dir / "plain.emb", unlabelled);
  CHECK(load_retrieval_index(dir / "plain.emb").labels.empty());
}

TEST_CASE("make_index validates and normalizes") {
  Matrix emb(2, 3);
  emb(0, 0) = 2.0;
  emb(1, 1) = 0.5;
  RetrievalIndex index = make_index({"a", "b"}, emb);
  CHECK(l2_norm(index.embeddings.row(0)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(l2_norm(index.embeddings.row(1)) == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(make_index({"a", "a"}, emb), DataError);
  CHECK_THROWS_AS(make_index({"a"}, emb), DataError);
  CHECK_THROWS_AS(make_index({"a", "b"}, emb, {1}), DataError);
  Matrix zero(1, 3);
  CHECK_THROWS_AS(make_index({"z"}, zero), NumericError);
}

TEST_CASE("eval report round-trips with only the computed metrics") {
  TempDir dir("report");
  EvalReport report;
  report.i2t_r1 = 0.5;
  report.i2t_r5 = 0.75;
  report.i2t_r10 = 0.875;
  report.t2i_r1 = 0.25;
  report.t2i_r5 = 0.5;
  report.t2i_r10 = 0.75;
  report.mean_recall = mean_recall(0.5, 0.75, 0.875, 0.25, 0.5, 0.75);
  report.knn_acc = 0.9;

  save_eval_report(dir / "report.json", report);
  EvalReport loaded = load_eval_report(dir / "report.json");
  CHECK(loaded.i2t_r1 == report.i2t_r1);
  CHECK(loaded.mean_recall == report.mean_recall);
  CHECK(loaded.knn_acc == report.knn_acc);
  CHECK(!loaded.zeroshot_acc.has_value());
  CHECK(!loaded.spearman_avg.has_value());

  std::string text = duet::testing::read_file(dir / "report.json");
  for (const char* key : {"i2t_r1", "i2t_r5", "i2t_r10", "t2i_r1", "t2i_r5", "t2i_r10",
                          "mean_recall", "knn_acc"})
    CHECK(text.find(key) != std::string::npos);
}
