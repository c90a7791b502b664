// duet: curate noisy image-text corpora, train the dual encoder, and
// evaluate the aligned embedding space from the command line.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "duet/config.hpp"
#include "duet/corpus.hpp"
#include "duet/dedup.hpp"
#include "duet/encoder.hpp"
#include "duet/errors.hpp"
#include "duet/filters.hpp"
#include "duet/kmeans.hpp"
#include "duet/retrieval.hpp"
#include "duet/rng.hpp"
#include "duet/trainer.hpp"
#include "duet/vocab.hpp"

namespace {

using namespace duet;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

/// Missing required path or inconsistent flag combination.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

/// Paths may come from a flag or from the config file; either way they
/// must end up nonempty.
void require_path(const std::string& value, const char* flag, const char* key) {
  if (value.empty())
    throw UsageError(std::string("missing ") + flag + " (or config key " + key + ")");
}

Matrix features_of(const Corpus& corpus) {
  if (corpus.empty()) throw DataError("corpus is empty");
  std::size_t d = corpus.front().image_features.size();
  Matrix m(corpus.size(), d);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (std::size_t c = 0; c < d; ++c) m(i, c) = corpus[i].image_features[c];
  }
  return m;
}

/// Latent class labels recovered from ids; empty when any id lacks one.
std::vector<int> labels_of(const Corpus& corpus) {
  std::vector<int> labels;
  for (const ImageTextPair& pair : corpus) {
    auto cls = latent_class_of(pair.id);
    if (!cls) return {};
    labels.push_back(*cls);
  }
  return labels;
}

std::vector<std::string> ids_of(const Corpus& corpus) {
  std::vector<std::string> ids;
  for (const ImageTextPair& pair : corpus) ids.push_back(pair.id);
  return ids;
}

/// Image-side embeddings: trained encoder when a checkpoint is given, raw
/// normalized features otherwise.
EmbeddingSet image_embeddings(const Corpus& corpus,
                              const std::optional<Checkpoint>& ckpt) {
  EmbeddingSet set;
  set.ids = ids_of(corpus);
  Matrix features = features_of(corpus);
  if (ckpt) {
    set.embeddings = encode_image(features, ckpt->params);
  } else {
    set.embeddings = features;
    for (std::size_t r = 0; r < set.embeddings.rows(); ++r)
      normalize_in_place(set.embeddings.row(r));
  }
  return set;
}

// ---------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string out;
  std::string class_prompts;
  std::size_t pairs = 1000;
  std::size_t classes = 16;
  std::size_t dim = 16;
  std::size_t prompts_per_class = 3;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

void run_generate(const GenerateArgs& args) {
  require_path(args.out, "--out", "generate.out");
  Corpus corpus =
      generate_synthetic_corpus(args.pairs, args.classes, args.dim, args.noise, args.seed);
  save_corpus(args.out, corpus);
  std::cout << "wrote " << corpus.size() << " pairs to " << args.out << "\n";

  if (!args.class_prompts.empty()) {
    auto prompts = synthetic_class_prompts(args.classes, args.prompts_per_class, args.seed);
    std::ofstream out(args.class_prompts);
    if (!out) throw DataError("cannot open for writing: " + args.class_prompts);
    for (std::size_t c = 0; c < prompts.size(); ++c) {
      nlohmann::json j;
      j["class_id"] = c;
      j["prompts"] = prompts[c];
      out << j.dump() << '\n';
    }
    std::cout << "wrote class prompts to " << args.class_prompts << "\n";
  }
}

// ---------------------------------------------------------------------
// filter

struct FilterArgs {
  std::string in;
  std::string out;
  std::string report;
  std::string freq_out;
  std::string vocab_out;
  std::size_t vocab_size = 4096;
  FilterRules rules;
};

void run_filter(const FilterArgs& args) {
  require_path(args.in, "--in", "filter.in");
  require_path(args.out, "--out", "filter.out");
  Corpus corpus = load_corpus(args.in);
  auto [kept, report] = apply_filters(corpus, args.rules);
  save_corpus(args.out, kept);

  if (!args.report.empty()) {
    nlohmann::json j;
    j["kept"] = report.kept;
    j["dropped_by_rule"] = report.dropped_by_rule;
    std::ofstream out(args.report);
    if (!out) throw DataError("cannot open for writing: " + args.report);
    out << j.dump(2) << '\n';
  }
  if (!args.freq_out.empty())
    save_frequency_table(args.freq_out,
                         count_ngrams(kept, args.rules.frequent_ngram_top_k));
  if (!args.vocab_out.empty()) save_vocab(args.vocab_out, build_vocab(kept, args.vocab_size));

  std::cout << "kept " << report.kept << " of " << corpus.size() << " pairs";
  for (const auto& [rule, count] : report.dropped_by_rule)
    std::cout << ", " << rule << ": " << count;
  std::cout << "\n";
}

// ---------------------------------------------------------------------
// dedup

struct DedupArgs {
  std::string in;
  std::string test;
  std::string out;
  std::string dup_report;
  std::string checkpoint;
  std::string cluster_index_out;
  std::size_t clusters = 32;
  std::size_t max_iters = 100;
  std::size_t top_c = 10;
  std::size_t combo = 3;
  double threshold = 0.975;
  std::uint64_t seed = 0;
};

void run_dedup(const DedupArgs& args) {
  require_path(args.in, "--in", "dedup.in");
  require_path(args.test, "--test", "dedup.test");
  require_path(args.out, "--out", "dedup.out");
  Corpus corpus = load_corpus(args.in);
  Corpus tests = load_corpus(args.test);
  std::optional<Checkpoint> ckpt;
  if (!args.checkpoint.empty()) ckpt = load_checkpoint(args.checkpoint);

  EmbeddingSet corpus_emb = image_embeddings(corpus, ckpt);
  EmbeddingSet test_emb = image_embeddings(tests, ckpt);

  ClusterIndex index =
      kmeans(corpus_emb.embeddings, args.clusters, args.max_iters, args.seed);
  if (!args.cluster_index_out.empty()) save_cluster_index(args.cluster_index_out, index);

  std::vector<DuplicatePair> pairs = find_near_duplicates(
      corpus_emb, test_emb, index, args.threshold, args.top_c, args.combo);
  if (!args.dup_report.empty()) save_duplicate_report(args.dup_report, pairs);

  auto [kept, removed] =
      remove_duplicates(corpus, corpus_emb, test_emb, index, args.threshold);
  save_corpus(args.out, kept);
  std::cout << "removed " << removed.size() << " near-duplicates, kept " << kept.size()
            << " pairs\n";
}

// ---------------------------------------------------------------------
// train

struct TrainArgs {
  std::string in;
  std::string out;
  std::string vocab_out;
  std::string log;
  std::string resume;
  std::size_t vocab_size = 4096;
  bool finetune = false;
  bool fixed_temperature = false;
  std::string optimizer = "lamb";
  TrainConfig config;
};

void run_train(const TrainArgs& args) {
  require_path(args.in, "--in", "train.in");
  require_path(args.out, "--out", "train.out");
  Corpus corpus = load_corpus(args.in);

  TrainConfig cfg = args.config;
  cfg.learn_temperature = !args.fixed_temperature;
  if (args.optimizer == "lamb") {
    cfg.optimizer = OptimizerKind::kLamb;
  } else if (args.optimizer == "sgdm") {
    cfg.optimizer = OptimizerKind::kSgdMomentum;
  } else {
    throw DataError("unknown optimizer: " + args.optimizer + " (use lamb or sgdm)");
  }
  if (args.finetune) cfg = finetune_preset(cfg, cfg.total_steps);

  std::optional<Checkpoint> initial;
  if (!args.resume.empty()) initial = load_checkpoint(args.resume);

  Vocab vocab;
  if (initial) {
    // Resumption keeps the checkpoint's vocabulary contract: token ids
    // must mean the same thing, so the vocab is rebuilt at the same size.
    vocab = build_vocab(corpus, initial->params.vocab_size());
  } else {
    vocab = build_vocab(corpus, args.vocab_size);
  }

  TrainResult result =
      train(corpus, vocab, cfg, initial ? &initial->params : nullptr,
            initial ? std::optional<double>(initial->theta) : std::nullopt);

  save_checkpoint(args.out, result.params, result.temperature.theta);
  std::string vocab_path = args.vocab_out.empty() ? args.out + ".vocab" : args.vocab_out;
  save_vocab(vocab_path, vocab);
  if (!args.log.empty()) save_train_log(args.log, result.log);

  const TrainLogRecord& last = result.log.back();
  std::printf("trained %lld steps: loss %.4f, sigma %.4f, holdout i2t R@1 %.3f, t2i R@1 %.3f\n",
              last.step, last.loss, last.sigma, last.i2t_r1, last.t2i_r1);
}

// ---------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string corpus;
  std::string checkpoint;
  std::string vocab;
  std::string out;
  std::string knn_train;
  std::string class_prompts;
  std::string judgments;
  std::string index_out;
  std::size_t knn_k = 1;
  std::size_t bootstrap = 1000;
  std::uint64_t seed = 0;
};

std::vector<std::vector<std::string>> load_class_prompts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path);
  std::map<std::size_t, std::vector<std::string>> by_class;
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
    by_class[j.at("class_id").get<std::size_t>()] =
        j.at("prompts").get<std::vector<std::string>>();
  }
  std::vector<std::vector<std::string>> prompts(by_class.size());
  for (auto& [cls, list] : by_class) {
    if (cls >= prompts.size())
      throw DataError("class ids must be dense 0..n-1 in " + path);
    prompts[cls] = std::move(list);
  }
  return prompts;
}

void run_eval(const EvalArgs& args) {
  require_path(args.corpus, "--corpus", "eval.corpus");
  require_path(args.checkpoint, "--checkpoint", "eval.checkpoint");
  require_path(args.vocab, "--vocab", "eval.vocab");
  require_path(args.out, "--out", "eval.out");
  Corpus corpus = load_corpus(args.corpus);
  Checkpoint ckpt = load_checkpoint(args.checkpoint);
  Vocab vocab = load_vocab(args.vocab);

  Matrix image_emb = encode_image(features_of(corpus), ckpt.params);
  std::vector<std::vector<int>> tokens;
  for (const ImageTextPair& pair : corpus)
    tokens.push_back(tokenize(pair.alt_text, vocab));
  Matrix text_emb = encode_text(tokens, ckpt.params);

  std::vector<std::string> ids = ids_of(corpus);
  std::vector<int> labels = labels_of(corpus);

  RetrievalIndex text_index = make_index(ids, text_emb, labels);
  RetrievalIndex image_index = make_index(ids, image_emb, labels);
  if (!args.index_out.empty()) save_retrieval_index(args.index_out, image_index);

  // Groundtruth per query: same-class items when labels exist, else the
  // paired item.
  std::vector<std::set<std::string>> groundtruth(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (labels.empty()) {
      groundtruth[i].insert(ids[i]);
    } else {
      for (std::size_t j = 0; j < corpus.size(); ++j) {
        if (labels[j] == labels[i]) groundtruth[i].insert(ids[j]);
      }
    }
  }

  std::vector<RankedResult> i2t, t2i;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    i2t.push_back(topk(image_emb.row(i), text_index, 10));
    t2i.push_back(topk(text_emb.row(i), image_index, 10));
  }

  EvalReport report;
  report.i2t_r1 = recall_at_k(i2t, groundtruth, 1);
  report.i2t_r5 = recall_at_k(i2t, groundtruth, 5);
  report.i2t_r10 = recall_at_k(i2t, groundtruth, 10);
  report.t2i_r1 = recall_at_k(t2i, groundtruth, 1);
  report.t2i_r5 = recall_at_k(t2i, groundtruth, 5);
  report.t2i_r10 = recall_at_k(t2i, groundtruth, 10);
  report.mean_recall = mean_recall(report.i2t_r1, report.i2t_r5, report.i2t_r10,
                                   report.t2i_r1, report.t2i_r5, report.t2i_r10);

  if (!args.knn_train.empty()) {
    if (labels.empty())
      throw DataError("knn evaluation needs class-labelled ids in the eval corpus");
    Corpus train_corpus = load_corpus(args.knn_train);
    std::vector<int> train_labels = labels_of(train_corpus);
    if (train_labels.empty())
      throw DataError("knn evaluation needs class-labelled ids in the train corpus");
    Matrix train_emb = encode_image(features_of(train_corpus), ckpt.params);
    RetrievalIndex train_index =
        make_index(ids_of(train_corpus), train_emb, train_labels);
    report.knn_acc = knn_eval(image_emb, labels, train_index, args.knn_k);
  }

  if (!args.class_prompts.empty()) {
    if (labels.empty())
      throw DataError("zero-shot evaluation needs class-labelled ids");
    Matrix class_emb =
        zero_shot_class_embeddings(load_class_prompts(args.class_prompts), ckpt.params, vocab);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (zero_shot_classify(image_emb.row(i), class_emb) == labels[i]) ++hits;
    }
    report.zeroshot_acc = static_cast<double>(hits) / static_cast<double>(corpus.size());
  }

  if (!args.judgments.empty()) {
    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < ids.size(); ++i) row_of[ids[i]] = i;
    std::vector<double> predicted, human;
    std::ifstream in(args.judgments);
    if (!in) throw DataError("cannot open: " + args.judgments);
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
      auto id_a = j.at("id_a").get<std::string>();
      auto id_b = j.at("id_b").get<std::string>();
      if (!row_of.contains(id_a) || !row_of.contains(id_b))
        throw DataError("judgment line " + std::to_string(line_no) +
                        " references unknown ids");
      predicted.push_back(dot(image_emb.row(row_of[id_a]), image_emb.row(row_of[id_b])));
      human.push_back(j.at("score").get<double>());
    }
    SpearmanBootstrap s =
        spearman_bootstrap(predicted, human, args.bootstrap, args.seed);
    report.spearman_avg = s.avg;
    report.spearman_std = s.std;
  }

  save_eval_report(args.out, report);
  std::printf("mean recall %.4f (i2t R@1 %.3f, t2i R@1 %.3f)\n", report.mean_recall,
              report.i2t_r1, report.t2i_r1);
}

// ---------------------------------------------------------------------
// query

struct QueryArgs {
  std::string index;
  std::string checkpoint;
  std::string vocab;
  std::string text;
  std::string image_id;
  std::size_t k = 10;
  double text_weight = 2.0;
  double image_weight = 1.0;
  int sign = +1;
};

void run_query(const QueryArgs& args) {
  require_path(args.index, "--index", "query.index");
  RetrievalIndex index = load_retrieval_index(args.index);

  std::optional<std::vector<double>> image_emb;
  if (!args.image_id.empty()) {
    auto it = std::find(index.ids.begin(), index.ids.end(), args.image_id);
    if (it == index.ids.end())
      throw DataError("image id not in index: " + args.image_id);
    auto row = index.embeddings.row(
        static_cast<std::size_t>(it - index.ids.begin()));
    image_emb = std::vector<double>(row.begin(), row.end());
  }

  std::optional<std::vector<double>> text_emb;
  if (!args.text.empty()) {
    if (args.checkpoint.empty() || args.vocab.empty())
      throw DataError("--text requires --checkpoint and --vocab");
    Checkpoint ckpt = load_checkpoint(args.checkpoint);
    Vocab vocab = load_vocab(args.vocab);
    std::vector<int> ids = tokenize(args.text, vocab);
    if (ids.empty()) throw DataError("query text tokenizes to nothing");
    Matrix emb = encode_text({ids}, ckpt.params);
    text_emb = std::vector<double>(emb.row(0).begin(), emb.row(0).end());
  }

  RankedResult result;
  if (image_emb && text_emb) {
    result = composite_query(*image_emb, *text_emb, index, args.k, args.text_weight,
                             args.image_weight, args.sign);
  } else if (image_emb) {
    result = topk(*image_emb, index, args.k);
  } else if (text_emb) {
    result = topk(*text_emb, index, args.k);
  }

  char buf[64];
  for (std::size_t rank = 0; rank < result.size(); ++rank) {
    std::snprintf(buf, sizeof buf, "%zu\t%s\t%.6f\n", rank + 1,
                  result[rank].id.c_str(), result[rank].score);
    std::cout << buf;
  }
}

// ---------------------------------------------------------------------
// wiring

/// Finds --config in argv ahead of CLI11 so file values become defaults
/// that explicit flags then override.
KeyValueConfig preload_config(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string_view(argv[i]) == "--config")
      return KeyValueConfig::from_file(argv[i + 1]);
  }
  return {};
}

void apply_train_config(const KeyValueConfig& file, TrainConfig& cfg) {
  cfg.batch_size = static_cast<int>(file.get_int("train.batch_size", cfg.batch_size));
  cfg.num_shards = static_cast<int>(file.get_int("train.num_shards", cfg.num_shards));
  cfg.total_steps = file.get_int("train.total_steps", cfg.total_steps);
  cfg.warmup_steps = file.get_int("train.warmup_steps", cfg.warmup_steps);
  cfg.peak_lr = file.get_double("train.peak_lr", cfg.peak_lr);
  cfg.weight_decay = file.get_double("train.weight_decay", cfg.weight_decay);
  cfg.label_smoothing = file.get_double("train.label_smoothing", cfg.label_smoothing);
  cfg.negative_fraction = file.get_double("train.negative_fraction", cfg.negative_fraction);
  cfg.seed = static_cast<std::uint64_t>(file.get_int("seed", static_cast<long long>(cfg.seed)));
  cfg.eval_every = file.get_int("train.eval_every", cfg.eval_every);
  cfg.hidden_dim = static_cast<int>(file.get_int("train.hidden_dim", cfg.hidden_dim));
  cfg.token_dim = static_cast<int>(file.get_int("train.token_dim", cfg.token_dim));
  cfg.embed_dim = static_cast<int>(file.get_int("train.embed_dim", cfg.embed_dim));
  cfg.max_tokens = static_cast<int>(file.get_int("train.max_tokens", cfg.max_tokens));
  cfg.holdout_fraction = file.get_double("train.holdout_fraction", cfg.holdout_fraction);
  cfg.init_temperature = file.get_double("train.init_temperature", cfg.init_temperature);
  cfg.momentum = file.get_double("train.momentum", cfg.momentum);
}

void apply_filter_config(const KeyValueConfig& file, FilterRules& rules) {
  rules.min_short_dim =
      static_cast<int>(file.get_int("filter.min_short_dim", rules.min_short_dim));
  rules.max_aspect_ratio = file.get_double("filter.max_aspect_ratio", rules.max_aspect_ratio);
  rules.max_alt_texts_per_image = static_cast<int>(
      file.get_int("filter.max_alt_texts_per_image", rules.max_alt_texts_per_image));
  rules.max_images_per_text = static_cast<int>(
      file.get_int("filter.max_images_per_text", rules.max_images_per_text));
  rules.min_unigrams = static_cast<int>(file.get_int("filter.min_unigrams", rules.min_unigrams));
  rules.max_unigrams = static_cast<int>(file.get_int("filter.max_unigrams", rules.max_unigrams));
  rules.frequent_ngram_top_k = static_cast<std::size_t>(
      file.get_int("filter.frequent_ngram_top_k",
                   static_cast<long long>(rules.frequent_ngram_top_k)));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-encoder contrastive embedding pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "flat key = value config file")
      ->expected(1);

  KeyValueConfig file;
  try {
    file = preload_config(argc, argv);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }

  GenerateArgs gen;
  gen.out = file.get_string("generate.out", "");
  gen.class_prompts = file.get_string("generate.class_prompts", "");
  gen.pairs = static_cast<std::size_t>(file.get_int("generate.pairs", 1000));
  gen.classes = static_cast<std::size_t>(file.get_int("generate.classes", 16));
  gen.dim = static_cast<std::size_t>(file.get_int("generate.dim", 16));
  gen.noise = file.get_double("generate.noise", 0.0);
  gen.seed = static_cast<std::uint64_t>(file.get_int("seed", 0));
  auto* cmd_generate = app.add_subcommand("generate", "write a synthetic corpus");
  cmd_generate->add_option("--out", gen.out, "corpus JSONL to write");
  cmd_generate->add_option("--pairs", gen.pairs, "number of pairs");
  cmd_generate->add_option("--classes", gen.classes, "number of latent classes");
  cmd_generate->add_option("--dim", gen.dim, "image feature dimension");
  cmd_generate->add_option("--noise", gen.noise, "fraction of texts replaced by noise");
  cmd_generate->add_option("--seed", gen.seed, "random seed");
  cmd_generate->add_option("--class-prompts", gen.class_prompts,
                           "also write per-class prompt JSONL here");
  cmd_generate->add_option("--prompts-per-class", gen.prompts_per_class,
                           "prompts per class for --class-prompts");

  FilterArgs filt;
  filt.in = file.get_string("filter.in", "");
  filt.out = file.get_string("filter.out", "");
  filt.report = file.get_string("filter.report", "");
  filt.freq_out = file.get_string("filter.freq_out", "");
  filt.vocab_out = file.get_string("filter.vocab_out", "");
  apply_filter_config(file, filt.rules);
  filt.vocab_size = static_cast<std::size_t>(file.get_int("filter.vocab_size", 4096));
  auto* cmd_filter = app.add_subcommand("filter", "frequency-based corpus curation");
  cmd_filter->add_option("--in", filt.in, "corpus JSONL to read");
  cmd_filter->add_option("--out", filt.out, "filtered corpus JSONL");
  cmd_filter->add_option("--report", filt.report, "filter report JSON");
  cmd_filter->add_option("--freq-out", filt.freq_out, "n-gram frequency JSONL");
  cmd_filter->add_option("--vocab-out", filt.vocab_out, "vocabulary file");
  cmd_filter->add_option("--vocab-size", filt.vocab_size, "vocabulary size");
  cmd_filter->add_option("--min-short-dim", filt.rules.min_short_dim,
                         "drop images with shorter side <= this");
  cmd_filter->add_option("--max-aspect-ratio", filt.rules.max_aspect_ratio,
                         "drop images with aspect ratio >= this");
  cmd_filter->add_option("--max-alt-texts", filt.rules.max_alt_texts_per_image,
                         "drop images with more alt-texts than this");
  cmd_filter->add_option("--max-images-per-text", filt.rules.max_images_per_text,
                         "drop texts shared by more images than this");
  cmd_filter->add_option("--min-unigrams", filt.rules.min_unigrams, "minimum tokens");
  cmd_filter->add_option("--max-unigrams", filt.rules.max_unigrams, "maximum tokens");
  cmd_filter->add_option("--ngram-top-k", filt.rules.frequent_ngram_top_k,
                         "frequent n-gram cutoff");

  DedupArgs ded;
  ded.in = file.get_string("dedup.in", "");
  ded.test = file.get_string("dedup.test", "");
  ded.out = file.get_string("dedup.out", "");
  ded.dup_report = file.get_string("dedup.dup_report", "");
  ded.checkpoint = file.get_string("dedup.checkpoint", "");
  ded.clusters = static_cast<std::size_t>(file.get_int("dedup.clusters", 32));
  ded.max_iters = static_cast<std::size_t>(file.get_int("dedup.max_iters", 100));
  ded.threshold = file.get_double("dedup.threshold", 0.975);
  ded.top_c = static_cast<std::size_t>(file.get_int("dedup.top_c", 10));
  ded.combo = static_cast<std::size_t>(file.get_int("dedup.combo", 3));
  ded.seed = static_cast<std::uint64_t>(file.get_int("seed", 0));
  auto* cmd_dedup = app.add_subcommand("dedup", "remove near-duplicates of test images");
  cmd_dedup->add_option("--in", ded.in, "training corpus JSONL");
  cmd_dedup->add_option("--test", ded.test, "test corpus JSONL");
  cmd_dedup->add_option("--out", ded.out, "cleaned corpus JSONL");
  cmd_dedup->add_option("--dup-report", ded.dup_report, "duplicate pair JSONL");
  cmd_dedup->add_option("--checkpoint", ded.checkpoint,
                        "embed with this trained encoder instead of raw features");
  cmd_dedup->add_option("--cluster-index-out", ded.cluster_index_out,
                        "persist the k-means index here");
  cmd_dedup->add_option("--clusters", ded.clusters, "k-means cluster count");
  cmd_dedup->add_option("--max-iters", ded.max_iters, "k-means iteration budget");
  cmd_dedup->add_option("--threshold", ded.threshold, "cosine threshold");
  cmd_dedup->add_option("--top-c", ded.top_c, "nearest clusters per item");
  cmd_dedup->add_option("--combo", ded.combo, "bucket subset size");
  cmd_dedup->add_option("--seed", ded.seed, "random seed");

  TrainArgs tr;
  tr.in = file.get_string("train.in", "");
  tr.out = file.get_string("train.out", "");
  tr.vocab_out = file.get_string("train.vocab_out", "");
  tr.log = file.get_string("train.log", "");
  apply_train_config(file, tr.config);
  tr.vocab_size = static_cast<std::size_t>(file.get_int("train.vocab_size", 4096));
  auto* cmd_train = app.add_subcommand("train", "train the dual encoder");
  cmd_train->add_option("--in", tr.in, "training corpus JSONL");
  cmd_train->add_option("--out", tr.out, "checkpoint to write");
  cmd_train->add_option("--vocab-out", tr.vocab_out,
                        "vocabulary file (default: <checkpoint>.vocab)");
  cmd_train->add_option("--log", tr.log, "training log CSV");
  cmd_train->add_option("--resume", tr.resume, "checkpoint to resume from");
  cmd_train->add_flag("--finetune", tr.finetune,
                      "apply the fine-tuning preset (small batch, lr 1e-5, no warmup)");
  cmd_train->add_option("--vocab-size", tr.vocab_size, "vocabulary size");
  cmd_train->add_option("--batch-size", tr.config.batch_size, "global batch size");
  cmd_train->add_option("--num-shards", tr.config.num_shards, "simulated compute shards");
  cmd_train->add_option("--steps", tr.config.total_steps, "total training steps");
  cmd_train->add_option("--warmup", tr.config.warmup_steps, "linear warmup steps");
  cmd_train->add_option("--peak-lr", tr.config.peak_lr, "peak learning rate");
  cmd_train->add_option("--weight-decay", tr.config.weight_decay, "weight decay ratio");
  cmd_train->add_option("--label-smoothing", tr.config.label_smoothing,
                        "label smoothing parameter");
  cmd_train->add_option("--negative-fraction", tr.config.negative_fraction,
                        "fraction of in-batch negatives kept");
  cmd_train->add_option("--seed", tr.config.seed, "random seed");
  cmd_train->add_option("--eval-every", tr.config.eval_every, "holdout eval cadence");
  cmd_train->add_option("--hidden-dim", tr.config.hidden_dim, "image tower hidden width");
  cmd_train->add_option("--token-dim", tr.config.token_dim, "token embedding width");
  cmd_train->add_option("--embed-dim", tr.config.embed_dim, "shared embedding dimension");
  cmd_train->add_option("--max-tokens", tr.config.max_tokens, "token sequence cap");
  cmd_train->add_option("--holdout-fraction", tr.config.holdout_fraction,
                        "fraction held out for evaluation");
  cmd_train->add_flag("--fixed-temperature", tr.fixed_temperature,
                      "freeze the softmax temperature");
  cmd_train->add_option("--init-temperature", tr.config.init_temperature,
                        "initial softmax temperature");
  cmd_train->add_option("--optimizer", tr.optimizer, "lamb or sgdm");
  cmd_train->add_option("--momentum", tr.config.momentum, "sgdm momentum");

  EvalArgs ev;
  ev.corpus = file.get_string("eval.corpus", "");
  ev.checkpoint = file.get_string("eval.checkpoint", "");
  ev.vocab = file.get_string("eval.vocab", "");
  ev.out = file.get_string("eval.out", "");
  ev.knn_train = file.get_string("eval.knn_train", "");
  ev.class_prompts = file.get_string("eval.class_prompts", "");
  ev.judgments = file.get_string("eval.judgments", "");
  ev.knn_k = static_cast<std::size_t>(file.get_int("eval.knn_k", 1));
  ev.bootstrap = static_cast<std::size_t>(file.get_int("eval.bootstrap", 1000));
  ev.seed = static_cast<std::uint64_t>(file.get_int("seed", 0));
  auto* cmd_eval = app.add_subcommand("eval", "retrieval and classification metrics");
  cmd_eval->add_option("--corpus", ev.corpus, "evaluation corpus JSONL");
  cmd_eval->add_option("--checkpoint", ev.checkpoint, "trained checkpoint");
  cmd_eval->add_option("--vocab", ev.vocab, "vocabulary file");
  cmd_eval->add_option("--out", ev.out, "evaluation report JSON");
  cmd_eval->add_option("--knn-train", ev.knn_train,
                       "labelled train corpus for KNN accuracy");
  cmd_eval->add_option("--knn-k", ev.knn_k, "KNN neighbourhood size");
  cmd_eval->add_option("--class-prompts", ev.class_prompts,
                       "class prompt JSONL for zero-shot accuracy");
  cmd_eval->add_option("--judgments", ev.judgments,
                       "similarity judgment JSONL for Spearman correlation");
  cmd_eval->add_option("--bootstrap", ev.bootstrap, "Spearman bootstrap resamples");
  cmd_eval->add_option("--index-out", ev.index_out, "persist the image index here");
  cmd_eval->add_option("--seed", ev.seed, "bootstrap seed");

  QueryArgs qu;
  qu.index = file.get_string("query.index", "");
  qu.checkpoint = file.get_string("query.checkpoint", "");
  qu.vocab = file.get_string("query.vocab", "");
  qu.text_weight = file.get_double("query.text_weight", 2.0);
  qu.image_weight = file.get_double("query.image_weight", 1.0);
  qu.k = static_cast<std::size_t>(file.get_int("query.k", 10));
  auto* cmd_query = app.add_subcommand("query", "single retrieval query against an index");
  cmd_query->add_option("--index", qu.index, "retrieval index file");
  cmd_query->add_option("--checkpoint", qu.checkpoint, "checkpoint for text encoding");
  cmd_query->add_option("--vocab", qu.vocab, "vocabulary for text encoding");
  cmd_query->add_option("--text", qu.text, "text query");
  cmd_query->add_option("--image-id", qu.image_id, "image query by index id");
  cmd_query->add_option("--k", qu.k, "results to return");
  cmd_query->add_option("--text-weight", qu.text_weight, "text embedding scale");
  cmd_query->add_option("--image-weight", qu.image_weight, "image embedding scale");
  cmd_query->add_option("--sign", qu.sign, "+1 adds the text, -1 subtracts it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (cmd_generate->parsed()) {
      run_generate(gen);
    } else if (cmd_filter->parsed()) {
      run_filter(filt);
    } else if (cmd_dedup->parsed()) {
      run_dedup(ded);
    } else if (cmd_train->parsed()) {
      run_train(tr);
    } else if (cmd_eval->parsed()) {
      run_eval(ev);
    } else if (cmd_query->parsed()) {
      if (qu.text.empty() && qu.image_id.empty()) {
        std::cerr << "usage: query needs --text, --image-id, or both\n";
        return kExitUsage;
      }
      run_query(qu);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
