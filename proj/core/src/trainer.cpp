#include "duet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "duet/errors.hpp"
#include "duet/optimizer.hpp"
#include "duet/rng.hpp"

namespace duet {

void TrainConfig::validate() const {
  if (batch_size < 1) throw DataError("batch_size must be >= 1");
  if (num_shards < 1 || batch_size % num_shards != 0)
    throw DataError("batch_size must be divisible by num_shards");
  if (total_steps < 1) throw DataError("total_steps must be >= 1");
  if (warmup_steps < 0 || warmup_steps > total_steps)
    throw DataError("need 0 <= warmup_steps <= total_steps");
  if (eval_every < 1) throw DataError("eval_every must be >= 1");
  if (hidden_dim < 1 || token_dim < 1 || embed_dim < 1 || max_tokens < 1)
    throw DataError("model dimensions must be >= 1");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
    throw DataError("holdout_fraction must be in [0, 1)");
  if (!(init_temperature > 0.0)) throw DataError("init_temperature must be > 0");
  LossConfig{label_smoothing, negative_fraction}.validate();
}

TrainConfig finetune_preset(const TrainConfig& base, long long steps) {
  TrainConfig cfg = base;
  cfg.total_steps = steps;
  cfg.warmup_steps = 0;
  cfg.peak_lr = 1e-5;
  cfg.batch_size = std::max(base.num_shards, base.batch_size / 8);
  if (cfg.batch_size % cfg.num_shards != 0) cfg.num_shards = 1;
  return cfg;
}

double lr_schedule(long long step, const TrainConfig& config) {
  if (step < 0 || step > config.total_steps)
    throw DataError("lr_schedule: step outside [0, total_steps]");
  if (config.warmup_steps > 0 && step <= config.warmup_steps)
    return config.peak_lr * static_cast<double>(step) /
           static_cast<double>(config.warmup_steps);
  if (config.total_steps == config.warmup_steps) return config.peak_lr;
  return config.peak_lr * static_cast<double>(config.total_steps - step) /
         static_cast<double>(config.total_steps - config.warmup_steps);
}

namespace {

struct HoldoutEval {
  Matrix features;                          // holdout images
  std::vector<std::vector<int>> token_ids;  // holdout texts
  std::vector<std::size_t> groundtruth_for_query;  // unused when class-based
  std::vector<int> classes;                 // -1 when ids carry no class
  bool class_based = false;
};

// Recall@1 with the paired item (or, when ids carry latent classes, any
// same-class item) as groundtruth. Ties break toward the lower row index,
// matching the id tie-break because rows are in corpus order.
double recall1(const Matrix& queries, const Matrix& keys,
               const std::vector<int>& classes, bool class_based) {
  std::size_t hits = 0;
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < keys.rows(); ++j) {
      double s = dot(queries.row(q), keys.row(j));
      if (s > best_score) {
        best_score = s;
        best = j;
      }
    }
    bool hit = class_based ? classes[best] == classes[q] : best == q;
    if (hit) ++hits;
  }
  return queries.rows() == 0 ? 0.0
                             : static_cast<double>(hits) /
                                   static_cast<double>(queries.rows());
}

}  // namespace

TrainResult train(const Corpus& corpus, const Vocab& vocab, const TrainConfig& config,
                  const EncoderParams* initial_params,
                  std::optional<double> initial_theta) {
  config.validate();
  if (corpus.empty()) throw DataError("train: empty corpus");
  if (vocab.size() < 2) throw DataError("train: vocab not built");

  std::size_t n = corpus.size();
  std::size_t d_img = corpus.front().image_features.size();

  // Tokenize once; every record must keep at least one token.
  std::vector<std::vector<int>> all_tokens(n);
  for (std::size_t i = 0; i < n; ++i) {
    all_tokens[i] = tokenize(corpus[i].alt_text, vocab,
                             static_cast<std::size_t>(config.max_tokens));
    if (all_tokens[i].empty())
      throw DataError("train: record tokenizes to nothing: " + corpus[i].id);
  }

  // Deterministic holdout split.
  Rng split_rng(Rng::derive_seed(config.seed, "holdout-split"));
  std::vector<std::size_t> order = split_rng.permutation(n);
  auto holdout_n = static_cast<std::size_t>(
      std::floor(config.holdout_fraction * static_cast<double>(n)));
  std::vector<std::size_t> holdout_idx(order.begin(),
                                       order.begin() + static_cast<std::ptrdiff_t>(holdout_n));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(holdout_n),
                                     order.end());
  std::sort(holdout_idx.begin(), holdout_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  if (train_idx.size() < static_cast<std::size_t>(config.batch_size))
    throw DataError("train: corpus too small for batch size after holdout split");

  TrainResult result;
  if (initial_params) {
    if (initial_params->image_dim() != d_img ||
        initial_params->vocab_size() != static_cast<std::size_t>(vocab.size()))
      throw DataError("train: initial parameters do not match corpus/vocab");
    result.params = *initial_params;
  } else {
    result.params = init_params(d_img, static_cast<std::size_t>(config.hidden_dim),
                                static_cast<std::size_t>(config.token_dim),
                                static_cast<std::size_t>(config.embed_dim),
                                static_cast<std::size_t>(vocab.size()),
                                Rng::derive_seed(config.seed, "init"));
  }
  result.temperature =
      initial_theta ? Temperature{*initial_theta}
                    : Temperature::from_sigma(config.init_temperature);

  // Holdout evaluation inputs.
  HoldoutEval holdout;
  holdout.class_based = !holdout_idx.empty();
  holdout.features = Matrix(holdout_idx.size(), d_img);
  for (std::size_t r = 0; r < holdout_idx.size(); ++r) {
    const ImageTextPair& pair = corpus[holdout_idx[r]];
    for (std::size_t c = 0; c < d_img; ++c) holdout.features(r, c) = pair.image_features[c];
    holdout.token_ids.push_back(all_tokens[holdout_idx[r]]);
    auto cls = latent_class_of(pair.id);
    holdout.classes.push_back(cls.value_or(-1));
    if (!cls) holdout.class_based = false;
    result.holdout_ids.push_back(pair.id);
  }

  LossConfig loss_config{config.label_smoothing, config.negative_fraction};
  OptimizerState opt_state;
  Rng batch_rng(Rng::derive_seed(config.seed, "batches"));
  std::uint64_t mask_root = Rng::derive_seed(config.seed, "negative-mask");

  std::vector<std::size_t> perm;
  std::size_t cursor = 0;
  auto batch = static_cast<std::size_t>(config.batch_size);
  auto shards = static_cast<std::size_t>(config.num_shards);
  std::size_t shard_rows = batch / shards;

  auto eval_holdout = [&](long long step, double loss, double lr) {
    if (holdout.features.rows() == 0) {
      result.log.push_back({step, loss, result.temperature.sigma(), lr, 0.0, 0.0});
      return;
    }
    Matrix img = encode_image(holdout.features, result.params);
    Matrix txt = encode_text(holdout.token_ids, result.params);
    double i2t = recall1(img, txt, holdout.classes, holdout.class_based);
    double t2i = recall1(txt, img, holdout.classes, holdout.class_based);
    result.log.push_back({step, loss, result.temperature.sigma(), lr, i2t, t2i});
  };

  for (long long step = 1; step <= config.total_steps; ++step) {
    if (cursor + batch > train_idx.size()) cursor = 0;
    if (cursor == 0) perm = batch_rng.permutation(train_idx.size());

    // Per-shard forward passes, then a cross-shard gather; loss and
    // backward run once on the gathered batch in global row order so the
    // shard count cannot change any computed value.
    std::vector<ImageCache> img_caches(shards);
    std::vector<TextCache> txt_caches(shards);
    std::vector<BatchEmbeddings> shard_embeddings(shards);
    for (std::size_t s = 0; s < shards; ++s) {
      Matrix feats(shard_rows, d_img);
      std::vector<std::vector<int>> tokens(shard_rows);
      for (std::size_t r = 0; r < shard_rows; ++r) {
        std::size_t corpus_row = train_idx[perm[cursor + s * shard_rows + r]];
        const ImageTextPair& pair = corpus[corpus_row];
        for (std::size_t c = 0; c < d_img; ++c) feats(r, c) = pair.image_features[c];
        tokens[r] = all_tokens[corpus_row];
      }
      shard_embeddings[s].images = encode_image(feats, result.params, &img_caches[s]);
      shard_embeddings[s].texts = encode_text(tokens, result.params, &txt_caches[s]);
    }
    cursor += batch;

    BatchEmbeddings gathered = gather_shards(shard_embeddings);
    ImageCache img_cache = gather_image_caches(img_caches);
    TextCache txt_cache = gather_text_caches(txt_caches);

    LossOutput loss =
        contrastive_loss(gathered.images, gathered.texts, result.temperature,
                         loss_config, Rng::derive_seed(mask_root, static_cast<std::uint64_t>(step)));
    if (!std::isfinite(loss.total))
      throw NumericError("train: non-finite loss at step " + std::to_string(step));
    result.step_losses.push_back(loss.total);

    EncoderGrads grads = EncoderGrads::zeros_like(result.params);
    image_backward(loss.d_images, img_cache, result.params, grads);
    text_backward(loss.d_texts, txt_cache, result.params, grads);
    double d_theta = config.learn_temperature ? loss.d_theta : 0.0;

    double lr = lr_schedule(step, config);
    auto params_view = tensor_refs(result.params, result.temperature);
    auto grads_view = grad_refs(grads, d_theta);
    if (config.optimizer == OptimizerKind::kLamb) {
      lamb_step(params_view, grads_view, opt_state, lr, config.weight_decay);
    } else {
      sgd_momentum_step(params_view, grads_view, opt_state, lr, config.weight_decay,
                        config.momentum);
    }

    if (step % config.eval_every == 0 || step == config.total_steps)
      eval_holdout(step, loss.total, lr);
  }
  return result;
}

void save_train_log(const std::filesystem::path& path,
                    const std::vector<TrainLogRecord>& log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out << "step,loss,sigma,lr,i2t_r1,t2i_r1\n";
  char buf[160];
  for (const TrainLogRecord& rec : log) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n", rec.step,
                  rec.loss, rec.sigma, rec.lr, rec.i2t_r1, rec.t2i_r1);
    out << buf;
  }
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace duet
