#include <doctest.h>

#include <cmath>
#include <numeric>

#include "duet/errors.hpp"
#include "duet/optimizer.hpp"
#include "duet/rng.hpp"
#include "duet/trainer.hpp"
#include "test_util.hpp"

using namespace duet;
using duet::testing::TempDir;

namespace {

bool params_equal(const EncoderParams& a, const EncoderParams& b) {
  return a.img_w1 == b.img_w1 && a.img_b1 == b.img_b1 && a.img_w2 == b.img_w2 &&
         a.img_b2 == b.img_b2 && a.tok_embed == b.tok_embed &&
         a.txt_proj == b.txt_proj && a.txt_b == b.txt_b;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.num_shards = 1;
  cfg.total_steps = 40;
  cfg.warmup_steps = 10;
  cfg.eval_every = 20;
  cfg.hidden_dim = 12;
  cfg.token_dim = 12;
  cfg.embed_dim = 16;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("lr_schedule is linear up then linear down") {
  TrainConfig cfg;
  cfg.total_steps = 100;
  cfg.warmup_steps = 20;
  cfg.peak_lr = 1e-3;
  CHECK(lr_schedule(0, cfg) == 0.0);
  CHECK(lr_schedule(10, cfg) == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(lr_schedule(20, cfg) == 1e-3);
  CHECK(lr_schedule(60, cfg) == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(lr_schedule(100, cfg) == 0.0);
  CHECK_THROWS_AS(lr_schedule(101, cfg), DataError);
  CHECK_THROWS_AS(lr_schedule(-1, cfg), DataError);
}

TEST_CASE("lamb leaves parameters alone under zero gradient and no decay") {
  EncoderParams p = init_params(4, 3, 4, 3, 6, 1);
  EncoderParams before = p;
  Temperature temp;
  EncoderGrads grads = EncoderGrads::zeros_like(p);
  double d_theta = 0.0;

  OptimizerState state;
  auto params = tensor_refs(p, temp);
  auto gview = grad_refs(grads, d_theta);
  lamb_step(params, gview, state, 1e-2, 0.0);
  CHECK(params_equal(p, before));
  CHECK(temp.theta == 0.0);
}

TEST_CASE("lamb clamps the trust ratio for zero-norm tensors") {
  // Fresh zero bias with gradient 1: m_hat = 1, v_hat = 1, r = 1/(1+eps),
  // ||p|| = 0 so trust = 1 and the update is exactly -lr * r.
  EncoderParams p = init_params(2, 2, 2, 2, 3, 2);
  Temperature temp;
  EncoderGrads grads = EncoderGrads::zeros_like(p);
  grads.img_b1.assign(p.img_b1.size(), 1.0);
  double d_theta = 0.0;

  OptimizerState state;
  auto params = tensor_refs(p, temp);
  auto gview = grad_refs(grads, d_theta);
  lamb_step(params, gview, state, 0.01, 0.0);

  double expected = -0.01 * (1.0 / (1.0 + state.epsilon));
  for (double v : p.img_b1) CHECK(v == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("lamb single-scalar step matches the hand-computed update") {
  // One scalar parameter p = 0.5 with gradient 1, lr = 0.1, no decay.
  double value = 0.5;
  Temperature unused;
  std::vector<TensorRef> params{{"scalar", {&value, 1}, true}};
  double grad = 1.0;
  std::vector<GradRef> grads{{{&grad, 1}}};
  OptimizerState state;
  lamb_step(params, grads, state, 0.1, 0.0);

  // Hand evaluation of the update rule after one step.
  double m_hat = (0.1 * 1.0) / (1.0 - 0.9);
  double v_hat = (0.001 * 1.0) / (1.0 - 0.999);
  double r = m_hat / (std::sqrt(v_hat) + 1e-6);
  double trust = 0.5 / std::abs(r);
  double expected = 0.5 - 0.1 * trust * r;
  CHECK(value == doctest::Approx(expected).epsilon(1e-14));
  CHECK(value == doctest::Approx(0.45).epsilon(1e-9));
  (void)unused;
}

TEST_CASE("lamb applies weight decay through the update direction") {
  double value = 2.0;
  std::vector<TensorRef> params{{"scalar", {&value, 1}, true}};
  double grad = 0.0;
  std::vector<GradRef> grads{{{&grad, 1}}};
  OptimizerState state;
  lamb_step(params, grads, state, 0.1, 0.01);
  // r = 0 + wd * p = 0.02; trust = 2 / 0.02 = 100; update = -0.1*100*0.02 = -0.2.
  CHECK(value == doctest::Approx(1.8).epsilon(1e-12));
}

TEST_CASE("optimizer rejects non-finite gradients naming the tensor") {
  EncoderParams p = init_params(2, 2, 2, 2, 3, 3);
  Temperature temp;
  EncoderGrads grads = EncoderGrads::zeros_like(p);
  grads.img_w2(0, 0) = std::numeric_limits<double>::quiet_NaN();
  double d_theta = 0.0;
  OptimizerState state;
  auto params = tensor_refs(p, temp);
  auto gview = grad_refs(grads, d_theta);
  CHECK_THROWS_WITH_AS(lamb_step(params, gview, state, 0.1, 0.0),
                       doctest::Contains("img_w2"), NumericError);
}

TEST_CASE("training is deterministic given the seed") {
  Corpus corpus = generate_synthetic_corpus(64, 4, 6, 0.0, 9);
  Vocab vocab = build_vocab(corpus, 128);
  TrainConfig cfg = small_config();
  cfg.total_steps = 2;
  cfg.warmup_steps = 1;
  cfg.eval_every = 1;

  TrainResult a = train(corpus, vocab, cfg);
  TrainResult b = train(corpus, vocab, cfg);
  CHECK(params_equal(a.params, b.params));
  CHECK(a.temperature.theta == b.temperature.theta);
  CHECK(a.step_losses == b.step_losses);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss == b.log[i].loss);
    CHECK(a.log[i].i2t_r1 == b.log[i].i2t_r1);
  }
}

TEST_CASE("shard count never changes the per-step losses") {
  Corpus corpus = generate_synthetic_corpus(64, 4, 6, 0.0, 12);
  Vocab vocab = build_vocab(corpus, 128);
  TrainConfig cfg = small_config();
  cfg.total_steps = 6;
  cfg.warmup_steps = 2;

  cfg.num_shards = 1;
  TrainResult one = train(corpus, vocab, cfg);
  cfg.num_shards = 4;
  TrainResult four = train(corpus, vocab, cfg);
  CHECK(one.step_losses == four.step_losses);
  CHECK(params_equal(one.params, four.params));
  CHECK(one.temperature.theta == four.temperature.theta);
}

TEST_CASE("loss trends down and sigma shrinks on clean synthetic data") {
  Corpus corpus = generate_synthetic_corpus(256, 8, 8, 0.0, 33);
  Vocab vocab = build_vocab(corpus, 256);
  TrainConfig cfg = small_config();
  cfg.batch_size = 32;
  cfg.total_steps = 300;
  cfg.warmup_steps = 30;
  cfg.eval_every = 100;
  cfg.seed = 4;

  TrainResult result = train(corpus, vocab, cfg);
  REQUIRE(result.step_losses.size() == 300);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 100; ++i) {
    first += result.step_losses[i];
    last += result.step_losses[200 + i];
  }
  CHECK(last / 100.0 < first / 100.0);
  CHECK(result.temperature.sigma() < 1.0);

  // Holdout recall trends well above the class-blind baseline.
  CHECK(result.log.back().t2i_r1 > 0.5);
}

TEST_CASE("pure-noise text gives chance-level holdout retrieval") {
  // With every alt-text replaced by random tokens the text carries no
  // information about the image class, so class-level R@1 should sit at
  // the 1/n_classes chance floor.
  Corpus corpus = generate_synthetic_corpus(512, 8, 12, 1.0, 73);
  Vocab vocab = build_vocab(corpus, 512);
  TrainConfig cfg = small_config();
  cfg.batch_size = 32;
  cfg.total_steps = 300;
  cfg.warmup_steps = 30;
  cfg.eval_every = 300;
  cfg.seed = 6;

  TrainResult result = train(corpus, vocab, cfg);
  double chance = 1.0 / 8.0;
  CHECK(result.log.back().t2i_r1 < 3.0 * chance);
  CHECK(result.log.back().i2t_r1 < 3.0 * chance);
}

TEST_CASE("temperature stays fixed when excluded from learning") {
  Corpus corpus = generate_synthetic_corpus(64, 4, 6, 0.0, 21);
  Vocab vocab = build_vocab(corpus, 128);
  TrainConfig cfg = small_config();
  cfg.total_steps = 30;
  cfg.learn_temperature = false;
  cfg.init_temperature = 1.0 / 64.0;

  TrainResult result = train(corpus, vocab, cfg);
  CHECK(result.temperature.sigma() == doctest::Approx(1.0 / 64.0).epsilon(1e-12));
}

TEST_CASE("zero-gradient parameters never move without weight decay") {
  Corpus corpus = generate_synthetic_corpus(64, 4, 6, 0.0, 27);
  Vocab vocab = build_vocab(corpus, 128);
  TrainConfig cfg = small_config();
  cfg.total_steps = 10;
  cfg.weight_decay = 0.0;

  EncoderParams init = init_params(6, cfg.hidden_dim, cfg.token_dim, cfg.embed_dim,
                                   vocab.size(), Rng::derive_seed(cfg.seed, "init"));
  TrainResult result = train(corpus, vocab, cfg);
  // The padding row receives no gradient, so it must remain at its
  // initialization.
  for (std::size_t d = 0; d < result.params.tok_embed.cols(); ++d)
    CHECK(result.params.tok_embed(0, d) == init.tok_embed(0, d));
}

TEST_CASE("sgd-with-momentum trains too, but differently from lamb") {
  Corpus corpus = generate_synthetic_corpus(64, 4, 6, 0.0, 41);
  Vocab vocab = build_vocab(corpus, 128);
  TrainConfig cfg = small_config();
  cfg.total_steps = 10;

  TrainResult lamb = train(corpus, vocab, cfg);
  cfg.optimizer = OptimizerKind::kSgdMomentum;
  TrainResult sgd = train(corpus, vocab, cfg);
  CHECK(lamb.step_losses[0] == sgd.step_losses[0]);  // same init, same batch
  CHECK_FALSE(params_equal(lamb.params, sgd.params));
}

TEST_CASE("finetune preset resumes from a checkpoint") {
  Corpus corpus = generate_synthetic_corpus(96, 4, 6, 0.0, 51);
  Vocab vocab = build_vocab(corpus, 128);
  TrainConfig cfg = small_config();
  cfg.total_steps = 20;
  TrainResult pretrained = train(corpus, vocab, cfg);

  TrainConfig ft = finetune_preset(cfg, 10);
  CHECK(ft.peak_lr == 1e-5);
  CHECK(ft.warmup_steps == 0);
  CHECK(ft.batch_size < cfg.batch_size);

  TrainResult tuned = train(corpus, vocab, ft, &pretrained.params,
                            pretrained.temperature.theta);
  REQUIRE(tuned.step_losses.size() == 10);
  // A tiny learning rate barely moves the parameters.
  double drift = 0.0;
  for (std::size_t i = 0; i < tuned.params.img_w1.values().size(); ++i)
    drift = std::max(drift, std::abs(tuned.params.img_w1.values()[i] -
                                     pretrained.params.img_w1.values()[i]));
  CHECK(drift < 1e-2);
}

TEST_CASE("a diverging run aborts with the failing step number") {
  Corpus corpus = generate_synthetic_corpus(64, 4, 6, 0.0, 9);
  Vocab vocab = build_vocab(corpus, 128);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.total_steps = 50;
  cfg.warmup_steps = 1;
  cfg.hidden_dim = 8;
  cfg.token_dim = 8;
  cfg.embed_dim = 8;
  cfg.peak_lr = 1e6;  // blows the temperature out within a couple of steps
  cfg.seed = 3;
  CHECK_THROWS_WITH_AS(train(corpus, vocab, cfg), doctest::Contains("step"),
                       NumericError);
}

TEST_CASE("train validates inputs") {
  Corpus corpus = generate_synthetic_corpus(32, 4, 6, 0.0, 61);
  Vocab vocab = build_vocab(corpus, 64);
  TrainConfig cfg = small_config();

  CHECK_THROWS_AS(train({}, vocab, cfg), DataError);

  TrainConfig bad = cfg;
  bad.batch_size = 30;
  bad.num_shards = 4;
  CHECK_THROWS_AS(train(corpus, vocab, bad), DataError);

  bad = cfg;
  bad.warmup_steps = bad.total_steps + 1;
  CHECK_THROWS_AS(train(corpus, vocab, bad), DataError);

  bad = cfg;
  bad.batch_size = 64;  // corpus too small after holdout
  CHECK_THROWS_AS(train(corpus, vocab, bad), DataError);
}

TEST_CASE("train log writes the documented CSV") {
  TempDir dir("log");
  std::vector<TrainLogRecord> log{{10, 1.5, 0.9, 1e-3, 0.25, 0.5}};
  save_train_log(dir / "log.csv", log);
  std::string content = duet::testing::read_file(dir / "log.csv");
  CHECK(content.rfind("step,loss,sigma,lr,i2t_r1,t2i_r1\n", 0) == 0);
  CHECK(content.find("\n10,1.5,") != std::string::npos);
}
