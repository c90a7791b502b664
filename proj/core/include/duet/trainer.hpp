#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "duet/corpus.hpp"
#include "duet/encoder.hpp"
#include "duet/loss.hpp"
#include "duet/vocab.hpp"

namespace duet {

enum class OptimizerKind { kLamb, kSgdMomentum };

struct TrainConfig {
  int batch_size = 64;
  int num_shards = 1;
  long long total_steps = 1000;
  long long warmup_steps = 100;
  double peak_lr = 1e-3;
  double weight_decay = 1e-5;
  double label_smoothing = 0.1;
  double negative_fraction = 1.0;
  std::uint64_t seed = 0;
  long long eval_every = 100;

  int hidden_dim = 32;
  int token_dim = 32;
  int embed_dim = 64;
  int max_tokens = static_cast<int>(kDefaultMaxTokens);

  double holdout_fraction = 0.125;
  bool learn_temperature = true;
  double init_temperature = 1.0;
  OptimizerKind optimizer = OptimizerKind::kLamb;
  double momentum = 0.9;

  void validate() const;
};

/// Fine-tuning preset: smaller batch, 1e-5 initial learning rate, no
/// warmup, linear decay over the given steps. Resume from a checkpoint by
/// passing its parameters to train().
TrainConfig finetune_preset(const TrainConfig& base, long long steps);

struct TrainLogRecord {
  long long step = 0;
  double loss = 0.0;
  double sigma = 0.0;
  double lr = 0.0;
  double i2t_r1 = 0.0;
  double t2i_r1 = 0.0;
};

struct TrainResult {
  EncoderParams params;
  Temperature temperature;
  std::vector<TrainLogRecord> log;
  std::vector<double> step_losses;       // one entry per step
  std::vector<std::string> holdout_ids;  // evaluation split, in corpus order
};

/// Piecewise-linear schedule: up to peak_lr at warmup_steps, then down to
/// zero at total_steps.
double lr_schedule(long long step, const TrainConfig& config);

/// Full training loop: epoch-shuffled batches without replacement, per-
/// shard encoding, cross-shard gather, contrastive loss, LAMB update with
/// the schedule above, temperature learned jointly. Deterministic
/// end-to-end given config.seed; shard count never changes any computed
/// value. Periodically evaluates holdout Recall@1 in both directions
/// (groundtruth is the latent class when ids carry one, the exact pair
/// otherwise). Throws NumericError naming the step on NaN loss.
TrainResult train(const Corpus& corpus, const Vocab& vocab, const TrainConfig& config,
                  const EncoderParams* initial_params = nullptr,
                  std::optional<double> initial_theta = std::nullopt);

/// CSV with header step,loss,sigma,lr,i2t_r1,t2i_r1.
void save_train_log(const std::filesystem::path& path,
                    const std::vector<TrainLogRecord>& log);

}  // namespace duet
