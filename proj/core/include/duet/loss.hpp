#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "duet/matrix.hpp"

namespace duet {

/// Shared softmax temperature, learned in log-space so sigma stays
/// positive. Initial sigma is 1 (theta = 0).
struct Temperature {
  double theta = 0.0;

  double sigma() const { return std::exp(theta); }
  static Temperature from_sigma(double sigma) { return {std::log(sigma)}; }
};

struct LossConfig {
  double label_smoothing = 0.1;   // alpha in [0, 1)
  double negative_fraction = 1.0; // fraction of in-batch negatives kept, (0, 1]

  void validate() const;
};

/// Paired unit-norm embedding matrices; row i of images pairs with row i
/// of texts.
struct BatchEmbeddings {
  Matrix images;  // N x d_emb
  Matrix texts;   // N x d_emb
};

struct LossOutput {
  double total = 0.0;
  double i2t = 0.0;
  double t2i = 0.0;
  Matrix d_images;  // gradient w.r.t. the image embedding rows
  Matrix d_texts;   // gradient w.r.t. the text embedding rows
  double d_theta = 0.0;
};

/// S[i][j] = x_i . y_j, fixed ascending summation.
Matrix similarity_matrix(const Matrix& x, const Matrix& y);

/// Two-direction normalized softmax loss over in-batch negatives with
/// label smoothing and a learnable temperature.
///
/// Per query row the smoothed target puts 1 - alpha on the paired column
/// and spreads alpha uniformly over the softmax support. The support is
/// all N columns, or -- when negative_fraction < 1 -- the diagonal plus a
/// per-row sample of ceil(fraction * (N-1)) off-diagonal columns drawn
/// deterministically from negative_mask_seed. Row i of either direction
/// uses the same sample, so t2i(X, Y) == i2t(Y, X) exactly.
///
/// Rows must be unit-norm within 1e-6 (normalization is the encoder's
/// job). Gradients w.r.t. both embedding matrices and theta are exact.
LossOutput contrastive_loss(const Matrix& images, const Matrix& texts,
                            Temperature temperature, const LossConfig& config,
                            std::uint64_t negative_mask_seed = 0);

/// Row-wise concatenation in shard order; pairing preserved. Feeding the
/// gathered batch to contrastive_loss is bitwise identical to an
/// unsharded batch.
BatchEmbeddings gather_shards(std::span<const BatchEmbeddings> shards);

}  // namespace duet
