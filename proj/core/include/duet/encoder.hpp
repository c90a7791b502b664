#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "duet/matrix.hpp"

namespace duet {

/// Dual-tower parameters. Image tower: 2-layer perceptron
/// d_img -> hidden (tanh) -> d_emb. Text tower: token embedding table,
/// mean pool over non-pad tokens, linear projection to d_emb. Both towers
/// end in L2 normalization.
struct EncoderParams {
  Matrix img_w1;                // hidden x d_img
  std::vector<double> img_b1;   // hidden
  Matrix img_w2;                // d_emb x hidden
  std::vector<double> img_b2;   // d_emb
  Matrix tok_embed;             // vocab x d_tok
  Matrix txt_proj;              // d_emb x d_tok
  std::vector<double> txt_b;    // d_emb

  std::size_t image_dim() const { return img_w1.cols(); }
  std::size_t hidden_dim() const { return img_w1.rows(); }
  std::size_t token_dim() const { return tok_embed.cols(); }
  std::size_t embed_dim() const { return img_w2.rows(); }
  std::size_t vocab_size() const { return tok_embed.rows(); }
};

/// Gradients with the same shapes as EncoderParams.
struct EncoderGrads {
  Matrix img_w1;
  std::vector<double> img_b1;
  Matrix img_w2;
  std::vector<double> img_b2;
  Matrix tok_embed;
  Matrix txt_proj;
  std::vector<double> txt_b;

  static EncoderGrads zeros_like(const EncoderParams& p);
};

/// Weights ~ uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)); biases
/// zero. The embedding table counts vocab_size as fan-in and d_tok as
/// fan-out. Deterministic given seed.
EncoderParams init_params(std::size_t d_img, std::size_t hidden, std::size_t d_tok,
                          std::size_t d_emb, std::size_t vocab_size,
                          std::uint64_t seed);

/// Forward activations kept for the backward pass. Rows of different
/// caches concatenate (gather) without changing any value.
struct ImageCache {
  Matrix features;    // N x d_img
  Matrix hidden;      // N x hidden, tanh already applied
  Matrix embeddings;  // N x d_emb, unit rows
  std::vector<double> raw_norms;
};

struct TextCache {
  std::vector<std::vector<int>> token_ids;
  Matrix pooled;      // N x d_tok mean-pooled token embeddings
  Matrix embeddings;  // N x d_emb, unit rows
  std::vector<double> raw_norms;
};

/// Rows processed independently in ascending order; output rows are
/// unit-norm. cache may be null when no backward pass follows.
Matrix encode_image(const Matrix& features, const EncoderParams& params,
                    ImageCache* cache = nullptr);

/// Sequences must be nonempty with at least one non-pad token.
Matrix encode_text(const std::vector<std::vector<int>>& token_ids,
                   const EncoderParams& params, TextCache* cache = nullptr);

ImageCache gather_image_caches(std::span<const ImageCache> shards);
TextCache gather_text_caches(std::span<const TextCache> shards);

/// Exact analytic gradients, including the L2-normalization Jacobian
/// (I - vv^T)/||u||. Accumulates into grads in ascending row order.
void image_backward(const Matrix& d_embeddings, const ImageCache& cache,
                    const EncoderParams& params, EncoderGrads& grads);
void text_backward(const Matrix& d_embeddings, const TextCache& cache,
                   const EncoderParams& params, EncoderGrads& grads);

/// Checkpoint: magic string, version, shape table, then row-major 64-bit
/// floats per tensor. theta is the log-space temperature, stored as its
/// own tensor. Bit-exact round trip.
void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params,
                     double theta);
struct Checkpoint {
  EncoderParams params;
  double theta = 0.0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace duet
