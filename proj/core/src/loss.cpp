#include "duet/loss.hpp"

#include <algorithm>
#include <cmath>

#include "duet/errors.hpp"
#include "duet/rng.hpp"

namespace duet {

void LossConfig::validate() const {
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw DataError("label_smoothing must be in [0, 1)");
  if (!(negative_fraction > 0.0 && negative_fraction <= 1.0))
    throw DataError("negative_fraction must be in (0, 1]");
}

Matrix similarity_matrix(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) throw DataError("similarity_matrix: dimension mismatch");
  Matrix s(x.rows(), y.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < y.rows(); ++j) s(i, j) = dot(x.row(i), y.row(j));
  }
  return s;
}

namespace {

void check_unit_rows(const Matrix& m, const char* which) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (std::abs(l2_norm(m.row(r)) - 1.0) > 1e-6)
      throw DataError(std::string("contrastive_loss: ") + which + " row " +
                      std::to_string(r) + " is not unit-norm");
  }
}

// Softmax support for query row i: the diagonal plus a deterministic
// per-row sample of ceil(fraction * (N-1)) off-diagonal columns.
std::vector<std::size_t> row_support(std::size_t i, std::size_t n, double fraction,
                                     std::uint64_t mask_seed) {
  std::vector<std::size_t> support;
  if (fraction >= 1.0) {
    support.resize(n);
    for (std::size_t j = 0; j < n; ++j) support[j] = j;
    return support;
  }
  auto keep = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(n - 1)));
  std::vector<std::size_t> off_diag;
  off_diag.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (j != i) off_diag.push_back(j);
  }
  Rng rng(Rng::derive_seed(mask_seed, static_cast<std::uint64_t>(i)));
  for (std::size_t j = 0; j < keep; ++j) {
    std::size_t pick = j + rng.uniform_int(off_diag.size() - j);
    std::swap(off_diag[j], off_diag[pick]);
  }
  support.assign(off_diag.begin(), off_diag.begin() + static_cast<std::ptrdiff_t>(keep));
  support.push_back(i);
  std::sort(support.begin(), support.end());
  return support;
}

struct DirectionalResult {
  double loss = 0.0;
  Matrix d_queries;
  Matrix d_keys;
  double d_sigma = 0.0;
};

// One direction of the loss: rows of `queries` classify against rows of
// `keys`, positive on the diagonal. Targets put 1 - alpha on the positive
// and spread alpha uniformly over the support, so they always sum to 1.
DirectionalResult directional_loss(const Matrix& queries, const Matrix& keys,
                                   double sigma, const LossConfig& config,
                                   std::uint64_t mask_seed) {
  std::size_t n = queries.rows();
  auto nd = static_cast<double>(n);
  DirectionalResult res;
  res.d_queries = Matrix(n, queries.cols());
  res.d_keys = Matrix(n, keys.cols());

  std::vector<double> scores(n), probs(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> support =
        row_support(i, n, config.negative_fraction, mask_seed);
    auto m = static_cast<double>(support.size());

    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t idx = 0; idx < support.size(); ++idx) {
      scores[idx] = dot(queries.row(i), keys.row(support[idx]));
      zmax = std::max(zmax, scores[idx] / sigma);
    }
    double denom = 0.0;
    for (std::size_t idx = 0; idx < support.size(); ++idx)
      denom += std::exp(scores[idx] / sigma - zmax);
    double lse = zmax + std::log(denom);

    for (std::size_t idx = 0; idx < support.size(); ++idx) {
      std::size_t j = support[idx];
      probs[idx] = std::exp(scores[idx] / sigma - lse);
      double target = (j == i ? 1.0 - config.label_smoothing : 0.0) +
                      config.label_smoothing / m;
      res.loss += target * (lse - scores[idx] / sigma) / nd;

      double diff = probs[idx] - target;
      double g = diff / (nd * sigma);
      auto dq = res.d_queries.row(i);
      auto key = keys.row(j);
      for (std::size_t c = 0; c < dq.size(); ++c) dq[c] += g * key[c];
      auto dk = res.d_keys.row(j);
      auto query = queries.row(i);
      for (std::size_t c = 0; c < dk.size(); ++c) dk[c] += g * query[c];
      res.d_sigma -= diff * scores[idx] / (sigma * sigma * nd);
    }
  }
  return res;
}

}  // namespace

LossOutput contrastive_loss(const Matrix& images, const Matrix& texts,
                            Temperature temperature, const LossConfig& config,
                            std::uint64_t negative_mask_seed) {
  config.validate();
  if (images.rows() != texts.rows() || images.cols() != texts.cols())
    throw DataError("contrastive_loss: image/text shapes must match");
  if (images.rows() == 0) throw DataError("contrastive_loss: empty batch");
  check_unit_rows(images, "image");
  check_unit_rows(texts, "text");

  double sigma = temperature.sigma();
  DirectionalResult i2t = directional_loss(images, texts, sigma, config,
                                           negative_mask_seed);
  DirectionalResult t2i = directional_loss(texts, images, sigma, config,
                                           negative_mask_seed);

  LossOutput out;
  out.i2t = i2t.loss;
  out.t2i = t2i.loss;
  out.total = i2t.loss + t2i.loss;
  out.d_images = Matrix(images.rows(), images.cols());
  out.d_texts = Matrix(texts.rows(), texts.cols());
  for (std::size_t r = 0; r < images.rows(); ++r) {
    for (std::size_t c = 0; c < images.cols(); ++c) {
      out.d_images(r, c) = i2t.d_queries(r, c) + t2i.d_keys(r, c);
      out.d_texts(r, c) = i2t.d_keys(r, c) + t2i.d_queries(r, c);
    }
  }
  // d(loss)/d(theta) through sigma = exp(theta).
  out.d_theta = (i2t.d_sigma + t2i.d_sigma) * sigma;
  return out;
}

BatchEmbeddings gather_shards(std::span<const BatchEmbeddings> shards) {
  if (shards.empty()) throw DataError("gather_shards: no shards");
  std::vector<Matrix> images, texts;
  for (const BatchEmbeddings& s : shards) {
    if (s.images.rows() != s.texts.rows())
      throw DataError("gather_shards: shard with unpaired rows");
    images.push_back(s.images);
    texts.push_back(s.texts);
  }
  return {vstack(images), vstack(texts)};
}

}  // namespace duet
