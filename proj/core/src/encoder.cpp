#include "duet/encoder.hpp"

#include <cmath>
#include <fstream>

#include "duet/binio.hpp"
#include "duet/errors.hpp"
#include "duet/rng.hpp"
#include "duet/vocab.hpp"

namespace duet {

EncoderGrads EncoderGrads::zeros_like(const EncoderParams& p) {
  EncoderGrads g;
  g.img_w1 = Matrix(p.img_w1.rows(), p.img_w1.cols());
  g.img_b1.assign(p.img_b1.size(), 0.0);
  g.img_w2 = Matrix(p.img_w2.rows(), p.img_w2.cols());
  g.img_b2.assign(p.img_b2.size(), 0.0);
  g.tok_embed = Matrix(p.tok_embed.rows(), p.tok_embed.cols());
  g.txt_proj = Matrix(p.txt_proj.rows(), p.txt_proj.cols());
  g.txt_b.assign(p.txt_b.size(), 0.0);
  return g;
}

namespace {

void fill_glorot(Matrix& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : w.values()) v = rng.uniform(-a, a);
}

}  // namespace

EncoderParams init_params(std::size_t d_img, std::size_t hidden, std::size_t d_tok,
                          std::size_t d_emb, std::size_t vocab_size,
                          std::uint64_t seed) {
  if (d_img < 1 || hidden < 1 || d_tok < 1 || d_emb < 1 || vocab_size < 2)
    throw DataError("encoder dimensions must be >= 1 (vocab >= 2)");

  Rng rng(Rng::derive_seed(seed, "encoder-init"));
  EncoderParams p;
  p.img_w1 = Matrix(hidden, d_img);
  fill_glorot(p.img_w1, d_img, hidden, rng);
  p.img_b1.assign(hidden, 0.0);
  p.img_w2 = Matrix(d_emb, hidden);
  fill_glorot(p.img_w2, hidden, d_emb, rng);
  p.img_b2.assign(d_emb, 0.0);
  p.tok_embed = Matrix(vocab_size, d_tok);
  fill_glorot(p.tok_embed, vocab_size, d_tok, rng);
  p.txt_proj = Matrix(d_emb, d_tok);
  fill_glorot(p.txt_proj, d_tok, d_emb, rng);
  p.txt_b.assign(d_emb, 0.0);
  return p;
}

Matrix encode_image(const Matrix& features, const EncoderParams& params,
                    ImageCache* cache) {
  if (features.cols() != params.image_dim())
    throw DataError("encode_image: feature dimension mismatch");

  std::size_t n = features.rows();
  std::size_t hidden = params.hidden_dim();
  std::size_t d_emb = params.embed_dim();
  Matrix z(n, hidden);
  Matrix x(n, d_emb);
  std::vector<double> norms(n);

  for (std::size_t r = 0; r < n; ++r) {
    auto f = features.row(r);
    for (std::size_t i = 0; i < hidden; ++i) {
      double a = params.img_b1[i];
      auto w = params.img_w1.row(i);
      for (std::size_t j = 0; j < f.size(); ++j) a += w[j] * f[j];
      z(r, i) = std::tanh(a);
    }
    auto out = x.row(r);
    for (std::size_t o = 0; o < d_emb; ++o) {
      double u = params.img_b2[o];
      auto w = params.img_w2.row(o);
      for (std::size_t i = 0; i < hidden; ++i) u += w[i] * z(r, i);
      out[o] = u;
    }
    norms[r] = l2_norm(out);
    if (!(norms[r] > 1e-300))
      throw NumericError("encode_image: zero-norm embedding at row " + std::to_string(r));
    for (double& v : out) v /= norms[r];
  }

  if (cache) {
    cache->features = features;
    cache->hidden = std::move(z);
    cache->embeddings = x;
    cache->raw_norms = std::move(norms);
  }
  return x;
}

Matrix encode_text(const std::vector<std::vector<int>>& token_ids,
                   const EncoderParams& params, TextCache* cache) {
  std::size_t n = token_ids.size();
  std::size_t d_tok = params.token_dim();
  std::size_t d_emb = params.embed_dim();
  Matrix pooled(n, d_tok);
  Matrix x(n, d_emb);
  std::vector<double> norms(n);

  for (std::size_t r = 0; r < n; ++r) {
    const auto& ids = token_ids[r];
    std::size_t count = 0;
    auto e = pooled.row(r);
    for (int id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= params.vocab_size())
        throw DataError("encode_text: token id out of range");
      if (id == Vocab::kPadId) continue;
      auto row = params.tok_embed.row(static_cast<std::size_t>(id));
      for (std::size_t i = 0; i < d_tok; ++i) e[i] += row[i];
      ++count;
    }
    if (count == 0)
      throw DataError("encode_text: empty token sequence at row " + std::to_string(r));
    for (double& v : e) v /= static_cast<double>(count);

    auto out = x.row(r);
    for (std::size_t o = 0; o < d_emb; ++o) {
      double u = params.txt_b[o];
      auto w = params.txt_proj.row(o);
      for (std::size_t i = 0; i < d_tok; ++i) u += w[i] * e[i];
      out[o] = u;
    }
    norms[r] = l2_norm(out);
    if (!(norms[r] > 1e-300))
      throw NumericError("encode_text: zero-norm embedding at row " + std::to_string(r));
    for (double& v : out) v /= norms[r];
  }

  if (cache) {
    cache->token_ids = token_ids;
    cache->pooled = std::move(pooled);
    cache->embeddings = x;
    cache->raw_norms = std::move(norms);
  }
  return x;
}

ImageCache gather_image_caches(std::span<const ImageCache> shards) {
  ImageCache out;
  std::vector<Matrix> feats, hidden, emb;
  for (const ImageCache& c : shards) {
    feats.push_back(c.features);
    hidden.push_back(c.hidden);
    emb.push_back(c.embeddings);
    out.raw_norms.insert(out.raw_norms.end(), c.raw_norms.begin(), c.raw_norms.end());
  }
  out.features = vstack(feats);
  out.hidden = vstack(hidden);
  out.embeddings = vstack(emb);
  return out;
}

TextCache gather_text_caches(std::span<const TextCache> shards) {
  TextCache out;
  std::vector<Matrix> pooled, emb;
  for (const TextCache& c : shards) {
    out.token_ids.insert(out.token_ids.end(), c.token_ids.begin(), c.token_ids.end());
    pooled.push_back(c.pooled);
    emb.push_back(c.embeddings);
    out.raw_norms.insert(out.raw_norms.end(), c.raw_norms.begin(), c.raw_norms.end());
  }
  out.pooled = vstack(pooled);
  out.embeddings = vstack(emb);
  return out;
}

namespace {

// dL/du for u the pre-normalization vector: (g - (g.v)v) / ||u||.
void normalization_backward(std::span<const double> g, std::span<const double> v,
                            double raw_norm, std::span<double> du) {
  double gv = dot(g, v);
  for (std::size_t i = 0; i < g.size(); ++i) du[i] = (g[i] - gv * v[i]) / raw_norm;
}

}  // namespace

void image_backward(const Matrix& d_embeddings, const ImageCache& cache,
                    const EncoderParams& params, EncoderGrads& grads) {
  if (d_embeddings.rows() != cache.embeddings.rows() ||
      d_embeddings.cols() != cache.embeddings.cols())
    throw DataError("image_backward: gradient shape does not match cache");

  std::size_t n = d_embeddings.rows();
  std::size_t hidden = params.hidden_dim();
  std::size_t d_emb = params.embed_dim();
  std::size_t d_img = params.image_dim();
  std::vector<double> du(d_emb), dz(hidden);

  for (std::size_t r = 0; r < n; ++r) {
    normalization_backward(d_embeddings.row(r), cache.embeddings.row(r),
                           cache.raw_norms[r], du);
    for (std::size_t i = 0; i < hidden; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < d_emb; ++o) acc += params.img_w2(o, i) * du[o];
      dz[i] = acc;
    }
    auto f = cache.features.row(r);
    for (std::size_t o = 0; o < d_emb; ++o) {
      grads.img_b2[o] += du[o];
      auto w2row = grads.img_w2.row(o);
      for (std::size_t i = 0; i < hidden; ++i) w2row[i] += du[o] * cache.hidden(r, i);
    }
    for (std::size_t i = 0; i < hidden; ++i) {
      double zi = cache.hidden(r, i);
      double da = dz[i] * (1.0 - zi * zi);
      grads.img_b1[i] += da;
      auto w1row = grads.img_w1.row(i);
      for (std::size_t j = 0; j < d_img; ++j) w1row[j] += da * f[j];
    }
  }
}

void text_backward(const Matrix& d_embeddings, const TextCache& cache,
                   const EncoderParams& params, EncoderGrads& grads) {
  if (d_embeddings.rows() != cache.embeddings.rows() ||
      d_embeddings.cols() != cache.embeddings.cols())
    throw DataError("text_backward: gradient shape does not match cache");

  std::size_t n = d_embeddings.rows();
  std::size_t d_tok = params.token_dim();
  std::size_t d_emb = params.embed_dim();
  std::vector<double> du(d_emb), de(d_tok);

  for (std::size_t r = 0; r < n; ++r) {
    normalization_backward(d_embeddings.row(r), cache.embeddings.row(r),
                           cache.raw_norms[r], du);
    for (std::size_t i = 0; i < d_tok; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < d_emb; ++o) acc += params.txt_proj(o, i) * du[o];
      de[i] = acc;
    }
    for (std::size_t o = 0; o < d_emb; ++o) {
      grads.txt_b[o] += du[o];
      auto prow = grads.txt_proj.row(o);
      for (std::size_t i = 0; i < d_tok; ++i) prow[i] += du[o] * cache.pooled(r, i);
    }
    std::size_t count = 0;
    for (int id : cache.token_ids[r]) {
      if (id != Vocab::kPadId) ++count;
    }
    double scale = 1.0 / static_cast<double>(count);
    for (int id : cache.token_ids[r]) {
      if (id == Vocab::kPadId) continue;
      auto erow = grads.tok_embed.row(static_cast<std::size_t>(id));
      for (std::size_t i = 0; i < d_tok; ++i) erow[i] += scale * de[i];
    }
  }
}

namespace {

constexpr char kMagic[8] = {'D', 'U', 'E', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

struct TensorView {
  const char* name;
  std::vector<std::uint64_t> shape;
  std::span<const double> values;
};

std::vector<TensorView> checkpoint_layout(const EncoderParams& p, const double& theta) {
  return {
      {"img_w1", {p.img_w1.rows(), p.img_w1.cols()}, p.img_w1.values()},
      {"img_b1", {p.img_b1.size()}, p.img_b1},
      {"img_w2", {p.img_w2.rows(), p.img_w2.cols()}, p.img_w2.values()},
      {"img_b2", {p.img_b2.size()}, p.img_b2},
      {"tok_embed", {p.tok_embed.rows(), p.tok_embed.cols()}, p.tok_embed.values()},
      {"txt_proj", {p.txt_proj.rows(), p.txt_proj.cols()}, p.txt_proj.values()},
      {"txt_b", {p.txt_b.size()}, p.txt_b},
      {"temperature_theta", {1}, {&theta, 1}},
  };
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params,
                     double theta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(kMagic, sizeof kMagic);
  write_u32_le(out, kVersion);

  auto tensors = checkpoint_layout(params, theta);
  write_u32_le(out, static_cast<std::uint32_t>(tensors.size()));
  for (const TensorView& t : tensors) {
    std::string name = t.name;
    write_u32_le(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32_le(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::uint64_t d : t.shape) write_u64_le(out, d);
  }
  for (const TensorView& t : tensors) {
    for (double v : t.values) write_f64_le(out, v);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::string_view(magic, 8) != std::string_view(kMagic, 8))
    throw DataError("bad checkpoint magic: " + path.string());
  if (read_u32_le(in) != kVersion)
    throw DataError("unsupported checkpoint version: " + path.string());

  std::uint32_t count = read_u32_le(in);
  std::vector<std::pair<std::string, std::vector<std::uint64_t>>> table;
  for (std::uint32_t t = 0; t < count; ++t) {
    std::uint32_t name_len = read_u32_le(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    std::uint32_t ndim = read_u32_le(in);
    std::vector<std::uint64_t> shape(ndim);
    for (auto& d : shape) d = read_u64_le(in);
    table.emplace_back(std::move(name), std::move(shape));
  }

  Checkpoint ckpt;
  auto read_into = [&](std::span<double> dst) {
    for (double& v : dst) v = read_f64_le(in);
  };
  for (const auto& [name, shape] : table) {
    auto dims = [&](std::size_t i) { return static_cast<std::size_t>(shape.at(i)); };
    if (name == "img_w1") {
      ckpt.params.img_w1 = Matrix(dims(0), dims(1));
      read_into(ckpt.params.img_w1.values());
    } else if (name == "img_b1") {
      ckpt.params.img_b1.resize(dims(0));
      read_into(ckpt.params.img_b1);
    } else if (name == "img_w2") {
      ckpt.params.img_w2 = Matrix(dims(0), dims(1));
      read_into(ckpt.params.img_w2.values());
    } else if (name == "img_b2") {
      ckpt.params.img_b2.resize(dims(0));
      read_into(ckpt.params.img_b2);
    } else if (name == "tok_embed") {
      ckpt.params.tok_embed = Matrix(dims(0), dims(1));
      read_into(ckpt.params.tok_embed.values());
    } else if (name == "txt_proj") {
      ckpt.params.txt_proj = Matrix(dims(0), dims(1));
      read_into(ckpt.params.txt_proj.values());
    } else if (name == "txt_b") {
      ckpt.params.txt_b.resize(dims(0));
      read_into(ckpt.params.txt_b);
    } else if (name == "temperature_theta") {
      read_into({&ckpt.theta, 1});
    } else {
      throw DataError("unknown checkpoint tensor: " + name);
    }
  }
  return ckpt;
}

}  // namespace duet
