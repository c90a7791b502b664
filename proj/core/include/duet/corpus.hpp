#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace duet {

/// One corpus record: an image stands in as a fixed-length feature vector
/// plus the metadata the filters read.
struct ImageTextPair {
  std::string id;
  std::vector<double> image_features;
  std::string alt_text;
  int width = 0;
  int height = 0;
  int num_alt_texts = 1;
  bool unsafe = false;
};

using Corpus = std::vector<ImageTextPair>;

/// JSONL, one record per line with keys id, image_features, alt_text,
/// width, height, num_alt_texts, unsafe_flag. Errors name the offending
/// line or duplicate id. Feature vectors must share one length.
Corpus load_corpus(const std::filesystem::path& path);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus);

/// Synthetic paired data: each pair draws a latent class; image features
/// are the class centroid plus isotropic Gaussian noise; alt-text is 3-20
/// tokens from a class-specific token pool. With probability
/// noise_fraction the text is replaced by uniformly random tokens drawn
/// across all classes. Deterministic given seed. The latent class is
/// recorded in the pair id ("p000042_c003") so downstream evaluation can
/// recover labels from corpus files alone.
Corpus generate_synthetic_corpus(std::size_t n_pairs, std::size_t n_classes,
                                 std::size_t d_img, double noise_fraction,
                                 std::uint64_t seed);

/// Per-class prompt strings for the synthetic corpus, suitable for
/// zero-shot classification: a few short token sequences drawn from each
/// class's pool under the same seed as generate_synthetic_corpus.
std::vector<std::vector<std::string>> synthetic_class_prompts(
    std::size_t n_classes, std::size_t prompts_per_class, std::uint64_t seed);

/// Parses the latent class from a synthetic pair id ("..._c<digits>").
/// Returns nullopt for ids without the suffix.
std::optional<int> latent_class_of(const std::string& id);

}  // namespace duet
