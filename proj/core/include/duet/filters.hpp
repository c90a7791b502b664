#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "duet/corpus.hpp"

namespace duet {

/// Frequency-based curation thresholds. frequent_ngram_top_k is the
/// desk-scale stand-in for the 100M most-frequent-n-gram cutoff.
struct FilterRules {
  int min_short_dim = 200;
  double max_aspect_ratio = 3.0;
  int max_alt_texts_per_image = 1000;
  int max_images_per_text = 10;
  int min_unigrams = 3;
  int max_unigrams = 20;
  std::size_t frequent_ngram_top_k = 10000;

  void validate() const;  // throws DataError on nonsense thresholds
};

/// Unigram and bigram counts over lowercased whitespace tokens, plus the
/// joint top-K membership set (bigram keys are "first second"). Top-K ties
/// break lexicographically so membership is deterministic.
struct FrequencyTable {
  std::map<std::string, std::int64_t> unigram_counts;
  std::map<std::string, std::int64_t> bigram_counts;
  std::set<std::string> top_k_membership;
};

struct FilterDecision {
  bool keep = true;
  std::string rule;  // first violated rule when keep == false
};

struct FilterReport {
  std::size_t kept = 0;
  std::map<std::string, std::size_t> dropped_by_rule;

  std::size_t total_dropped() const;
};

// Rule names, in evaluation order.
inline constexpr const char* kRuleUnsafe = "unsafe";
inline constexpr const char* kRuleShortDim = "short_dim";
inline constexpr const char* kRuleAspectRatio = "aspect_ratio";
inline constexpr const char* kRuleAltTextCount = "alt_text_count";
inline constexpr const char* kRuleSharedText = "shared_text";
inline constexpr const char* kRuleRareToken = "rare_token";
inline constexpr const char* kRuleTextLength = "text_length";

/// Drop iff unsafe, short dimension <= min_short_dim, aspect ratio >=
/// max_aspect_ratio, or alt-text count > max_alt_texts_per_image, checked
/// in that order.
FilterDecision image_filter(const ImageTextPair& pair, const FilterRules& rules);

/// Lowercased whitespace tokens of one alt-text.
std::vector<std::string> split_tokens(const std::string& text);

FrequencyTable count_ngrams(const Corpus& corpus, std::size_t top_k);

/// Drop iff the exact alt-text occurs on more than max_images_per_text
/// records, any unigram or bigram falls outside the top-K set, or the
/// token count is outside [min_unigrams, max_unigrams] -- checked in that
/// order. Keeps surviving records in input order.
std::pair<Corpus, FilterReport> text_filter(const Corpus& corpus,
                                            const FrequencyTable& freq,
                                            const FilterRules& rules);

/// image_filter then count_ngrams then text_filter, with one merged
/// report whose counts partition the input.
std::pair<Corpus, FilterReport> apply_filters(const Corpus& corpus,
                                              const FilterRules& rules);

/// JSONL persistence, one {"token": ..., "count": ...} per line sorted by
/// (count desc, token asc). Bigram tokens contain a space.
void save_frequency_table(const std::filesystem::path& path, const FrequencyTable& freq);
FrequencyTable load_frequency_table(const std::filesystem::path& path, std::size_t top_k);

}  // namespace duet
