#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "duet/corpus.hpp"

namespace duet {

/// Frequency-ranked unigram vocabulary with dense ids. Slot 0 is padding,
/// slot 1 the unknown token.
struct Vocab {
  std::vector<std::string> tokens;
  std::map<std::string, int> id_of;

  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  int size() const { return static_cast<int>(tokens.size()); }
  int lookup(const std::string& token) const;
};

/// Pad, unknown, then the (size - 2) most frequent corpus unigrams with
/// lexicographic tie-break. size must be >= 2.
Vocab build_vocab(const Corpus& corpus, std::size_t size);

inline constexpr std::size_t kDefaultMaxTokens = 64;

/// Lowercase whitespace split, map to ids (unknown for out-of-vocab),
/// truncate to max_len. No padding here.
std::vector<int> tokenize(const std::string& text, const Vocab& vocab,
                          std::size_t max_len = kDefaultMaxTokens);

/// Ids back to space-joined tokens.
std::string detokenize(const std::vector<int>& ids, const Vocab& vocab);

/// Plain text, one token per line, in id order.
void save_vocab(const std::filesystem::path& path, const Vocab& vocab);
Vocab load_vocab(const std::filesystem::path& path);

}  // namespace duet
