#include "duet/vocab.hpp"

#include <algorithm>
#include <fstream>

#include "duet/errors.hpp"
#include "duet/filters.hpp"

namespace duet {

int Vocab::lookup(const std::string& token) const {
  auto it = id_of.find(token);
  return it == id_of.end() ? kUnkId : it->second;
}

namespace {

Vocab from_token_list(std::vector<std::string> tokens) {
  Vocab vocab;
  vocab.tokens = std::move(tokens);
  for (std::size_t i = 0; i < vocab.tokens.size(); ++i) {
    auto [it, inserted] = vocab.id_of.emplace(vocab.tokens[i], static_cast<int>(i));
    if (!inserted) throw DataError("duplicate vocab token: " + vocab.tokens[i]);
  }
  return vocab;
}

}  // namespace

Vocab build_vocab(const Corpus& corpus, std::size_t size) {
  if (size < 2) throw DataError("vocab size must be >= 2 (padding + unknown)");

  std::map<std::string, std::int64_t> counts;
  for (const ImageTextPair& pair : corpus) {
    for (const std::string& t : split_tokens(pair.alt_text)) ++counts[t];
  }
  // The special strings cannot double as corpus tokens.
  counts.erase(Vocab::kPadToken);
  counts.erase(Vocab::kUnkToken);

  std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> tokens{Vocab::kPadToken, Vocab::kUnkToken};
  for (std::size_t i = 0; i < ranked.size() && tokens.size() < size; ++i)
    tokens.push_back(ranked[i].first);
  return from_token_list(std::move(tokens));
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab,
                          std::size_t max_len) {
  std::vector<int> ids;
  for (const std::string& t : split_tokens(text)) {
    if (ids.size() >= max_len) break;
    ids.push_back(vocab.lookup(t));
  }
  return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
  std::string text;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab.size())
      throw DataError("token id out of range: " + std::to_string(ids[i]));
    if (i > 0) text += ' ';
    text += vocab.tokens[ids[i]];
  }
  return text;
}

void save_vocab(const std::filesystem::path& path, const Vocab& vocab) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (const std::string& t : vocab.tokens) out << t << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  if (tokens.size() < 2 || tokens[0] != Vocab::kPadToken || tokens[1] != Vocab::kUnkToken)
    throw DataError("vocab file must start with " + std::string(Vocab::kPadToken) +
                    " and " + Vocab::kUnkToken);
  return from_token_list(std::move(tokens));
}

}  // namespace duet
