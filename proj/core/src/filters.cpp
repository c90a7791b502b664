#include "duet/filters.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <json.hpp>

#include "duet/errors.hpp"

namespace duet {

void FilterRules::validate() const {
  if (min_short_dim <= 0 || max_aspect_ratio <= 0.0 || max_alt_texts_per_image <= 0 ||
      max_images_per_text <= 0 || min_unigrams <= 0 || max_unigrams <= 0 ||
      frequent_ngram_top_k == 0)
    throw DataError("filter thresholds must be strictly positive");
  if (min_unigrams > max_unigrams)
    throw DataError("min_unigrams must not exceed max_unigrams");
}

std::size_t FilterReport::total_dropped() const {
  std::size_t n = 0;
  for (const auto& [rule, count] : dropped_by_rule) n += count;
  return n;
}

FilterDecision image_filter(const ImageTextPair& pair, const FilterRules& rules) {
  if (pair.unsafe) return {false, kRuleUnsafe};
  int short_dim = std::min(pair.width, pair.height);
  if (short_dim <= rules.min_short_dim) return {false, kRuleShortDim};
  double aspect = static_cast<double>(std::max(pair.width, pair.height)) /
                  static_cast<double>(short_dim);
  if (aspect >= rules.max_aspect_ratio) return {false, kRuleAspectRatio};
  if (pair.num_alt_texts > rules.max_alt_texts_per_image)
    return {false, kRuleAltTextCount};
  return {true, {}};
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

FrequencyTable count_ngrams(const Corpus& corpus, std::size_t top_k) {
  FrequencyTable table;
  for (const ImageTextPair& pair : corpus) {
    std::vector<std::string> tokens = split_tokens(pair.alt_text);
    for (const std::string& t : tokens) ++table.unigram_counts[t];
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
      ++table.bigram_counts[tokens[i] + " " + tokens[i + 1]];
  }

  // One joint ranking over unigrams and bigrams; ties break on the key so
  // membership is order-independent.
  std::vector<std::pair<std::string, std::int64_t>> ranked;
  ranked.reserve(table.unigram_counts.size() + table.bigram_counts.size());
  for (const auto& e : table.unigram_counts) ranked.push_back(e);
  for (const auto& e : table.bigram_counts) ranked.push_back(e);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (std::size_t i = 0; i < ranked.size() && i < top_k; ++i)
    table.top_k_membership.insert(ranked[i].first);
  return table;
}

namespace {

const std::string* text_drop_rule(const ImageTextPair& pair,
                                  const std::map<std::string, int>& text_counts,
                                  const FrequencyTable& freq,
                                  const FilterRules& rules) {
  static const std::string kShared = kRuleSharedText;
  static const std::string kRare = kRuleRareToken;
  static const std::string kLength = kRuleTextLength;

  if (text_counts.at(pair.alt_text) > rules.max_images_per_text) return &kShared;

  std::vector<std::string> tokens = split_tokens(pair.alt_text);
  for (const std::string& t : tokens) {
    if (!freq.top_k_membership.contains(t)) return &kRare;
  }
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (!freq.top_k_membership.contains(tokens[i] + " " + tokens[i + 1])) return &kRare;
  }

  auto n = static_cast<int>(tokens.size());
  if (n < rules.min_unigrams || n > rules.max_unigrams) return &kLength;
  return nullptr;
}

}  // namespace

std::pair<Corpus, FilterReport> text_filter(const Corpus& corpus,
                                            const FrequencyTable& freq,
                                            const FilterRules& rules) {
  rules.validate();
  std::map<std::string, int> text_counts;
  for (const ImageTextPair& pair : corpus) ++text_counts[pair.alt_text];

  Corpus kept;
  FilterReport report;
  for (const ImageTextPair& pair : corpus) {
    if (const std::string* rule = text_drop_rule(pair, text_counts, freq, rules)) {
      ++report.dropped_by_rule[*rule];
    } else {
      kept.push_back(pair);
    }
  }
  report.kept = kept.size();
  return {std::move(kept), report};
}

std::pair<Corpus, FilterReport> apply_filters(const Corpus& corpus,
                                              const FilterRules& rules) {
  rules.validate();
  Corpus image_kept;
  FilterReport report;
  for (const ImageTextPair& pair : corpus) {
    FilterDecision d = image_filter(pair, rules);
    if (d.keep) {
      image_kept.push_back(pair);
    } else {
      ++report.dropped_by_rule[d.rule];
    }
  }

  FrequencyTable freq = count_ngrams(image_kept, rules.frequent_ngram_top_k);
  auto [kept, text_report] = text_filter(image_kept, freq, rules);
  for (const auto& [rule, count] : text_report.dropped_by_rule)
    report.dropped_by_rule[rule] += count;
  report.kept = kept.size();
  return {std::move(kept), report};
}

void save_frequency_table(const std::filesystem::path& path, const FrequencyTable& freq) {
  std::vector<std::pair<std::string, std::int64_t>> ranked;
  for (const auto& e : freq.unigram_counts) ranked.push_back(e);
  for (const auto& e : freq.bigram_counts) ranked.push_back(e);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (const auto& [token, count] : ranked) {
    nlohmann::json j;
    j["token"] = token;
    j["count"] = count;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

FrequencyTable load_frequency_table(const std::filesystem::path& path,
                                    std::size_t top_k) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  FrequencyTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.contains("token") || !j.contains("count"))
      throw DataError("line " + std::to_string(line_no) + ": missing token/count");
    std::string token = j["token"].get<std::string>();
    auto count = j["count"].get<std::int64_t>();
    if (count < 1)
      throw DataError("line " + std::to_string(line_no) + ": count must be >= 1");
    if (token.find(' ') != std::string::npos) {
      table.bigram_counts[token] = count;
    } else {
      table.unigram_counts[token] = count;
    }
  }

  std::vector<std::pair<std::string, std::int64_t>> ranked;
  for (const auto& e : table.unigram_counts) ranked.push_back(e);
  for (const auto& e : table.bigram_counts) ranked.push_back(e);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (std::size_t i = 0; i < ranked.size() && i < top_k; ++i)
    table.top_k_membership.insert(ranked[i].first);
  return table;
}

}  // namespace duet
