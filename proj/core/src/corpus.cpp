#include "duet/corpus.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "duet/errors.hpp"
#include "duet/matrix.hpp"
#include "duet/rng.hpp"

namespace duet {

namespace {

using nlohmann::json;

constexpr std::size_t kTokensPerClass = 24;

std::string class_token(std::size_t cls, std::size_t slot) {
  std::ostringstream name;
  name << "w" << cls * kTokensPerClass + slot;
  return name.str();
}

ImageTextPair parse_record(const json& j, std::size_t line_no) {
  auto fail = [line_no](const std::string& msg) -> ImageTextPair {
    throw DataError("line " + std::to_string(line_no) + ": " + msg);
  };

  if (!j.is_object()) return fail("record is not a JSON object");
  for (const char* key :
       {"id", "image_features", "alt_text", "width", "height", "num_alt_texts",
        "unsafe_flag"}) {
    if (!j.contains(key)) return fail(std::string("missing field ") + key);
  }

  ImageTextPair pair;
  if (!j["id"].is_string()) return fail("id must be a string");
  pair.id = j["id"].get<std::string>();
  if (!j["image_features"].is_array()) return fail("image_features must be an array");
  for (const auto& v : j["image_features"]) {
    if (!v.is_number()) return fail("image_features entries must be numbers");
    double x = v.get<double>();
    if (!std::isfinite(x)) return fail("image_features entries must be finite");
    pair.image_features.push_back(x);
  }
  if (!j["alt_text"].is_string()) return fail("alt_text must be a string");
  pair.alt_text = j["alt_text"].get<std::string>();
  if (!j["width"].is_number_integer() || !j["height"].is_number_integer())
    return fail("width and height must be integers");
  pair.width = j["width"].get<int>();
  pair.height = j["height"].get<int>();
  if (!j["num_alt_texts"].is_number_integer())
    return fail("num_alt_texts must be an integer");
  pair.num_alt_texts = j["num_alt_texts"].get<int>();
  if (!j["unsafe_flag"].is_boolean()) return fail("unsafe_flag must be a boolean");
  pair.unsafe = j["unsafe_flag"].get<bool>();

  if (pair.width < 1 || pair.height < 1) return fail("width and height must be >= 1");
  if (pair.num_alt_texts < 1) return fail("num_alt_texts must be >= 1");
  return pair;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path.string());

  Corpus corpus;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  std::size_t feature_dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    ImageTextPair pair = parse_record(j, line_no);
    if (!seen_ids.insert(pair.id).second)
      throw DataError("duplicate id: " + pair.id);
    if (corpus.empty()) {
      feature_dim = pair.image_features.size();
    } else if (pair.image_features.size() != feature_dim) {
      throw DataError("line " + std::to_string(line_no) +
                      ": image_features length differs from earlier records");
    }
    corpus.push_back(std::move(pair));
  }
  return corpus;
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  for (const ImageTextPair& pair : corpus) {
    json j;
    j["id"] = pair.id;
    j["image_features"] = pair.image_features;
    j["alt_text"] = pair.alt_text;
    j["width"] = pair.width;
    j["height"] = pair.height;
    j["num_alt_texts"] = pair.num_alt_texts;
    j["unsafe_flag"] = pair.unsafe;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Corpus generate_synthetic_corpus(std::size_t n_pairs, std::size_t n_classes,
                                 std::size_t d_img, double noise_fraction,
                                 std::uint64_t seed) {
  if (n_classes == 0 || n_classes > n_pairs)
    throw DataError("need 1 <= n_classes <= n_pairs");
  if (d_img == 0) throw DataError("d_img must be >= 1");
  if (!(noise_fraction >= 0.0 && noise_fraction <= 1.0))
    throw DataError("noise_fraction must be in [0, 1]");

  Rng rng(Rng::derive_seed(seed, "synthetic-corpus"));

  Matrix centroids(n_classes, d_img);
  for (double& v : centroids.values()) v = rng.normal();

  Corpus corpus;
  corpus.reserve(n_pairs);
  std::size_t total_tokens = n_classes * kTokensPerClass;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    std::size_t cls = rng.uniform_int(n_classes);
    ImageTextPair pair;
    pair.image_features.resize(d_img);
    for (std::size_t d = 0; d < d_img; ++d)
      pair.image_features[d] = centroids(cls, d) + rng.normal(0.0, 0.5);

    bool noisy = rng.uniform() < noise_fraction;
    std::size_t n_tokens = 3 + rng.uniform_int(18);  // 3..20
    std::ostringstream text;
    for (std::size_t t = 0; t < n_tokens; ++t) {
      if (t > 0) text << ' ';
      if (noisy) {
        std::size_t global = rng.uniform_int(total_tokens);
        text << class_token(global / kTokensPerClass, global % kTokensPerClass);
      } else {
        text << class_token(cls, rng.uniform_int(kTokensPerClass));
      }
    }
    pair.alt_text = text.str();

    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "p%06zu_c%03zu", i, cls);
    pair.id = id_buf;
    pair.width = 300 + static_cast<int>(rng.uniform_int(500));
    pair.height = 300 + static_cast<int>(rng.uniform_int(500));
    pair.num_alt_texts = 1;
    pair.unsafe = false;
    corpus.push_back(std::move(pair));
  }
  return corpus;
}

std::vector<std::vector<std::string>> synthetic_class_prompts(
    std::size_t n_classes, std::size_t prompts_per_class, std::uint64_t seed) {
  Rng rng(Rng::derive_seed(seed, "synthetic-prompts"));
  std::vector<std::vector<std::string>> prompts(n_classes);
  for (std::size_t cls = 0; cls < n_classes; ++cls) {
    for (std::size_t p = 0; p < prompts_per_class; ++p) {
      std::ostringstream text;
      std::size_t n_tokens = 3 + rng.uniform_int(4);
      for (std::size_t t = 0; t < n_tokens; ++t) {
        if (t > 0) text << ' ';
        text << class_token(cls, rng.uniform_int(kTokensPerClass));
      }
      prompts[cls].push_back(text.str());
    }
  }
  return prompts;
}

std::optional<int> latent_class_of(const std::string& id) {
  auto pos = id.rfind("_c");
  if (pos == std::string::npos || pos + 2 >= id.size()) return std::nullopt;
  int value = 0;
  for (std::size_t i = pos + 2; i < id.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(id[i]))) return std::nullopt;
    value = value * 10 + (id[i] - '0');
  }
  return value;
}

}  // namespace duet
