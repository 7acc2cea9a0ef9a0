#include "carol/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "carol/errors.hpp"

namespace carol {

namespace {

bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x0009: case 0x000A: case 0x000B: case 0x000C: case 0x000D:
    case 0x0020: case 0x0085: case 0x00A0: case 0x1680:
    case 0x2000: case 0x2001: case 0x2002: case 0x2003: case 0x2004:
    case 0x2005: case 0x2006: case 0x2007: case 0x2008: case 0x2009:
    case 0x200A: case 0x2028: case 0x2029: case 0x202F: case 0x205F:
    case 0x3000:
      return true;
    default:
      return false;
  }
}

// Decodes the code point starting at i and advances i past it. Malformed
// bytes are passed through one at a time rather than rejected; tokenization
// must not fail on arbitrary input.
char32_t decode_utf8(std::string_view s, std::size_t& i) {
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  const unsigned char b0 = byte(i);
  const auto cont = [&](std::size_t k) {
    return k < s.size() && (byte(k) & 0xC0) == 0x80;
  };
  if (b0 < 0x80) {
    i += 1;
    return b0;
  }
  if ((b0 & 0xE0) == 0xC0 && cont(i + 1)) {
    const char32_t cp = ((b0 & 0x1Fu) << 6) | (byte(i + 1) & 0x3Fu);
    i += 2;
    return cp;
  }
  if ((b0 & 0xF0) == 0xE0 && cont(i + 1) && cont(i + 2)) {
    const char32_t cp =
        ((b0 & 0x0Fu) << 12) | ((byte(i + 1) & 0x3Fu) << 6) | (byte(i + 2) & 0x3Fu);
    i += 3;
    return cp;
  }
  if ((b0 & 0xF8) == 0xF0 && cont(i + 1) && cont(i + 2) && cont(i + 3)) {
    const char32_t cp = ((b0 & 0x07u) << 18) | ((byte(i + 1) & 0x3Fu) << 12) |
                        ((byte(i + 2) & 0x3Fu) << 6) | (byte(i + 3) & 0x3Fu);
    i += 4;
    return cp;
  }
  i += 1;
  return b0;
}

bool is_ascii_punct(unsigned char c) {
  return c < 0x80 && std::ispunct(c) != 0;
}

void strip_and_emit(std::string& raw, std::vector<std::string>& out) {
  std::size_t lo = 0, hi = raw.size();
  while (lo < hi && is_ascii_punct(static_cast<unsigned char>(raw[lo]))) ++lo;
  while (hi > lo && is_ascii_punct(static_cast<unsigned char>(raw[hi - 1]))) --hi;
  if (hi > lo) out.emplace_back(raw.substr(lo, hi - lo));
  raw.clear();
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string text;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) text += ' ';
    text += tokens[i];
  }
  return text;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    const char32_t cp = decode_utf8(text, i);
    if (is_unicode_space(cp)) {
      strip_and_emit(current, tokens);
      continue;
    }
    for (std::size_t k = start; k < i; ++k) {
      char c = text[k];
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      current += c;
    }
  }
  strip_and_emit(current, tokens);
  return tokens;
}

std::uint64_t hash_token(std::string_view token) {
  // FNV-1a, 64-bit. Pinned: changing this silently re-buckets every corpus.
  std::uint64_t h = 14695981039346656037ull;
  for (const char c : token) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

Eigen::VectorXd hash_features(const std::vector<std::string>& tokens, Eigen::Index feat_dim) {
  if (feat_dim <= 0) throw ConfigError("feat_dim must be positive");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(feat_dim);
  for (const std::string& t : tokens)
    v(static_cast<Eigen::Index>(hash_token(t) % static_cast<std::uint64_t>(feat_dim))) += 1.0;
  return v;
}

Document make_document(std::string text, int label, Eigen::Index feat_dim) {
  if (label != 0 && label != 1)
    throw DataError("label must be 0 or 1, got " + std::to_string(label));
  Document doc;
  doc.text = std::move(text);
  doc.label = label;
  doc.tokens = tokenize(doc.text);
  doc.features = hash_features(doc.tokens, feat_dim);
  return doc;
}

std::size_t Dataset::count_label(int label) const {
  std::size_t n = 0;
  for (const Document& d : docs) n += (d.label == label) ? 1 : 0;
  return n;
}

namespace {

Dataset finish_dataset(std::vector<Document> docs, int minority_label) {
  Dataset ds;
  ds.docs = std::move(docs);
  if (ds.docs.empty()) throw DataError("dataset is empty");
  const Eigen::Index dim = ds.docs.front().features.size();
  for (const Document& d : ds.docs)
    if (d.features.size() != dim)
      throw std::invalid_argument("documents disagree on feat_dim");
  const std::size_t minority = ds.count_label(minority_label);
  const std::size_t majority = ds.docs.size() - minority;
  if (minority == 0 || majority == 0)
    throw DataError("dataset must contain both classes");
  ds.minority_label = minority_label;
  ds.imbalance_ratio = static_cast<double>(majority) / static_cast<double>(minority);
  return ds;
}

}  // namespace

Dataset make_dataset(std::vector<Document> docs) {
  std::size_t ones = 0;
  for (const Document& d : docs) ones += (d.label == 1) ? 1 : 0;
  const std::size_t zeros = docs.size() - ones;
  // tie goes to label 1 so the positive class is stable on balanced data
  const int minority_label = (ones <= zeros) ? 1 : 0;
  return finish_dataset(std::move(docs), minority_label);
}

Dataset make_dataset(std::vector<Document> docs, int minority_label) {
  if (minority_label != 0 && minority_label != 1)
    throw DataError("minority label must be 0 or 1");
  return finish_dataset(std::move(docs), minority_label);
}

Document add_noise(const Document& doc, double deletion_ratio, Rng& rng) {
  if (deletion_ratio < 0.0 || deletion_ratio >= 1.0)
    throw ConfigError("deletion_ratio must lie in [0, 1)");
  if (doc.tokens.empty()) throw DataError("cannot noise a document with no tokens");

  std::vector<std::string> kept;
  kept.reserve(doc.tokens.size());
  for (const std::string& t : doc.tokens)
    if (rng.uniform() >= deletion_ratio) kept.push_back(t);
  if (kept.empty()) kept.push_back(doc.tokens[rng.below(doc.tokens.size())]);

  Document noised;
  noised.label = doc.label;
  noised.tokens = std::move(kept);
  noised.text = join_tokens(noised.tokens);
  noised.features = hash_features(noised.tokens, doc.features.size());
  return noised;
}

Document add_noise(const Document& doc, const NoiseConfig& cfg) {
  Rng rng(cfg.seed);
  return add_noise(doc, cfg.deletion_ratio, rng);
}

std::vector<std::size_t> class_sample_indices(const Dataset& ds, int label, std::size_t n,
                                              Rng& rng) {
  if (n == 0) throw ConfigError("sample size must be positive");
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < ds.docs.size(); ++i)
    if (ds.docs[i].label == label) pool.push_back(i);
  if (pool.empty())
    throw DataError("no documents with label " + std::to_string(label));

  std::vector<std::size_t> picked;
  picked.reserve(n);
  if (pool.size() >= n) {
    // partial Fisher-Yates: first n entries are a uniform draw w/o replacement
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + rng.below(pool.size() - i);
      std::swap(pool[i], pool[j]);
      picked.push_back(pool[i]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) picked.push_back(pool[rng.below(pool.size())]);
  }
  return picked;
}

std::vector<Document> class_sample(const Dataset& ds, int label, std::size_t n,
                                   std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Document> out;
  out.reserve(n);
  for (const std::size_t i : class_sample_indices(ds, label, n, rng))
    out.push_back(ds.docs[i]);
  return out;
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double test_frac,
                                             std::uint64_t seed) {
  if (!(test_frac > 0.0 && test_frac < 1.0))
    throw ConfigError("test_frac must lie strictly between 0 and 1");
  Rng rng(seed);
  std::vector<std::size_t> test_idx, train_idx;
  for (const int label : {0, 1}) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < ds.docs.size(); ++i)
      if (ds.docs[i].label == label) pool.push_back(i);
    for (std::size_t i = pool.size(); i > 1; --i)
      std::swap(pool[i - 1], pool[rng.below(i)]);
    const auto n_test = static_cast<std::size_t>(
        std::llround(test_frac * static_cast<double>(pool.size())));
    if (n_test < 1 || n_test >= pool.size())
      throw DataError("class " + std::to_string(label) +
                      " too small to appear in both splits");
    test_idx.insert(test_idx.end(), pool.begin(), pool.begin() + n_test);
    train_idx.insert(train_idx.end(), pool.begin() + n_test, pool.end());
  }
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  const auto gather = [&](const std::vector<std::size_t>& idx) {
    std::vector<Document> docs;
    docs.reserve(idx.size());
    for (const std::size_t i : idx) docs.push_back(ds.docs[i]);
    return make_dataset(std::move(docs), ds.minority_label);
  };
  return {gather(train_idx), gather(test_idx)};
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n_minority == 0) throw ConfigError("n_minority must be positive");
  if (spec.imbalance_ratio < 1.0) throw ConfigError("imbalance_ratio must be >= 1");
  if (spec.overlap < 0.0 || spec.overlap > 1.0)
    throw ConfigError("overlap must lie in [0, 1]");
  if (spec.vocab_size < 2) throw ConfigError("vocab_size must be at least 2");
  if (spec.doc_len == 0) throw ConfigError("doc_len must be positive");

  int width = 1;
  for (std::size_t v = spec.vocab_size - 1; v >= 10; v /= 10) ++width;
  const auto token_name = [&](std::size_t idx) {
    std::string digits = std::to_string(idx);
    return "w" + std::string(width - digits.size(), '0') + digits;
  };

  const std::size_t half = spec.vocab_size / 2;
  const auto n_majority = static_cast<std::size_t>(
      std::llround(static_cast<double>(spec.n_minority) * spec.imbalance_ratio));

  Rng rng(spec.seed);
  std::vector<Document> docs;
  docs.reserve(n_majority + spec.n_minority);
  const auto emit_doc = [&](int label) {
    // class 0 owns [0, half), class 1 owns [half, vocab)
    const std::size_t lo = (label == 0) ? 0 : half;
    const std::size_t hi = (label == 0) ? half : spec.vocab_size;
    std::vector<std::string> tokens;
    tokens.reserve(spec.doc_len);
    for (std::size_t t = 0; t < spec.doc_len; ++t) {
      const bool shared = rng.uniform() < spec.overlap;
      const std::size_t idx = shared ? rng.below(spec.vocab_size) : lo + rng.below(hi - lo);
      tokens.push_back(token_name(idx));
    }
    docs.push_back(make_document(join_tokens(tokens), label, spec.feat_dim));
  };
  for (std::size_t i = 0; i < n_majority; ++i) emit_doc(0);
  for (std::size_t i = 0; i < spec.n_minority; ++i) emit_doc(1);
  return make_dataset(std::move(docs));
}

Dataset load_corpus(const std::string& path, Eigen::Index feat_dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus: " + path);
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto at = [&] { return path + ":" + std::to_string(line_no) + ": "; };
    const nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw DataError(at() + "malformed JSON");
    if (!j.is_object() || !j.contains("text") || !j.contains("label"))
      throw DataError(at() + "expected an object with text and label fields");
    if (!j["text"].is_string() || !j["label"].is_number_integer())
      throw DataError(at() + "text must be a string and label an integer");
    const int label = j["label"].get<int>();
    if (label != 0 && label != 1)
      throw DataError(at() + "label must be 0 or 1, got " + std::to_string(label));
    Document doc = make_document(j["text"].get<std::string>(), label, feat_dim);
    if (doc.tokens.empty())
      throw DataError(at() + "document has no tokens after tokenization");
    docs.push_back(std::move(doc));
  }
  if (docs.empty()) throw DataError(path + ": corpus is empty");
  return make_dataset(std::move(docs));
}

void save_corpus(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open corpus for writing: " + path);
  for (const Document& doc : ds.docs) {
    nlohmann::ordered_json j;
    j["text"] = doc.text;
    j["label"] = doc.label;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("failed writing corpus: " + path);
}

void save_synthetic_corpus(const Dataset& ds, const SyntheticSpec& spec,
                           const std::string& path) {
  save_corpus(ds, path);
  nlohmann::ordered_json meta;
  meta["generator"] = "gen_synthetic";
  meta["n_minority"] = spec.n_minority;
  meta["imbalance_ratio"] = spec.imbalance_ratio;
  meta["overlap"] = spec.overlap;
  meta["vocab_size"] = spec.vocab_size;
  meta["doc_len"] = spec.doc_len;
  meta["seed"] = spec.seed;
  meta["feat_dim"] = spec.feat_dim;
  const std::string meta_path = path + ".meta.json";
  std::ofstream out(meta_path);
  if (!out) throw DataError("cannot open metadata sidecar for writing: " + meta_path);
  out << meta.dump(2) << '\n';
  if (!out) throw DataError("failed writing metadata sidecar: " + meta_path);
}

}  // namespace carol
