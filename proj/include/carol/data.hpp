#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "carol/rng.hpp"

namespace carol {

// One labeled text. tokens is always tokenize(text) and features is always
// hash_features(tokens, feat_dim); the factory functions keep that in sync.
struct Document {
  std::string text;
  int label = 0;
  std::vector<std::string> tokens;
  Eigen::VectorXd features;
};

// Immutable after construction. Iteration order is ingestion order.
struct Dataset {
  std::vector<Document> docs;
  int minority_label = 1;
  double imbalance_ratio = 1.0;

  Eigen::Index feat_dim() const { return docs.empty() ? 0 : docs.front().features.size(); }
  std::size_t count_label(int label) const;
};

// Lowercased tokens split on Unicode whitespace, with leading and trailing
// ASCII punctuation stripped per token. Lowercasing is ASCII-only.
std::vector<std::string> tokenize(std::string_view text);

// Stable 64-bit token hash (FNV-1a). Pinned: corpora hashed on one machine
// must load identically everywhere.
std::uint64_t hash_token(std::string_view token);

// Token-count vector of length feat_dim; bucket = hash_token(t) % feat_dim.
// Sum equals the token count exactly.
Eigen::VectorXd hash_features(const std::vector<std::string>& tokens, Eigen::Index feat_dim);

Document make_document(std::string text, int label, Eigen::Index feat_dim);

// Computes minority_label (smaller class; tie goes to label 1) and the
// imbalance ratio. Requires both labels present and a consistent feat_dim.
Dataset make_dataset(std::vector<Document> docs);
// Same, but with the minority label fixed by the caller (splits inherit the
// parent dataset's labeling even if rounding perturbs the counts).
Dataset make_dataset(std::vector<Document> docs, int minority_label);

struct NoiseConfig {
  double deletion_ratio = 0.6;
  std::uint64_t seed = 0;
};

// Deletes each token independently with probability deletion_ratio; if the
// pass deletes everything, one uniformly chosen token is retained instead.
// Text, tokens, and features are re-derived together.
Document add_noise(const Document& doc, double deletion_ratio, Rng& rng);
Document add_noise(const Document& doc, const NoiseConfig& cfg);

// n uniform draws from the docs with the given label: without replacement
// while the class is large enough, with replacement otherwise.
std::vector<std::size_t> class_sample_indices(const Dataset& ds, int label, std::size_t n,
                                              Rng& rng);
std::vector<Document> class_sample(const Dataset& ds, int label, std::size_t n,
                                   std::uint64_t seed);

// Per-class proportional split; both classes must land in both halves.
std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double test_frac,
                                             std::uint64_t seed);

// Two class-conditional unigram distributions over a shared vocabulary.
// Each token of a class-c document is drawn from the class's own half of the
// vocabulary with probability 1 - overlap and from the whole vocabulary
// otherwise, so overlap 0 gives disjoint support and overlap 1 identical
// distributions. Label 1 is the minority class.
struct SyntheticSpec {
  std::size_t n_minority = 150;
  double imbalance_ratio = 9.0;
  double overlap = 0.6;
  std::size_t vocab_size = 1000;
  std::size_t doc_len = 16;
  std::uint64_t seed = 0;
  Eigen::Index feat_dim = 1024;
};

Dataset gen_synthetic(const SyntheticSpec& spec);

// Corpus files hold one JSON object per line with fields "text" and "label".
Dataset load_corpus(const std::string& path, Eigen::Index feat_dim);
void save_corpus(const Dataset& ds, const std::string& path);
// Corpus plus a <path>.meta.json sidecar recording the generator parameters.
void save_synthetic_corpus(const Dataset& ds, const SyntheticSpec& spec,
                           const std::string& path);

}  // namespace carol
