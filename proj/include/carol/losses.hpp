#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "carol/distances.hpp"

namespace carol {

// How contrastive samples are assembled and measured. n is the per-class
// sample size; the loss itself always derives its weights from the sample
// actually handed to it.
struct CarolConfig {
  std::size_t n = 3;
  DistanceKind distance = DistanceKind::Euclidean;
  std::uint64_t seed = 0;
};

// Decoder buckets can be exactly zero only through underflow; the log is
// clamped there and the gradient is the exact derivative of the clamped
// expression (zero inside the clamp).
inline constexpr double kLogClamp = 1e-12;

struct LossBreakdown {
  double carol = 0.0;
  double recon = 0.0;
  double total = 0.0;
  double c = 0.0;
};

// total = c*carol + (1-c)*recon. At the endpoints the unused term is
// dropped entirely so c=0 reproduces recon bit-for-bit (and c=1 carol).
LossBreakdown combined_loss(double c, double carol, double recon);

struct ReconLoss {
  double value = 0.0;
  Eigen::VectorXd grad;  // with respect to the decoder output
};

// Cross-entropy -sum p_i log q_i between the normalized token-count
// distribution p = original/sum(original) and the decoder softmax q.
ReconLoss recon_loss(const Eigen::VectorXd& decoder_output,
                     const Eigen::VectorXd& original_features);

struct CarolLoss {
  double value = 0.0;
  Eigen::MatrixXd grads;  // row i: gradient with respect to embeddings.row(i)
};

// The up-weight applied to same-class pair distances: 1/(sample_size-1) + 1.
double same_class_pair_weight(std::size_t sample_size);

// Sampled contrastive loss over a balanced sample (rows of embeddings, one
// label per row, equal class counts). Every unordered pair contributes
// -D(a,b) across classes and +D(a,b)*same_class_pair_weight(2n) within a
// class; the sum is divided by the pair count m = n(2n-1).
CarolLoss carol_loss(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels,
                     const CarolConfig& cfg);

struct ClassSeparation {
  double interclass = 0.0;  // mean distance over ordered cross-class pairs
  double intraclass = 0.0;  // sum of the two within-class means
  double separation = 0.0;  // interclass - intraclass
};

// Exact quadratic-cost class separation. The within-class means run over all
// ordered pairs including self-pairs, whose zero distances dilute the mean
// by (|X|-1)/|X|; that is deliberate and matches the sampled loss's framing
// of "smaller intraclass sum = tighter class".
ClassSeparation exact_class_separation(const Eigen::MatrixXd& embeddings,
                                       const std::vector<int>& labels,
                                       DistanceKind distance);

}  // namespace carol
