#include "carol/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "carol/errors.hpp"

namespace carol {

LossBreakdown combined_loss(double c, double carol, double recon) {
  if (!(c >= 0.0 && c <= 1.0))
    throw ConfigError("c must lie in [0, 1]");
  LossBreakdown b;
  b.carol = carol;
  b.recon = recon;
  b.c = c;
  if (c == 0.0) {
    b.total = recon;
  } else if (c == 1.0) {
    b.total = carol;
  } else {
    b.total = c * carol + (1.0 - c) * recon;
  }
  return b;
}

ReconLoss recon_loss(const Eigen::VectorXd& decoder_output,
                     const Eigen::VectorXd& original_features) {
  const Eigen::Index dim = decoder_output.size();
  if (dim == 0 || original_features.size() != dim)
    throw std::invalid_argument("recon_loss: dimension mismatch");
  if (!decoder_output.allFinite())
    throw NumericalError("recon_loss: decoder output is not finite");
  if (decoder_output.minCoeff() < 0.0 ||
      std::abs(decoder_output.sum() - 1.0) > 1e-3)
    throw std::invalid_argument("recon_loss: decoder output is not a distribution");
  if (original_features.minCoeff() < 0.0)
    throw DataError("recon_loss: negative token counts");
  const double mass = original_features.sum();
  if (mass <= 0.0) throw DataError("recon_loss: zero-sum original features");

  ReconLoss out;
  out.grad = Eigen::VectorXd::Zero(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const double p = original_features(i) / mass;
    const double q = decoder_output(i);
    if (q > kLogClamp) {
      out.value -= p * std::log(q);
      out.grad(i) = -p / q;
    } else {
      out.value -= p * std::log(kLogClamp);
      // the clamped region is constant in q, so its exact derivative is zero
    }
  }
  return out;
}

double same_class_pair_weight(std::size_t sample_size) {
  if (sample_size < 2)
    throw std::invalid_argument("pair weight needs a sample of at least 2");
  return 1.0 / static_cast<double>(sample_size - 1) + 1.0;
}

CarolLoss carol_loss(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels,
                     const CarolConfig& cfg) {
  const Eigen::Index rows = embeddings.rows();
  if (static_cast<std::size_t>(rows) != labels.size())
    throw std::invalid_argument("carol_loss: labels misaligned with embeddings");
  if (rows < 2) throw std::invalid_argument("carol_loss: need at least 2 embeddings");
  std::size_t ones = 0;
  for (const int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("carol_loss: labels must be 0/1");
    ones += (l == 1) ? 1 : 0;
  }
  if (ones * 2 != labels.size())
    throw std::invalid_argument("carol_loss: sample is not balanced");

  const auto len = static_cast<std::size_t>(rows);
  const std::size_t n = len / 2;
  const double m = static_cast<double>(n) * static_cast<double>(2 * n - 1);
  const double w_same = same_class_pair_weight(len);

  CarolLoss out;
  out.grads = Eigen::MatrixXd::Zero(rows, embeddings.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = i + 1; j < rows; ++j) {
      const double d = distance(cfg.distance, embeddings.row(i).transpose(),
                                embeddings.row(j).transpose());
      const bool same = labels[static_cast<std::size_t>(i)] ==
                        labels[static_cast<std::size_t>(j)];
      const double w = same ? w_same : -1.0;
      sum += w * d;
      const DistanceGrad g = distance_grad(cfg.distance, embeddings.row(i).transpose(),
                                           embeddings.row(j).transpose());
      out.grads.row(i) += (w / m) * g.wrt_a.transpose();
      out.grads.row(j) += (w / m) * g.wrt_b.transpose();
    }
  }
  out.value = sum / m;
  return out;
}

ClassSeparation exact_class_separation(const Eigen::MatrixXd& embeddings,
                                       const std::vector<int>& labels,
                                       DistanceKind kind) {
  const Eigen::Index rows = embeddings.rows();
  if (static_cast<std::size_t>(rows) != labels.size())
    throw std::invalid_argument("class separation: labels misaligned with embeddings");
  std::vector<Eigen::Index> by_class[2];
  for (Eigen::Index i = 0; i < rows; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    if (l != 0 && l != 1)
      throw std::invalid_argument("class separation: labels must be 0/1");
    by_class[l].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty())
    throw DataError("class separation: a class is empty");

  ClassSeparation out;
  double cross = 0.0;
  for (const Eigen::Index i : by_class[0])
    for (const Eigen::Index j : by_class[1])
      cross += distance(kind, embeddings.row(i).transpose(), embeddings.row(j).transpose());
  out.interclass = cross / (static_cast<double>(by_class[0].size()) *
                            static_cast<double>(by_class[1].size()));

  // within-class means over all ordered pairs, self-pairs included
  for (const auto& members : by_class) {
    double within = 0.0;
    for (const Eigen::Index i : members)
      for (const Eigen::Index j : members) {
        if (i == j) continue;  // distance to self is zero for every kind here
        within += distance(kind, embeddings.row(i).transpose(),
                           embeddings.row(j).transpose());
      }
    out.intraclass +=
        within / (static_cast<double>(members.size()) * static_cast<double>(members.size()));
  }
  out.separation = out.interclass - out.intraclass;
  return out;
}

}  // namespace carol
