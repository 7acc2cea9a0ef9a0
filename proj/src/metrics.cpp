#include "carol/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "carol/errors.hpp"

namespace carol {

Prf prf(const ConfusionCounts& c) {
  Prf out;
  const double tp = static_cast<double>(c.tp);
  if (c.tp + c.fp > 0) out.precision = tp / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) out.recall = tp / static_cast<double>(c.tp + c.fn);
  if (out.precision + out.recall > 0.0)
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

namespace {

void check_overlap_input(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size())
    throw std::invalid_argument("labels misaligned with embeddings");
  if (embeddings.rows() < 2) throw DataError("need at least 2 points");
  bool seen[2] = {false, false};
  for (const int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("labels must be 0/1");
    seen[l] = true;
  }
  if (!seen[0] || !seen[1]) throw DataError("both classes must be present");
}

// Indices of the k nearest neighbors of row i, self excluded, ordered by
// (distance, index).
std::vector<Eigen::Index> k_nearest(const Eigen::MatrixXd& e, Eigen::Index i, std::size_t k,
                                    DistanceKind kind) {
  std::vector<std::pair<double, Eigen::Index>> cand;
  cand.reserve(static_cast<std::size_t>(e.rows()) - 1);
  for (Eigen::Index j = 0; j < e.rows(); ++j) {
    if (j == i) continue;
    cand.emplace_back(distance(kind, e.row(i).transpose(), e.row(j).transpose()), j);
  }
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
  std::vector<Eigen::Index> out;
  out.reserve(k);
  for (std::size_t t = 0; t < k; ++t) out.push_back(cand[t].second);
  return out;
}

}  // namespace

double separability_index(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels,
                          DistanceKind kind) {
  check_overlap_input(embeddings, labels);
  std::size_t matches = 0;
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    const Eigen::Index nn = k_nearest(embeddings, i, 1, kind)[0];
    matches += (labels[static_cast<std::size_t>(nn)] ==
                labels[static_cast<std::size_t>(i)])
                   ? 1
                   : 0;
  }
  return static_cast<double>(matches) / static_cast<double>(embeddings.rows());
}

double kdn(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels, std::size_t k,
           DistanceKind kind) {
  check_overlap_input(embeddings, labels);
  if (k == 0) throw ConfigError("k must be positive");
  if (k >= static_cast<std::size_t>(embeddings.rows()))
    throw DataError("k must be smaller than the dataset size");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    std::size_t disagree = 0;
    for (const Eigen::Index j : k_nearest(embeddings, i, k, kind))
      disagree += (labels[static_cast<std::size_t>(j)] !=
                   labels[static_cast<std::size_t>(i)])
                      ? 1
                      : 0;
    acc += static_cast<double>(disagree) / static_cast<double>(k);
  }
  return acc / static_cast<double>(embeddings.rows());
}

OverlapReport overlap_report(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels,
                             std::size_t k, DistanceKind kind) {
  OverlapReport rep;
  rep.si = separability_index(embeddings, labels, kind);
  rep.kdn = kdn(embeddings, labels, k, kind);
  rep.k = k;
  rep.distance = kind;
  return rep;
}

PcaResult pca_project(const Eigen::MatrixXd& embeddings, Eigen::Index dims) {
  if (dims <= 0) throw ConfigError("projection dims must be positive");
  const Eigen::Index n = embeddings.rows();
  const Eigen::Index d = embeddings.cols();
  if (n < dims) throw std::invalid_argument("need at least as many points as dims");

  PcaResult out;
  out.requested = dims;
  out.mean = embeddings.colwise().mean();
  const Eigen::MatrixXd centered = embeddings.rowwise() - out.mean;
  if (n < 2) {
    out.projected = Eigen::MatrixXd::Zero(n, 0);
    out.components = Eigen::MatrixXd::Zero(0, d);
    out.eigenvalues = Eigen::VectorXd::Zero(0);
    return out;
  }
  Eigen::MatrixXd cov =
      centered.transpose() * centered / static_cast<double>(n - 1);
  const double scale = std::max(cov.trace(), 1.0);

  std::vector<Eigen::VectorXd> comps;
  std::vector<double> eigs;
  for (Eigen::Index c = 0; c < dims; ++c) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(d) / std::sqrt(static_cast<double>(d));
    bool dead = false;
    for (int iter = 0; iter < 1000; ++iter) {
      Eigen::VectorXd w = cov * v;
      const double nw = w.norm();
      if (nw <= 1e-12 * scale) {
        // v lies (numerically) in the null space; retry from a basis vector
        bool rescued = false;
        for (Eigen::Index b = 0; b < d && !rescued; ++b) {
          Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
          e(b) = 1.0;
          if ((cov * e).norm() > 1e-12 * scale) {
            v = e;
            rescued = true;
          }
        }
        if (!rescued) {
          dead = true;
          break;
        }
        continue;
      }
      w /= nw;
      const bool converged = (w - v).norm() < 1e-9;
      v = w;
      if (converged) break;
    }
    const double lambda = dead ? 0.0 : v.dot(cov * v);
    if (lambda <= 1e-12 * scale) break;  // remaining variance is noise floor

    // sign convention: largest-magnitude loading positive, ties lowest index
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      if (std::abs(v(i)) > best) {
        best = std::abs(v(i));
        arg = i;
      }
    }
    if (v(arg) < 0.0) v = -v;

    comps.push_back(v);
    eigs.push_back(lambda);
    cov -= lambda * v * v.transpose();
  }

  const auto found = static_cast<Eigen::Index>(comps.size());
  out.components = Eigen::MatrixXd(found, d);
  out.eigenvalues = Eigen::VectorXd(found);
  for (Eigen::Index i = 0; i < found; ++i) {
    out.components.row(i) = comps[static_cast<std::size_t>(i)].transpose();
    out.eigenvalues(i) = eigs[static_cast<std::size_t>(i)];
  }
  out.projected = centered * out.components.transpose();
  return out;
}

}  // namespace carol
