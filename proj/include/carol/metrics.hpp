#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "carol/distances.hpp"

namespace carol {

// Minority class = positive class, everywhere.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Any 0/0 is defined as 0.
Prf prf(const ConfusionCounts& counts);

// Fraction of points whose single nearest neighbor (self excluded, ties by
// lowest index) carries the same label.
double separability_index(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels,
                          DistanceKind distance);

// Mean over points of (neighbors among the k nearest with a different
// label)/k. Self excluded, ties by lowest index.
double kdn(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels, std::size_t k,
           DistanceKind distance);

struct OverlapReport {
  double si = 0.0;
  double kdn = 0.0;
  std::size_t k = 5;
  DistanceKind distance = DistanceKind::Euclidean;
};

OverlapReport overlap_report(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels,
                             std::size_t k, DistanceKind distance);

// Mean-centered projection onto the leading principal directions, found by
// power iteration with deflation (tolerance 1e-9, at most 1000 iterations per
// component). Zero-variance directions are dropped, so components may hold
// fewer than the requested number of rows; each component's sign is fixed by
// making its largest-magnitude loading positive.
struct PcaResult {
  Eigen::MatrixXd projected;    // n x found
  Eigen::MatrixXd components;   // found x input_dim, orthonormal rows
  Eigen::VectorXd eigenvalues;  // found, descending
  Eigen::RowVectorXd mean;      // input_dim
  Eigen::Index requested = 0;
};

PcaResult pca_project(const Eigen::MatrixXd& embeddings, Eigen::Index dims = 2);

}  // namespace carol
