#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "carol/errors.hpp"

namespace carol {

// Distance kernels between embedding vectors. The loss code is written
// against distance()/distance_grad() only, so any kind listed here plugs
// into the contrastive loss unchanged.
enum class DistanceKind { Euclidean, Chebyshev, Cosine };

inline std::string to_string(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::Euclidean: return "euclidean";
    case DistanceKind::Chebyshev: return "chebyshev";
    case DistanceKind::Cosine: return "cosine";
  }
  throw std::logic_error("unknown DistanceKind");
}

inline DistanceKind parse_distance_kind(std::string_view name) {
  if (name == "euclidean") return DistanceKind::Euclidean;
  if (name == "chebyshev") return DistanceKind::Chebyshev;
  if (name == "cosine") return DistanceKind::Cosine;
  throw ConfigError("unknown distance kind '" + std::string(name) +
                    "' (expected euclidean|chebyshev|cosine)");
}

namespace detail {

template <typename DA, typename DB>
void check_same_dim(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  if (a.size() == 0 || b.size() == 0)
    throw std::invalid_argument("distance: empty vector");
  if (a.size() != b.size())
    throw std::invalid_argument("distance: dimension mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
}

// Index of the largest |a_i - b_i|, ties broken by lowest index.
template <typename DA, typename DB>
Eigen::Index chebyshev_argmax(const Eigen::MatrixBase<DA>& a,
                              const Eigen::MatrixBase<DB>& b) {
  Eigen::Index best = 0;
  double best_val = -1.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double v = std::abs(static_cast<double>(a(i)) - static_cast<double>(b(i)));
    if (v > best_val) {
      best_val = v;
      best = i;
    }
  }
  return best;
}

}  // namespace detail

template <typename DA, typename DB>
double euclidean_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  detail::check_same_dim(a, b);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a(i)) - static_cast<double>(b(i));
    sum += d * d;
  }
  return std::sqrt(sum);
}

template <typename DA, typename DB>
double chebyshev_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  detail::check_same_dim(a, b);
  double best = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double v = std::abs(static_cast<double>(a(i)) - static_cast<double>(b(i)));
    if (v > best) best = v;
  }
  return best;
}

// 1 - cos(a, b), clamped into [0, 2]. A zero-norm input is an error by
// contract: an epsilon guard here would mask encoder collapse from the
// overlap metrics.
template <typename DA, typename DB>
double cosine_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  detail::check_same_dim(a, b);
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = a(i), y = b(i);
    dot += x * y;
    na2 += x * x;
    nb2 += y * y;
  }
  if (na2 == 0.0 || nb2 == 0.0)
    throw NumericalError("cosine distance undefined for zero-norm input");
  const double v = 1.0 - dot / (std::sqrt(na2) * std::sqrt(nb2));
  return std::min(std::max(v, 0.0), 2.0);
}

template <typename DA, typename DB>
double distance(DistanceKind kind, const Eigen::MatrixBase<DA>& a,
                const Eigen::MatrixBase<DB>& b) {
  switch (kind) {
    case DistanceKind::Euclidean: return euclidean_distance(a, b);
    case DistanceKind::Chebyshev: return chebyshev_distance(a, b);
    case DistanceKind::Cosine: return cosine_distance(a, b);
  }
  throw std::logic_error("unknown DistanceKind");
}

struct DistanceGrad {
  Eigen::VectorXd wrt_a;
  Eigen::VectorXd wrt_b;
};

// Analytic gradients of distance() in both arguments.
// Subgradient choices: euclidean at a == b is the zero vector; chebyshev
// concentrates on the max-|difference| coordinate, ties broken by lowest
// coordinate index.
template <typename DA, typename DB>
DistanceGrad distance_grad(DistanceKind kind, const Eigen::MatrixBase<DA>& a,
                           const Eigen::MatrixBase<DB>& b) {
  detail::check_same_dim(a, b);
  const Eigen::Index n = a.size();
  DistanceGrad g{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  switch (kind) {
    case DistanceKind::Euclidean: {
      const double d = euclidean_distance(a, b);
      if (d > 0.0) {
        for (Eigen::Index i = 0; i < n; ++i) {
          const double diff = (static_cast<double>(a(i)) - static_cast<double>(b(i))) / d;
          g.wrt_a(i) = diff;
          g.wrt_b(i) = -diff;
        }
      }
      return g;
    }
    case DistanceKind::Chebyshev: {
      const Eigen::Index k = detail::chebyshev_argmax(a, b);
      const double diff = static_cast<double>(a(k)) - static_cast<double>(b(k));
      const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      g.wrt_a(k) = s;
      g.wrt_b(k) = -s;
      return g;
    }
    case DistanceKind::Cosine: {
      double dot = 0.0, na2 = 0.0, nb2 = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double x = a(i), y = b(i);
        dot += x * y;
        na2 += x * x;
        nb2 += y * y;
      }
      if (na2 == 0.0 || nb2 == 0.0)
        throw NumericalError("cosine distance undefined for zero-norm input");
      const double na = std::sqrt(na2), nb = std::sqrt(nb2);
      const double inv = 1.0 / (na * nb);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double x = a(i), y = b(i);
        g.wrt_a(i) = (x * (dot / na2) - y) * inv;
        g.wrt_b(i) = (y * (dot / nb2) - x) * inv;
      }
      return g;
    }
  }
  throw std::logic_error("unknown DistanceKind");
}

}  // namespace carol
