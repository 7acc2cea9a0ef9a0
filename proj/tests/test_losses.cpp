#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "carol/data.hpp"
#include "carol/errors.hpp"
#include "carol/losses.hpp"
#include "carol/rng.hpp"

using carol::CarolConfig;
using carol::DistanceKind;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Oracle distance kernels, written against Eigen reductions instead of the
// library's indexed loops.
double oracle_dist(DistanceKind kind, const VectorXd& a, const VectorXd& b) {
  switch (kind) {
    case DistanceKind::Euclidean: return (a - b).norm();
    case DistanceKind::Chebyshev: return (a - b).cwiseAbs().maxCoeff();
    case DistanceKind::Cosine: return 1.0 - a.dot(b) / (a.norm() * b.norm());
  }
  return 0.0;
}

// Brute-force restatement of the sampled loss: every unordered pair, same
// class weighted 1/(len-1)+1, cross class negated, divided by n(2n-1).
double carol_brute(const MatrixXd& e, const std::vector<int>& y, DistanceKind kind) {
  const std::size_t len = y.size();
  const double w_same = 1.0 / static_cast<double>(len - 1) + 1.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = i + 1; j < len; ++j) {
      const double d = oracle_dist(kind, e.row(i).transpose(), e.row(j).transpose());
      acc += (y[i] == y[j]) ? w_same * d : -d;
    }
  const double n = static_cast<double>(len) / 2.0;
  return acc / (n * (2.0 * n - 1.0));
}

// Brute-force class separation straight from its definition: ordered cross
// pairs for the between term, all ordered pairs including self-pairs for the
// two within means.
void separation_brute(const MatrixXd& e, const std::vector<int>& y, DistanceKind kind,
                      double& inter, double& intra) {
  std::vector<int> c0, c1;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] == 0 ? c0 : c1).push_back(static_cast<int>(i));
  double cross = 0.0;
  for (const int i : c0)
    for (const int j : c1) cross += oracle_dist(kind, e.row(i).transpose(), e.row(j).transpose());
  inter = cross / (static_cast<double>(c0.size()) * static_cast<double>(c1.size()));
  intra = 0.0;
  for (const auto* cls : {&c0, &c1}) {
    double within = 0.0;
    for (const int i : *cls)
      for (const int j : *cls)
        within += (i == j) ? 0.0
                           : oracle_dist(kind, e.row(i).transpose(), e.row(j).transpose());
    intra += within / (static_cast<double>(cls->size()) * static_cast<double>(cls->size()));
  }
}

MatrixXd random_embeddings(carol::Rng& rng, int rows, int dim, double offset_row_half) {
  MatrixXd e(rows, dim);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < dim; ++c) e(r, c) = 2.0 * rng.uniform() - 1.0;
  // push the second half away from the origin so cosine stays well-defined
  for (int r = rows / 2; r < rows; ++r) e(r, 0) += offset_row_half;
  return e;
}

std::vector<int> balanced_labels(int n) {
  std::vector<int> y(static_cast<std::size_t>(2 * n), 0);
  for (int i = n; i < 2 * n; ++i) y[static_cast<std::size_t>(i)] = 1;
  return y;
}

VectorXd softmax_of(const VectorXd& logits) {
  VectorXd q = (logits.array() - logits.maxCoeff()).exp().matrix();
  return q / q.sum();
}

}  // namespace

TEST_CASE("recon_loss reproduces hand cross-entropies") {
  VectorXd q = VectorXd::Constant(4, 0.25);
  VectorXd p(4);
  p << 3, 3, 3, 3;  // normalizes to uniform
  const auto r = carol::recon_loss(q, p);
  CHECK(r.value == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  VectorXd q2(3), p2(3);
  q2 << 0.9, 0.05, 0.05;
  p2 << 2, 0, 0;  // one-hot after normalization
  const auto r2 = carol::recon_loss(q2, p2);
  CHECK(r2.value == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
}

TEST_CASE("recon_loss clamps empty decoder buckets") {
  VectorXd q(2), p(2);
  q << 1.0, 0.0;
  p << 1, 1;
  const auto r = carol::recon_loss(q, p);
  CHECK(r.value == doctest::Approx(-0.5 * std::log(1e-12)).epsilon(1e-12));
  CHECK(r.grad(0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(r.grad(1) == 0.0);  // constant region of the clamp
}

TEST_CASE("recon_loss gradient matches central differences") {
  carol::Rng rng(101);
  const double h = 1e-5;
  double worst = 0.0;
  for (int t = 0; t < 300; ++t) {
    const int dim = 4 + static_cast<int>(rng.below(9));
    VectorXd logits(dim), p(dim);
    for (int i = 0; i < dim; ++i) {
      logits(i) = 2.0 * rng.uniform() - 1.0;
      p(i) = rng.uniform();
    }
    p(static_cast<int>(rng.below(static_cast<std::uint64_t>(dim)))) += 1.0;  // positive sum
    const VectorXd q = softmax_of(logits);
    const auto r = carol::recon_loss(q, p);

    VectorXd fd(dim);
    for (int i = 0; i < dim; ++i) {
      VectorXd qp = q, qm = q;
      qp(i) += h;
      qm(i) -= h;
      fd(i) = (carol::recon_loss(qp, p).value - carol::recon_loss(qm, p).value) / (2.0 * h);
    }
    worst = std::max(worst, (r.grad - fd).norm() / std::max(fd.norm(), 1e-12));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("recon_loss validation") {
  VectorXd q(3), p(3);
  q << 0.5, 0.3, 0.2;
  p << 1, 0, 1;
  CHECK_NOTHROW(carol::recon_loss(q, p));

  VectorXd bad_sum(3);
  bad_sum << 0.5, 0.2, 0.1;
  CHECK_THROWS_AS(carol::recon_loss(bad_sum, p), std::invalid_argument);

  VectorXd neg_p(3);
  neg_p << 1, -1, 1;
  CHECK_THROWS_AS(carol::recon_loss(q, neg_p), carol::DataError);
  CHECK_THROWS_AS(carol::recon_loss(q, VectorXd::Zero(3)), carol::DataError);
  CHECK_THROWS_AS(carol::recon_loss(q, VectorXd::Ones(4)), std::invalid_argument);

  // A diverged decoder is a numerical condition, not an API misuse.
  VectorXd nan_q(3);
  nan_q << 0.5, std::numeric_limits<double>::quiet_NaN(), 0.2;
  CHECK_THROWS_AS(carol::recon_loss(nan_q, p), carol::NumericalError);
}

TEST_CASE("carol_loss single cross pair") {
  MatrixXd e(2, 2);
  e << 0, 0, 3, 4;
  const std::vector<int> y{0, 1};
  CarolConfig cfg;
  const auto l = carol::carol_loss(e, y, cfg);
  CHECK(l.value == doctest::Approx(-5.0).epsilon(1e-14));
  // gradient of -D: wrt a is -(a-b)/D
  CHECK(l.grads(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(l.grads(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(l.grads(1, 0) == doctest::Approx(-0.6).epsilon(1e-12));
  CHECK(l.grads(1, 1) == doctest::Approx(-0.8).epsilon(1e-12));
}

TEST_CASE("carol_loss of identical embeddings is zero") {
  MatrixXd e = MatrixXd::Ones(6, 3);
  const std::vector<int> y = balanced_labels(3);
  CarolConfig cfg;
  for (DistanceKind kind : {DistanceKind::Euclidean, DistanceKind::Chebyshev}) {
    cfg.distance = kind;
    const auto l = carol::carol_loss(e, y, cfg);
    CHECK(l.value == 0.0);
    CHECK(l.grads.norm() == 0.0);
  }
}

TEST_CASE("same-class pair weight") {
  CHECK(carol::same_class_pair_weight(6) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(carol::same_class_pair_weight(2) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(carol::same_class_pair_weight(1), std::invalid_argument);
}

TEST_CASE("carol_loss equals the brute-force pair oracle") {
  carol::Rng rng(211);
  CarolConfig cfg;

  // the default sample size first: n=3, 4 dims
  MatrixXd fixed = random_embeddings(rng, 6, 4, 1.5);
  const auto fixed_labels = balanced_labels(3);
  cfg.distance = DistanceKind::Euclidean;
  const auto l = carol::carol_loss(fixed, fixed_labels, cfg);
  CHECK(std::abs(l.value - carol_brute(fixed, fixed_labels, DistanceKind::Euclidean)) <=
        1e-10);

  for (int t = 0; t < 40; ++t) {
    const int n = 2 + static_cast<int>(rng.below(19));
    const int dim = 2 + static_cast<int>(rng.below(15));
    const MatrixXd e = random_embeddings(rng, 2 * n, dim, 2.0);
    const auto y = balanced_labels(n);
    for (DistanceKind kind :
         {DistanceKind::Euclidean, DistanceKind::Chebyshev, DistanceKind::Cosine}) {
      cfg.distance = kind;
      const auto got = carol::carol_loss(e, y, cfg);
      CHECK(std::abs(got.value - carol_brute(e, y, kind)) <= 1e-10);
    }
  }
}

TEST_CASE("carol_loss gradients match central differences") {
  carol::Rng rng(223);
  const double h = 1e-5;
  CarolConfig cfg;
  double worst = 0.0;
  for (int t = 0; t < 30; ++t) {
    const int n = 1 + static_cast<int>(rng.below(4));
    const int dim = 2 + static_cast<int>(rng.below(15));
    MatrixXd e = random_embeddings(rng, 2 * n, dim, 2.0);
    const auto y = balanced_labels(n);
    for (DistanceKind kind : {DistanceKind::Euclidean, DistanceKind::Cosine}) {
      cfg.distance = kind;
      const auto l = carol::carol_loss(e, y, cfg);
      MatrixXd fd(2 * n, dim);
      for (int r = 0; r < 2 * n; ++r)
        for (int c = 0; c < dim; ++c) {
          const double keep = e(r, c);
          e(r, c) = keep + h;
          const double up = carol::carol_loss(e, y, cfg).value;
          e(r, c) = keep - h;
          const double dn = carol::carol_loss(e, y, cfg).value;
          e(r, c) = keep;
          fd(r, c) = (up - dn) / (2.0 * h);
        }
      worst = std::max(worst, (l.grads - fd).norm() / std::max(fd.norm(), 1e-12));
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("carol_loss decreases as classes separate") {
  carol::Rng rng(227);
  MatrixXd e = random_embeddings(rng, 8, 3, 0.0);
  const auto y = balanced_labels(4);
  CarolConfig cfg;
  VectorXd push(3);
  push << 1.0, 0.0, 0.0;
  const auto at_shift = [&](double t) {
    MatrixXd shifted = e;
    for (int r = 4; r < 8; ++r) shifted.row(r) += t * push.transpose();
    return carol::carol_loss(shifted, y, cfg).value;
  };
  const double l1 = at_shift(2.0);
  const double l2 = at_shift(4.0);
  const double l3 = at_shift(8.0);
  CHECK(l2 < l1);
  CHECK(l3 < l2);
}

TEST_CASE("carol_loss validation") {
  CarolConfig cfg;
  MatrixXd e = MatrixXd::Zero(3, 2);
  CHECK_THROWS_AS(carol::carol_loss(e, {0, 0, 1}, cfg), std::invalid_argument);
  MatrixXd one = MatrixXd::Zero(1, 2);
  CHECK_THROWS_AS(carol::carol_loss(one, {0}, cfg), std::invalid_argument);
  MatrixXd two = MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(carol::carol_loss(two, {0}, cfg), std::invalid_argument);
  CHECK_THROWS_AS(carol::carol_loss(two, {0, 2}, cfg), std::invalid_argument);
}

TEST_CASE("exact_class_separation on single points") {
  MatrixXd e(2, 2);
  e << 0, 0, 3, 4;
  const auto s = carol::exact_class_separation(e, {0, 1}, DistanceKind::Euclidean);
  CHECK(s.interclass == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(s.intraclass == 0.0);
  CHECK(s.separation == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("exact_class_separation hand case with self-pair dilution") {
  MatrixXd e(4, 2);
  e << 0, 0, 0, 2, 5, 0, 5, 2;
  const std::vector<int> y{0, 0, 1, 1};
  const auto s = carol::exact_class_separation(e, y, DistanceKind::Euclidean);
  // within each class: ordered pairs {self, self, up, down} -> (0+0+2+2)/4 = 1
  CHECK(s.intraclass == doctest::Approx(2.0).epsilon(1e-14));
  const double ld = (5.0 + 5.0 + 2.0 * std::sqrt(29.0)) / 4.0;
  CHECK(s.interclass == doctest::Approx(ld).epsilon(1e-14));
  CHECK(s.separation == doctest::Approx(ld - 2.0).epsilon(1e-14));
}

TEST_CASE("exact_class_separation equals the brute-force oracle") {
  carol::Rng rng(229);
  for (int t = 0; t < 20; ++t) {
    const int dim = 2 + static_cast<int>(rng.below(7));
    const MatrixXd e = random_embeddings(rng, 40, dim, 1.0);
    const auto y = balanced_labels(20);
    for (DistanceKind kind :
         {DistanceKind::Euclidean, DistanceKind::Chebyshev, DistanceKind::Cosine}) {
      double inter = 0.0, intra = 0.0;
      separation_brute(e, y, kind, inter, intra);
      const auto s = carol::exact_class_separation(e, y, kind);
      CHECK(std::abs(s.interclass - inter) <= 1e-10);
      CHECK(std::abs(s.intraclass - intra) <= 1e-10);
      CHECK(std::abs(s.separation - (inter - intra)) <= 1e-10);
    }
  }

  // degenerate: both classes the same point set
  MatrixXd twin(6, 3);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      twin(r, c) = 0.3 * r + 0.1 * c + 0.2;
      twin(r + 3, c) = twin(r, c);
    }
  }
  const auto y6 = balanced_labels(3);
  double inter = 0.0, intra = 0.0;
  separation_brute(twin, y6, DistanceKind::Euclidean, inter, intra);
  const auto s = carol::exact_class_separation(twin, y6, DistanceKind::Euclidean);
  CHECK(std::abs(s.interclass - inter) <= 1e-12);
  CHECK(std::abs(s.intraclass - intra) <= 1e-12);
}

TEST_CASE("exact_class_separation validation") {
  MatrixXd e = MatrixXd::Zero(3, 2);
  CHECK_THROWS_AS(carol::exact_class_separation(e, {0, 0, 0}, DistanceKind::Euclidean),
                  carol::DataError);
  CHECK_THROWS_AS(carol::exact_class_separation(e, {0, 1}, DistanceKind::Euclidean),
                  std::invalid_argument);
}

TEST_CASE("combined_loss endpoints and affine interior") {
  const auto at0 = carol::combined_loss(0.0, 12.345678901234567, 0.777777777777777);
  CHECK(at0.total == 0.777777777777777);  // bitwise
  const auto at1 = carol::combined_loss(1.0, 12.345678901234567, 0.777777777777777);
  CHECK(at1.total == 12.345678901234567);
  const auto mid = carol::combined_loss(0.5, -2.0, 4.0);
  CHECK(mid.total == doctest::Approx(1.0).epsilon(1e-15));

  carol::Rng rng(233);
  for (int t = 0; t < 100; ++t) {
    const double c = rng.uniform();
    const double carol_v = 10.0 * (2.0 * rng.uniform() - 1.0);
    const double recon_v = 10.0 * rng.uniform();
    const auto b = carol::combined_loss(c, carol_v, recon_v);
    // affine in c with slope carol - recon
    CHECK(b.total - recon_v ==
          doctest::Approx(c * (carol_v - recon_v)).epsilon(1e-12));
    CHECK(b.c == c);
    CHECK(b.carol == carol_v);
    CHECK(b.recon == recon_v);
  }

  CHECK_THROWS_AS(carol::combined_loss(-0.01, 0, 0), carol::ConfigError);
  CHECK_THROWS_AS(carol::combined_loss(1.01, 0, 0), carol::ConfigError);
}

TEST_CASE("sampled cross-class term estimates exact interclass distance") {
  carol::Rng rng(239);
  const int per_class = 20, dim = 8;
  const MatrixXd e = random_embeddings(rng, 2 * per_class, dim, 1.0);
  const auto y = balanced_labels(per_class);
  const double exact_ld =
      carol::exact_class_separation(e, y, DistanceKind::Euclidean).interclass;

  // a stand-in corpus so the estimator uses the real sampling machinery
  std::vector<carol::Document> docs;
  for (int i = 0; i < 2 * per_class; ++i)
    docs.push_back(carol::make_document("point" + std::to_string(i),
                                        y[static_cast<std::size_t>(i)], 16));
  const carol::Dataset ds = carol::make_dataset(std::move(docs));

  carol::Rng sample_rng(41);
  const int trials = 10000;
  double mean_of_means = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto i0 = carol::class_sample_indices(ds, 0, 3, sample_rng);
    const auto i1 = carol::class_sample_indices(ds, 1, 3, sample_rng);
    double cross = 0.0;
    for (const auto a : i0)
      for (const auto b : i1)
        cross += (e.row(static_cast<Eigen::Index>(a)) -
                  e.row(static_cast<Eigen::Index>(b)))
                     .norm();
    mean_of_means += cross / 9.0;
  }
  mean_of_means /= trials;
  CHECK(std::abs(mean_of_means - exact_ld) <= 0.02 * exact_ld);
}
