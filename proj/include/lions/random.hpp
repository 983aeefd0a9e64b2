#pragma once

// Seeded generators for random spaces, operators, and subspaces. Used by the
// randomized verification suites and the tests; every draw is reproducible
// from the seed.

#include <cstdint>
#include <random>

#include "lions/hilbert.hpp"

namespace lions {

template <class Scalar>
class Sampler {
 public:
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;
  using Space = InnerSpace<Scalar>;
  using Map = LinearMap<Scalar>;

  explicit Sampler(std::uint64_t seed) : engine_(seed) {}

  std::mt19937_64& engine() { return engine_; }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  Index integer(Index lo, Index hi) {
    return std::uniform_int_distribution<Index>(lo, hi)(engine_);
  }
  bool coin(double p = 0.5) { return uniform() < p; }

  Scalar scalar() {
    std::normal_distribution<double> normal;
    if constexpr (Eigen::NumTraits<Scalar>::IsComplex) {
      const double re = normal(engine_);
      const double im = normal(engine_);
      return Scalar(re, im) / std::sqrt(2.0);
    } else {
      return normal(engine_);
    }
  }

  Vec vector(Index n) {
    Vec v(n);
    for (Index i = 0; i < n; ++i) v(i) = scalar();
    return v;
  }

  Mat matrix(Index rows, Index cols) {
    Mat m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = scalar();
    return m;
  }

  /// Hermitian positive definite with eigenvalues roughly in [0.1, 10].
  Mat spd(Index n) {
    const Mat x = matrix(n, n);
    Mat g = x * x.adjoint() / static_cast<double>(std::max<Index>(n, 1));
    g += Mat::Identity(n, n) * uniform(0.1, 1.0);
    return detail::hermitian_part<Scalar>(g);
  }

  /// A space with a random weighted Gram form, or Euclidean with probability
  /// `euclidean_p`.
  Space space(Index n, double euclidean_p = 0.0) {
    if (coin(euclidean_p)) return Space::euclidean(n);
    return Space(spd(n));
  }

  Map map(const Space& dom, const Space& cod) { return Map(dom, cod, matrix(cod.dim(), dom.dim())); }

  /// Map of the given rank (rank <= min dims).
  Map map_of_rank(const Space& dom, const Space& cod, Index rank) {
    return Map(dom, cod, matrix(cod.dim(), rank) * matrix(rank, dom.dim()));
  }

  /// Builds an operator from its Euclidean form on `s`.
  static Map from_euclidean(const Space& s, const Mat& e) {
    return Map(s, s, s.right_to_euclidean(s.from_euclidean(e)));
  }

  Mat skew_hermitian(Index n, double scale = 1.0) {
    const Mat x = matrix(n, n) * scale;
    return (x - x.adjoint()) / Scalar(2);
  }

  /// Re<Bx,x> <= 0: skew part plus a negative semidefinite part of random rank.
  Map dissipative(const Space& s) {
    const Index n = s.dim();
    const Index r = integer(0, n);
    const Mat p = matrix(n, r);
    Mat e = skew_hermitian(n, uniform(0.0, 2.0)) - p * p.adjoint() * uniform(0.0, 1.0);
    return from_euclidean(s, e);
  }

  /// Re<Av,v> >= alpha ||v||^2 with alpha drawn from [0.05, 2].
  Map coercive(const Space& s) {
    const Index n = s.dim();
    const Mat p = matrix(n, n);
    Mat e = Mat::Identity(n, n) * uniform(0.05, 2.0) + p * p.adjoint() * uniform(0.0, 0.5) +
            skew_hermitian(n, uniform(0.0, 2.0));
    return from_euclidean(s, e);
  }

  /// Euclidean matrix with prescribed operator norm `norm`; rank-deficient
  /// with the given rank.
  Mat contraction(Index rows, Index cols, double norm, Index rank) {
    if (rows == 0 || cols == 0 || rank == 0) return Mat::Zero(rows, cols);
    Mat m = matrix(rows, rank) * matrix(rank, cols);
    const double s = detail::svd<Scalar>(m, 0).singularValues().maxCoeff();
    return m * (norm / s);
  }

  /// Euclidean isometry-type matrix (all singular values equal to `norm`).
  Mat partial_isometry(Index rows, Index cols, double norm) {
    const Index k = std::min(rows, cols);
    if (k == 0) return Mat::Zero(rows, cols);
    const auto svd = detail::svd<Scalar>(matrix(rows, cols), Eigen::ComputeThinU | Eigen::ComputeThinV);
    return svd.matrixU() * svd.matrixV().adjoint() * norm;
  }

  Subspace<Scalar> subspace(const Space& s, Index k) {
    return Subspace<Scalar>::span(s, matrix(s.dim(), k));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lions
