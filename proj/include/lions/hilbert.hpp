#pragma once

// Finite-dimensional inner-product spaces with explicit Gram forms, linear
// maps between them, and Gram-orthonormal subspaces.
//
// Every space carries a Hermitian positive definite Gram matrix G and the
// inner product <x, y> = y^H G x. All spectral quantities (gains, square
// roots, principal angles) are computed after the isometric change of
// coordinates x -> U x, where G = U^H U is the Cholesky factorization.
// Functionals are never stored in dual coordinates; a functional is kept as
// its Riesz representative and its norm is the norm of that representative.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "lions/errors.hpp"

namespace lions {

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Index = Eigen::Index;
/// Vector parameter excluded from template deduction, so Eigen expressions
/// convert implicitly.
template <class Scalar>
using VecIn = std::type_identity_t<Vector<Scalar>>;
using Complex = std::complex<double>;

enum class ScalarField { real, complex };

template <class Scalar>
inline constexpr ScalarField scalar_field_v =
    Eigen::NumTraits<Scalar>::IsComplex ? ScalarField::complex : ScalarField::real;

namespace tolerance {
inline constexpr double gram_symmetry = 1e-12;
/// Singular values below rank * max(sigma_max, 1) are treated as zero.
inline constexpr double rank = 1e-10;
inline constexpr double orthonormality = 1e-10;
inline constexpr double self_adjoint = 1e-10;
/// Two subspaces are equal when their largest principal angle is below this.
inline constexpr double subspace_angle = 1e-8;
}  // namespace tolerance

namespace detail {

template <class Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : static_cast<double>(m.cwiseAbs().maxCoeff());
}

template <class Scalar>
Eigen::BDCSVD<Matrix<Scalar>> svd(const Matrix<Scalar>& m, unsigned options) {
  return Eigen::BDCSVD<Matrix<Scalar>>(m, options);
}

/// Number of singular values above the rank cutoff.
inline Index numerical_rank(const Eigen::VectorXd& sv, double rank_tol) {
  if (sv.size() == 0) return 0;
  const double cutoff = rank_tol * std::max(sv.maxCoeff(), 1.0);
  Index r = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++r;
  return r;
}

template <class Scalar>
Matrix<Scalar> hermitian_part(const Matrix<Scalar>& m) {
  return (m + m.adjoint()) / Scalar(2);
}

template <class Scalar>
std::string format_vector(const Vector<Scalar>& v) {
  std::ostringstream os;
  os.precision(6);
  os << '[';
  for (Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << ']';
  return os.str();
}

}  // namespace detail

/// A finite-dimensional real or complex inner-product space.
template <class Scalar>
class InnerSpace {
 public:
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;

  explicit InnerSpace(const Mat& gram) {
    if (gram.rows() != gram.cols())
      throw PreconditionError("gram matrix must be square");
    const double scale = std::max(detail::max_abs(gram), std::numeric_limits<double>::min());
    if (detail::max_abs(gram - gram.adjoint()) > tolerance::gram_symmetry * scale)
      throw PreconditionError("gram matrix is not Hermitian");
    auto s = std::make_shared<State>();
    s->gram = detail::hermitian_part<Scalar>(gram);
    s->upper = Mat(0, 0);
    if (gram.rows() > 0) {
      Eigen::LLT<Mat> llt(s->gram);
      if (llt.info() != Eigen::Success)
        throw PreconditionError("gram matrix is not positive definite");
      s->upper = llt.matrixU();
      if (static_cast<double>(s->upper.diagonal().real().minCoeff()) <= 0.0)
        throw PreconditionError("gram matrix is not positive definite");
    }
    state_ = std::move(s);
  }

  static InnerSpace euclidean(Index n) { return InnerSpace(Mat::Identity(n, n)); }

  Index dim() const { return state_->gram.rows(); }
  const Mat& gram() const { return state_->gram; }
  static constexpr ScalarField scalar_field() { return scalar_field_v<Scalar>; }

  Scalar inner(const Vec& x, const Vec& y) const { return y.dot(state_->gram * x); }
  double norm(const Vec& x) const {
    return std::sqrt(std::max(0.0, static_cast<double>(std::real(inner(x, x)))));
  }

  /// Isometry into Euclidean coordinates: X -> U X.
  Mat to_euclidean(const Mat& x) const {
    return state_->upper.template triangularView<Eigen::Upper>() * x;
  }
  /// Inverse isometry: Y -> U^{-1} Y.
  Mat from_euclidean(const Mat& y) const {
    return state_->upper.template triangularView<Eigen::Upper>().solve(y);
  }
  /// X -> X U^{-1}; turns a map whose domain is this space into Euclidean form.
  Mat right_from_euclidean(const Mat& x) const {
    return state_->upper.template triangularView<Eigen::Upper>()
        .template solve<Eigen::OnTheRight>(x);
  }
  /// X -> X U.
  Mat right_to_euclidean(const Mat& x) const {
    return x * state_->upper.template triangularView<Eigen::Upper>();
  }
  /// G^{-1} M.
  Mat solve_gram(const Mat& m) const {
    const auto u = state_->upper.template triangularView<Eigen::Upper>();
    return u.solve(u.adjoint().solve(m));
  }

  bool same_as(const InnerSpace& other) const {
    if (state_ == other.state_) return true;
    if (dim() != other.dim()) return false;
    const double scale = std::max(detail::max_abs(gram()), 1.0);
    return detail::max_abs(gram() - other.gram()) <= tolerance::gram_symmetry * scale;
  }

 private:
  struct State {
    Mat gram;
    Mat upper;
  };
  std::shared_ptr<const State> state_;
};

template <class Scalar>
void require_same_space(const InnerSpace<Scalar>& a, const InnerSpace<Scalar>& b,
                        const char* what) {
  if (!a.same_as(b)) throw PreconditionError(std::string("mismatched spaces: ") + what);
}

/// A linear operator between two inner-product spaces.
template <class Scalar>
class LinearMap {
 public:
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;
  using Space = InnerSpace<Scalar>;

  LinearMap(Space domain, Space codomain, Mat coeffs)
      : domain_(std::move(domain)), codomain_(std::move(codomain)), coeffs_(std::move(coeffs)) {
    if (coeffs_.rows() != codomain_.dim() || coeffs_.cols() != domain_.dim())
      throw PreconditionError("coefficient array does not match domain/codomain dimensions");
  }

  static LinearMap identity(const Space& s) { return LinearMap(s, s, Mat::Identity(s.dim(), s.dim())); }
  static LinearMap zero(const Space& dom, const Space& cod) {
    return LinearMap(dom, cod, Mat::Zero(cod.dim(), dom.dim()));
  }

  const Space& domain() const { return domain_; }
  const Space& codomain() const { return codomain_; }
  const Mat& coeffs() const { return coeffs_; }
  bool is_endomorphism() const { return domain_.same_as(codomain_); }

  Vec operator()(const Vec& x) const { return coeffs_ * x; }

  /// The same operator written between the Euclidean images of both spaces.
  Mat euclidean() const { return codomain_.to_euclidean(domain_.right_from_euclidean(coeffs_)); }

  friend LinearMap operator*(const LinearMap& a, const LinearMap& b) {
    require_same_space(b.codomain(), a.domain(), "composition");
    return LinearMap(b.domain(), a.codomain(), a.coeffs() * b.coeffs());
  }
  friend LinearMap operator+(const LinearMap& a, const LinearMap& b) {
    require_same_space(a.domain(), b.domain(), "sum (domain)");
    require_same_space(a.codomain(), b.codomain(), "sum (codomain)");
    return LinearMap(a.domain(), a.codomain(), a.coeffs() + b.coeffs());
  }
  friend LinearMap operator-(const LinearMap& a, const LinearMap& b) { return a + (-b); }
  friend LinearMap operator-(const LinearMap& a) { return LinearMap(a.domain(), a.codomain(), -a.coeffs()); }
  friend LinearMap operator*(Scalar c, const LinearMap& a) {
    return LinearMap(a.domain(), a.codomain(), c * a.coeffs());
  }

 private:
  Space domain_;
  Space codomain_;
  Mat coeffs_;
};

/// T* with <Tx, y> = <x, T*y>; coeffs = G_dom^{-1} T^H G_cod.
template <class Scalar>
LinearMap<Scalar> adjoint(const LinearMap<Scalar>& t) {
  return LinearMap<Scalar>(t.codomain(), t.domain(),
                           t.domain().solve_gram(t.coeffs().adjoint() * t.codomain().gram()));
}

/// Singular values with respect to the domain and codomain norms, descending.
template <class Scalar>
Eigen::VectorXd singular_values(const LinearMap<Scalar>& t) {
  if (t.coeffs().size() == 0) return Eigen::VectorXd(0);
  return detail::svd<Scalar>(t.euclidean(), 0).singularValues();
}

template <class Scalar>
double operator_norm(const LinearMap<Scalar>& t) {
  const auto sv = singular_values(t);
  return sv.size() ? sv.maxCoeff() : 0.0;
}

/// Largest beta with ||Tx|| >= beta ||x|| for all x. Infinite for a
/// zero-dimensional domain, zero whenever T has a nontrivial kernel.
template <class Scalar>
double smallest_gain(const LinearMap<Scalar>& t) {
  const Index n = t.domain().dim();
  if (n == 0) return std::numeric_limits<double>::infinity();
  if (t.codomain().dim() < n) return 0.0;
  return singular_values(t).minCoeff();
}

template <class Scalar>
Eigen::VectorXd hermitian_part_eigenvalues(const LinearMap<Scalar>& a) {
  if (!a.is_endomorphism()) throw PreconditionError("operator must map a space to itself");
  if (a.domain().dim() == 0) return Eigen::VectorXd(0);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(detail::hermitian_part<Scalar>(a.euclidean()),
                                                   Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

/// Smallest eigenvalue of (A + A*)/2, i.e. inf Re<Av,v>/||v||^2. May be <= 0.
template <class Scalar>
double coercivity_constant(const LinearMap<Scalar>& a) {
  const auto ev = hermitian_part_eigenvalues(a);
  return ev.size() ? ev(0) : std::numeric_limits<double>::infinity();
}

/// sup Re<Bv,v>/||v||^2; B is dissipative iff this is <= 0.
template <class Scalar>
double numerical_abscissa(const LinearMap<Scalar>& b) {
  const auto ev = hermitian_part_eigenvalues(b);
  return ev.size() ? ev(ev.size() - 1) : -std::numeric_limits<double>::infinity();
}

template <class Scalar>
double self_adjoint_defect(const LinearMap<Scalar>& t) {
  if (!t.is_endomorphism()) throw PreconditionError("operator must map a space to itself");
  const Matrix<Scalar> e = t.euclidean();
  return detail::max_abs(e - e.adjoint()) / std::max(1.0, detail::max_abs(e));
}

/// Positive semidefinite square root of a self-adjoint PSD operator.
template <class Scalar>
LinearMap<Scalar> sqrt_psd(const LinearMap<Scalar>& t) {
  if (!t.is_endomorphism()) throw PreconditionError("sqrt_psd: operator must map a space to itself");
  const auto& space = t.domain();
  if (space.dim() == 0) return t;
  const double defect = self_adjoint_defect(t);
  if (defect > tolerance::self_adjoint) {
    std::ostringstream os;
    os << "sqrt_psd: operator is not self-adjoint (defect " << defect << ")";
    throw PreconditionError(os.str());
  }
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(detail::hermitian_part<Scalar>(t.euclidean()));
  Eigen::VectorXd lambda = es.eigenvalues();
  const double floor = tolerance::self_adjoint * std::max(1.0, lambda.cwiseAbs().maxCoeff());
  if (lambda(0) < -floor) {
    std::ostringstream os;
    os << "sqrt_psd: operator is indefinite (eigenvalue " << lambda(0) << ")";
    throw PreconditionError(os.str());
  }
  const Eigen::VectorXd root = lambda.cwiseMax(0.0).cwiseSqrt();
  const Matrix<Scalar>& q = es.eigenvectors();
  const Matrix<Scalar> s = q * root.cast<Scalar>().asDiagonal() * q.adjoint();
  return LinearMap<Scalar>(space, space, space.right_to_euclidean(space.from_euclidean(s)));
}

/// A subspace held as a basis that is orthonormal for the ambient Gram form.
template <class Scalar>
class Subspace {
 public:
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;
  using Space = InnerSpace<Scalar>;

  Subspace(Space ambient, Mat basis) : ambient_(std::move(ambient)), basis_(std::move(basis)) {
    if (basis_.rows() != ambient_.dim())
      throw PreconditionError("subspace basis has the wrong number of rows");
    const Mat e = basis_.adjoint() * ambient_.gram() * basis_;
    if (detail::max_abs(e - Mat::Identity(dim(), dim())) > tolerance::orthonormality)
      throw PreconditionError("subspace basis is not orthonormal");
  }

  /// Orthonormalized span of the given columns (rank-revealing).
  static Subspace span(const Space& ambient, const Mat& columns, double rank_tol = tolerance::rank) {
    if (columns.rows() != ambient.dim())
      throw PreconditionError("spanning columns have the wrong number of rows");
    if (columns.cols() == 0) return zero(ambient);
    const Mat y = ambient.to_euclidean(columns);
    const auto svd = detail::svd<Scalar>(y, Eigen::ComputeThinU);
    const Index r = detail::numerical_rank(svd.singularValues(), rank_tol);
    return from_euclidean(ambient, svd.matrixU().leftCols(r));
  }

  /// Wraps columns that are already orthonormal in Euclidean coordinates.
  static Subspace from_euclidean(const Space& ambient, const Mat& q) {
    Subspace s(ambient);
    s.basis_ = ambient.from_euclidean(q);
    return s;
  }

  static Subspace zero(const Space& ambient) { return Subspace(ambient); }
  static Subspace whole(const Space& ambient) {
    return from_euclidean(ambient, Mat::Identity(ambient.dim(), ambient.dim()));
  }

  const Space& ambient() const { return ambient_; }
  const Mat& basis() const { return basis_; }
  Index dim() const { return basis_.cols(); }
  Mat euclidean_basis() const { return ambient_.to_euclidean(basis_); }

  Vec project(const Vec& x) const { return basis_ * (basis_.adjoint() * (ambient_.gram() * x)); }
  Mat projector() const { return basis_ * basis_.adjoint() * ambient_.gram(); }
  double distance(const Vec& x) const { return ambient_.norm(x - project(x)); }

 private:
  explicit Subspace(Space ambient) : ambient_(std::move(ambient)), basis_(ambient_.dim(), 0) {}

  Space ambient_;
  Mat basis_;
};

template <class Scalar>
Subspace<Scalar> subspace_sum(const Subspace<Scalar>& a, const Subspace<Scalar>& b) {
  require_same_space(a.ambient(), b.ambient(), "subspace sum");
  Matrix<Scalar> cols(a.ambient().dim(), a.dim() + b.dim());
  cols << a.basis(), b.basis();
  return Subspace<Scalar>::span(a.ambient(), cols);
}

template <class Scalar>
Subspace<Scalar> subspace_intersection(const Subspace<Scalar>& a, const Subspace<Scalar>& b,
                                       double rank_tol = tolerance::rank) {
  require_same_space(a.ambient(), b.ambient(), "subspace intersection");
  const Index ka = a.dim(), kb = b.dim();
  if (ka == 0 || kb == 0) return Subspace<Scalar>::zero(a.ambient());
  const Matrix<Scalar> qa = a.euclidean_basis();
  Matrix<Scalar> m(qa.rows(), ka + kb);
  m << qa, -b.euclidean_basis();
  const auto svd = detail::svd<Scalar>(m, Eigen::ComputeFullV);
  const Index r = detail::numerical_rank(svd.singularValues(), rank_tol);
  const Matrix<Scalar> null = svd.matrixV().rightCols(ka + kb - r);
  return Subspace<Scalar>::span(a.ambient(), a.basis() * null.topRows(ka), rank_tol);
}

/// Orthogonal complement with respect to the ambient inner product.
template <class Scalar>
Subspace<Scalar> orthogonal_complement(const Subspace<Scalar>& a) {
  const Index n = a.ambient().dim();
  if (a.dim() == 0) return Subspace<Scalar>::whole(a.ambient());
  Eigen::HouseholderQR<Matrix<Scalar>> qr(a.euclidean_basis());
  const Matrix<Scalar> q = qr.householderQ() * Matrix<Scalar>::Identity(n, n);
  return Subspace<Scalar>::from_euclidean(a.ambient(), q.rightCols(n - a.dim()));
}

template <class Scalar>
Subspace<Scalar> kernel(const LinearMap<Scalar>& t, double rank_tol = tolerance::rank) {
  const Index n = t.domain().dim();
  if (n == 0) return Subspace<Scalar>::zero(t.domain());
  if (t.codomain().dim() == 0) return Subspace<Scalar>::whole(t.domain());
  const auto svd = detail::svd<Scalar>(t.euclidean(), Eigen::ComputeFullV);
  const Index r = detail::numerical_rank(svd.singularValues(), rank_tol);
  return Subspace<Scalar>::from_euclidean(t.domain(), svd.matrixV().rightCols(n - r));
}

template <class Scalar>
Subspace<Scalar> range(const LinearMap<Scalar>& t, double rank_tol = tolerance::rank) {
  if (t.coeffs().size() == 0) return Subspace<Scalar>::zero(t.codomain());
  const auto svd = detail::svd<Scalar>(t.euclidean(), Eigen::ComputeThinU);
  const Index r = detail::numerical_rank(svd.singularValues(), rank_tol);
  return Subspace<Scalar>::from_euclidean(t.codomain(), svd.matrixU().leftCols(r));
}

/// Principal angles in ascending order, min(dim a, dim b) of them. Small
/// angles come from sines and large ones from cosines, so both ends keep
/// full relative accuracy.
template <class Scalar>
std::vector<double> principal_angles(const Subspace<Scalar>& a, const Subspace<Scalar>& b) {
  require_same_space(a.ambient(), b.ambient(), "principal angles");
  const Subspace<Scalar>& big = a.dim() >= b.dim() ? a : b;
  const Subspace<Scalar>& small = a.dim() >= b.dim() ? b : a;
  const Index k = small.dim();
  std::vector<double> angles;
  if (k == 0) return angles;
  const Matrix<Scalar> qb = big.euclidean_basis();
  const Matrix<Scalar> qs = small.euclidean_basis();
  const Matrix<Scalar> overlap = qb.adjoint() * qs;
  const Eigen::VectorXd cosines = detail::svd<Scalar>(overlap, 0).singularValues();  // descending
  const Matrix<Scalar> residual = qs - qb * overlap;
  Eigen::VectorXd sines = detail::svd<Scalar>(residual, 0).singularValues();  // descending
  angles.resize(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) {
    const double c = std::clamp(cosines(i), 0.0, 1.0);
    const double s = std::clamp(sines(k - 1 - i), 0.0, 1.0);
    angles[static_cast<std::size_t>(i)] = c * c >= 0.5 ? std::asin(s) : std::acos(c);
  }
  std::sort(angles.begin(), angles.end());
  return angles;
}

/// sin of the largest angle between `inner` and its projection onto `outer`;
/// zero iff inner is contained in outer.
template <class Scalar>
double containment_defect(const Subspace<Scalar>& outer, const Subspace<Scalar>& inner) {
  require_same_space(outer.ambient(), inner.ambient(), "containment");
  if (inner.dim() == 0) return 0.0;
  const Matrix<Scalar> qo = outer.euclidean_basis();
  const Matrix<Scalar> qi = inner.euclidean_basis();
  const Matrix<Scalar> residual = qi - qo * (qo.adjoint() * qi);
  return detail::svd<Scalar>(residual, 0).singularValues().maxCoeff();
}

template <class Scalar>
bool contains(const Subspace<Scalar>& outer, const Subspace<Scalar>& inner,
              double angle_tol = tolerance::subspace_angle) {
  return inner.dim() <= outer.dim() && containment_defect(outer, inner) < std::sin(angle_tol);
}

template <class Scalar>
bool same_subspace(const Subspace<Scalar>& a, const Subspace<Scalar>& b,
                   double angle_tol = tolerance::subspace_angle) {
  if (a.dim() != b.dim()) return false;
  const auto angles = principal_angles(a, b);
  return angles.empty() || angles.back() < angle_tol;
}

}  // namespace lions
