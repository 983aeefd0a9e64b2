#pragma once

// Derivations, boundary forms and boundary structures, maximal admissible
// subspaces Z_Phi = {w : B1 w = Phi B0 w}, and the strong derivation problem
//   D u + A u = f,   B0 u - Phi* B1 u = y0.
//
// Model. W carries its own coordinates. J : W -> V embeds W into the pivot
// space V and D : W -> V is the Riesz representative of the extended
// derivation, so the duality pairing is <Dv, w> = (Jw)^H G_V (Dv) = w^H P v
// with P = J^H G_V D. W carries the graph norm ||Jw||^2 + ||Dw||^2 and the
// boundary form is b(v, w) = w^H (P + P^H) v. R is a subspace of W on which
// b vanishes against everything (b(v, r) = 0 for all v in W).

#include <numbers>
#include <tuple>

#include "lions/hilbert.hpp"
#include "lions/random.hpp"

namespace lions {

namespace tolerance {
/// Residual of structural identities (b = <B1,B1> - <B0,B0>, b(W,R) = 0).
inline constexpr double structure = 1e-10;
/// Eigenvalues of b within this band (relative to max(1, max |lambda|)) are
/// treated as zero when splitting b into positive and negative parts.
inline constexpr double spectral_split = 1e-10;
/// b(w,w) <= admissible for unit w counts as nonpositive.
inline constexpr double admissible = 1e-10;
/// Operator norm of a contraction may exceed 1 by this much.
inline constexpr double contraction = 1e-12;
/// Leak of Phi off Ran B1; projector rounding grows with the conditioning of G_H.
inline constexpr double range_leak = 1e-8;
}  // namespace tolerance

namespace detail {

/// Least-norm x with t(x) = y, together with the relative residual.
template <class Scalar>
std::pair<Vector<Scalar>, double> min_norm_preimage(const LinearMap<Scalar>& t, const Vector<Scalar>& y) {
  const Index n = t.domain().dim();
  if (n == 0 || t.codomain().dim() == 0) {
    return {Vector<Scalar>::Zero(n), t.codomain().norm(y) > 0 ? 1.0 : 0.0};
  }
  const auto svd = detail::svd<Scalar>(t.euclidean(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Index r = numerical_rank(svd.singularValues(), tolerance::rank);
  const Vector<Scalar> ye = t.codomain().to_euclidean(y);
  const Eigen::VectorXd inv = svd.singularValues().head(r).cwiseInverse();
  const Vector<Scalar> xe =
      svd.matrixV().leftCols(r) * (inv.cast<Scalar>().asDiagonal() * (svd.matrixU().leftCols(r).adjoint() * ye));
  const Vector<Scalar> x = t.domain().from_euclidean(xe);
  const double scale = std::max(t.codomain().norm(y), std::numeric_limits<double>::min());
  return {x, t.codomain().norm(t(x) - y) / scale};
}

/// Largest and smallest eigenpairs of the Hermitian form F restricted to Z.
template <class Scalar>
struct RestrictedForm {
  Eigen::VectorXd values;   // ascending
  Matrix<Scalar> vectors;   // columns in ambient coordinates, unit norm
};

template <class Scalar>
RestrictedForm<Scalar> restrict_form(const Matrix<Scalar>& form, const Subspace<Scalar>& z) {
  RestrictedForm<Scalar> rf;
  if (z.dim() == 0) {
    rf.values = Eigen::VectorXd(0);
    rf.vectors = Matrix<Scalar>(z.ambient().dim(), 0);
    return rf;
  }
  const Matrix<Scalar>& q = z.basis();
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(hermitian_part<Scalar>(q.adjoint() * form * q));
  rf.values = es.eigenvalues();
  rf.vectors = q * es.eigenvectors();
  return rf;
}

}  // namespace detail

template <class Scalar>
class DerivationInstance {
 public:
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;
  using Space = InnerSpace<Scalar>;
  using Map = LinearMap<Scalar>;

  /// j, d: dim V x dim W coefficient arrays; r: spanning columns of R in W.
  DerivationInstance(Space v, const Mat& j, const Mat& d, const Mat& r)
      : v_(std::move(v)),
        w_(graph_gram(v_, j, d)),
        j_(w_, v_, j),
        d_(w_, v_, d),
        r_(Subspace<Scalar>::span(w_, r)) {
    pairing_ = j.adjoint() * v_.gram() * d;
    form_ = pairing_ + pairing_.adjoint();
    const double defect = nul_defect();
    if (defect > tolerance::structure) {
      std::ostringstream os;
      os << "boundary form does not vanish on W x R (defect " << defect << ")";
      throw PreconditionError(os.str());
    }
  }

  const Space& V() const { return v_; }
  const Space& W() const { return w_; }
  const Map& J() const { return j_; }
  const Map& D() const { return d_; }
  const Subspace<Scalar>& R() const { return r_; }
  /// P with <Dv, w> = w^H P v.
  const Mat& pairing() const { return pairing_; }
  /// Hermitian matrix of b: b(v, w) = w^H form v.
  const Mat& form() const { return form_; }

  /// max |b(v, r)| over W-unit v and an orthonormal basis r of R.
  double nul_defect() const {
    if (r_.dim() == 0) return 0.0;
    return operator_norm(LinearMap<Scalar>(w_, Space::euclidean(r_.dim()), r_.basis().adjoint() * form_));
  }

 private:
  static Space graph_gram(const Space& v, const Mat& j, const Mat& d) {
    if (j.rows() != v.dim() || d.rows() != v.dim() || j.cols() != d.cols())
      throw PreconditionError("embedding and derivation must both map W into V");
    return Space(detail::hermitian_part<Scalar>(j.adjoint() * v.gram() * j + d.adjoint() * v.gram() * d));
  }
  Space v_;
  Space w_;
  Map j_;
  Map d_;
  Subspace<Scalar> r_;
  Mat pairing_;
  Mat form_;
};

/// b(v, w) = <Dv, w> + conj <Dw, v>.
template <class Scalar>
Scalar boundary_form(const DerivationInstance<Scalar>& inst, const VecIn<Scalar>& v, const VecIn<Scalar>& w) {
  const auto& p = inst.pairing();
  return w.dot(p * v) + Eigen::numext::conj(v.dot(p * w));
}

/// The pairing <Dv, w>.
template <class Scalar>
Scalar derivation_pairing(const DerivationInstance<Scalar>& inst, const VecIn<Scalar>& v, const VecIn<Scalar>& w) {
  return w.dot(inst.pairing() * v);
}

template <class Scalar>
class BoundaryStructure {
 public:
  using Mat = Matrix<Scalar>;
  using Space = InnerSpace<Scalar>;
  using Map = LinearMap<Scalar>;

  /// b0, b1: dim H x dim W. Validates the factorization of b, the kernel
  /// sum condition and R inside both kernels.
  BoundaryStructure(const DerivationInstance<Scalar>& inst, Space h, const Mat& b0, const Mat& b1)
      : w_(inst.W()),
        h_(std::move(h)),
        b0_(w_, h_, b0),
        b1_(w_, h_, b1),
        r_(inst.R()),
        ran_b0_(range(b0_)),
        ran_b1_(range(b1_)),
        ker_b0_(kernel(b0_)),
        ker_b1_(kernel(b1_)) {
    const double scale = std::max(1.0, detail::max_abs(inst.form()));
    form_residual_ = detail::max_abs(form() - inst.form()) / scale;
    if (form_residual_ > tolerance::structure) {
      std::ostringstream os;
      os << "B0, B1 do not reproduce the boundary form (residual " << form_residual_ << ")";
      throw PreconditionError(os.str());
    }
    if (kernel_sum_dim() != w_.dim()) throw PreconditionError("ker B0 + ker B1 is not all of W");
    const auto both = subspace_intersection(ker_b0_, ker_b1_);
    if (!contains(both, r_)) throw PreconditionError("R is not contained in ker B0 and ker B1");
  }

  const Space& W() const { return w_; }
  const Space& H() const { return h_; }
  const Map& B0() const { return b0_; }
  const Map& B1() const { return b1_; }
  const Subspace<Scalar>& R() const { return r_; }
  const Subspace<Scalar>& ran_B0() const { return ran_b0_; }
  const Subspace<Scalar>& ran_B1() const { return ran_b1_; }
  const Subspace<Scalar>& ker_B0() const { return ker_b0_; }
  const Subspace<Scalar>& ker_B1() const { return ker_b1_; }
  double form_residual() const { return form_residual_; }

  /// B1^H G_H B1 - B0^H G_H B0.
  Mat form() const {
    return b1_.coeffs().adjoint() * h_.gram() * b1_.coeffs() - b0_.coeffs().adjoint() * h_.gram() * b0_.coeffs();
  }
  Scalar b(const Vector<Scalar>& v, const Vector<Scalar>& w) const {
    return h_.inner(b1_(v), b1_(w)) - h_.inner(b0_(v), b0_(w));
  }
  Index kernel_sum_dim() const { return subspace_sum(ker_b0_, ker_b1_).dim(); }

 private:
  Space w_;
  Space h_;
  Map b0_;
  Map b1_;
  Subspace<Scalar> r_;
  Subspace<Scalar> ran_b0_, ran_b1_, ker_b0_, ker_b1_;
  double form_residual_ = 0.0;
};

/// H = W, B1 = sqrt(B+), B0 = sqrt(B-) where B is the W-self-adjoint
/// operator of b (b(v, w) = <Bv, w>_W) split by the sign of its spectrum.
template <class Scalar>
BoundaryStructure<Scalar> spectral_boundary_structure(const DerivationInstance<Scalar>& inst) {
  using Mat = Matrix<Scalar>;
  const auto& w = inst.W();
  const Index n = w.dim();
  if (n == 0) return BoundaryStructure<Scalar>(inst, w, Mat(0, 0), Mat(0, 0));
  // Euclidean form of B: U^{-H} F U^{-1}.
  const Mat fe = w.right_from_euclidean(w.right_from_euclidean(inst.form()).adjoint());
  Eigen::SelfAdjointEigenSolver<Mat> es(detail::hermitian_part<Scalar>(fe));
  const Eigen::VectorXd& lambda = es.eigenvalues();
  const double cut = tolerance::spectral_split * std::max(1.0, lambda.cwiseAbs().maxCoeff());
  Eigen::VectorXd plus = Eigen::VectorXd::Zero(n), minus = Eigen::VectorXd::Zero(n);
  for (Index i = 0; i < n; ++i) {
    if (lambda(i) > cut) plus(i) = std::sqrt(lambda(i));
    if (lambda(i) < -cut) minus(i) = std::sqrt(-lambda(i));
  }
  const Mat& q = es.eigenvectors();
  auto to_w = [&](const Eigen::VectorXd& root) {
    const Mat e = q * root.cast<Scalar>().asDiagonal() * q.adjoint();
    return Mat(w.right_to_euclidean(w.from_euclidean(e)));
  };
  return BoundaryStructure<Scalar>(inst, w, to_w(minus), to_w(plus));
}

/// A contraction Phi : Ran B0 -> Ran B1 stored as an operator on H. The
/// normalized coupling P1 Phi P0 is what every computation uses, so Phi is
/// implicitly extended by zero off Ran B0.
template <class Scalar>
class ContractionBC {
 public:
  using Map = LinearMap<Scalar>;

  ContractionBC(BoundaryStructure<Scalar> bs, const Map& phi, double tol = tolerance::contraction)
      : bs_(std::move(bs)),
        coupling_(Map::zero(bs_.H(), bs_.H())),
        coupling_adjoint_(Map::zero(bs_.H(), bs_.H())) {
    require_same_space(phi.domain(), bs_.H(), "contraction domain");
    require_same_space(phi.codomain(), bs_.H(), "contraction codomain");
    const auto& h = bs_.H();
    const Map p0(h, h, bs_.ran_B0().projector());
    const Map p1(h, h, bs_.ran_B1().projector());
    const Map on_range = phi * p0;
    norm_ = operator_norm(on_range);
    if (norm_ > 1.0 + tol) {
      std::ostringstream os;
      os.precision(17);
      os << "Phi is not a contraction on Ran B0: operator norm " << norm_ << " > 1";
      throw PreconditionError(os.str());
    }
    const double leak = operator_norm(on_range - p1 * on_range);
    if (leak > tolerance::range_leak * std::max(1.0, norm_)) {
      std::ostringstream os;
      os << "Phi does not map Ran B0 into Ran B1 (off-range part " << leak << ")";
      throw PreconditionError(os.str());
    }
    coupling_ = p1 * on_range;
    coupling_adjoint_ = adjoint(coupling_);
  }

  const BoundaryStructure<Scalar>& bs() const { return bs_; }
  /// P1 Phi P0.
  const Map& phi() const { return coupling_; }
  /// (P1 Phi P0)* = P0 Phi* P1.
  const Map& phi_adjoint() const { return coupling_adjoint_; }
  double norm() const { return norm_; }

 private:
  BoundaryStructure<Scalar> bs_;
  Map coupling_;
  Map coupling_adjoint_;
  double norm_ = 0.0;
};

/// Z_Phi = {w : B1 w = Phi B0 w}.
template <class Scalar>
Subspace<Scalar> z_phi(const ContractionBC<Scalar>& c) {
  return kernel(c.bs().B1() - c.phi() * c.bs().B0());
}

/// {w : B0 w = Phi* B1 w}, which is Z_Phi's b-orthogonal.
template <class Scalar>
Subspace<Scalar> z_phi_adjoint(const ContractionBC<Scalar>& c) {
  return kernel(c.bs().B0() - c.phi_adjoint() * c.bs().B1());
}

/// {u : b(u, z) = 0 for all z in Z}.
template <class Scalar>
Subspace<Scalar> b_orthogonal(const BoundaryStructure<Scalar>& bs, const Subspace<Scalar>& z) {
  require_same_space(z.ambient(), bs.W(), "b-orthogonal");
  if (z.dim() == 0) return Subspace<Scalar>::whole(bs.W());
  const LinearMap<Scalar> rows(bs.W(), InnerSpace<Scalar>::euclidean(z.dim()), z.basis().adjoint() * bs.form());
  return kernel(rows);
}

template <class Scalar>
struct AdmissibilityReport {
  bool admissible = false;
  bool contains_r = false;
  double r_defect = 0.0;
  /// max b(w,w) over unit w in Z.
  double max_b = -std::numeric_limits<double>::infinity();
  /// Unit vector attaining max_b (violating vector when not admissible).
  Vector<Scalar> certificate;
  /// Strong admissibility: min b(u,u) over unit u in Z^b.
  bool strongly_admissible = false;
  double min_b_orth = std::numeric_limits<double>::infinity();
  Vector<Scalar> orth_certificate;
};

/// Largest value of b(v,v) on unit vectors of Z, with a maximizer.
template <class Scalar>
std::pair<double, Vector<Scalar>> max_form_value(const BoundaryStructure<Scalar>& bs, const Subspace<Scalar>& z) {
  const auto rf = detail::restrict_form(bs.form(), z);
  if (rf.values.size() == 0) return {-std::numeric_limits<double>::infinity(), Vector<Scalar>::Zero(bs.W().dim())};
  const Index k = rf.values.size() - 1;
  return {rf.values(k), rf.vectors.col(k)};
}

template <class Scalar>
AdmissibilityReport<Scalar> is_admissible(const BoundaryStructure<Scalar>& bs, const Subspace<Scalar>& z,
                                          const Subspace<Scalar>& r) {
  require_same_space(z.ambient(), bs.W(), "admissibility");
  AdmissibilityReport<Scalar> rep;
  rep.r_defect = containment_defect(z, r);
  rep.contains_r = contains(z, r);
  std::tie(rep.max_b, rep.certificate) = max_form_value(bs, z);
  rep.admissible = rep.contains_r && rep.max_b <= tolerance::admissible;
  return rep;
}

template <class Scalar>
AdmissibilityReport<Scalar> is_admissible(const BoundaryStructure<Scalar>& bs, const Subspace<Scalar>& z) {
  return is_admissible(bs, z, bs.R());
}

template <class Scalar>
AdmissibilityReport<Scalar> is_strongly_admissible(const BoundaryStructure<Scalar>& bs, const Subspace<Scalar>& z,
                                                   const Subspace<Scalar>& r) {
  auto rep = is_admissible(bs, z, r);
  const auto rf = detail::restrict_form(bs.form(), b_orthogonal(bs, z));
  if (rf.values.size() > 0) {
    rep.min_b_orth = rf.values(0);
    rep.orth_certificate = rf.vectors.col(0);
  }
  rep.strongly_admissible = rep.admissible && rep.min_b_orth >= -tolerance::admissible;
  return rep;
}

template <class Scalar>
AdmissibilityReport<Scalar> is_strongly_admissible(const BoundaryStructure<Scalar>& bs, const Subspace<Scalar>& z) {
  return is_strongly_admissible(bs, z, bs.R());
}

/// w with B0 w = x0 and B1 w = x1: preimages are split along
/// ker B0 + ker B1 = W and recombined.
template <class Scalar>
Vector<Scalar> joint_lift(const BoundaryStructure<Scalar>& bs, const VecIn<Scalar>& x0, const VecIn<Scalar>& x1) {
  using Vec = Vector<Scalar>;
  const auto& h = bs.H();
  const auto& w = bs.W();
  auto require_in = [&](const Subspace<Scalar>& ran, const Vec& x, const char* what) {
    if (x.size() != h.dim()) throw PreconditionError(std::string(what) + " has the wrong dimension");
    const double d = ran.distance(x);
    if (d > tolerance::structure * std::max(1.0, h.norm(x))) {
      std::ostringstream os;
      os << what << " is not in the range (distance " << d << ")";
      throw PreconditionError(os.str());
    }
  };
  require_in(bs.ran_B0(), x0, "x0");
  require_in(bs.ran_B1(), x1, "x1");
  const Vec w0 = detail::min_norm_preimage(bs.B0(), x0).first;
  const Vec w1 = detail::min_norm_preimage(bs.B1(), x1).first;
  const auto& k0 = bs.ker_B0().basis();
  const auto& k1 = bs.ker_B1().basis();
  Matrix<Scalar> split(w.dim(), k0.cols() + k1.cols());
  split << k0, k1;
  const LinearMap<Scalar> combine(InnerSpace<Scalar>::euclidean(split.cols()), w, split);
  // w0 = a0 + c0 with a0 in ker B0, c0 in ker B1: c0 carries B0 w0 = x0 and B1 c0 = 0.
  const Vec c_w0 = detail::min_norm_preimage(combine, w0).first;
  const Vec c_w1 = detail::min_norm_preimage(combine, w1).first;
  const Vec from_w0 = k1 * c_w0.tail(k1.cols());
  const Vec from_w1 = k0 * c_w1.head(k0.cols());
  const Vec lift = from_w0 + from_w1;
  const double scale = std::max({1.0, h.norm(x0), h.norm(x1)});
  const double res = std::max(h.norm(bs.B0()(lift) - x0), h.norm(bs.B1()(lift) - x1)) / scale;
  if (res > 1e-9) {
    std::ostringstream os;
    os << "joint lift residual " << res;
    throw InvariantViolation(os.str());
  }
  return lift;
}

/// The contraction Phi with Phi(B0 w) = B1 w on B0 Z and Phi = 0 on the
/// orthocomplement of B0 Z. Requires b <= 0 on Z.
template <class Scalar>
ContractionBC<Scalar> induced_contraction(const BoundaryStructure<Scalar>& bs, const Subspace<Scalar>& z) {
  using Mat = Matrix<Scalar>;
  require_same_space(z.ambient(), bs.W(), "induced contraction");
  const double max_b = max_form_value(bs, z).first;
  if (max_b > tolerance::admissible) {
    std::ostringstream os;
    os << "subspace is not admissible: b(w,w) = " << max_b << " > 0 for a unit w";
    throw PreconditionError(os.str());
  }
  const auto& h = bs.H();
  const Index nh = h.dim();
  Mat phi = Mat::Zero(nh, nh);
  if (z.dim() > 0 && nh > 0) {
    const Mat x0 = h.to_euclidean(bs.B0().coeffs() * z.basis());
    const Mat x1 = h.to_euclidean(bs.B1().coeffs() * z.basis());
    const auto svd = detail::svd<Scalar>(x0, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Index r = detail::numerical_rank(svd.singularValues(), tolerance::rank);
    const Eigen::VectorXd inv = svd.singularValues().head(r).cwiseInverse();
    const Mat pinv = svd.matrixV().leftCols(r) * inv.cast<Scalar>().asDiagonal() * svd.matrixU().leftCols(r).adjoint();
    phi = h.right_to_euclidean(h.from_euclidean(x1 * pinv));
  }
  ContractionBC<Scalar> c(bs, LinearMap<Scalar>(h, h, phi), 1e-9);
  if (!contains(z_phi(c), z)) throw InvariantViolation("induced contraction: Z is not contained in Z_Phi");
  return c;
}

template <class Scalar>
struct SdpSolution {
  Vector<Scalar> u;
  double equation_residual = 0.0;  // ||Du + Au - f||_V, relative
  double boundary_residual = 0.0;  // ||B0u - Phi*B1u - y0||_H, relative
  double sigma_min = 0.0;          // of the Euclideanized stacked system
  double sigma_max = 0.0;
};

namespace detail {

/// The stacked operator u -> (Du + AJu, Q0^H G_H (B0 - Phi* B1) u) in
/// Euclidean coordinates, and its right-hand side.
template <class Scalar>
struct StackedSystem {
  Matrix<Scalar> matrix;  // rows: V (Euclidean) then Ran B0 coordinates; columns: W Euclidean
  Vector<Scalar> rhs;
};

template <class Scalar>
StackedSystem<Scalar> stacked_system(const DerivationInstance<Scalar>& inst, const ContractionBC<Scalar>& c,
                                     const LinearMap<Scalar>& a, const Vector<Scalar>& f, const Vector<Scalar>& y0) {
  using Mat = Matrix<Scalar>;
  const auto& bs = c.bs();
  const auto& v = inst.V();
  const auto& w = inst.W();
  const Index m = v.dim(), nw = w.dim(), k0 = bs.ran_B0().dim();
  if (m + k0 != nw) {
    std::ostringstream os;
    os << "stacked system is not square: dim V + dim Ran B0 = " << m + k0 << " but dim W = " << nw;
    throw PreconditionError(os.str());
  }
  const Mat eq = inst.D().coeffs() + a.coeffs() * inst.J().coeffs();
  const Mat q0g = bs.ran_B0().basis().adjoint() * bs.H().gram();
  const Mat bc = q0g * (bs.B0().coeffs() - c.phi_adjoint().coeffs() * bs.B1().coeffs());
  StackedSystem<Scalar> s;
  s.matrix.resize(nw, nw);
  s.matrix.topRows(m) = w.right_from_euclidean(v.to_euclidean(eq));
  s.matrix.bottomRows(k0) = w.right_from_euclidean(bc);
  s.rhs.resize(nw);
  s.rhs.head(m) = v.to_euclidean(f);
  s.rhs.tail(k0) = q0g * y0;
  return s;
}

}  // namespace detail

/// Unique u in W with Du + Au = f and B0 u - Phi* B1 u = y0 (A acts on Ju).
template <class Scalar>
SdpSolution<Scalar> solve_sdp(const DerivationInstance<Scalar>& inst, const ContractionBC<Scalar>& c,
                              const LinearMap<Scalar>& a, const VecIn<Scalar>& f, const VecIn<Scalar>& y0) {
  using Vec = Vector<Scalar>;
  const auto& bs = c.bs();
  require_same_space(bs.W(), inst.W(), "boundary structure vs instance");
  require_same_space(a.domain(), inst.V(), "A domain");
  require_same_space(a.codomain(), inst.V(), "A codomain");
  const double alpha = coercivity_constant(a);
  if (!(alpha > 0)) {
    std::ostringstream os;
    os << "A is not coercive (alpha = " << alpha << ")";
    throw PreconditionError(os.str());
  }
  const auto& h = bs.H();
  if (f.size() != inst.V().dim() || y0.size() != h.dim()) throw PreconditionError("f or y0 has the wrong dimension");
  if (bs.ran_B0().distance(y0) > tolerance::structure * std::max(1.0, h.norm(y0)))
    throw PreconditionError("y0 is not in Ran B0");

  const auto sys = detail::stacked_system(inst, c, a, f, y0);
  SdpSolution<Scalar> sol;
  const Index nw = inst.W().dim();
  if (nw == 0) {
    sol.u = Vec(0);
    return sol;
  }
  const auto svd = detail::svd<Scalar>(sys.matrix, Eigen::ComputeThinU | Eigen::ComputeThinV);
  sol.sigma_max = svd.singularValues()(0);
  sol.sigma_min = svd.singularValues()(nw - 1);
  if (!(sol.sigma_min > 1e-13 * std::max(1.0, sol.sigma_max))) {
    std::ostringstream os;
    os << "stacked system is singular (smallest singular value " << sol.sigma_min << ")";
    throw InvariantViolation(os.str());
  }
  sol.u = inst.W().from_euclidean(svd.solve(sys.rhs));

  const auto& v = inst.V();
  const Vec du = inst.D()(sol.u), au = a(inst.J()(sol.u));
  const double eq_scale = std::max({v.norm(f), v.norm(du) + v.norm(au), std::numeric_limits<double>::min()});
  sol.equation_residual = v.norm(du + au - f) / eq_scale;
  const Vec b0u = bs.B0()(sol.u), pb1u = c.phi_adjoint()(bs.B1()(sol.u));
  const double bc_scale = std::max({h.norm(y0), h.norm(b0u) + h.norm(pb1u), std::numeric_limits<double>::min()});
  sol.boundary_residual = h.dim() ? h.norm(b0u - pb1u - y0) / bc_scale : 0.0;
  if (sol.equation_residual > 1e-9 || sol.boundary_residual > 1e-9) {
    std::ostringstream os;
    os << "solve_sdp residuals too large (equation " << sol.equation_residual << ", boundary "
       << sol.boundary_residual << ")";
    throw InvariantViolation(os.str());
  }
  return sol;
}

struct WdpReport {
  int tested = 0;
  double max_residual = 0.0;  // relative to the size of the terms
  bool holds(double tol = 1e-8) const { return max_residual < tol; }
};

/// Weak form: -conj<Dz, u> + <AJu, Jz> = <f, Jz> + <y0, B0 z>_H for every z
/// in a basis of Z_Phi.
template <class Scalar>
WdpReport verify_wdp(const DerivationInstance<Scalar>& inst, const ContractionBC<Scalar>& c,
                     const LinearMap<Scalar>& a, const VecIn<Scalar>& f, const VecIn<Scalar>& y0,
                     const VecIn<Scalar>& u) {
  const auto& v = inst.V();
  const auto& bs = c.bs();
  const auto z = z_phi(c);
  WdpReport rep;
  const Vector<Scalar> ju = inst.J()(u), aju = a(ju);
  for (Index j = 0; j < z.dim(); ++j) {
    const Vector<Scalar> zj = z.basis().col(j);
    const Vector<Scalar> jz = inst.J()(zj);
    const Scalar t1 = -Eigen::numext::conj(derivation_pairing(inst, zj, u));
    const Scalar t2 = v.inner(aju, jz);
    const Scalar t3 = v.inner(f, jz);
    const Scalar t4 = bs.H().inner(y0, bs.B0()(zj));
    const double scale = std::max({std::abs(t1), std::abs(t2), std::abs(t3), std::abs(t4), 1e-300});
    rep.max_residual = std::max(rep.max_residual, std::abs(t1 + t2 - t3 - t4) / scale);
    ++rep.tested;
  }
  return rep;
}

/// beta' = inf over u in Z_Phi^b of ||Du + AJu||_V / ||u||_W.
template <class Scalar>
double stability_constant(const DerivationInstance<Scalar>& inst, const LinearMap<Scalar>& a,
                          const ContractionBC<Scalar>& c) {
  const double alpha = coercivity_constant(a);
  if (!(alpha > 0)) throw PreconditionError("stability_constant: A is not coercive");
  const auto zb = z_phi_adjoint(c);
  if (zb.dim() == 0) return std::numeric_limits<double>::infinity();
  const Matrix<Scalar> op = (inst.D().coeffs() + a.coeffs() * inst.J().coeffs()) * zb.basis();
  const double beta = smallest_gain(LinearMap<Scalar>(InnerSpace<Scalar>::euclidean(zb.dim()), inst.V(), op));
  if (!(beta > 1e-12)) {
    std::ostringstream os;
    os << "stability constant " << beta << " is not positive";
    throw InvariantViolation(os.str());
  }
  return beta;
}

/// Dimension of Ran B0* intersected with Ran B1* (zero for every valid structure).
template <class Scalar>
Index adjoint_range_overlap(const BoundaryStructure<Scalar>& bs) {
  return subspace_intersection(range(adjoint(bs.B0())), range(adjoint(bs.B1()))).dim();
}

// Random instances -----------------------------------------------------------

/// Instance with J = I and the prescribed Hermitian boundary form: P = F/2 + K
/// with K skew-Hermitian, D = G_V^{-1} P, R = a subspace of the radical of F.
template <class Scalar>
DerivationInstance<Scalar> instance_from_form(const InnerSpace<Scalar>& v, const Matrix<Scalar>& form,
                                              const Matrix<Scalar>& skew, const Matrix<Scalar>& r) {
  const Matrix<Scalar> p = form / Scalar(2) + skew;
  return DerivationInstance<Scalar>(v, Matrix<Scalar>::Identity(v.dim(), v.dim()), v.solve_gram(p), r);
}

template <class Scalar>
struct StructuredInstance {
  DerivationInstance<Scalar> inst;
  BoundaryStructure<Scalar> bs;
};

/// Random endpoint-type structure: H of dimension h, B0 and B1 random of
/// ranks r0, r1 <= h on W of dimension n >= r0 + r1, with b := <B1,B1> - <B0,B0>.
template <class Scalar>
StructuredInstance<Scalar> random_endpoint_structure(Sampler<Scalar>& rng, Index n, Index h, Index r0, Index r1) {
  using Mat = Matrix<Scalar>;
  if (r0 > h || r1 > h || r0 + r1 > n) throw PreconditionError("random_endpoint_structure: incompatible dimensions");
  const auto v = rng.space(n, 0.2);
  const auto hs = rng.space(h, 0.3);
  // Generic row spaces of B0 and B1 intersect trivially when r0 + r1 <= n.
  const Mat b0 = rng.matrix(h, r0) * rng.matrix(r0, n);
  const Mat b1 = rng.matrix(h, r1) * rng.matrix(r1, n);
  const Mat form = b1.adjoint() * hs.gram() * b1 - b0.adjoint() * hs.gram() * b0;
  // Common kernel, computed in Euclidean coordinates of R^n.
  Mat stack(2 * h, n);
  stack << b0, b1;
  const LinearMap<Scalar> both(InnerSpace<Scalar>::euclidean(n), InnerSpace<Scalar>::euclidean(2 * h), stack);
  const Mat r = kernel(both).basis();
  auto inst = instance_from_form(v, form, rng.skew_hermitian(n, rng.uniform(0.0, 1.0)), r);
  BoundaryStructure<Scalar> bs(inst, hs, b0, b1);
  return {std::move(inst), std::move(bs)};
}

/// Random instance with prescribed inertia of b (n_plus positive, n_minus
/// negative, the rest zero) and its spectral boundary structure.
template <class Scalar>
StructuredInstance<Scalar> random_spectral_structure(Sampler<Scalar>& rng, Index n, Index n_plus, Index n_minus) {
  using Mat = Matrix<Scalar>;
  if (n_plus + n_minus > n) throw PreconditionError("random_spectral_structure: inertia exceeds dimension");
  const auto v = rng.space(n, 0.2);
  Mat c = rng.matrix(n, n) + Mat::Identity(n, n) * Scalar(2);
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(n);
  for (Index i = 0; i < n_plus; ++i) lambda(i) = rng.uniform(0.2, 1.5);
  for (Index i = 0; i < n_minus; ++i) lambda(n_plus + i) = -rng.uniform(0.2, 1.5);
  const Mat form = c.adjoint() * lambda.cast<Scalar>().asDiagonal() * c;
  const Mat radical = c.partialPivLu().solve(Mat::Identity(n, n)).rightCols(n - n_plus - n_minus);
  auto inst = instance_from_form(v, form, rng.skew_hermitian(n, rng.uniform(0.0, 1.0)), radical);
  auto bs = spectral_boundary_structure(inst);
  return {std::move(inst), std::move(bs)};
}

/// Random instance with dim V = m, dim W = 2m, random J and D. Generically b
/// has inertia (m, m, 0), so with the spectral structure dim V + dim Ran B0 =
/// dim W and the strong problem is a square system.
template <class Scalar>
StructuredInstance<Scalar> random_embedded_instance(Sampler<Scalar>& rng, Index m) {
  using Mat = Matrix<Scalar>;
  const auto v = rng.space(m, 0.2);
  Mat j(m, 2 * m);
  j << Mat::Identity(m, m), rng.matrix(m, m) * Scalar(0.5);
  const Mat d = rng.matrix(m, 2 * m);
  DerivationInstance<Scalar> inst(v, j, d, Mat(2 * m, 0));
  auto bs = spectral_boundary_structure(inst);
  return {std::move(inst), std::move(bs)};
}

/// Random contraction Ran B0 -> Ran B1 as an H-operator: Q1 K Q0^H G_H with
/// ||K|| = norm and rank <= rank.
template <class Scalar>
LinearMap<Scalar> random_contraction(Sampler<Scalar>& rng, const BoundaryStructure<Scalar>& bs, double norm,
                                     Index rank) {
  const auto& q0 = bs.ran_B0().basis();
  const auto& q1 = bs.ran_B1().basis();
  const Index k = std::min({rank, q0.cols(), q1.cols()});
  const Matrix<Scalar> kk = rng.contraction(q1.cols(), q0.cols(), norm, k);
  return LinearMap<Scalar>(bs.H(), bs.H(), q1 * kk * q0.adjoint() * bs.H().gram());
}

}  // namespace lions
