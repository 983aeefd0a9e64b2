#pragma once

// Finite-dimensional representation theorems: the operator form (a lower
// bound for T is the same as solvability of T* y* = x* with norm control),
// the form version for coercive sesquilinear forms on a subspace, the dual
// characterization of dissipative operators, and the explicit constant for
// coercive-minus-dissipative perturbations.
//
// Functionals are represented by their Riesz vectors: x*(x) = <x, xi>.

#include <numbers>
#include <optional>

#include "lions/hilbert.hpp"
#include "lions/random.hpp"

namespace lions {

namespace tolerance {
/// Re<Bx,x> <= dissipative * ||x||^2 counts as dissipative.
inline constexpr double dissipative = 1e-10;
/// A- = 0 when ||A-|| <= cross * ||A+||.
inline constexpr double cross = 1e-12;
inline constexpr double form_coercivity = 1e-10;
}  // namespace tolerance

template <class Scalar>
struct Witness {
  Vector<Scalar> functional;  // Riesz vector xi of x* in the domain
  Vector<Scalar> witness;     // Riesz vector eta of y* in the codomain, T* eta = xi
  double norm_ratio = 0.0;    // ||eta|| / ||xi||
  double residual = 0.0;      // ||T* eta - xi|| / ||xi||
};

template <class Scalar>
struct DualWitnessReport {
  double beta = 0.0;
  bool uniform_bound = false;
  std::vector<Witness<Scalar>> witnesses;
  double max_ratio = 0.0;
  double max_residual = 0.0;
  /// Ratio attained by the functional dual to the weakest direction; equals
  /// 1/beta when the bound holds, so the bound cannot be improved.
  double extremal_ratio = 0.0;
  /// Unit vector minimizing ||Tx||; a near-kernel direction when beta = 0.
  Vector<Scalar> weakest_direction;
  double weakest_gain = 0.0;

  bool certified(double rel_tol = 1e-10) const {
    if (!uniform_bound) return false;
    return max_ratio <= (1.0 / beta) * (1.0 + rel_tol) && max_residual <= 1e-10;
  }
};

namespace detail {

/// Minimal-norm eta with T* eta = xi, in the codomain's coordinates.
template <class Scalar, class Svd>
Vector<Scalar> min_norm_witness(const LinearMap<Scalar>& t, const Svd& svd, Index rank,
                                const Vector<Scalar>& xi) {
  const Vector<Scalar> xi_e = t.domain().to_euclidean(xi);
  const Vector<Scalar> c = svd.matrixV().leftCols(rank).adjoint() * xi_e;
  const Eigen::VectorXd inv = svd.singularValues().head(rank).cwiseInverse();
  const Vector<Scalar> eta_e = svd.matrixU().leftCols(rank) * (inv.cast<Scalar>().asDiagonal() * c);
  return t.codomain().from_euclidean(eta_e);
}

}  // namespace detail

/// Checks the operator representation theorem on `trials` random functionals.
template <class Scalar>
DualWitnessReport<Scalar> verify_operator_rtl(const LinearMap<Scalar>& t, int trials, Sampler<Scalar>& rng) {
  DualWitnessReport<Scalar> rep;
  const Index n = t.domain().dim();
  if (n == 0) {
    rep.beta = std::numeric_limits<double>::infinity();
    rep.uniform_bound = true;
    return rep;
  }
  const Index m = t.codomain().dim();
  rep.weakest_direction = Vector<Scalar>::Zero(n);
  if (m == 0) {
    rep.weakest_direction = t.domain().from_euclidean(Vector<Scalar>::Unit(n, 0));
    return rep;
  }
  const auto svd = detail::svd<Scalar>(t.euclidean(), Eigen::ComputeFullV | Eigen::ComputeThinU);
  const Eigen::VectorXd& sv = svd.singularValues();
  const Index rank = detail::numerical_rank(sv, tolerance::rank);
  // Weakest direction: last right singular vector (full V covers m < n).
  rep.weakest_direction = t.domain().from_euclidean(svd.matrixV().col(n - 1));
  rep.weakest_gain = t.codomain().norm(t(rep.weakest_direction));
  if (rank < n) return rep;

  rep.uniform_bound = true;
  rep.beta = sv(n - 1);
  const auto ts = adjoint(t);
  auto record = [&](const Vector<Scalar>& xi) {
    Witness<Scalar> w;
    w.functional = xi;
    w.witness = detail::min_norm_witness(t, svd, rank, xi);
    const double nx = t.domain().norm(xi);
    w.norm_ratio = t.codomain().norm(w.witness) / nx;
    w.residual = t.domain().norm(ts(w.witness) - xi) / nx;
    return w;
  };
  for (int i = 0; i < trials; ++i) {
    Vector<Scalar> xi = rng.vector(n);
    if (t.domain().norm(xi) == 0.0) xi(0) = Scalar(1);
    auto w = record(xi);
    rep.max_ratio = std::max(rep.max_ratio, w.norm_ratio);
    rep.max_residual = std::max(rep.max_residual, w.residual);
    rep.witnesses.push_back(std::move(w));
  }
  // The functional <., x_min> with x_min the weakest direction forces
  // ||eta|| = ||xi|| / beta.
  rep.extremal_ratio = record(rep.weakest_direction).norm_ratio;
  return rep;
}

template <class Scalar>
DualWitnessReport<Scalar> verify_operator_rtl(const LinearMap<Scalar>& t, int trials, std::uint64_t seed) {
  Sampler<Scalar> rng(seed);
  return verify_operator_rtl(t, trials, rng);
}

template <class Scalar>
struct FormSolution {
  Vector<Scalar> x;
  /// min |a(y,y)| / ||y||^2 over Y.
  double coercivity = 0.0;
  /// max_j |a(x, q_j) - L(q_j)| over an orthonormal basis of Y, relative.
  double residual = 0.0;
};

namespace detail {

/// min over unit c of |c^H M c|: the distance from 0 to the numerical range
/// of M, or 0 when 0 lies in it.
template <class Scalar>
double numerical_range_distance(const Matrix<Scalar>& m) {
  if (m.size() == 0) return std::numeric_limits<double>::infinity();
  using Mat = Matrix<Scalar>;
  const Mat h1 = hermitian_part<Scalar>(m);
  auto lambda_min = [](const Mat& h) {
    Eigen::SelfAdjointEigenSolver<Mat> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  };
  if constexpr (!Eigen::NumTraits<Scalar>::IsComplex) {
    // Real vectors only see the symmetric part.
    const Eigen::VectorXd ev = lambda_min(h1);
    if (ev(0) > 0) return ev(0);
    if (ev(ev.size() - 1) < 0) return -ev(ev.size() - 1);
    return 0.0;
  } else {
    const Mat h2 = (m - m.adjoint()) / Scalar(0, 2);
    // Support function of the numerical range in direction phi.
    auto f = [&](double phi) { return lambda_min(std::cos(phi) * h1 + std::sin(phi) * h2)(0); };
    constexpr int grid = 720;
    double best = -std::numeric_limits<double>::infinity(), best_phi = 0.0;
    for (int i = 0; i < grid; ++i) {
      const double phi = 2 * std::numbers::pi * i / grid;
      const double v = f(phi);
      if (v > best) best = v, best_phi = phi;
    }
    // Golden-section refinement around the best grid point.
    const double g = (std::sqrt(5.0) - 1) / 2;
    double lo = best_phi - 2 * std::numbers::pi / grid, hi = best_phi + 2 * std::numbers::pi / grid;
    double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 60; ++it) {
      if (f1 < f2) {
        lo = x1, x1 = x2, f1 = f2, x2 = lo + g * (hi - lo), f2 = f(x2);
      } else {
        hi = x2, x2 = x1, f2 = f1, x1 = hi - g * (hi - lo), f1 = f(x1);
      }
    }
    best = std::max({best, f1, f2});
    return std::max(best, 0.0);
  }
}

}  // namespace detail

/// Solves a(x, y) = L(y) for all y in Y, where a(x, y) = y^H A x on X and
/// L(y) = <l, y> with Riesz vector l. Among all solutions the one of least
/// X-norm is returned.
template <class Scalar>
FormSolution<Scalar> solve_form_problem(const Matrix<Scalar>& a, const InnerSpace<Scalar>& x_space,
                                        const Subspace<Scalar>& y, const Vector<Scalar>& l) {
  using Mat = Matrix<Scalar>;
  const Index n = x_space.dim();
  if (a.rows() != n || a.cols() != n) throw PreconditionError("form coefficients must be dim X x dim X");
  if (l.size() != n) throw PreconditionError("functional has the wrong dimension");
  require_same_space(y.ambient(), x_space, "form problem subspace");
  FormSolution<Scalar> sol;
  const Mat& q = y.basis();
  const Index k = q.cols();
  if (k == 0) {
    sol.x = Vector<Scalar>::Zero(n);
    sol.coercivity = std::numeric_limits<double>::infinity();
    return sol;
  }
  sol.coercivity = detail::numerical_range_distance<Scalar>(q.adjoint() * a * q);
  if (!(sol.coercivity >= tolerance::form_coercivity)) {
    std::ostringstream os;
    os << "form is not coercive on the test subspace (min |a(y,y)|/|y|^2 = " << sol.coercivity << ")";
    throw PreconditionError(os.str());
  }
  const Vector<Scalar> rhs = q.adjoint() * (x_space.gram() * l);
  const Mat k_e = x_space.right_from_euclidean(q.adjoint() * a);
  const auto svd = detail::svd<Scalar>(k_e, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Index rank = detail::numerical_rank(svd.singularValues(), tolerance::rank);
  const Eigen::VectorXd inv = svd.singularValues().head(rank).cwiseInverse();
  const Vector<Scalar> z =
      svd.matrixV().leftCols(rank) * (inv.cast<Scalar>().asDiagonal() * (svd.matrixU().leftCols(rank).adjoint() * rhs));
  sol.x = x_space.from_euclidean(z);
  const Vector<Scalar> r = q.adjoint() * a * sol.x - rhs;
  const double scale = std::max(1.0, detail::max_abs(rhs));
  sol.residual = detail::max_abs(r) / scale;
  if (sol.residual > 1e-10) {
    std::ostringstream os;
    os << "form problem residual " << sol.residual << " exceeds 1e-10";
    throw InvariantViolation(os.str());
  }
  return sol;
}

struct DissipativeProbe {
  double t = 0.0;
  bool supplied = false;     // from the caller's list, as opposed to the fixed small-t probes
  double primal_gain = 0.0;  // smallest gain of I - tB
  double dual_gain = 0.0;    // smallest gain of I - tB*
  bool primal_holds = false;
  bool dual_holds = false;
};

struct DissipativeDualReport {
  double abscissa = 0.0;  // sup Re<Bx,x>/||x||^2
  bool direct = false;    // abscissa <= tol
  bool dual = false;      // dual resolvent bound at every probed t
  std::vector<DissipativeProbe> probes;
  /// direct implies the dual bound at each supplied t.
  bool pointwise_consistent = true;
  bool agree() const { return direct == dual && pointwise_consistent; }
};

namespace detail {

inline std::vector<double> small_t_probes() {
  std::vector<double> ts;
  for (int j = 0; j <= 8; ++j) {
    const double p = std::pow(10.0, -j);
    ts.push_back(p);
    ts.push_back(3 * p);
  }
  return ts;
}

}  // namespace detail

/// Compares direct dissipativity with the dual resolvent bound
/// ||x* - t B* x*|| >= ||x*||. The direct test is the sign of the numerical
/// abscissa; the dual side only looks at gains of I - tB*, on the supplied
/// t and on a fixed ladder of small t (a bound at a single large t does not
/// imply dissipativity, e.g. B = I at t = 10).
template <class Scalar>
DissipativeDualReport check_dissipative_dual(const LinearMap<Scalar>& b, const std::vector<double>& ts,
                                             double tol = tolerance::dissipative) {
  if (ts.empty()) throw PreconditionError("check_dissipative_dual: no values of t");
  for (double t : ts)
    if (!(t > 0)) throw PreconditionError("check_dissipative_dual: t must be positive");
  if (!b.is_endomorphism()) throw PreconditionError("check_dissipative_dual: operator must map a space to itself");
  DissipativeDualReport rep;
  rep.abscissa = numerical_abscissa(b);
  rep.direct = rep.abscissa <= tol;
  const auto id = LinearMap<Scalar>::identity(b.domain());
  const auto bs = adjoint(b);
  auto probe = [&](double t, bool supplied) {
    DissipativeProbe p;
    p.t = t;
    p.supplied = supplied;
    p.primal_gain = smallest_gain(id - Scalar(t) * b);
    p.dual_gain = smallest_gain(id - Scalar(t) * bs);
    p.primal_holds = p.primal_gain >= 1.0 - tol;
    p.dual_holds = p.dual_gain >= 1.0 - tol;
    return p;
  };
  rep.dual = true;
  for (double t : ts) rep.probes.push_back(probe(t, true));
  for (double t : detail::small_t_probes()) rep.probes.push_back(probe(t, false));
  for (const auto& p : rep.probes) {
    rep.dual = rep.dual && p.dual_holds;
    if (p.supplied && rep.direct && !p.dual_holds) rep.pointwise_consistent = false;
    if (p.primal_holds != p.dual_holds) rep.pointwise_consistent = false;
  }
  return rep;
}

struct PerturbationConstant {
  double alpha = 0.0;
  double a_plus_norm = 0.0;
  double cross_norm = 0.0;  // ||S^{-1} A-||, S = sqrt(A+)
  double beta_squared = 0.0;
  double beta = 0.0;
  bool degenerate = false;  // A- = 0
};

/// beta with ||(A - B)v||^2 >= beta^2 (||v||^2 + ||Bv||^2) for every
/// dissipative B. Generic case: beta^2 = min{a^2/2, a^2 / ((a + 2 c^2) |A+|)}
/// with c = ||S^{-1}A-||; for A- = 0: beta^2 = min{a^2, a / |A+|}.
template <class Scalar>
PerturbationConstant perturbation_beta(const LinearMap<Scalar>& a) {
  PerturbationConstant pc;
  pc.alpha = coercivity_constant(a);
  if (!(pc.alpha > 0)) {
    std::ostringstream os;
    os << "perturbation_beta: operator is not coercive (alpha = " << pc.alpha << ")";
    throw PreconditionError(os.str());
  }
  const auto as = adjoint(a);
  const auto a_plus = Scalar(0.5) * (a + as);
  const auto a_minus = Scalar(0.5) * (a - as);
  pc.a_plus_norm = operator_norm(a_plus);
  const double minus_norm = operator_norm(a_minus);
  const auto s = sqrt_psd(a_plus);
  const LinearMap<Scalar> s_inv_a_minus(a.domain(), a.domain(), s.coeffs().partialPivLu().solve(a_minus.coeffs()));
  pc.cross_norm = operator_norm(s_inv_a_minus);
  pc.degenerate = minus_norm <= tolerance::cross * pc.a_plus_norm;
  const double al = pc.alpha;
  if (pc.degenerate) {
    pc.beta_squared = std::min(al * al, al / pc.a_plus_norm);
  } else {
    const double c2 = pc.cross_norm * pc.cross_norm;
    pc.beta_squared = std::min(al * al / 2, al * al / ((al + 2 * c2) * pc.a_plus_norm));
  }
  pc.beta = std::sqrt(pc.beta_squared);
  return pc;
}

template <class Scalar>
struct PerturbationReport {
  int trials = 0;
  /// min over v of (lhs - rhs) / rhs for ||(A-B)v||^2 >= beta^2 (||v||^2 + ||Bv||^2).
  double worst_slack = std::numeric_limits<double>::infinity();
  /// Same for ||(A-B)v|| >= beta/sqrt2 (||v|| + ||Bv||).
  double worst_sum_slack = std::numeric_limits<double>::infinity();
  std::optional<Vector<Scalar>> violation;
  bool holds(double rel_tol = 1e-10) const { return worst_slack >= -rel_tol && worst_sum_slack >= -rel_tol; }
};

template <class Scalar>
PerturbationReport<Scalar> verify_perturbation(const LinearMap<Scalar>& a, const LinearMap<Scalar>& b, double beta,
                                               int trials, Sampler<Scalar>& rng) {
  require_same_space(a.domain(), b.domain(), "perturbation");
  if (!a.is_endomorphism() || !b.is_endomorphism())
    throw PreconditionError("verify_perturbation: operators must map V to itself");
  const double abscissa = numerical_abscissa(b);
  if (abscissa > tolerance::dissipative) {
    std::ostringstream os;
    os << "verify_perturbation: B is not dissipative (sup Re<Bx,x>/|x|^2 = " << abscissa << ")";
    throw PreconditionError(os.str());
  }
  const double alpha = coercivity_constant(a);
  if (!(alpha > 0)) throw PreconditionError("verify_perturbation: A is not coercive");
  const auto& v_space = a.domain();
  const auto diff = a - b;
  PerturbationReport<Scalar> rep;
  rep.trials = trials;
  for (int i = 0; i < trials; ++i) {
    const Vector<Scalar> v = rng.vector(v_space.dim());
    const double nv = v_space.norm(v), nbv = v_space.norm(b(v)), nd = v_space.norm(diff(v));
    const double rhs = beta * beta * (nv * nv + nbv * nbv);
    const double rhs_sum = beta / std::sqrt(2.0) * (nv + nbv);
    const double slack = rhs > 0 ? (nd * nd - rhs) / rhs : 0.0;
    const double slack_sum = rhs_sum > 0 ? (nd - rhs_sum) / rhs_sum : 0.0;
    if (std::min(slack, slack_sum) < std::min(rep.worst_slack, rep.worst_sum_slack) &&
        std::min(slack, slack_sum) < -1e-10)
      rep.violation = v;
    rep.worst_slack = std::min(rep.worst_slack, slack);
    rep.worst_sum_slack = std::min(rep.worst_sum_slack, slack_sum);
  }
  return rep;
}

template <class Scalar>
PerturbationReport<Scalar> verify_perturbation(const LinearMap<Scalar>& a, const LinearMap<Scalar>& b, double beta,
                                               int trials, std::uint64_t seed) {
  Sampler<Scalar> rng(seed);
  return verify_perturbation(a, b, beta, trials, rng);
}

}  // namespace lions
