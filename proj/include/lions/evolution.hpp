#pragma once

// Non-autonomous evolution equations u' + A(t)u = f on (0, T) with the time
// boundary condition u(0) - Phi* u(T) = y0, over a Gelfand triple U -> H -> U'.
//
// Coordinates. States are vectors in K^n. U and H are K^n with Gram forms
// G_U, G_H. Loads f(t) and the form coefficients A(t) are given in dual
// coordinates: a(t, v, w) = w^H A(t) v and <f, w> = w^H f, so the Riesz
// representative of f in U is G_U^{-1} f. The discrete equations are the
// theta-scheme rows
//   G_H (u_{k+1} - u_k)/dt + A(t_{k+theta}) (theta u_{k+1} + (1-theta) u_k) = f(t_{k+theta})
// on the uniform grid t_k = k T / N, plus the coupling u_0 - Phi* u_N = y0
// with Phi* = G_H^{-1} Phi^H G_H.

#include <Eigen/Sparse>

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <tuple>

#include "lions/derivation.hpp"
#include "lions/hilbert.hpp"
#include "lions/random.hpp"

namespace lions {

namespace tolerance {
inline constexpr double boundary_residual = 1e-10;
inline constexpr double propagator = 1e-10;
}  // namespace tolerance

/// Runtime overrides for the solver postconditions.
struct SolveTolerances {
  double contraction = tolerance::contraction;
  double boundary_residual = tolerance::boundary_residual;
  double propagator = tolerance::propagator;
};

template <class Scalar>
class GelfandTriple {
 public:
  GelfandTriple(const Matrix<Scalar>& gram_u, const Matrix<Scalar>& gram_h) : u_(gram_u), h_(gram_h) {
    if (u_.dim() != h_.dim()) throw PreconditionError("U and H Gram matrices differ in size");
    if (u_.dim() == 0) throw PreconditionError("state dimension must be positive");
    // ||x||_H <= c ||x||_U with c^2 the largest eigenvalue of U^{-H} G_H U^{-1}.
    const Matrix<Scalar> m = u_.right_from_euclidean(u_.right_from_euclidean(h_.gram()).adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(detail::hermitian_part<Scalar>(m), Eigen::EigenvaluesOnly);
    embed_const_ = std::sqrt(es.eigenvalues().maxCoeff());
  }
  static GelfandTriple euclidean(Index n) {
    return GelfandTriple(Matrix<Scalar>::Identity(n, n), Matrix<Scalar>::Identity(n, n));
  }

  Index n() const { return u_.dim(); }
  const InnerSpace<Scalar>& U() const { return u_; }
  const InnerSpace<Scalar>& H() const { return h_; }
  double embed_const() const { return embed_const_; }

 private:
  InnerSpace<Scalar> u_;
  InnerSpace<Scalar> h_;
  double embed_const_ = 0.0;
};

/// t -> A(t) in dual coordinates, with claimed coercivity and continuity bounds.
template <class Scalar>
struct NonAutonomousForm {
  std::function<Matrix<Scalar>(double)> evaluator;
  double alpha = 0.0;    // claimed: Re a(t,v,v) >= alpha ||v||_U^2
  double bound_c = 0.0;  // claimed: |a(t,v,w)| <= bound_c ||v||_U ||w||_U
  bool autonomous = false;

  Matrix<Scalar> operator()(double t) const { return evaluator(t); }

  static NonAutonomousForm constant(const Matrix<Scalar>& a) {
    NonAutonomousForm f;
    f.evaluator = [a](double) { return a; };
    f.autonomous = true;
    return f;
  }
  /// A(t) = sum_j t^j A_j.
  static NonAutonomousForm polynomial(std::vector<Matrix<Scalar>> coeffs) {
    if (coeffs.empty()) throw PreconditionError("polynomial form needs at least one coefficient");
    NonAutonomousForm f;
    f.evaluator = [c = std::move(coeffs)](double t) {
      Matrix<Scalar> a = c.back();
      for (std::size_t j = c.size() - 1; j-- > 0;) a = (a * Scalar(t) + c[j]).eval();
      return a;
    };
    return f;
  }
  /// A(t) = A0 + sin(2 pi t / period) A1 + cos(2 pi t / period) A2.
  static NonAutonomousForm trigonometric(const Matrix<Scalar>& a0, const Matrix<Scalar>& a1,
                                         const Matrix<Scalar>& a2, double period) {
    if (!(period > 0)) throw PreconditionError("trigonometric form needs a positive period");
    NonAutonomousForm f;
    f.evaluator = [=](double t) {
      const double w = 2 * std::numbers::pi * t / period;
      return Matrix<Scalar>(a0 + Scalar(std::sin(w)) * a1 + Scalar(std::cos(w)) * a2);
    };
    return f;
  }
};

/// Smallest Re a(t,v,v)/||v||_U^2 and largest |a(t,v,w)|/(||v|| ||w||) at one t.
template <class Scalar>
std::pair<double, double> form_bounds_at(const GelfandTriple<Scalar>& g, const Matrix<Scalar>& a) {
  if (a.rows() != g.n() || a.cols() != g.n()) throw PreconditionError("form coefficients have the wrong size");
  const auto& u = g.U();
  const Matrix<Scalar> e = u.right_from_euclidean(u.right_from_euclidean(a.adjoint()).adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(detail::hermitian_part<Scalar>(e), Eigen::EigenvaluesOnly);
  return {es.eigenvalues()(0), detail::svd<Scalar>(e, 0).singularValues()(0)};
}

struct FormCheck {
  double alpha = std::numeric_limits<double>::infinity();  // observed min over samples
  double bound = 0.0;                                       // observed max over samples
  int samples = 0;
};

/// Samples the form on the grid t_k = kT/N and the midpoints.
template <class Scalar>
FormCheck sample_form(const GelfandTriple<Scalar>& g, const NonAutonomousForm<Scalar>& form, double horizon,
                      Index steps) {
  FormCheck fc;
  const Index samples = form.autonomous ? 0 : 2 * steps;
  for (Index i = 0; i <= samples; ++i) {
    const double t = samples == 0 ? 0.0 : horizon * static_cast<double>(i) / static_cast<double>(samples);
    const auto [lo, hi] = form_bounds_at(g, form(t));
    fc.alpha = std::min(fc.alpha, lo);
    fc.bound = std::max(fc.bound, hi);
    ++fc.samples;
  }
  return fc;
}

template <class Scalar>
struct EvolutionProblem {
  GelfandTriple<Scalar> triple;
  NonAutonomousForm<Scalar> form;
  std::function<Vector<Scalar>(double)> f;
  double horizon = 1.0;
  Matrix<Scalar> phi;  // H-contraction on K^n
  Vector<Scalar> y0;

  Index n() const { return triple.n(); }

  /// Phi* = G_H^{-1} Phi^H G_H.
  Matrix<Scalar> phi_adjoint() const { return triple.H().solve_gram(phi.adjoint() * triple.H().gram()); }
  double phi_norm() const {
    return operator_norm(LinearMap<Scalar>(triple.H(), triple.H(), phi));
  }

  /// Checks dimensions, the horizon and contractivity of Phi.
  void validate(double contraction_tol = tolerance::contraction) const {
    const Index n = triple.n();
    if (!(horizon > 0) || !std::isfinite(horizon)) throw PreconditionError("horizon T must be positive");
    if (phi.rows() != n || phi.cols() != n) throw PreconditionError("Phi has the wrong size");
    if (y0.size() != n) throw PreconditionError("y0 has the wrong size");
    if (!form.evaluator) throw PreconditionError("form has no evaluator");
    if (!f) throw PreconditionError("load has no evaluator");
    const double norm = phi_norm();
    if (norm > 1.0 + contraction_tol) {
      std::ostringstream os;
      os.precision(17);
      os << "Phi violates the contraction invariant: ||Phi||_H = " << norm << " > 1";
      throw PreconditionError(os.str());
    }
  }
};

/// Builds f := G_H u' + A(t) u and y0 := u(0) - Phi* u(T) from an exact solution.
template <class Scalar>
EvolutionProblem<Scalar> manufactured_problem(GelfandTriple<Scalar> triple, NonAutonomousForm<Scalar> form,
                                              double horizon, Matrix<Scalar> phi,
                                              std::function<Vector<Scalar>(double)> u,
                                              std::function<Vector<Scalar>(double)> du) {
  EvolutionProblem<Scalar> p{std::move(triple), std::move(form), {}, horizon, std::move(phi), {}};
  const Matrix<Scalar> gh = p.triple.H().gram();
  p.f = [gh, a = p.form, u, du](double t) { return Vector<Scalar>(gh * du(t) + a(t) * u(t)); };
  p.y0 = u(0.0) - p.phi_adjoint() * u(horizon);
  return p;
}

struct StepDiagnostics {
  double boundary_residual = 0.0;  // ||u_0 - Phi* u_N - y0||_H
  double stepping_residual = 0.0;  // max_k ||row_k||, relative to the load scale
  double w_norm = 0.0;
  double propagator_norm = std::numeric_limits<double>::quiet_NaN();
  double coupling_sigma_min = std::numeric_limits<double>::quiet_NaN();  // shooting only
};

template <class Scalar>
struct DiscreteSolution {
  std::vector<double> grid;
  Matrix<Scalar> values;  // n x (N+1), column k is u_k
  double theta = 1.0;
  StepDiagnostics diagnostics;

  Index steps() const { return values.cols() - 1; }
  /// Stacked nodal vector (u_0; ...; u_N).
  Vector<Scalar> stacked() const { return Eigen::Map<const Vector<Scalar>>(values.data(), values.size()); }
};

namespace detail {

inline void check_scheme(Index steps, double theta) {
  if (steps < 2) throw PreconditionError("at least two time steps are required");
  if (!(theta >= 0.5 && theta <= 1.0)) throw PreconditionError("theta must lie in [1/2, 1]");
}

inline std::vector<double> uniform_grid(double horizon, Index steps) {
  std::vector<double> g(static_cast<std::size_t>(steps + 1));
  for (Index k = 0; k <= steps; ++k) g[static_cast<std::size_t>(k)] = horizon * static_cast<double>(k) / static_cast<double>(steps);
  return g;
}

template <class Scalar>
void require_coercive(const EvolutionProblem<Scalar>& p, Index steps) {
  const auto fc = sample_form(p.triple, p.form, p.horizon, steps);
  if (!(fc.alpha > 0)) {
    std::ostringstream os;
    os << "form is not coercive (min Re a(t,v,v)/|v|_U^2 = " << fc.alpha << " on the sampled grid)";
    throw PreconditionError(os.str());
  }
  if (p.form.alpha > 0 && fc.alpha < p.form.alpha - 1e-10 * std::max(1.0, fc.bound)) {
    std::ostringstream os;
    os << "form violates its claimed coercivity bound alpha = " << p.form.alpha << " (observed " << fc.alpha << ")";
    throw PreconditionError(os.str());
  }
  if (p.form.bound_c > 0 && fc.bound > p.form.bound_c * (1 + 1e-10)) {
    std::ostringstream os;
    os << "form violates its claimed continuity bound " << p.form.bound_c << " (observed " << fc.bound << ")";
    throw PreconditionError(os.str());
  }
}

/// Discrete W norm: sum_k dt (||(u_k+u_{k+1})/2||_U^2 + ||G_U^{-1} G_H (u_{k+1}-u_k)/dt||_U^2).
template <class Scalar>
double discrete_w_norm(const GelfandTriple<Scalar>& g, const Matrix<Scalar>& values, double dt) {
  double s = 0.0;
  const Matrix<Scalar>& gh = g.H().gram();
  for (Index k = 0; k + 1 < values.cols(); ++k) {
    const Vector<Scalar> mid = (values.col(k) + values.col(k + 1)) / Scalar(2);
    const Vector<Scalar> du = g.U().solve_gram(gh * (values.col(k + 1) - values.col(k))) / Scalar(dt);
    s += dt * (std::pow(g.U().norm(mid), 2) + std::pow(g.U().norm(du), 2));
  }
  return std::sqrt(s);
}

template <class Scalar>
StepDiagnostics diagnose(const EvolutionProblem<Scalar>& p, const Matrix<Scalar>& values, double theta) {
  StepDiagnostics d;
  const Index steps = values.cols() - 1;
  const double dt = p.horizon / static_cast<double>(steps);
  const Matrix<Scalar>& gh = p.triple.H().gram();
  const auto& hs = p.triple.H();
  d.boundary_residual = hs.norm(values.col(0) - p.phi_adjoint() * values.col(steps) - p.y0);
  double worst = 0.0, scale = 0.0;
  for (Index k = 0; k < steps; ++k) {
    const double tk = dt * (static_cast<double>(k) + theta);
    const Matrix<Scalar> a = p.form(tk);
    const Vector<Scalar> fk = p.f(tk);
    const Vector<Scalar> mix = Scalar(theta) * values.col(k + 1) + Scalar(1 - theta) * values.col(k);
    const Vector<Scalar> lhs1 = gh * (values.col(k + 1) - values.col(k)) / Scalar(dt);
    const Vector<Scalar> lhs2 = a * mix;
    worst = std::max(worst, max_abs(Vector<Scalar>(lhs1 + lhs2 - fk)));
    scale = std::max({scale, max_abs(lhs1), max_abs(lhs2), max_abs(fk)});
  }
  d.stepping_residual = worst / std::max(scale, 1.0);
  d.w_norm = discrete_w_norm(p.triple, values, dt);
  return d;
}

/// One theta step: L_k u_{k+1} = R_k u_k + f_k.
template <class Scalar>
struct StepMatrices {
  Eigen::PartialPivLU<Matrix<Scalar>> lhs;
  Matrix<Scalar> rhs;
  Vector<Scalar> load;
};

template <class Scalar>
std::vector<StepMatrices<Scalar>> step_matrices(const EvolutionProblem<Scalar>& p, Index steps, double theta) {
  const double dt = p.horizon / static_cast<double>(steps);
  const Matrix<Scalar> m = p.triple.H().gram() / Scalar(dt);
  std::vector<StepMatrices<Scalar>> out;
  out.reserve(static_cast<std::size_t>(steps));
  std::optional<Matrix<Scalar>> a_const;
  if (p.form.autonomous) a_const = p.form(0.0);
  for (Index k = 0; k < steps; ++k) {
    const double tk = dt * (static_cast<double>(k) + theta);
    const Matrix<Scalar> a = a_const ? *a_const : p.form(tk);
    StepMatrices<Scalar> s;
    s.lhs.compute(m + Scalar(theta) * a);
    s.rhs = m - Scalar(1 - theta) * a;
    s.load = p.f(tk);
    out.push_back(std::move(s));
  }
  return out;
}

template <class Scalar>
Matrix<Scalar> propagate_identity(const std::vector<StepMatrices<Scalar>>& steps, Index n) {
  Matrix<Scalar> s = Matrix<Scalar>::Identity(n, n);
  for (const auto& st : steps) s = st.lhs.solve(st.rhs * s);
  return s;
}

}  // namespace detail

/// Discrete instance: V_h = interval values with ||v||^2 = sum_k dt ||v_k||_U^2,
/// W_h = nodal values, J = interval average, D u = G_U^{-1} G_H (u_{k+1}-u_k)/dt,
/// R_h = {w_0 = w_N = 0}, and the endpoint structure B0 u = u_0, B1 u = u_N.
template <class Scalar>
struct DiscreteInstance {
  DerivationInstance<Scalar> inst;
  BoundaryStructure<Scalar> bs;
  Index steps = 0;
  Index n = 0;
  double dt = 0.0;
};

template <class Scalar>
DiscreteInstance<Scalar> discretize(const EvolutionProblem<Scalar>& p, Index steps) {
  using Mat = Matrix<Scalar>;
  if (steps < 2) throw PreconditionError("at least two time steps are required");
  const Index n = p.n();
  const double dt = p.horizon / static_cast<double>(steps);
  const Index nv = steps * n, nw = (steps + 1) * n;
  Mat gv = Mat::Zero(nv, nv);
  Mat j = Mat::Zero(nv, nw), d = Mat::Zero(nv, nw);
  const Mat gu = p.triple.U().gram();
  const Mat dstep = p.triple.U().solve_gram(p.triple.H().gram()) / Scalar(dt);
  for (Index k = 0; k < steps; ++k) {
    gv.block(k * n, k * n, n, n) = gu * Scalar(dt);
    j.block(k * n, k * n, n, n) = Mat::Identity(n, n) * Scalar(0.5);
    j.block(k * n, (k + 1) * n, n, n) = Mat::Identity(n, n) * Scalar(0.5);
    d.block(k * n, k * n, n, n) = -dstep;
    d.block(k * n, (k + 1) * n, n, n) = dstep;
  }
  Mat r = Mat::Zero(nw, (steps - 1) * n);
  r.block(n, 0, (steps - 1) * n, (steps - 1) * n).setIdentity();
  DerivationInstance<Scalar> inst(InnerSpace<Scalar>(gv), j, d, r);
  Mat b0 = Mat::Zero(n, nw), b1 = Mat::Zero(n, nw);
  b0.leftCols(n).setIdentity();
  b1.rightCols(n).setIdentity();
  BoundaryStructure<Scalar> bs(inst, p.triple.H(), b0, b1);
  return {std::move(inst), std::move(bs), steps, n, dt};
}

/// A(t) assembled on V_h: (A_V v)_k = G_U^{-1} A(t_{k+theta}) v_k.
template <class Scalar>
LinearMap<Scalar> discrete_operator(const EvolutionProblem<Scalar>& p, const DiscreteInstance<Scalar>& di,
                                    double theta) {
  const Index n = di.n;
  Matrix<Scalar> a = Matrix<Scalar>::Zero(di.steps * n, di.steps * n);
  for (Index k = 0; k < di.steps; ++k)
    a.block(k * n, k * n, n, n) = p.triple.U().solve_gram(p.form(di.dt * (static_cast<double>(k) + theta)));
  return LinearMap<Scalar>(di.inst.V(), di.inst.V(), a);
}

/// Riesz representative of the load on V_h: (f_V)_k = G_U^{-1} f(t_{k+theta}).
template <class Scalar>
Vector<Scalar> discrete_load(const EvolutionProblem<Scalar>& p, const DiscreteInstance<Scalar>& di, double theta) {
  const Index n = di.n;
  Vector<Scalar> f(di.steps * n);
  for (Index k = 0; k < di.steps; ++k)
    f.segment(k * n, n) = p.triple.U().solve_gram(p.f(di.dt * (static_cast<double>(k) + theta)));
  return f;
}

template <class Scalar>
ContractionBC<Scalar> discrete_contraction(const EvolutionProblem<Scalar>& p, const DiscreteInstance<Scalar>& di) {
  return ContractionBC<Scalar>(di.bs, LinearMap<Scalar>(p.triple.H(), p.triple.H(), p.phi));
}

/// Sparse all-at-once solve of the N n stepping rows and n coupling rows.
template <class Scalar>
DiscreteSolution<Scalar> solve_all_at_once(const EvolutionProblem<Scalar>& p, Index steps, double theta,
                                           const SolveTolerances& tol = {}) {
  detail::check_scheme(steps, theta);
  p.validate(tol.contraction);
  detail::require_coercive(p, steps);
  const Index n = p.n();
  const Index dim = (steps + 1) * n;
  const double dt = p.horizon / static_cast<double>(steps);
  const Matrix<Scalar> m = p.triple.H().gram() / Scalar(dt);
  const Matrix<Scalar> phis = p.phi_adjoint();
  std::vector<Eigen::Triplet<Scalar>> trip;
  trip.reserve(static_cast<std::size_t>(2 * steps * n * n + 2 * n * n));
  Vector<Scalar> rhs(dim);
  auto put = [&](Index r0, Index c0, const Matrix<Scalar>& blk) {
    for (Index j = 0; j < blk.cols(); ++j)
      for (Index i = 0; i < blk.rows(); ++i)
        if (blk(i, j) != Scalar(0)) trip.emplace_back(r0 + i, c0 + j, blk(i, j));
  };
  for (Index k = 0; k < steps; ++k) {
    const double tk = dt * (static_cast<double>(k) + theta);
    const Matrix<Scalar> a = p.form(tk);
    put(k * n, k * n, Matrix<Scalar>(-m + Scalar(1 - theta) * a));
    put(k * n, (k + 1) * n, Matrix<Scalar>(m + Scalar(theta) * a));
    rhs.segment(k * n, n) = p.f(tk);
  }
  put(steps * n, 0, Matrix<Scalar>::Identity(n, n));
  put(steps * n, steps * n, Matrix<Scalar>(-phis));
  rhs.tail(n) = p.y0;
  Eigen::SparseMatrix<Scalar> sys(dim, dim);
  sys.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<Scalar>> lu;
  lu.compute(sys);
  if (lu.info() != Eigen::Success) throw InvariantViolation("all-at-once system is singular");
  const Vector<Scalar> u = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !u.allFinite()) throw InvariantViolation("all-at-once solve failed");

  DiscreteSolution<Scalar> sol;
  sol.grid = detail::uniform_grid(p.horizon, steps);
  sol.theta = theta;
  sol.values = Eigen::Map<const Matrix<Scalar>>(u.data(), n, steps + 1);
  sol.diagnostics = detail::diagnose(p, sol.values, theta);
  const auto st = detail::step_matrices(p, steps, theta);
  sol.diagnostics.propagator_norm =
      operator_norm(LinearMap<Scalar>(p.triple.H(), p.triple.H(), detail::propagate_identity(st, n)));
  const double bscale = std::max({1.0, p.triple.H().norm(p.y0), p.triple.H().norm(sol.values.col(0))});
  if (sol.diagnostics.boundary_residual > tol.boundary_residual * bscale) {
    std::ostringstream os;
    os << "boundary residual " << sol.diagnostics.boundary_residual << " after all-at-once solve";
    throw InvariantViolation(os.str());
  }
  return sol;
}

/// Shooting: u_N = S_h u_0 + w_N with S_h the discrete fundamental map and w
/// the particular solution from w_0 = 0; then (I - Phi* S_h) u_0 = Phi* w_N + y0.
template <class Scalar>
DiscreteSolution<Scalar> solve_shooting(const EvolutionProblem<Scalar>& p, Index steps, double theta,
                                        const SolveTolerances& tol = {}) {
  detail::check_scheme(steps, theta);
  p.validate(tol.contraction);
  detail::require_coercive(p, steps);
  const Index n = p.n();
  const auto st = detail::step_matrices(p, steps, theta);
  // Propagate [S | w] jointly.
  Matrix<Scalar> x = Matrix<Scalar>::Zero(n, n + 1);
  x.leftCols(n).setIdentity();
  for (const auto& s : st) {
    Matrix<Scalar> r = s.rhs * x;
    r.col(n) += s.load;
    x = s.lhs.solve(r);
  }
  const Matrix<Scalar> sh = x.leftCols(n);
  const Vector<Scalar> wn = x.col(n);
  const Matrix<Scalar> phis = p.phi_adjoint();
  const auto& h = p.triple.H();
  const LinearMap<Scalar> coupling(h, h, Matrix<Scalar>::Identity(n, n) - phis * sh);
  DiscreteSolution<Scalar> sol;
  sol.diagnostics.coupling_sigma_min = smallest_gain(coupling);
  if (!(sol.diagnostics.coupling_sigma_min > 1e-12)) {
    std::ostringstream os;
    os << "I - Phi* S_h is numerically singular (smallest singular value " << sol.diagnostics.coupling_sigma_min
       << ")";
    throw InvariantViolation(os.str());
  }
  const Vector<Scalar> u0 = coupling.coeffs().partialPivLu().solve(Vector<Scalar>(phis * wn + p.y0));
  sol.values.resize(n, steps + 1);
  sol.values.col(0) = u0;
  for (Index k = 0; k < steps; ++k) {
    const auto& s = st[static_cast<std::size_t>(k)];
    sol.values.col(k + 1) = s.lhs.solve(Vector<Scalar>(s.rhs * sol.values.col(k) + s.load));
  }
  sol.grid = detail::uniform_grid(p.horizon, steps);
  sol.theta = theta;
  const double sigma = sol.diagnostics.coupling_sigma_min;
  sol.diagnostics = detail::diagnose(p, sol.values, theta);
  sol.diagnostics.coupling_sigma_min = sigma;
  sol.diagnostics.propagator_norm = operator_norm(LinearMap<Scalar>(h, h, sh));
  const double bscale = std::max({1.0, h.norm(p.y0), h.norm(sol.values.col(0))});
  if (sol.diagnostics.boundary_residual > tol.boundary_residual * bscale) {
    std::ostringstream os;
    os << "boundary residual " << sol.diagnostics.boundary_residual << " after shooting";
    throw InvariantViolation(os.str());
  }
  return sol;
}

/// ||S_h||_{H->H}. With require_coercive = false the form may be degenerate
/// (diagnostic mode) and no bound is enforced.
template <class Scalar>
double propagator_contraction(const EvolutionProblem<Scalar>& p, Index steps, double theta,
                              bool require_coercive = true, double tol = tolerance::propagator) {
  detail::check_scheme(steps, theta);
  if (require_coercive) detail::require_coercive(p, steps);
  const auto st = detail::step_matrices(p, steps, theta);
  const double norm =
      operator_norm(LinearMap<Scalar>(p.triple.H(), p.triple.H(), detail::propagate_identity(st, p.n())));
  if (require_coercive && norm > 1.0 + tol) {
    std::ostringstream os;
    os << "discrete propagator is not an H-contraction (norm " << norm << ")";
    throw InvariantViolation(os.str());
  }
  return norm;
}

struct IbpReport {
  int trials = 0;
  double max_residual = 0.0;  // relative to the summed magnitude of the terms
  double max_matrix_gap = 0.0;  // instance pairing vs. the explicit sum
  bool holds(double tol = 1e-13) const { return max_residual <= tol && max_matrix_gap <= tol; }
};

namespace detail {

/// Relative residual of <D v, w> + conj <D w, v> = <v_N, w_N>_H - <v_0, w_0>_H
/// with the pairing written as the interval sum sum_k <v_{k+1} - v_k, (w_k + w_{k+1})/2>_H.
/// Also returns the summed term magnitude and the left side.
template <class Scalar>
std::tuple<double, double, Scalar> ibp_residual(const InnerSpace<Scalar>& h, Index steps, const Vector<Scalar>& v,
                                                const Vector<Scalar>& w) {
  const Index n = h.dim();
  auto node = [n](const Vector<Scalar>& x, Index k) { return x.segment(k * n, n); };
  double mag = 0.0;
  auto pairing = [&](const Vector<Scalar>& a, const Vector<Scalar>& b) {
    Scalar s(0);
    for (Index k = 0; k < steps; ++k) {
      const Vector<Scalar> da = node(a, k + 1) - node(a, k);
      const Vector<Scalar> mb = (node(b, k) + node(b, k + 1)) / Scalar(2);
      const Scalar term = h.inner(da, mb);
      s += term;
      mag += std::abs(term);
    }
    return s;
  };
  const Scalar lhs = pairing(v, w) + Eigen::numext::conj(pairing(w, v));
  const Scalar end_n = h.inner(node(v, steps), node(w, steps));
  const Scalar end_0 = h.inner(node(v, 0), node(w, 0));
  mag += std::abs(end_n) + std::abs(end_0);
  return {std::abs(lhs - (end_n - end_0)) / std::max(mag, 1e-300), mag, lhs};
}

}  // namespace detail

/// Discrete integration by parts on random grid functions over H.
template <class Scalar>
IbpReport discrete_ibp_check(const InnerSpace<Scalar>& h, Index steps, int trials, Sampler<Scalar>& rng) {
  if (steps < 1) throw PreconditionError("at least one time step is required");
  IbpReport rep;
  for (int t = 0; t < trials; ++t) {
    const Vector<Scalar> v = rng.vector((steps + 1) * h.dim()), w = rng.vector((steps + 1) * h.dim());
    rep.max_residual = std::max(rep.max_residual, std::get<0>(detail::ibp_residual(h, steps, v, w)));
    ++rep.trials;
  }
  return rep;
}

/// As above, and also compares the explicit sum with the boundary form of the
/// assembled derivation instance.
template <class Scalar>
IbpReport discrete_ibp_check(const DiscreteInstance<Scalar>& di, int trials, Sampler<Scalar>& rng) {
  IbpReport rep;
  const Index nw = (di.steps + 1) * di.n;
  for (int t = 0; t < trials; ++t) {
    const Vector<Scalar> v = rng.vector(nw), w = rng.vector(nw);
    const auto [res, mag, lhs] = detail::ibp_residual(di.bs.H(), di.steps, v, w);
    rep.max_residual = std::max(rep.max_residual, res);
    rep.max_matrix_gap = std::max(rep.max_matrix_gap, std::abs(boundary_form(di.inst, v, w) - lhs) / std::max(mag, 1e-300));
    ++rep.trials;
  }
  return rep;
}

struct ConvergenceRow {
  Index steps = 0;
  double theta = 1.0;
  double error = 0.0;
  /// log(e_prev / e) / log(N / N_prev); NaN for the first row or when the
  /// errors are at rounding level.
  double order = std::numeric_limits<double>::quiet_NaN();
};

/// Max-over-grid H-norm errors against an exact solution.
template <class Scalar>
std::vector<ConvergenceRow> convergence_study(const EvolutionProblem<Scalar>& p,
                                              const std::function<Vector<Scalar>(double)>& exact,
                                              const std::vector<Index>& steps, const std::vector<double>& thetas,
                                              double floor = 1e-12) {
  if (!exact) throw PreconditionError("convergence study needs a closed-form solution");
  std::vector<ConvergenceRow> rows;
  for (double theta : thetas) {
    std::optional<ConvergenceRow> prev;
    for (Index nsteps : steps) {
      const auto sol = solve_all_at_once(p, nsteps, theta);
      ConvergenceRow row;
      row.steps = nsteps;
      row.theta = theta;
      double scale = 1.0;
      for (Index k = 0; k <= nsteps; ++k) {
        const Vector<Scalar> ue = exact(sol.grid[static_cast<std::size_t>(k)]);
        row.error = std::max(row.error, p.triple.H().norm(sol.values.col(k) - ue));
        scale = std::max(scale, p.triple.H().norm(ue));
      }
      if (prev && prev->error > floor * scale && row.error > floor * scale)
        row.order = std::log(prev->error / row.error) /
                    std::log(static_cast<double>(nsteps) / static_cast<double>(prev->steps));
      rows.push_back(row);
      prev = row;
    }
  }
  return rows;
}

// Random problems -------------------------------------------------------------

/// Coercive non-autonomous form: in U-Euclidean coordinates
///   c0 I + P P^H + K0 + sin(2 pi t) K1 + t E,  K skew, E PSD,
/// so Re a(t,v,v) >= c0 ||v||_U^2 for t >= 0.
template <class Scalar>
NonAutonomousForm<Scalar> random_form(Sampler<Scalar>& rng, const GelfandTriple<Scalar>& g) {
  using Mat = Matrix<Scalar>;
  const Index n = g.n();
  const double c0 = rng.uniform(0.2, 2.0);
  const Mat p = rng.matrix(n, n) * Scalar(0.5);
  const Mat base = Mat::Identity(n, n) * Scalar(c0) + p * p.adjoint() + rng.skew_hermitian(n, 1.5);
  const Mat k1 = rng.skew_hermitian(n, 1.0);
  const Mat e0 = rng.matrix(n, n) * Scalar(0.3);
  const Mat e = e0 * e0.adjoint();
  const auto& u = g.U();
  // Dual coordinates: A = U^H M U.
  auto lift = [&u](const Mat& mm) { return Mat(u.right_to_euclidean(mm.adjoint()).adjoint()); };
  auto to_dual = [&](const Mat& mm) { return Mat(u.right_to_euclidean(lift(mm))); };
  const Mat a0 = to_dual(base), a1 = to_dual(k1), a2 = to_dual(e);
  NonAutonomousForm<Scalar> f;
  f.evaluator = [a0, a1, a2](double t) {
    return Mat(a0 + Scalar(std::sin(2 * std::numbers::pi * t)) * a1 + Scalar(t) * a2);
  };
  f.alpha = c0;
  return f;
}

/// Random problem with a random H-contraction Phi of norm `phi_norm`.
template <class Scalar>
EvolutionProblem<Scalar> random_problem(Sampler<Scalar>& rng, Index n, double phi_norm) {
  using Mat = Matrix<Scalar>;
  GelfandTriple<Scalar> g(rng.spd(n), rng.spd(n));
  auto form = random_form(rng, g);
  const Vector<Scalar> f0 = rng.vector(n), f1 = rng.vector(n);
  const auto& h = g.H();
  const Mat k = rng.contraction(n, n, phi_norm, rng.integer(1, n));
  const Mat phi = h.from_euclidean(h.right_to_euclidean(k));  // U_H^{-1} K U_H
  EvolutionProblem<Scalar> p{g, form, {}, rng.uniform(0.5, 2.0), phi, rng.vector(n)};
  p.f = [f0, f1](double t) { return Vector<Scalar>(f0 + Scalar(std::cos(2 * std::numbers::pi * t)) * f1); };
  return p;
}

}  // namespace lions
