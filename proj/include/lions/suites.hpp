#pragma once

// Randomized property suites behind `lions-kit verify`. Each check reduces a
// family of random instances to one worst-case number and compares it with a
// tolerance; a tolerance override replaces every check's default.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lions/derivation.hpp"
#include "lions/evolution.hpp"
#include "lions/rtl.hpp"

namespace lions {

struct CheckResult {
  std::string suite;
  std::string name;
  int count = 0;
  int failures = 0;
  /// Worst observed value of the check's metric.
  double worst = 0.0;
  double tol = 0.0;
  /// "max": pass iff metric <= tol; "max_strict": metric < tol; "min": metric >= tol.
  std::string kind = "max";
  /// Description of the worst failing instance (empty when all pass).
  std::string witness;

  bool passed() const { return failures == 0 && count > 0; }
};

struct SuiteOptions {
  std::uint64_t seed = 7;
  std::optional<double> tol;
};

namespace detail {

class Check {
 public:
  Check(std::string suite, std::string name, double tol, std::string kind, const SuiteOptions& opts) {
    r_.suite = std::move(suite);
    r_.name = std::move(name);
    r_.tol = opts.tol ? *opts.tol : tol;
    r_.kind = std::move(kind);
    r_.worst = r_.kind == "min" ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  }

  void record(double metric, const std::string& where) {
    ++r_.count;
    const bool is_min = r_.kind == "min";
    const bool ok = std::isfinite(metric) &&
                    (is_min ? metric >= r_.tol : (r_.kind == "max_strict" ? metric < r_.tol : metric <= r_.tol));
    const bool worse = is_min ? metric < r_.worst : metric > r_.worst;
    if (worse || std::isnan(metric)) r_.worst = metric;
    if (!ok) {
      ++r_.failures;
      if (worse || r_.witness.empty()) {
        std::ostringstream os;
        os.precision(6);
        os << where << ": " << metric;
        r_.witness = os.str();
      }
    }
  }

  CheckResult finish() const { return r_; }

 private:
  CheckResult r_;
};

template <class Scalar>
const char* field_name() {
  return scalar_field_v<Scalar> == ScalarField::complex ? "complex" : "real";
}

inline std::string where(const char* field, int i, Index n) {
  std::ostringstream os;
  os << field << " instance " << i << " (n=" << n << ")";
  return os.str();
}

template <class Scalar>
void rtl_checks(Sampler<Scalar>& rng, int instances, Check& bound, Check& kernel, Check& dual, Check& perturb) {
  const auto* field = field_name<Scalar>();
  for (int i = 0; i < instances; ++i) {
    const Index n = rng.integer(1, 12), m = rng.integer(1, 12);
    const auto dom = rng.space(n, 0.3), cod = rng.space(m, 0.3);
    const bool deficient = rng.coin(0.25);
    const auto t = deficient ? rng.map_of_rank(dom, cod, rng.integer(0, std::min(n, m) - 1)) : rng.map(dom, cod);
    const auto rep = verify_operator_rtl(t, 20, rng);
    if (rep.uniform_bound)
      bound.record(std::max(rep.max_ratio * rep.beta - 1.0, rep.max_residual - 1e-10), where(field, i, n));
    else
      kernel.record(rep.weakest_gain / std::max(1.0, operator_norm(t)), where(field, i, n));

    const auto s = rng.space(n, 0.3);
    const auto b = rng.coin(0.6) ? rng.dissipative(s) : rng.map(s, s);
    const auto dd = check_dissipative_dual(b, {0.1, 1.0, 10.0}, tolerance::dissipative);
    dual.record(dd.agree() ? 0.0 : 1.0, where(field, i, n));

    const Index k = rng.integer(1, 10);
    const auto sp = rng.space(k, 0.3);
    const auto a = rng.coin(0.2) ? LinearMap<Scalar>(sp, sp, sp.solve_gram(rng.spd(k))) : rng.coercive(sp);
    const auto pb = perturbation_beta(a);
    const auto pr = verify_perturbation(a, rng.dissipative(sp), pb.beta, 100, rng);
    perturb.record(-std::min(pr.worst_slack, pr.worst_sum_slack), where(field, i, k));
  }
}

template <class Scalar>
StructuredInstance<Scalar> random_structure(Sampler<Scalar>& rng) {
  if (rng.coin(0.5)) {
    const Index h = rng.integer(1, 4);
    const Index r0 = rng.integer(1, h), r1 = rng.integer(1, h);
    return random_endpoint_structure(rng, r0 + r1 + rng.integer(0, 4), h, r0, r1);
  }
  const Index np = rng.integer(1, 3), nm = rng.integer(1, 3);
  return random_spectral_structure(rng, np + nm + rng.integer(0, 3), np, nm);
}

template <class Scalar>
LinearMap<Scalar> suite_contraction(Sampler<Scalar>& rng, const BoundaryStructure<Scalar>& bs, int i) {
  const auto& h = bs.H();
  const bool full = bs.ran_B0().dim() == h.dim() && bs.ran_B1().dim() == h.dim();
  // Without full ranges, +-Id is replaced by a random partial isometry Ran B0 -> Ran B1.
  auto isometry = [&](double sign) {
    const auto& q0 = bs.ran_B0().basis();
    const auto& q1 = bs.ran_B1().basis();
    return LinearMap<Scalar>(h, h, q1 * rng.partial_isometry(q1.cols(), q0.cols(), sign) * q0.adjoint() * h.gram());
  };
  switch (i % 5) {
    case 0: return LinearMap<Scalar>::zero(h, h);
    case 1: return full ? LinearMap<Scalar>::identity(h) : isometry(1.0);
    case 2: return full ? -LinearMap<Scalar>::identity(h) : isometry(-1.0);
    case 3: return random_contraction(rng, bs, rng.uniform(0.2, 1.0), 1);
    default: return random_contraction(rng, bs, rng.uniform(0.0, 1.0), h.dim());
  }
}

inline double angle_metric(Index dim_a, Index dim_b, const std::vector<double>& angles) {
  if (dim_a != dim_b) return std::numbers::pi / 2;
  return angles.empty() ? 0.0 : *std::max_element(angles.begin(), angles.end());
}

template <class Scalar>
void derivation_checks(Sampler<Scalar>& rng, int instances, Check& zbb, Check& twice, Check& maximal, Check& induced,
                       Check& sdp) {
  const auto* field = field_name<Scalar>();
  for (int i = 0; i < instances; ++i) {
    const auto s = random_structure(rng);
    const auto& bs = s.bs;
    const Index n = bs.W().dim();
    const ContractionBC<Scalar> c(bs, suite_contraction(rng, bs, i));
    const auto z = z_phi(c);
    const auto zb = b_orthogonal(bs, z);
    const auto za = z_phi_adjoint(c);
    zbb.record(angle_metric(zb.dim(), za.dim(), principal_angles(zb, za)), where(field, i, n));
    const auto zbb2 = b_orthogonal(bs, zb);
    twice.record(angle_metric(zbb2.dim(), z.dim(), principal_angles(zbb2, z)), where(field, i, n));

    if (i % 2 == 0 && z.dim() < n) {
      double worst = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 40; ++k) {
        Matrix<Scalar> cols(n, z.dim() + 1);
        cols << z.basis(), rng.vector(n);
        const auto ext = Subspace<Scalar>::span(bs.W(), cols);
        if (ext.dim() != z.dim() + 1) continue;
        worst = std::min(worst, max_form_value(bs, ext).first);
      }
      maximal.record(worst, where(field, i, n));
    }

    const auto psi = random_contraction(rng, bs, rng.uniform(0.0, 1.0), rng.integer(0, bs.H().dim()));
    const ContractionBC<Scalar> cpsi(bs, psi);
    const auto rec = induced_contraction(bs, z_phi(cpsi));
    induced.record(max_abs(Matrix<Scalar>(rec.phi().coeffs() - cpsi.phi().coeffs())), where(field, i, n));

    if (i % 2 == 1) {
      const auto e = random_embedded_instance(rng, rng.integer(1, 5));
      const auto a = rng.coercive(e.inst.V());
      const ContractionBC<Scalar> ce(e.bs, random_contraction(rng, e.bs, rng.uniform(0.0, 1.0), e.bs.H().dim()));
      const auto f = rng.vector(e.inst.V().dim());
      const auto y0 = e.bs.ran_B0().project(rng.vector(e.bs.H().dim()));
      const auto sol = solve_sdp(e.inst, ce, a, f, y0);
      const auto wdp = verify_wdp(e.inst, ce, a, f, y0, sol.u);
      sdp.record(std::max({wdp.max_residual, sol.equation_residual, sol.boundary_residual}),
                 where(field, i, e.inst.W().dim()));
    }
  }
}

}  // namespace detail

inline std::vector<CheckResult> run_rtl_suite(const SuiteOptions& opts, int instances = 200) {
  using detail::Check;
  Check bound("rtl", "operator_rtl.witness_bound", 1e-10, "max", opts);
  Check kernel("rtl", "operator_rtl.near_kernel", 1e-10, "max", opts);
  Check dual("rtl", "dissipative_dual.agreement", 0.5, "max", opts);
  Check perturb("rtl", "perturbation.bound", 1e-10, "max", opts);
  Check hand("rtl", "perturbation.hand_value", 1e-15, "max", opts);
  Sampler<double> rd(opts.seed);
  Sampler<Complex> rc(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  detail::rtl_checks(rd, instances / 2, bound, kernel, dual, perturb);
  detail::rtl_checks(rc, instances - instances / 2, bound, kernel, dual, perturb);
  Matrix<double> a(2, 2);
  a << 1, 1, -1, 1;
  const auto e = InnerSpace<double>::euclidean(2);
  hand.record(std::abs(perturbation_beta(LinearMap<double>(e, e, a)).beta_squared - 1.0 / 3.0), "A = [[1,1],[-1,1]]");
  return {bound.finish(), kernel.finish(), dual.finish(), perturb.finish(), hand.finish()};
}

inline std::vector<CheckResult> run_derivation_suite(const SuiteOptions& opts, int instances = 100) {
  using detail::Check;
  Check zbb("derivation", "zbb.adjoint_space", 1e-8, "max", opts);
  Check twice("derivation", "zbb.double_orthogonal", 1e-8, "max", opts);
  Check maximal("derivation", "maximality.extension_violates", 1e-8, "min", opts);
  Check induced("derivation", "induced_contraction.recovery", 1e-9, "max", opts);
  Check sdp("derivation", "sdp.weak_solution", 1e-8, "max", opts);
  Sampler<double> rd(opts.seed + 1);
  Sampler<Complex> rc((opts.seed + 1) ^ 0x9e3779b97f4a7c15ULL);
  detail::derivation_checks(rd, instances / 2, zbb, twice, maximal, induced, sdp);
  detail::derivation_checks(rc, instances - instances / 2, zbb, twice, maximal, induced, sdp);
  return {zbb.finish(), twice.finish(), maximal.finish(), induced.finish(), sdp.finish()};
}

inline std::vector<CheckResult> run_evolution_suite(const SuiteOptions& opts) {
  using detail::Check;
  Check ibp("evolution", "discrete_ibp", 1e-13, "max", opts);
  Check euler("evolution", "convergence.decay_theta_1", 0.15, "max", opts);
  Check mid("evolution", "convergence.decay_theta_half", 0.2, "max", opts);
  Check periodic("evolution", "periodic.boundary_residual", 1e-12, "max", opts);
  Check cross("evolution", "cross_solver.agreement", 1e-8, "max", opts);
  Check stab("evolution", "stability.bound", 1e-10, "max", opts);
  Check prop("evolution", "propagator.contraction", 1.0, "max_strict", opts);
  Check value("evolution", "propagator.euler_value", 1e-12, "max", opts);

  Sampler<Complex> rc(opts.seed + 2);
  for (int i = 0; i < 20; ++i) {
    const Index n = rc.integer(1, 5), steps = rc.integer(2, 200);
    const auto h = rc.space(n, 0.2);
    const auto rep = discrete_ibp_check(h, steps, 10, rc);
    ibp.record(rep.max_residual, detail::where("complex", i, n));
  }

  const auto triple = GelfandTriple<double>::euclidean(1);
  const auto one = Matrix<double>::Constant(1, 1, 1.0);
  EvolutionProblem<double> decay{triple, NonAutonomousForm<double>::constant(one),
                                 [](double) { return Vector<double>::Zero(1); }, 1.0,
                                 Matrix<double>::Zero(1, 1), Vector<double>::Ones(1)};
  const std::function<Vector<double>(double)> exact = [](double t) { return Vector<double>::Constant(1, std::exp(-t)); };
  for (const auto& row : convergence_study(decay, exact, {16, 32, 64, 128, 256, 512}, {1.0, 0.5})) {
    if (std::isnan(row.order)) continue;
    std::ostringstream os;
    os << "N=" << row.steps;
    (row.theta == 1.0 ? euler : mid).record(std::abs(row.order - (row.theta == 1.0 ? 1.0 : 2.0)), os.str());
  }

  EvolutionProblem<double> forced = decay;
  forced.phi = one;
  forced.y0 = Vector<double>::Zero(1);
  forced.f = [](double t) { return Vector<double>::Constant(1, std::cos(2 * std::numbers::pi * t)); };
  for (Index steps : {64, 256})
    for (double theta : {0.5, 1.0}) {
      const auto sol = solve_all_at_once(forced, steps, theta);
      std::ostringstream os;
      os << "N=" << steps << " theta=" << theta;
      periodic.record(sol.diagnostics.boundary_residual, os.str());
    }

  Sampler<Complex> rp(opts.seed + 3);
  for (int i = 0; i < 20; ++i) {
    const Index n = rp.integer(1, 4), steps = rp.integer(4, 64);
    auto p = random_problem(rp, n, rp.uniform(0.0, 1.0));
    const auto a = solve_all_at_once(p, steps, 0.5);
    const auto b = solve_shooting(p, steps, 0.5);
    const auto di = discretize(p, steps);
    const auto c = discrete_contraction(p, di);
    const auto av = discrete_operator(p, di, 0.5);
    const auto fv = discrete_load(p, di, 0.5);
    const auto sdp = solve_sdp(di.inst, c, av, fv, p.y0);
    const Vector<Complex> ua = a.stacked(), ub = b.stacked();
    const double scale = std::max(ua.norm(), 1e-300);
    cross.record(std::max({(ua - ub).norm(), (ua - sdp.u).norm(), (ub - sdp.u).norm()}) / scale,
                 detail::where("complex", i, n));

    const double beta = stability_constant(di.inst, av, c);
    p.y0.setZero();
    const auto s0 = solve_all_at_once(p, steps, 0.5);
    const double fn = di.inst.V().norm(fv);
    stab.record(beta > 0 ? s0.diagnostics.w_norm * beta / fn - 1.0 : std::numeric_limits<double>::infinity(),
                detail::where("complex", i, n));

    for (double theta : {0.5, 1.0}) prop.record(propagator_contraction(p, steps, theta), detail::where("complex", i, n));
  }
  for (Index steps : {2, 16, 128, 1024}) {
    std::ostringstream os;
    os << "N=" << steps;
    value.record(std::abs(propagator_contraction(decay, steps, 1.0) -
                          std::pow(1.0 + 1.0 / static_cast<double>(steps), -static_cast<double>(steps))),
                 os.str());
  }
  return {ibp.finish(),   euler.finish(), mid.finish(),  periodic.finish(),
          cross.finish(), stab.finish(),  prop.finish(), value.finish()};
}

/// suite: rtl | derivation | evolution | all.
inline std::vector<CheckResult> run_suites(const std::string& suite, const SuiteOptions& opts) {
  std::vector<CheckResult> out;
  auto append = [&out](std::vector<CheckResult> r) { out.insert(out.end(), r.begin(), r.end()); };
  if (suite == "rtl" || suite == "all") append(run_rtl_suite(opts));
  if (suite == "derivation" || suite == "all") append(run_derivation_suite(opts));
  if (suite == "evolution" || suite == "all") append(run_evolution_suite(opts));
  if (out.empty()) throw PreconditionError("unknown suite '" + suite + "' (expected rtl, derivation, evolution or all)");
  return out;
}

}  // namespace lions
