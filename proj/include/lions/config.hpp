#pragma once

// JSON run configuration for lions-kit. parse() validates strictly (unknown
// fields are errors) and expands problem presets; emit() writes the
// normalized document, so emit(parse(x)) is the normal form of x.
//
// Matrices are row-major nested arrays, or "identity", a number c (c I), or
// {"diag": [...]}. A complex entry is [re, im]. Preset couplings Phi act in
// H-orthonormal coordinates (Phi = U_H^{-1} K U_H); an explicit Phi is taken
// in coefficient coordinates as written.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lions/errors.hpp"
#include "lions/evolution.hpp"

namespace lions::config {

using Json = nlohmann::json;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

/// Malformed configuration. `path` is the dotted field path, `line` is set
/// for JSON syntax errors.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& message, int line = 0)
      : Error(format(path, message, line)), path_(std::move(path)), detail_(message), line_(line) {}
  const std::string& path() const { return path_; }
  const std::string& detail() const { return detail_; }
  int line() const { return line_; }

 private:
  static std::string format(const std::string& path, const std::string& message, int line) {
    std::ostringstream os;
    if (line > 0) os << "line " << line << ": ";
    if (!path.empty()) os << path << ": ";
    os << message;
    return os.str();
  }
  std::string path_;
  std::string detail_;
  int line_ = 0;
};

struct MatrixSpec {
  enum class Kind { identity, scalar, diag, full };
  Kind kind = Kind::identity;
  Complex scale{1.0, 0.0};
  CVec diag;
  CMat full;

  CMat materialize(Index n) const {
    switch (kind) {
      case Kind::identity: return CMat::Identity(n, n);
      case Kind::scalar: return CMat::Identity(n, n) * scale;
      case Kind::diag: return diag.asDiagonal();
      case Kind::full: return full;
    }
    return {};
  }
};

struct FormSpec {
  std::string preset = "constant";  // constant | polynomial | trigonometric
  std::vector<MatrixSpec> matrices;  // constant: 1; polynomial: >= 1; trigonometric: a0, a1, a2
  double period = 1.0;
  std::optional<double> alpha;
  std::optional<double> bound;
};

struct PhiSpec {
  std::string preset = "initial";  // initial | periodic | antiperiodic | scaled-rotation | explicit
  double scale = 1.0;
  double angle = 0.0;
  MatrixSpec matrix;
};

struct SolutionSpec {
  std::string preset = "exponential";  // constant | exponential | trigonometric
  CVec value, a, b;
  double rate = 1.0;
  double frequency = 2 * std::numbers::pi;
};

struct LoadSpec {
  std::string preset = "zero";  // zero | constant | trigonometric | manufactured
  CVec value, a, b;
  double period = 1.0;
  SolutionSpec solution;
};

struct ProblemSpec {
  std::string field = "real";
  Index dimension = 1;
  MatrixSpec gram_u, gram_h;
  FormSpec form;
  PhiSpec phi;
  CVec y0;  // unused for manufactured loads
  LoadSpec f;
  double horizon = 1.0;

  bool manufactured() const { return f.preset == "manufactured"; }
};

struct OutputSpec {
  std::string directory = ".";
  std::string trajectory = "trajectory.csv";
  std::string diagnostics = "diagnostics.json";
  std::string convergence = "convergence.csv";
};

struct RunConfig {
  ProblemSpec problem;
  std::string solver = "all-at-once";  // all-at-once | shooting
  Index steps = 64;
  double theta = 0.5;
  std::vector<Index> convergence_steps{16, 32, 64, 128, 256, 512};
  std::vector<double> convergence_thetas{1.0, 0.5};
  std::uint64_t seed = 7;
  SolveTolerances tolerances;
  OutputSpec output;
};

namespace detail {

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
inline std::string index(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

class Object {
 public:
  Object(const Json& j, std::string path, std::vector<std::string> allowed) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(path_, "expected an object");
    for (const auto& [k, v] : j.items()) {
      (void)v;
      if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
        throw ConfigError(join(path_, k), "unknown field");
    }
  }
  bool has(const std::string& k) const { return j_.contains(k); }
  const Json& at(const std::string& k) const {
    if (!has(k)) throw ConfigError(join(path_, k), "missing required field");
    return j_.at(k);
  }
  std::string path(const std::string& k) const { return join(path_, k); }

  double number(const std::string& k, std::optional<double> fallback = std::nullopt) const {
    if (!has(k)) {
      if (fallback) return *fallback;
      throw ConfigError(path(k), "missing required field");
    }
    const auto& v = j_.at(k);
    if (!v.is_number()) throw ConfigError(path(k), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path(k), "expected a finite number");
    return x;
  }
  std::optional<double> optional_number(const std::string& k) const {
    if (!has(k)) return std::nullopt;
    return number(k);
  }
  Index integer(const std::string& k, std::optional<Index> fallback = std::nullopt) const {
    if (!has(k)) {
      if (fallback) return *fallback;
      throw ConfigError(path(k), "missing required field");
    }
    const auto& v = j_.at(k);
    if (!v.is_number_integer()) throw ConfigError(path(k), "expected an integer");
    return v.get<Index>();
  }
  std::string string(const std::string& k, std::optional<std::string> fallback = std::nullopt) const {
    if (!has(k)) {
      if (fallback) return *fallback;
      throw ConfigError(path(k), "missing required field");
    }
    const auto& v = j_.at(k);
    if (!v.is_string()) throw ConfigError(path(k), "expected a string");
    return v.get<std::string>();
  }

 private:
  const Json& j_;
  std::string path_;
};

inline void require_one_of(const std::string& path, const std::string& value, std::initializer_list<const char*> options) {
  for (const char* o : options)
    if (value == o) return;
  std::string msg = "unknown value '" + value + "' (expected one of:";
  for (const char* o : options) msg += std::string(" ") + o;
  throw ConfigError(path, msg + ")");
}

inline Complex parse_entry(const Json& j, const std::string& path) {
  if (j.is_number()) {
    const double x = j.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path, "expected a finite number");
    return {x, 0.0};
  }
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  throw ConfigError(path, "expected a number or a [re, im] pair");
}

inline Json emit_entry(Complex z) {
  if (z.imag() == 0.0) return z.real();
  return Json::array({z.real(), z.imag()});
}

inline CVec parse_vector(const Json& j, const std::string& path, Index n) {
  if (!j.is_array()) throw ConfigError(path, "expected an array");
  if (static_cast<Index>(j.size()) != n)
    throw ConfigError(path, "expected " + std::to_string(n) + " entries, got " + std::to_string(j.size()));
  CVec v(n);
  for (Index i = 0; i < n; ++i) v(i) = parse_entry(j[static_cast<std::size_t>(i)], index(path, static_cast<std::size_t>(i)));
  return v;
}

inline Json emit_vector(const CVec& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(emit_entry(v(i)));
  return a;
}

inline MatrixSpec parse_matrix(const Json& j, const std::string& path, Index n) {
  MatrixSpec m;
  if (j.is_string()) {
    if (j.get<std::string>() != "identity") throw ConfigError(path, "the only named matrix is \"identity\"");
    m.kind = MatrixSpec::Kind::identity;
    return m;
  }
  if (j.is_number()) {
    m.kind = MatrixSpec::Kind::scalar;
    m.scale = parse_entry(j, path);
    return m;
  }
  if (j.is_object()) {
    Object o(j, path, {"diag"});
    m.kind = MatrixSpec::Kind::diag;
    m.diag = parse_vector(o.at("diag"), o.path("diag"), n);
    return m;
  }
  if (!j.is_array()) throw ConfigError(path, "expected a matrix (nested array, \"identity\", a number or {\"diag\": [...]})");
  if (static_cast<Index>(j.size()) != n)
    throw ConfigError(path, "expected " + std::to_string(n) + " rows, got " + std::to_string(j.size()));
  m.kind = MatrixSpec::Kind::full;
  m.full.resize(n, n);
  for (Index r = 0; r < n; ++r)
    m.full.row(r) = parse_vector(j[static_cast<std::size_t>(r)], index(path, static_cast<std::size_t>(r)), n).transpose();
  return m;
}

inline Json emit_matrix(const MatrixSpec& m) {
  switch (m.kind) {
    case MatrixSpec::Kind::identity: return "identity";
    case MatrixSpec::Kind::scalar: return emit_entry(m.scale);
    case MatrixSpec::Kind::diag: return Json{{"diag", emit_vector(m.diag)}};
    case MatrixSpec::Kind::full: {
      Json rows = Json::array();
      for (Index r = 0; r < m.full.rows(); ++r) rows.push_back(emit_vector(m.full.row(r).transpose()));
      return rows;
    }
  }
  return nullptr;
}

inline Json problem_preset(const std::string& name, const std::string& path) {
  if (name == "decay")
    return Json{{"dimension", 1},
                {"form", {{"preset", "constant"}, {"matrix", 1.0}}},
                {"phi", {{"preset", "initial"}}},
                {"f", {{"preset", "manufactured"}, {"solution", {{"preset", "exponential"}, {"value", {1.0}}, {"rate", 1.0}}}}},
                {"horizon", 1.0}};
  if (name == "periodic-forced") {
    // u' + u = cos(2 pi t) with u(0) = u(T): u = (cos 2 pi t + 2 pi sin 2 pi t) / (1 + 4 pi^2).
    const double w = 2 * std::numbers::pi, d = 1 + w * w;
    return Json{{"dimension", 1},
                {"form", {{"preset", "constant"}, {"matrix", 1.0}}},
                {"phi", {{"preset", "periodic"}}},
                {"f",
                 {{"preset", "manufactured"},
                  {"solution", {{"preset", "trigonometric"}, {"a", {1 / d}}, {"b", {w / d}}, {"frequency", w}}}}},
                {"horizon", 1.0}};
  }
  throw ConfigError(path, "unknown problem preset '" + name + "' (expected decay or periodic-forced)");
}

inline SolutionSpec parse_solution(const Json& j, const std::string& path, Index n) {
  Object o(j, path, {"preset", "value", "rate", "a", "b", "frequency"});
  SolutionSpec s;
  s.preset = o.string("preset");
  require_one_of(o.path("preset"), s.preset, {"constant", "exponential", "trigonometric"});
  auto forbid = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys)
      if (o.has(k)) throw ConfigError(o.path(k), "not used by solution preset '" + s.preset + "'");
  };
  if (s.preset == "constant") {
    forbid({"rate", "a", "b", "frequency"});
    s.value = parse_vector(o.at("value"), o.path("value"), n);
  } else if (s.preset == "exponential") {
    forbid({"a", "b", "frequency"});
    s.value = parse_vector(o.at("value"), o.path("value"), n);
    s.rate = o.number("rate", 1.0);
  } else {
    forbid({"value", "rate"});
    s.a = parse_vector(o.at("a"), o.path("a"), n);
    s.b = parse_vector(o.at("b"), o.path("b"), n);
    s.frequency = o.number("frequency", 2 * std::numbers::pi);
  }
  return s;
}

inline Json emit_solution(const SolutionSpec& s) {
  Json j{{"preset", s.preset}};
  if (s.preset == "constant") j["value"] = emit_vector(s.value);
  if (s.preset == "exponential") {
    j["value"] = emit_vector(s.value);
    j["rate"] = s.rate;
  }
  if (s.preset == "trigonometric") {
    j["a"] = emit_vector(s.a);
    j["b"] = emit_vector(s.b);
    j["frequency"] = s.frequency;
  }
  return j;
}

inline LoadSpec parse_load(const Json& j, const std::string& path, Index n) {
  Object o(j, path, {"preset", "value", "a", "b", "period", "solution"});
  LoadSpec f;
  f.preset = o.string("preset");
  require_one_of(o.path("preset"), f.preset, {"zero", "constant", "trigonometric", "manufactured"});
  auto forbid = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys)
      if (o.has(k)) throw ConfigError(o.path(k), "not used by load preset '" + f.preset + "'");
  };
  if (f.preset == "zero") forbid({"value", "a", "b", "period", "solution"});
  if (f.preset == "constant") {
    forbid({"a", "b", "period", "solution"});
    f.value = parse_vector(o.at("value"), o.path("value"), n);
  }
  if (f.preset == "trigonometric") {
    forbid({"value", "solution"});
    f.a = parse_vector(o.at("a"), o.path("a"), n);
    f.b = parse_vector(o.at("b"), o.path("b"), n);
    f.period = o.number("period", 1.0);
    if (!(f.period > 0)) throw ConfigError(o.path("period"), "must be positive");
  }
  if (f.preset == "manufactured") {
    forbid({"value", "a", "b", "period"});
    f.solution = parse_solution(o.at("solution"), o.path("solution"), n);
  }
  return f;
}

inline Json emit_load(const LoadSpec& f) {
  Json j{{"preset", f.preset}};
  if (f.preset == "constant") j["value"] = emit_vector(f.value);
  if (f.preset == "trigonometric") {
    j["a"] = emit_vector(f.a);
    j["b"] = emit_vector(f.b);
    j["period"] = f.period;
  }
  if (f.preset == "manufactured") j["solution"] = emit_solution(f.solution);
  return j;
}

inline FormSpec parse_form(const Json& j, const std::string& path, Index n) {
  Object o(j, path, {"preset", "matrix", "coefficients", "a0", "a1", "a2", "period", "alpha", "bound"});
  FormSpec fs;
  fs.preset = o.string("preset");
  require_one_of(o.path("preset"), fs.preset, {"constant", "polynomial", "trigonometric"});
  auto forbid = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys)
      if (o.has(k)) throw ConfigError(o.path(k), "not used by form preset '" + fs.preset + "'");
  };
  if (fs.preset == "constant") {
    forbid({"coefficients", "a0", "a1", "a2", "period"});
    fs.matrices.push_back(parse_matrix(o.at("matrix"), o.path("matrix"), n));
  } else if (fs.preset == "polynomial") {
    forbid({"matrix", "a0", "a1", "a2", "period"});
    const auto& c = o.at("coefficients");
    if (!c.is_array() || c.empty()) throw ConfigError(o.path("coefficients"), "expected a non-empty array of matrices");
    for (std::size_t i = 0; i < c.size(); ++i) fs.matrices.push_back(parse_matrix(c[i], index(o.path("coefficients"), i), n));
  } else {
    forbid({"matrix", "coefficients"});
    for (const char* k : {"a0", "a1", "a2"}) fs.matrices.push_back(parse_matrix(o.at(k), o.path(k), n));
    fs.period = o.number("period", 1.0);
    if (!(fs.period > 0)) throw ConfigError(o.path("period"), "must be positive");
  }
  fs.alpha = o.optional_number("alpha");
  fs.bound = o.optional_number("bound");
  if (fs.alpha && !(*fs.alpha > 0)) throw ConfigError(o.path("alpha"), "must be positive");
  if (fs.bound && !(*fs.bound > 0)) throw ConfigError(o.path("bound"), "must be positive");
  return fs;
}

inline Json emit_form(const FormSpec& fs) {
  Json j{{"preset", fs.preset}};
  if (fs.preset == "constant") j["matrix"] = emit_matrix(fs.matrices.at(0));
  if (fs.preset == "polynomial") {
    Json c = Json::array();
    for (const auto& m : fs.matrices) c.push_back(emit_matrix(m));
    j["coefficients"] = c;
  }
  if (fs.preset == "trigonometric") {
    j["a0"] = emit_matrix(fs.matrices.at(0));
    j["a1"] = emit_matrix(fs.matrices.at(1));
    j["a2"] = emit_matrix(fs.matrices.at(2));
    j["period"] = fs.period;
  }
  if (fs.alpha) j["alpha"] = *fs.alpha;
  if (fs.bound) j["bound"] = *fs.bound;
  return j;
}

inline PhiSpec parse_phi(const Json& j, const std::string& path, Index n) {
  Object o(j, path, {"preset", "scale", "angle", "matrix"});
  PhiSpec p;
  p.preset = o.string("preset");
  require_one_of(o.path("preset"), p.preset, {"initial", "periodic", "antiperiodic", "scaled-rotation", "explicit"});
  if (p.preset != "scaled-rotation")
    for (const char* k : {"scale", "angle"})
      if (o.has(k)) throw ConfigError(o.path(k), "only used by the scaled-rotation preset");
  if (p.preset != "explicit" && o.has("matrix")) throw ConfigError(o.path("matrix"), "only used by the explicit preset");
  if (p.preset == "scaled-rotation") {
    p.scale = o.number("scale");
    p.angle = o.number("angle", 0.0);
  }
  if (p.preset == "explicit") p.matrix = parse_matrix(o.at("matrix"), o.path("matrix"), n);
  return p;
}

inline Json emit_phi(const PhiSpec& p) {
  Json j{{"preset", p.preset}};
  if (p.preset == "scaled-rotation") {
    j["scale"] = p.scale;
    j["angle"] = p.angle;
  }
  if (p.preset == "explicit") j["matrix"] = emit_matrix(p.matrix);
  return j;
}

inline ProblemSpec parse_problem(const Json& raw, const std::string& path) {
  Json j = raw;
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  if (j.contains("preset")) {
    if (!j["preset"].is_string()) throw ConfigError(join(path, "preset"), "expected a string");
    Json base = problem_preset(j["preset"].get<std::string>(), join(path, "preset"));
    j.erase("preset");
    base.merge_patch(j);
    j = base;
  }
  Object o(j, path, {"field", "dimension", "gram_U", "gram_H", "form", "phi", "y0", "f", "horizon"});
  ProblemSpec p;
  p.field = o.string("field", "real");
  require_one_of(o.path("field"), p.field, {"real", "complex"});
  p.dimension = o.integer("dimension");
  if (p.dimension < 1 || p.dimension > 4096) throw ConfigError(o.path("dimension"), "must lie in [1, 4096]");
  const Index n = p.dimension;
  p.gram_u = o.has("gram_U") ? parse_matrix(o.at("gram_U"), o.path("gram_U"), n) : MatrixSpec{};
  p.gram_h = o.has("gram_H") ? parse_matrix(o.at("gram_H"), o.path("gram_H"), n) : MatrixSpec{};
  p.form = parse_form(o.at("form"), o.path("form"), n);
  p.phi = o.has("phi") ? parse_phi(o.at("phi"), o.path("phi"), n) : PhiSpec{};
  p.f = o.has("f") ? parse_load(o.at("f"), o.path("f"), n) : LoadSpec{};
  if (p.manufactured()) {
    if (o.has("y0")) throw ConfigError(o.path("y0"), "y0 is determined by the manufactured solution");
  } else {
    p.y0 = o.has("y0") ? parse_vector(o.at("y0"), o.path("y0"), n) : CVec::Zero(n);
  }
  p.horizon = o.number("horizon", 1.0);
  if (!(p.horizon > 0)) throw ConfigError(o.path("horizon"), "must be positive");
  if (p.field == "real") {
    auto imag = [](const auto& m) { return m.size() > 0 && m.imag().cwiseAbs().maxCoeff() > 0.0; };
    auto imag_matrix = [&](const MatrixSpec& m) { return m.scale.imag() != 0.0 || imag(m.diag) || imag(m.full); };
    auto fail = [&](const std::string& at) {
      throw ConfigError(o.path(at), "complex entry in a real problem (set \"field\": \"complex\")");
    };
    if (imag_matrix(p.gram_u)) fail("gram_U");
    if (imag_matrix(p.gram_h)) fail("gram_H");
    for (const auto& m : p.form.matrices)
      if (imag_matrix(m)) fail("form");
    if (imag_matrix(p.phi.matrix)) fail("phi");
    if (imag(p.y0)) fail("y0");
    const auto& f = p.f;
    if (imag(f.value) || imag(f.a) || imag(f.b) || imag(f.solution.value) || imag(f.solution.a) || imag(f.solution.b))
      fail("f");
  }
  return p;
}

inline Json emit_problem(const ProblemSpec& p) {
  Json j{{"field", p.field},
         {"dimension", p.dimension},
         {"gram_U", emit_matrix(p.gram_u)},
         {"gram_H", emit_matrix(p.gram_h)},
         {"form", emit_form(p.form)},
         {"phi", emit_phi(p.phi)},
         {"f", emit_load(p.f)},
         {"horizon", p.horizon}};
  if (!p.manufactured()) j["y0"] = emit_vector(p.y0);
  return j;
}

inline int line_of(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace detail

inline RunConfig parse(const Json& j) {
  using detail::Object;
  Object o(j, "", {"problem", "solver", "discretization", "convergence", "seed", "tolerances", "output"});
  RunConfig c;
  c.problem = detail::parse_problem(o.at("problem"), "problem");
  c.solver = o.string("solver", "all-at-once");
  detail::require_one_of("solver", c.solver, {"all-at-once", "shooting"});
  if (o.has("discretization")) {
    Object d(o.at("discretization"), "discretization", {"steps", "theta"});
    c.steps = d.integer("steps", 64);
    c.theta = d.number("theta", 0.5);
  }
  if (c.steps < 2) throw ConfigError("discretization.steps", "must be at least 2");
  if (!(c.theta >= 0.5 && c.theta <= 1.0)) throw ConfigError("discretization.theta", "must lie in [1/2, 1]");
  if (o.has("convergence")) {
    Object d(o.at("convergence"), "convergence", {"steps", "thetas"});
    if (d.has("steps")) {
      const auto& a = d.at("steps");
      if (!a.is_array() || a.empty()) throw ConfigError("convergence.steps", "expected a non-empty array of integers");
      c.convergence_steps.clear();
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_number_integer() || a[i].get<Index>() < 2)
          throw ConfigError(detail::index("convergence.steps", i), "expected an integer >= 2");
        c.convergence_steps.push_back(a[i].get<Index>());
      }
    }
    if (d.has("thetas")) {
      const auto& a = d.at("thetas");
      if (!a.is_array() || a.empty()) throw ConfigError("convergence.thetas", "expected a non-empty array of numbers");
      c.convergence_thetas.clear();
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_number() || !(a[i].get<double>() >= 0.5 && a[i].get<double>() <= 1.0))
          throw ConfigError(detail::index("convergence.thetas", i), "expected a number in [1/2, 1]");
        c.convergence_thetas.push_back(a[i].get<double>());
      }
    }
  }
  if (o.has("seed")) {
    const auto& s = o.at("seed");
    if (!s.is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
    c.seed = s.get<std::uint64_t>();
  }
  if (o.has("tolerances")) {
    Object t(o.at("tolerances"), "tolerances", {"contraction", "boundary_residual", "propagator"});
    c.tolerances.contraction = t.number("contraction", tolerance::contraction);
    c.tolerances.boundary_residual = t.number("boundary_residual", tolerance::boundary_residual);
    c.tolerances.propagator = t.number("propagator", tolerance::propagator);
    for (const char* k : {"contraction", "boundary_residual", "propagator"})
      if (t.has(k) && t.number(k) < 0) throw ConfigError(t.path(k), "must be non-negative");
  }
  if (o.has("output")) {
    Object d(o.at("output"), "output", {"directory", "trajectory", "diagnostics", "convergence"});
    c.output.directory = d.string("directory", ".");
    c.output.trajectory = d.string("trajectory", "trajectory.csv");
    c.output.diagnostics = d.string("diagnostics", "diagnostics.json");
    c.output.convergence = d.string("convergence", "convergence.csv");
  }
  return c;
}

inline RunConfig parse_text(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what(), detail::line_of(text, e.byte));
  }
  return parse(j);
}

inline RunConfig load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

inline Json emit(const RunConfig& c) {
  Json steps = Json::array(), thetas = Json::array();
  for (Index s : c.convergence_steps) steps.push_back(s);
  for (double t : c.convergence_thetas) thetas.push_back(t);
  return Json{{"problem", detail::emit_problem(c.problem)},
              {"solver", c.solver},
              {"discretization", {{"steps", c.steps}, {"theta", c.theta}}},
              {"convergence", {{"steps", steps}, {"thetas", thetas}}},
              {"seed", c.seed},
              {"tolerances",
               {{"contraction", c.tolerances.contraction},
                {"boundary_residual", c.tolerances.boundary_residual},
                {"propagator", c.tolerances.propagator}}},
              {"output",
               {{"directory", c.output.directory},
                {"trajectory", c.output.trajectory},
                {"diagnostics", c.output.diagnostics},
                {"convergence", c.output.convergence}}}};
}

// Building problems -----------------------------------------------------------

template <class Scalar>
Matrix<Scalar> cast(const CMat& m) {
  if constexpr (scalar_field_v<Scalar> == ScalarField::complex) {
    return m;
  } else {
    return m.real();
  }
}

template <class Scalar>
Vector<Scalar> cast(const CVec& v) {
  if constexpr (scalar_field_v<Scalar> == ScalarField::complex) {
    return v;
  } else {
    return v.real();
  }
}

template <class Scalar>
struct BuiltProblem {
  EvolutionProblem<Scalar> problem;
  std::function<Vector<Scalar>(double)> exact;  // empty unless manufactured
};

/// Scaled rotation acting on consecutive coordinate pairs; a trailing odd
/// coordinate is scaled by `scale` (real) or `scale e^{i angle}` (complex).
template <class Scalar>
Matrix<Scalar> scaled_rotation(Index n, double scale, double angle) {
  Matrix<Scalar> k = Matrix<Scalar>::Zero(n, n);
  const double c = std::cos(angle), s = std::sin(angle);
  Index i = 0;
  for (; i + 1 < n; i += 2) {
    k(i, i) = Scalar(scale * c);
    k(i, i + 1) = Scalar(-scale * s);
    k(i + 1, i) = Scalar(scale * s);
    k(i + 1, i + 1) = Scalar(scale * c);
  }
  if (i < n) {
    if constexpr (scalar_field_v<Scalar> == ScalarField::complex)
      k(i, i) = std::polar(scale, angle);
    else
      k(i, i) = Scalar(scale);
  }
  return k;
}

template <class Scalar>
BuiltProblem<Scalar> build(const ProblemSpec& spec) {
  using Mat = Matrix<Scalar>;
  using Vec = Vector<Scalar>;
  const Index n = spec.dimension;
  GelfandTriple<Scalar> triple(cast<Scalar>(spec.gram_u.materialize(n)), cast<Scalar>(spec.gram_h.materialize(n)));

  NonAutonomousForm<Scalar> form;
  const auto& fs = spec.form;
  std::vector<Mat> mats;
  for (const auto& m : fs.matrices) mats.push_back(cast<Scalar>(m.materialize(n)));
  if (fs.preset == "constant") form = NonAutonomousForm<Scalar>::constant(mats.at(0));
  if (fs.preset == "polynomial") form = NonAutonomousForm<Scalar>::polynomial(mats);
  if (fs.preset == "trigonometric")
    form = NonAutonomousForm<Scalar>::trigonometric(mats.at(0), mats.at(1), mats.at(2), fs.period);
  form.alpha = fs.alpha.value_or(0.0);
  form.bound_c = fs.bound.value_or(0.0);

  const auto& h = triple.H();
  Mat k = Mat::Zero(n, n);
  const auto& ps = spec.phi;
  if (ps.preset == "periodic") k = Mat::Identity(n, n);
  if (ps.preset == "antiperiodic") k = -Mat::Identity(n, n);
  if (ps.preset == "scaled-rotation") k = scaled_rotation<Scalar>(n, ps.scale, ps.angle);
  const Mat phi = ps.preset == "explicit" ? cast<Scalar>(ps.matrix.materialize(n))
                                          : Mat(h.from_euclidean(h.right_to_euclidean(k)));

  const double horizon = spec.horizon;
  const auto& ls = spec.f;
  if (ls.preset == "manufactured") {
    const auto& ss = ls.solution;
    std::function<Vec(double)> u, du;
    if (ss.preset == "constant") {
      const Vec v = cast<Scalar>(ss.value);
      u = [v](double) { return v; };
      du = [n](double) { return Vec(Vec::Zero(n)); };
    } else if (ss.preset == "exponential") {
      const Vec v = cast<Scalar>(ss.value);
      const double r = ss.rate;
      u = [v, r](double t) { return Vec(v * std::exp(-r * t)); };
      du = [v, r](double t) { return Vec(v * (-r * std::exp(-r * t))); };
    } else {
      const Vec a = cast<Scalar>(ss.a), b = cast<Scalar>(ss.b);
      const double w = ss.frequency;
      u = [a, b, w](double t) { return Vec(a * std::cos(w * t) + b * std::sin(w * t)); };
      du = [a, b, w](double t) { return Vec(w * (b * std::cos(w * t) - a * std::sin(w * t))); };
    }
    return {manufactured_problem(std::move(triple), std::move(form), horizon, phi, u, du), u};
  }
  std::function<Vec(double)> f;
  if (ls.preset == "zero") f = [n](double) { return Vec(Vec::Zero(n)); };
  if (ls.preset == "constant") {
    const Vec v = cast<Scalar>(ls.value);
    f = [v](double) { return v; };
  }
  if (ls.preset == "trigonometric") {
    const Vec a = cast<Scalar>(ls.a), b = cast<Scalar>(ls.b);
    const double w = 2 * std::numbers::pi / ls.period;
    f = [a, b, w](double t) { return Vec(a * std::cos(w * t) + b * std::sin(w * t)); };
  }
  EvolutionProblem<Scalar> p{std::move(triple), std::move(form), f, horizon, phi, cast<Scalar>(spec.y0)};
  return {std::move(p), {}};
}

}  // namespace lions::config
