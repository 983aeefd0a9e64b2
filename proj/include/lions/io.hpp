#pragma once

// Artifact writers: trajectory and convergence CSV with 17 significant
// digits, and the diagnostics document. Output depends only on the inputs,
// so identical configs give byte-identical files.

#include <json.hpp>

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "lions/evolution.hpp"

namespace lions::io {

using Json = nlohmann::json;

inline std::string format_double(double x) {
  if (std::isnan(x)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Complex cells are written as a+bi.
inline std::string format_scalar(double x) { return format_double(x); }
inline std::string format_scalar(Complex z) {
  char buf[90];
  std::snprintf(buf, sizeof buf, "%.17g%+.17gi", z.real(), z.imag());
  return buf;
}

template <class Scalar>
std::string trajectory_csv(const DiscreteSolution<Scalar>& sol) {
  std::string out = "t";
  for (Index i = 0; i < sol.values.rows(); ++i) out += ",u_" + std::to_string(i + 1);
  out += "\n";
  for (Index k = 0; k < sol.values.cols(); ++k) {
    out += format_double(sol.grid[static_cast<std::size_t>(k)]);
    for (Index i = 0; i < sol.values.rows(); ++i) out += "," + format_scalar(sol.values(i, k));
    out += "\n";
  }
  return out;
}

inline std::string convergence_csv(const std::vector<ConvergenceRow>& rows) {
  std::string out = "N,theta,error,order\n";
  for (const auto& r : rows)
    out += std::to_string(r.steps) + "," + format_double(r.theta) + "," + format_double(r.error) + "," +
           format_double(r.order) + "\n";
  return out;
}

/// Real numbers as JSON numbers, non-finite values as null.
inline Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

template <class Scalar>
Json vector_json(const Vector<Scalar>& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) {
    if constexpr (scalar_field_v<Scalar> == ScalarField::complex)
      a.push_back(Json::array({v(i).real(), v(i).imag()}));
    else
      a.push_back(v(i));
  }
  return a;
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace lions::io
