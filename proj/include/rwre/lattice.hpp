#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rwre {

/// Lattice dimensions handled by the library: 2 (1+1 or planar) and 3 (2+1 or spatial).
inline constexpr int kMaxDim = 3;

/// Lattice site in Z^d; coordinates beyond d are kept at zero. Index d-1 is the
/// e_d axis (time for space-time walks, the drift axis for space-only walks).
using Site = std::array<std::int64_t, kMaxDim>;

/// Real vector in R^d, same layout as Site.
using Vec = std::array<double, kMaxDim>;

inline Site operator+(const Site& a, const Site& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Site operator-(const Site& a, const Site& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec operator+(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec operator-(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec operator*(double s, const Vec& a) { return {s * a[0], s * a[1], s * a[2]}; }

inline Vec to_vec(const Site& x) {
  return {static_cast<double>(x[0]), static_cast<double>(x[1]), static_cast<double>(x[2])};
}

inline double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double dot(const Vec& a, const Site& x) {
  return a[0] * static_cast<double>(x[0]) + a[1] * static_cast<double>(x[1]) +
         a[2] * static_cast<double>(x[2]);
}
inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

/// Transversal part: the vector with its e_d component removed.
inline Vec transversal(const Vec& a, int d) {
  Vec t = a;
  t[static_cast<std::size_t>(d - 1)] = 0.0;
  return t;
}

inline bool is_zero(const Vec& a) { return a[0] == 0.0 && a[1] == 0.0 && a[2] == 0.0; }

/// True when theta lies on the e_d axis (all transversal components vanish).
inline bool on_time_axis(const Vec& theta, int d) { return is_zero(transversal(theta, d)); }

std::string to_string(const Site& x, int d);
std::string to_string(const Vec& v, int d);

// Error categories; the CLI maps them to exit codes 2, 3 and 4.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rwre
