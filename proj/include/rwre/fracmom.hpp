#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/mgf.hpp"
#include "rwre/walk.hpp"

namespace rwre {

enum class TiltFlavor { Linear, Quadratic };
enum class Convention { SpaceTime, SpaceOnly };

/// Parameters of the block tilt. `center` is xi(theta) = grad log phi(theta) for
/// space-time laws and zeta(theta) for space-only laws.
struct TiltSchedule {
  int d = 2;
  RangeKind kind = RangeKind::SpaceTime;
  TiltFlavor flavor = TiltFlavor::Linear;
  Vec theta{0.0, 0.0, 0.0};
  double alpha = 0.5;
  std::int64_t n = 16;
  std::int64_t sqrt_n = 4;
  std::int64_t m = 1;
  double c1 = 1.0;
  double c2 = 1.0;
  double k = 0.0;
  double delta_n = 0.0;
  int r = 6;
  double a_n = 0.0;  // default n^{1/8}
  Vec center{0.0, 0.0, 0.0};
};

/// Smallest K with 12 exp(alpha K/(1-alpha) - 2K^2) <= 1, by bisection.
double k_min(double alpha);

/// Throws ConfigError for non-square n < 4, alpha outside (0,1), C1 < 1, C2 < 1,
/// or a quadratic flavor outside the 2+1 (or d=3 space-only) setting.
TiltSchedule make_schedule(int d, RangeKind kind, TiltFlavor flavor, const Vec& theta, double alpha,
                           std::int64_t n, double c1, double c2, const Vec& center);
/// Space-time convenience overload: center = grad log phi(theta).
TiltSchedule make_schedule(const MarginalLaw& law, TiltFlavor flavor, const Vec& theta, double alpha,
                           std::int64_t n, double c1, double c2 = 1.0);

/// f_K(u) = -K 1{u >= e^{K^2}}.
double f_k(double k, double u);

/// Closest lattice point, ties to the lexicographically smallest candidate.
Site floor_nearest(const Vec& u, int d);

/// Index y of the half-open cell J_y containing the transversal vector u (space-time)
/// or the full vector u (space-only).
Site cell_of(const Vec& u, std::int64_t sqrt_n, int dims);

/// Sites of B_j in enumeration order (level ascending, then lexicographic).
/// Space-only (d=2) strips need the current cell y_cur as well.
std::vector<Site> tube_sites(const TiltSchedule& s, std::int64_t j, const Site& y_prev,
                             const Site& y_cur = {0, 0, 0});

/// a(theta,x) = <theta, v(omega_x)> - E<theta, v>. Under both conventions this is
/// <theta, v(omega_x) - E v>, since xi_o = E v for space-time laws.
double a_field(const EnvironmentModel& env, const Vec& theta, const Site& x,
               Convention convention = Convention::SpaceTime);

/// D(B) = sum over the tube of a(theta, x).
double d_linear(const EnvironmentModel& env, const Vec& theta, std::span<const Site> tube);

/// V(x, y): 1/|k-l| when |later - earlier - floor((l-k) xi)| < C2 sqrt|k-l|, else 0,
/// with the pair ordered by time so that V is symmetric.
double v_kernel(const Site& x, const Site& y, double c2, const Vec& xi, int d);

/// D(B) = sum over B x B of V(x,y) a(theta,x) a(theta,y) (2+1 flavor).
double d_quadratic(const EnvironmentModel& env, const Vec& theta, std::span<const Site> tube, double c2,
                   const Vec& xi);

/// H(n) = sum over i != j in [1,n] of 1/|i-j|.
double h_of_n(std::int64_t n);

/// nu(n, X) = sum over 1 <= i, j <= n of V(X_i, X_j).
double nu_statistic(const Path& path, std::int64_t n, double c2, const Vec& xi);

/// max over (s,l), l in [1,n], of sum_k V(x_k, (s,l)) for the path sites x_1..x_n.
double kernel_column_max(const Path& path, std::int64_t n, double c2, const Vec& xi);
/// sum_k sum_{(s,l) in B_1} V(x_k, (s,l)).
double kernel_tube_total(const Path& path, const TiltSchedule& s);
/// sum over B_1 x B_1 of V^2 (path independent).
double kernel_v2_sum(const TiltSchedule& s);

/// Smallest C2 >= 1 with P(|N(0, Sigma)| < C2) >= 1 - delta/2, where Sigma is the
/// transversal covariance of one q^theta step.
double select_c2(const Kernel& q_theta, const StepRange& range, double delta = 0.2);

struct BlockRow {
  Site y{0, 0, 0};
  double value = 0.0;
  double std_error = 0.0;
  double alpha_power = 0.0;
  double cumulative = 0.0;
};

struct SingleBlockOptions {
  std::size_t replicas = 1000;
  std::uint64_t master_seed = 1;
  int workers = 1;
  double lambda_a = 0.0;  // space-only only
  RegenOptions regen{};
};

struct SingleBlockResult {
  std::vector<BlockRow> rows;  // |y| <= R, ascending |y| then lexicographic
  double truncated_sum = 0.0;  // sum over |y| <= R of value^alpha
  double tail_term = 0.0;      // sum over |y| > R of P_hat(|U| >= |y| - 1)^alpha
  double total = 0.0;
  double plain_sum = 0.0;      // sum over all y of E[restricted W]^alpha, no tilt
  double mean_tilt = 0.0;      // E[e^{f_K(delta_n D(B_1))}]
  double mean_w = 0.0;         // E[sum_y restricted W], equals E[W_n]
  std::size_t tilt_fired = 0;  // replicas with f_K = -K
  std::size_t replicas = 0;
  MgfEstimate estimate;
};

/// Monte Carlo over environments of e^{f_K(delta_n D(B_1))} times the restricted
/// expectation, per endpoint cell. Space-time: exact cone DP per environment;
/// space-only (d=2): walks conditioned on beta = inf, one per environment.
SingleBlockResult single_block_estimate(std::shared_ptr<const MarginalLaw> law, const TiltSchedule& s,
                                        const SingleBlockOptions& opts);

/// E[exp(-alpha/(1-alpha) sum_j f_K(delta_n D(B_j)))] over m tubes anchored at y = 0.
MgfEstimate tilt_inverse_moment(std::shared_ptr<const MarginalLaw> law, const TiltSchedule& s,
                                std::size_t replicas, std::uint64_t master_seed, int workers = 1);

}  // namespace rwre
