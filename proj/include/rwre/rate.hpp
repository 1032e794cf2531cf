#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/mgf.hpp"
#include "rwre/walk.hpp"

namespace rwre {

struct LegendreOptions {
  int grid = 41;                                   // coarse points per axis
  std::vector<double> radii{2, 4, 8, 16, 32, 64};  // nested search boxes
  double tol = 1e-8;                               // growth below tol counts as bounded
  int refine_passes = 4;
};

struct LegendreResult {
  double value = 0.0;  // +inf when unbounded
  Vec argmax{0.0, 0.0, 0.0};
  bool bounded = true;
  std::vector<double> box_values;  // sup over each box, same order as radii
  std::string certificate;         // filled when unbounded
};

/// sup over theta (restricted to `axes`) of <theta, xi> - lambda(theta): coarse grid
/// search in nested boxes, then coordinate-wise golden-section refinement.
LegendreResult legendre(const std::function<double(const Vec&)>& lambda, const Vec& xi, std::span<const int> axes,
                        const LegendreOptions& opts = {});

/// Discrete transform of a sampled one-dimensional Lambda: max_i theta_i xi - lambda_i.
LegendreResult legendre_grid(std::span<const double> thetas, std::span<const double> lambdas, double xi);

struct RateRow {
  Vec theta{0.0, 0.0, 0.0};
  Vec xi{0.0, 0.0, 0.0};  // grad Lambda_a by central differences
  double lambda_a = 0.0;
  double lambda_a_se = 0.0;
  double lambda_q = 0.0;
  double lambda_q_se = 0.0;
  double gap = 0.0;
  double gap_se = 0.0;
  double gap_ci_lo = 0.0;
  double gap_ci_hi = 0.0;
  double i_a = 0.0;
  bool gradient_flag = false;  // Richardson disagreement above 1e-4
  std::string certificate;     // "gap" or "fractional-moment-surrogate"
};

struct RateGrid {
  int d = 2;
  RangeKind kind = RangeKind::SpaceTime;
  std::int64_t n = 0;
  std::size_t replicas = 0;
  std::uint64_t master_seed = 0;
  std::vector<RateRow> rows;
};

struct GapOptions {
  std::size_t replicas = 16;
  std::uint64_t master_seed = 1;
  int workers = 1;
  double level = 0.95;
  double h = 1e-3;
};

/// Space-time gap profile: Lambda_a = log phi (closed form), Lambda_q by the cone DP.
RateGrid gap_profile(std::shared_ptr<const MarginalLaw> law, std::span<const Vec> thetas, std::int64_t n,
                     const GapOptions& opts);

struct SpaceOnlyGapOptions {
  std::vector<std::int64_t> n_list{8, 16, 32, 64};  // block counts
  std::size_t env_replicas = 200;
  std::size_t inner_walks = 50;
  double alpha = 0.5;
  std::uint64_t master_seed = 1;
  int workers = 1;
  std::size_t bootstrap = 500;
  double level = 0.95;
  RegenOptions regen{};
};
/// Space-only surrogate: E[W_hat_N^alpha] where W_hat_N averages
/// exp(<theta, X_{tau_N}> - Lambda_a tau_N) over walks in one environment (restarts
/// stay in that environment). Jensen-biased; the slope against N is the certificate.
FractionalMomentResult space_only_gap_certificate(std::shared_ptr<const MarginalLaw> law, const Vec& theta,
                                                  double lambda_a, const SpaceOnlyGapOptions& opts);

struct VelocityReport {
  std::optional<Vec> closed_form;
  Vec finite_difference{0.0, 0.0, 0.0};
  Vec finite_difference_se{0.0, 0.0, 0.0};
  Vec empirical{0.0, 0.0, 0.0};  // E[X_tau] / E[tau] from the pool
};
/// xi_o = sum_z z q(z) for space-time laws. Class M and other space-only laws use
/// central differences of Lambda_a at 0 over the pool (and E v in closed form for
/// class M pools).
Vec lln_velocity(const MarginalLaw& law);
VelocityReport lln_velocity(const BlockPool& pool, double h = 1e-3, const LambdaAOptions& opts = {});

/// Standalone SVG: gap against <xi, e_1> with error bars.
std::string rate_grid_svg(const RateGrid& grid);

}  // namespace rwre
