#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/walk.hpp"

namespace rwre {

enum class Method { ExactDp, ExactClosedForm, MonteCarlo, RootFind };
std::string to_string(Method m);

struct MgfEstimate {
  double value = 0.0;
  double std_error = 0.0;  // 0 for exact methods
  std::size_t replicas = 0;
  Method method = Method::ExactClosedForm;
  Vec theta{0.0, 0.0, 0.0};
  std::int64_t n = 0;  // N, or the block count for pool-based estimates
  std::vector<std::string> notes;
};

/// C(c) = {theta : 2|theta| < c}.
struct ThetaDomain {
  double c = 0.0;
  bool contains(const Vec& theta) const { return 2.0 * norm(theta) < c; }
  static bool transversal(const Vec& theta, int d) { return theta[static_cast<std::size_t>(d - 1)] == 0.0; }
};

/// log phi(theta) = log sum_z e^{<theta,z>} q(z). Space-time laws only.
double log_phi(const MarginalLaw& law, const Vec& theta);
/// grad log phi(theta), the mean step of q^theta (closed form).
Vec grad_log_phi(const MarginalLaw& law, const Vec& theta);
/// q^theta(z) = q(z) e^{<theta,z> - log phi(theta)}.
Kernel tilted_kernel(const MarginalLaw& law, const Vec& theta);

/// Cone sites visited by the quenched DP up to level n (memory/time proxy).
std::uint64_t cone_sites(int d, std::int64_t n);
inline constexpr std::uint64_t kDefaultDpBudget = 40'000'000'000ULL;

/// log E_o^omega[exp <theta, X_N>] for every theta and every N in `levels`, from a
/// single forward pass over the cone (log domain, per-level renormalization).
/// Result is indexed [theta][level]. Theta on the e_d axis is returned exactly.
std::vector<std::vector<double>> quenched_log_mgf(const EnvironmentModel& env, std::span<const Vec> thetas,
                                                  std::span<const std::int64_t> levels,
                                                  std::uint64_t budget = kDefaultDpBudget);

/// (1/N) log E_o^omega[exp <theta, X_N>].
double quenched_mgf_dp(const EnvironmentModel& env, const Vec& theta, std::int64_t n,
                       std::uint64_t budget = kDefaultDpBudget);

/// Endpoint weights w(x) = E_start^omega[exp{<theta, X_n - start> - n log phi}, X_n = x]
/// over the transversal coordinates of X_n - start (d-1 of them).
struct EndpointDistribution {
  int d = 2;
  std::int64_t n = 0;
  std::int64_t half = 0;  // coordinates range over [-half, half]
  double log_scale = 0.0;  // true weight = exp(log_scale) * weights[i]
  std::vector<double> weights;

  std::size_t index(std::int64_t a, std::int64_t b) const;
  double weight(std::int64_t a, std::int64_t b) const;
  /// log of the total mass, i.e. log W_n.
  double log_total() const;
};
EndpointDistribution quenched_endpoint(const EnvironmentModel& env, const Vec& theta, std::int64_t n,
                                       const Site& start = {0, 0, 0}, std::uint64_t budget = kDefaultDpBudget);

struct WnValue {
  double log_w = 0.0;
  double w = 1.0;
};
/// W_N(theta, omega) = E_o^omega[exp{<theta, X_N> - N log phi(theta)}].
WnValue w_n(const EnvironmentModel& env, const Vec& theta, std::int64_t n);

struct LambdaQOptions {
  std::size_t replicas = 16;
  std::uint64_t master_seed = 1;
  int workers = 1;
  bool doubling_check = false;  // also evaluate at N/2 with the same environments
};
/// Replica mean and standard error of quenched_mgf_dp, one estimate per theta.
std::vector<MgfEstimate> lambda_q_estimate(std::shared_ptr<const MarginalLaw> law, std::span<const Vec> thetas,
                                           std::int64_t n, const LambdaQOptions& opts);

struct FractionalMomentResult {
  std::vector<MgfEstimate> per_n;  // value = mean of W_N^alpha
  std::vector<double> log_mean;
  double slope = 0.0;  // slope of log mean W_N^alpha against N
  double slope_ci_lo = 0.0;
  double slope_ci_hi = 0.0;
  std::size_t bootstrap = 0;
};
struct FractionalMomentOptions {
  std::size_t replicas = 1000;
  std::uint64_t master_seed = 1;
  int workers = 1;
  std::size_t bootstrap = 1000;
  double level = 0.95;
};
/// Means, log-means and bootstrap slope CI from powers[r][i] = W_{N_i}^alpha of replica r.
FractionalMomentResult summarize_fractional_moment(const std::vector<std::vector<double>>& powers,
                                                  std::span<const std::int64_t> n_list, const Vec& theta,
                                                  bool exact_one, const FractionalMomentOptions& opts);

/// Monte Carlo E[W_N^alpha] with W_N exact per environment. The environments are
/// shared across N (common random numbers); the bootstrap resamples replicas.
FractionalMomentResult fractional_moment(std::shared_ptr<const MarginalLaw> law, const Vec& theta, double alpha,
                                         std::span<const std::int64_t> n_list, const FractionalMomentOptions& opts);

struct LambdaAOptions {
  double tol = 1e-6;
  std::size_t min_pool = 100000;
  /// Average the estimating equation over the transversal symmetries of an isotropic law.
  bool symmetrize = true;
  /// Fitted tail rate c3_hat; when positive, 2|theta| < c3_hat is checked and noted.
  double tail_rate = 0.0;
};
/// Root Lambda* of r(Lambda) = mean exp(<theta, X_tau> - Lambda tau) = 1 over the
/// pool (common random numbers). Bisection to tol, then Newton polishing; the
/// standard error is the delta-method propagation of the pool mean.
MgfEstimate lambda_a_regen(const BlockPool& pool, const Vec& theta, const LambdaAOptions& opts = {});

struct ZetaEstimate {
  Vec value{0.0, 0.0, 0.0};
  Vec std_error{0.0, 0.0, 0.0};
  double lambda = 0.0;
  std::size_t blocks = 0;
};
/// zeta(theta) = E[X_tau exp(<theta, X_tau> - Lambda_a tau) | beta = inf].
ZetaEstimate zeta(const BlockPool& pool, const Vec& theta, double lambda_a);

}  // namespace rwre
