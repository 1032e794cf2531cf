#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/lattice.hpp"
#include "rwre/rng.hpp"

namespace rwre {

struct Path {
  Site start{0, 0, 0};
  std::vector<std::uint32_t> steps;  // indices into the range (or block atoms)
  std::vector<Site> sites;          // X_0 .. X_n

  std::size_t length() const { return steps.size(); }
  /// |S(X,j)|: number of distinct sites among X_0 .. X_{j-1}.
  std::size_t visited_count(std::size_t j) const;
};

/// One step of the (b, f, U) construction. b is the e_d component (-1, 0, +1);
/// f is 0 or a transversal unit step; U is drawn from the environment only when
/// b = 0 and f = 0.
struct BfuStep {
  std::int8_t b = 0;
  std::int8_t f_axis = -1;  // -1 encodes f = 0
  std::int8_t f_sign = 0;
  std::int8_t u_axis = -1;  // -1 encodes U absent
  std::int8_t u_sign = 0;

  bool uses_environment() const { return u_axis >= 0; }
};

/// Draws single steps of a walk in a fixed environment.
class StepGenerator {
 public:
  /// Inverse-CDF sampling from site_kernel(env, x).
  static StepGenerator kernel() { return StepGenerator(); }
  /// Class M walks generated through the (b, f, U) decomposition.
  static StepGenerator bfu(const ClassMSpec& spec);

  bool is_bfu() const { return spec_.has_value(); }
  const ClassMSpec& spec() const { return *spec_; }

  /// Returns the index of the step taken from x; fills `trace` for bfu generators.
  int step(const EnvironmentModel& env, const Site& x, Stream& stream, BfuStep* trace = nullptr) const;

 private:
  std::optional<ClassMSpec> spec_;
  double p_f_zero_ = 0.0;
  double u_floor_ = 0.0;
  double u_scale_ = 0.0;
};

/// Quenched path of n steps; deterministic in (env, walk_seed, start, n).
Path sample_path(const EnvironmentModel& env, std::uint64_t walk_seed, const Site& start, std::size_t n,
                 const StepGenerator& gen = StepGenerator::kernel(), std::vector<BfuStep>* trace = nullptr);

/// Walk with i.i.d. increments drawn from q_theta over the range steps.
Path tilted_path(const StepRange& range, const Kernel& q_theta, std::uint64_t walk_seed, std::size_t n);

/// Finitely supported law on Z^d (used for regeneration-block displacements).
struct DiscreteLaw {
  int d = 2;
  std::vector<Site> atoms;
  std::vector<double> probs;
};

/// Walk whose increments are i.i.d. draws from `law`.
Path tilted_path(const DiscreteLaw& law, std::uint64_t walk_seed, std::size_t n);

enum class LClass : std::uint8_t { L0 = 0, L1 = 1, L2plus = 2 };

struct RegenBlock {
  Site displacement{0, 0, 0};
  std::int64_t duration = 0;
  std::int32_t visited = 0;  // |S(X, tau)| within the block
  Vec drift_sum{0.0, 0.0, 0.0};  // sum over distinct visited x of v(omega_x)
  std::int32_t u_count = 0;  // N at the end of the block (bfu walks only)
  LClass l_class = LClass::L0;
  std::int64_t confirmed_to = 0;  // horizon used when confirming this block

  /// Z(theta) = sum over visited x of <theta, v(omega_x) - centre>.
  double z(const Vec& theta, const Vec& centre) const {
    return dot(theta, drift_sum) - static_cast<double>(visited) * dot(theta, centre);
  }
};

struct RegenOptions {
  std::int64_t horizon = 200;
  std::int64_t max_steps = 50'000'000;
  std::int64_t max_attempts = 1'000'000;
  /// Rejection of walks that dip below the start level resamples the environment
  /// too, so accepted first blocks follow the averaged law conditioned on beta = inf.
  bool fresh_environment_on_restart = true;
};

struct RegenResult {
  std::vector<RegenBlock> blocks;
  std::int64_t attempts = 0;
  std::int64_t late_violations = 0;  // dips below a confirmed level seen later
  std::int64_t steps = 0;
  std::uint64_t env_seed = 0;  // environment of the accepted attempt
  double acceptance_rate() const { return attempts > 0 ? 1.0 / static_cast<double>(attempts) : 0.0; }
};

/// Runs the walk until `m` regeneration blocks (relative to e_d) are confirmed.
/// Throws ConfigError when the law is not non-nestling along e_d and BudgetError
/// when max_steps or max_attempts run out.
RegenResult regeneration_split(const EnvironmentModel& env, const StepGenerator& gen, std::uint64_t walk_seed,
                               const Site& start, std::size_t m, const RegenOptions& opts = {});

/// Per-step record of a bfu walk over one block.
struct BfuRecord {
  std::vector<BfuStep> steps;
  std::vector<std::int32_t> running_count;  // N_i for i = 0..len
  LClass l_class = LClass::L0;
};

/// Validates and summarizes the bfu trace of a walk segment [from, to): checks the
/// reconstruction identity on every step, that U probabilities lie in [0,1] and that
/// the environment has the class M vertical masses. Throws ConfigError on mismatch.
BfuRecord decompose_bfu(const ClassMSpec& spec, const EnvironmentModel& env, const Path& path,
                        std::span<const BfuStep> trace, std::size_t from, std::size_t to);

/// Pool of regeneration blocks conditioned on beta = infinity, gathered from
/// independent replicas (one environment and one long walk per replica).
struct BlockPool {
  int d = 2;
  std::vector<RegenBlock> blocks;  // replica-major order
  std::size_t replicas = 0;
  std::size_t blocks_per_replica = 0;
  std::int64_t attempts = 0;
  std::int64_t late_violations = 0;
  std::int64_t horizon = 0;
  bool bfu = false;
  bool isotropic = false;
  Vec mean_drift{0.0, 0.0, 0.0};

  double acceptance_rate() const {
    return attempts > 0 ? static_cast<double>(replicas) / static_cast<double>(attempts) : 0.0;
  }
};

BlockPool build_block_pool(std::shared_ptr<const MarginalLaw> marginal, const StepGenerator& gen,
                           std::uint64_t master_seed, std::size_t replicas, std::size_t blocks_per_replica,
                           const RegenOptions& opts = {}, int workers = 1);

/// Log-linear fit of the empirical tail log P(tau > n) over n in [1, n_hi], where
/// n_hi is the largest n with at least `min_count` exceedances.
struct TailFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::int64_t n_lo = 1;
  std::int64_t n_hi = 1;
  /// Fitted decay rate c3_hat = -slope.
  double rate() const { return -slope; }
  /// exp(intercept + slope * T): fitted P(tau > T), the horizon bias scale.
  double tail_at(std::int64_t t) const;
};
TailFit fit_duration_tail(std::span<const RegenBlock> blocks, std::size_t min_count = 50);

struct IidDiagnostics {
  double lag1_autocorrelation = 0.0;
  double lag1_band = 0.0;  // 3 / sqrt(M)
  std::size_t blocks = 0;
  double ks_statistic = 0.0;
  double ks_p_value = 1.0;
};
/// Lag-1 autocorrelation of consecutive block durations (within replicas) and a
/// two-sample KS test between the 2nd and 5th blocks across replicas.
IidDiagnostics block_iid_diagnostics(const BlockPool& pool);

/// sup_x |P_z(X_m = x) - P_z'(X_m = x)| for the 2+1 space-time walk with i.i.d.
/// increments q_theta, computed exactly by convolution. m is capped at 1024.
double local_clt_deviation(const Kernel& q_theta, std::size_t m, const Site& z, const Site& z_prime);

}  // namespace rwre
