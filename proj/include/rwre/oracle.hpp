#pragma once

#include <cstdint>
#include <functional>

#include "rwre/env.hpp"

namespace rwre::oracle {

/// Upper bound on enumerated environment assignments (and on enumerated paths).
inline constexpr std::uint64_t kBudget = 1ULL << 24;
/// Space-only annealed enumeration is limited to windows of at most this many sites.
inline constexpr std::size_t kMaxSpaceOnlyWindow = 12;

enum class Functional {
  ExpTheta,  // exp <theta, X_N>
  Wn,        // exp{<theta, X_N> - N log phi(theta)}
  WnTimesA,  // exp{<theta, X_N> - N log phi(theta)} a(theta, 0)
};

using EndpointFilter = std::function<bool(const Site&)>;

/// E_o[F 1{X_N in filter}] under the averaged law, finite-support marginals only.
/// Space-time: path enumeration with per-site quadrature (sites on a path are
/// distinct). Space-only: full enumeration of the environment on the window.
/// Throws BudgetError beyond kBudget or the window limit.
double exact_annealed_expectation(const MarginalLaw& law, const Vec& theta, int n, Functional f,
                                  const EndpointFilter& filter = {});

/// E_o^omega[exp <theta, X_N>] by enumerating all |R|^N paths.
double exact_quenched_expectation(const EnvironmentModel& env, const Vec& theta, int n);

/// E[W_N(theta, .)^alpha] by enumerating environment assignments on the cone, level by
/// level. Space-time, finite support.
double exact_fractional_moment(const MarginalLaw& law, const Vec& theta, double alpha, int n);

/// phi(theta) = sum_z q(z) e^{<theta,z>}, by direct summation.
double phi(const MarginalLaw& law, const Vec& theta);

}  // namespace rwre::oracle
