#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/mgf.hpp"
#include "rwre/walk.hpp"

namespace rwre {

struct TermEstimate {
  double value = 0.0;
  double std_error = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;

  bool excludes_zero() const { return ci_lo > 0.0 || ci_hi < 0.0; }
  bool covers_zero() const { return !excludes_zero(); }
};

struct CorrelationReport {
  Vec theta{0.0, 0.0, 0.0};
  double mu_value = 0.0;
  double std_error = 0.0;  // 0 for exact quadrature
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  Method method = Method::ExactClosedForm;
  /// "positive", "negative", "zero" (exact) or "indistinguishable" (CI covers 0).
  std::string verdict;
  std::optional<std::array<TermEstimate, 3>> decomposition;  // L0, L1, L2+

  // Block diagnostics (mu_regen only).
  std::size_t blocks = 0;
  TermEstimate mean_z;      // E[Z]
  TermEstimate mean_tau_z;  // E[tau Z]
  double cv_coefficient = 0.0;
  bool control_variate = false;
  std::size_t z_bound_violations = 0;
  std::vector<std::string> notes;
};

/// Calls fn(kernel, weight) over the one-site law: the support for finite laws,
/// a tensor Gauss-Legendre rule (exact for polynomials of degree <= 15 per pair)
/// for the pair-uniform family.
void for_each_realization(const MarginalLaw& law, const std::function<void(const Kernel&, double)>& fn);

/// mu = E[E^omega[exp{<theta, X_1> - log phi}] a(theta, 0)], by exact quadrature.
CorrelationReport mu_one_step(const MarginalLaw& law, const Vec& theta);

struct FgValue {
  double f = 0.0;
  double g = 0.0;
  double gap = 0.0;  // F - G, evaluated as a covariance over the one-site law
};
/// F(theta) = E[E^omega e^{<theta,X_1>} E^omega <theta,X_1>], G(theta) = phi(theta)<theta, xi_o>.
/// Space-time laws and transversal theta only.
FgValue fg_components(const MarginalLaw& law, const Vec& theta);
double hessian_gap_fg(const MarginalLaw& law, const Vec& theta);

struct MuRegenOptions {
  std::size_t batches = 100;
  double level = 0.95;
  /// Use Z (mean 0 under isotropy) as a control variate; defaults to the pool's isotropy.
  std::optional<bool> control_variate;
  /// Class M parameters, when known, for the |Z| <= 2 eps (d-1) |theta| tau check.
  std::optional<ClassMSpec> spec;
};
/// Block mean of exp(<theta, X_tau> - Lambda_a tau) Z(theta) over beta = inf blocks.
CorrelationReport mu_regen(const BlockPool& pool, const Vec& theta, double lambda_a, const MuRegenOptions& opts = {});

/// E[<theta, X_tau> Z(theta); L_i] for i = 0, 1, >= 2 over a bfu pool.
CorrelationReport l_term_decomposition(const BlockPool& pool, const Vec& theta, const MuRegenOptions& opts = {});

}  // namespace rwre
