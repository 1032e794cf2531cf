#include "rwre/corr.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <cmath>

#include "rwre/stats.hpp"

namespace rwre {
namespace {

constexpr unsigned kNodes = 8;

// Gauss-Legendre nodes and weights on [0,1].
std::vector<std::pair<double, double>> unit_rule() {
  using Rule = boost::math::quadrature::gauss<double, kNodes>;
  std::vector<std::pair<double, double>> out;
  const auto& x = Rule::abscissa();
  const auto& w = Rule::weights();
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.emplace_back(0.5 * (1.0 - x[i]), 0.5 * w[i]);
    if (x[i] != 0.0) out.emplace_back(0.5 * (1.0 + x[i]), 0.5 * w[i]);
  }
  return out;
}

Vec effective_theta(const MarginalLaw& law, const Vec& theta) {
  return law.range().kind == RangeKind::SpaceTime ? transversal(theta, law.d()) : theta;
}

std::string exact_verdict(double v) {
  if (v > 0.0) return "positive";
  if (v < 0.0) return "negative";
  return "zero";
}

TermEstimate term_from(const stats::MeanSe& ms, double level, std::size_t batches) {
  TermEstimate t;
  t.value = ms.mean;
  t.std_error = ms.std_error;
  const double crit = stats::t_critical(level, batches > 1 ? batches - 1 : 1);
  t.ci_lo = ms.mean - crit * ms.std_error;
  t.ci_hi = ms.mean + crit * ms.std_error;
  return t;
}

std::string mc_verdict(const TermEstimate& t) {
  if (t.ci_lo > 0.0) return "positive";
  if (t.ci_hi < 0.0) return "negative";
  return "indistinguishable";
}

void require_pool(const BlockPool& pool, std::size_t batches) {
  if (pool.blocks.empty()) throw ConfigError("empty block pool");
  if (batches < 2 || pool.blocks.size() < batches) throw ConfigError("block pool smaller than the batch count");
}

}  // namespace

void for_each_realization(const MarginalLaw& law, const std::function<void(const Kernel&, double)>& fn) {
  if (law.is_finite()) {
    for (const auto& sp : law.support()) fn(sp.probs, sp.weight);
    return;
  }
  const auto& par = law.parametric();
  const auto rule = unit_rule();
  const std::size_t pairs = par.pairs.size();
  std::vector<std::size_t> idx(pairs, 0);
  for (;;) {
    Kernel p = par.base;
    double w = 1.0;
    for (std::size_t j = 0; j < pairs; ++j) {
      const auto& [u, wu] = rule[idx[j]];
      const double shift = par.amplitude * (2.0 * u - 1.0);
      p[static_cast<std::size_t>(par.pairs[j][1])] += shift;
      p[static_cast<std::size_t>(par.pairs[j][0])] -= shift;
      w *= wu;
    }
    fn(p, w);
    std::size_t j = 0;
    while (j < pairs && ++idx[j] == rule.size()) idx[j++] = 0;
    if (j == pairs) break;
  }
}

CorrelationReport mu_one_step(const MarginalLaw& law, const Vec& theta) {
  if (law.range().kind != RangeKind::SpaceTime) throw ConfigError("mu_one_step needs a space-time law");
  const StepRange& range = law.range();
  const Vec th = effective_theta(law, theta);
  const Vec centre = law.mean_drift();
  const double phi = std::exp(log_phi(law, theta));
  double mu = 0.0;
  if (!is_zero(th)) {
    for_each_realization(law, [&](const Kernel& p, double w) {
      double e = 0.0;
      for (std::size_t k = 0; k < range.size(); ++k) e += p[k] * std::exp(dot(theta, range.steps[k]));
      mu += w * (e / phi) * dot(th, drift(p, range) - centre);
    });
  }
  CorrelationReport r;
  r.theta = theta;
  r.mu_value = mu;
  r.ci_lo = r.ci_hi = mu;
  r.method = Method::ExactClosedForm;
  r.verdict = exact_verdict(mu);
  return r;
}

FgValue fg_components(const MarginalLaw& law, const Vec& theta) {
  if (law.range().kind != RangeKind::SpaceTime) throw ConfigError("F - G needs a space-time law");
  if (!ThetaDomain::transversal(theta, law.d())) throw ConfigError("F - G needs a transversal theta");
  const StepRange& range = law.range();
  // A = E^omega e^{<theta,X_1>}, B = E^omega <theta,X_1>; F = E[AB], G = E[A] E[B].
  std::vector<std::pair<double, double>> ab;
  std::vector<double> ws;
  double a_bar = 0.0, b_bar = 0.0;
  for_each_realization(law, [&](const Kernel& p, double w) {
    double a = 0.0, b = 0.0;
    for (std::size_t k = 0; k < range.size(); ++k) {
      a += p[k] * std::exp(dot(theta, range.steps[k]));
      b += p[k] * dot(theta, range.steps[k]);
    }
    ab.emplace_back(a, b);
    ws.push_back(w);
    a_bar += w * a;
    b_bar += w * b;
  });
  FgValue out;
  for (std::size_t i = 0; i < ab.size(); ++i) {
    out.f += ws[i] * ab[i].first * ab[i].second;
    out.gap += ws[i] * (ab[i].first - a_bar) * (ab[i].second - b_bar);
  }
  out.g = std::exp(log_phi(law, theta)) * dot(theta, law.mean_drift());
  return out;
}

double hessian_gap_fg(const MarginalLaw& law, const Vec& theta) { return fg_components(law, theta).gap; }

CorrelationReport mu_regen(const BlockPool& pool, const Vec& theta, double lambda_a, const MuRegenOptions& opts) {
  require_pool(pool, opts.batches);
  const std::size_t m = pool.blocks.size();
  std::vector<double> y(m), z(m), tz(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& b = pool.blocks[i];
    z[i] = b.z(theta, pool.mean_drift);
    tz[i] = static_cast<double>(b.duration) * z[i];
    y[i] = std::exp(dot(theta, b.displacement) - lambda_a * static_cast<double>(b.duration)) * z[i];
  }

  CorrelationReport r;
  r.theta = theta;
  r.method = Method::MonteCarlo;
  r.blocks = m;
  r.mean_z = term_from(stats::batch_means(z, opts.batches), opts.level, opts.batches);
  r.mean_tau_z = term_from(stats::batch_means(tz, opts.batches), opts.level, opts.batches);

  r.control_variate = opts.control_variate.value_or(pool.isotropic);
  std::vector<double> adjusted = y;
  if (r.control_variate) {
    const double zbar = r.mean_z.value;
    double ybar = 0.0;
    for (double v : y) ybar += v;
    ybar /= static_cast<double>(m);
    double cov = 0.0, var = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      cov += (y[i] - ybar) * (z[i] - zbar);
      var += (z[i] - zbar) * (z[i] - zbar);
    }
    r.cv_coefficient = var > 0.0 ? cov / var : 0.0;
    for (std::size_t i = 0; i < m; ++i) adjusted[i] = y[i] - r.cv_coefficient * z[i];
    r.notes.push_back("control variate Z with known mean 0 (isotropy)");
  }
  const TermEstimate mu = term_from(stats::batch_means(adjusted, opts.batches), opts.level, opts.batches);
  r.mu_value = mu.value;
  r.std_error = mu.std_error;
  r.ci_lo = mu.ci_lo;
  r.ci_hi = mu.ci_hi;
  r.verdict = mc_verdict(mu);

  if (opts.spec) {
    const double cap = 2.0 * opts.spec->epsilon * (opts.spec->d - 1) * norm(theta);
    for (std::size_t i = 0; i < m; ++i)
      if (std::abs(z[i]) > cap * static_cast<double>(pool.blocks[i].duration) * (1.0 + 1e-12) + 1e-15)
        ++r.z_bound_violations;
  }
  if (pool.late_violations > 0)
    r.notes.push_back("late violations of confirmed levels: " + std::to_string(pool.late_violations));
  return r;
}

CorrelationReport l_term_decomposition(const BlockPool& pool, const Vec& theta, const MuRegenOptions& opts) {
  require_pool(pool, opts.batches);
  if (!pool.bfu) throw ConfigError("L-term decomposition needs a pool generated through the bfu construction");
  const std::size_t m = pool.blocks.size();
  std::array<std::vector<double>, 3> terms;
  for (auto& t : terms) t.assign(m, 0.0);
  std::vector<double> total(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& b = pool.blocks[i];
    const double v = dot(theta, b.displacement) * b.z(theta, pool.mean_drift);
    terms[static_cast<std::size_t>(b.l_class)][i] = v;
    total[i] = v;
  }
  CorrelationReport r;
  r.theta = theta;
  r.method = Method::MonteCarlo;
  r.blocks = m;
  std::array<TermEstimate, 3> dec;
  for (std::size_t k = 0; k < 3; ++k) dec[k] = term_from(stats::batch_means(terms[k], opts.batches), opts.level, opts.batches);
  r.decomposition = dec;
  const TermEstimate all = term_from(stats::batch_means(total, opts.batches), opts.level, opts.batches);
  r.mu_value = all.value;
  r.std_error = all.std_error;
  r.ci_lo = all.ci_lo;
  r.ci_hi = all.ci_hi;
  r.verdict = mc_verdict(all);
  return r;
}

}  // namespace rwre
