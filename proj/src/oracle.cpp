#include "rwre/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace rwre::oracle {
namespace {

void require_finite(const MarginalLaw& law) {
  if (!law.is_finite()) throw ConfigError("oracle needs a finite-support marginal");
}

// Number of assignments |S|^sites, or kBudget + 1 when it exceeds the budget.
std::uint64_t assignments(std::size_t support, std::size_t sites) {
  std::uint64_t total = 1;
  for (std::size_t i = 0; i < sites; ++i) {
    total *= support;
    if (total > kBudget) return kBudget + 1;
  }
  return total;
}

Vec effective(const MarginalLaw& law, const Vec& theta) {
  return law.range().kind == RangeKind::SpaceTime ? transversal(theta, law.d()) : theta;
}

// Quenched sum over all paths of prod_i kernel(X_i)(z_i) e^{<theta, z_i>}, filtered at the end.
template <typename KernelAt>
double path_sum(const StepRange& range, const Vec& theta, int n, const KernelAt& kernel_at, const EndpointFilter& filter) {
  double total = 0.0;
  std::vector<double> tilt(range.size());
  for (std::size_t k = 0; k < range.size(); ++k) tilt[k] = std::exp(dot(theta, range.steps[k]));
  auto rec = [&](auto&& self, const Site& x, int left, double w) -> void {
    if (left == 0) {
      if (!filter || filter(x)) total += w;
      return;
    }
    const Kernel p = kernel_at(x);
    for (std::size_t k = 0; k < range.size(); ++k) self(self, x + range.steps[k], left - 1, w * p[k] * tilt[k]);
  };
  rec(rec, Site{0, 0, 0}, n, 1.0);
  return total;
}

}  // namespace

double phi(const MarginalLaw& law, const Vec& theta) {
  double s = 0.0;
  const auto& q = law.mean_kernel();
  for (std::size_t k = 0; k < law.range().size(); ++k) s += q[k] * std::exp(dot(theta, law.range().steps[k]));
  return s;
}

double exact_annealed_expectation(const MarginalLaw& law, const Vec& theta, int n, Functional f,
                                  const EndpointFilter& filter) {
  require_finite(law);
  if (n < 1) throw ConfigError("oracle needs N >= 1");
  const StepRange& range = law.range();
  if (assignments(range.size(), static_cast<std::size_t>(n)) > kBudget) throw BudgetError("oracle path budget exceeded");
  const auto support = law.support();
  const Vec th = effective(law, theta);
  const Vec centre = law.mean_drift();

  if (range.kind == RangeKind::SpaceTime) {
    // Distinct sites: the origin factor carries a(theta,0); every other site contributes q.
    Kernel origin{};
    for (const auto& sp : support) {
      const double a = f == Functional::WnTimesA ? dot(th, drift(sp.probs, range) - centre) : 1.0;
      for (std::size_t k = 0; k < range.size(); ++k) origin[k] += sp.weight * sp.probs[k] * a;
    }
    const Kernel& q = law.mean_kernel();
    const double value = path_sum(range, theta, n,
                                  [&](const Site& x) { return is_zero(to_vec(x)) ? origin : q; }, filter);
    if (f == Functional::ExpTheta) return value;
    return value / std::pow(phi(law, theta), n);
  }

  if (f != Functional::ExpTheta) throw ConfigError("space-only oracle supports the exp<theta,X_N> functional only");
  // window: sites from which a step is taken, i.e. within l1 distance n-1 of the origin
  std::vector<Site> window;
  const auto r = static_cast<std::int64_t>(n - 1);
  for (std::int64_t a = -r; a <= r; ++a)
    for (std::int64_t b = -r; b <= r; ++b)
      for (std::int64_t c = (law.d() == 3 ? -r : 0); c <= (law.d() == 3 ? r : 0); ++c)
        if (std::abs(a) + std::abs(b) + std::abs(c) <= r) window.push_back({a, b, c});
  if (window.size() > kMaxSpaceOnlyWindow) throw BudgetError("space-only oracle window exceeds 12 sites");
  const std::uint64_t count = assignments(support.size(), window.size());
  if (count > kBudget) throw BudgetError("oracle environment budget exceeded");
  std::map<Site, std::size_t> slot;
  for (std::size_t i = 0; i < window.size(); ++i) slot.emplace(window[i], i);
  std::vector<std::size_t> idx(window.size(), 0);
  double total = 0.0;
  for (std::uint64_t e = 0; e < count; ++e) {
    double w = 1.0;
    for (std::size_t i = 0; i < window.size(); ++i) w *= support[idx[i]].weight;
    total += w * path_sum(range, theta, n, [&](const Site& x) { return support[idx[slot.at(x)]].probs; }, filter);
    for (std::size_t i = 0; i < idx.size() && ++idx[i] == support.size(); ++i) idx[i] = 0;
  }
  return total;
}

double exact_quenched_expectation(const EnvironmentModel& env, const Vec& theta, int n) {
  if (n < 0) throw ConfigError("oracle needs N >= 0");
  if (assignments(env.range().size(), static_cast<std::size_t>(n)) > kBudget) throw BudgetError("oracle path budget exceeded");
  return path_sum(env.range(), theta, n, [&](const Site& x) { return env.site_kernel(x); }, {});
}

double exact_fractional_moment(const MarginalLaw& law, const Vec& theta, double alpha, int n) {
  require_finite(law);
  if (law.range().kind != RangeKind::SpaceTime) throw ConfigError("fractional moment oracle needs a space-time law");
  if (n < 1) throw ConfigError("oracle needs N >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0,1]");
  const StepRange& range = law.range();
  const auto support = law.support();

  // Cone levels 0..n and, for each level-k site and step, the index of its target.
  std::vector<std::vector<Site>> levels{{Site{0, 0, 0}}};
  std::vector<std::vector<std::vector<std::size_t>>> next;
  for (int k = 0; k < n; ++k) {
    std::map<Site, std::size_t> targets;
    for (const auto& x : levels.back())
      for (const auto& z : range.steps) targets.emplace(x + z, 0);
    std::vector<Site> lv;
    for (auto& [s, i] : targets) i = lv.size(), lv.push_back(s);
    std::vector<std::vector<std::size_t>> nx;
    for (const auto& x : levels.back()) {
      std::vector<std::size_t> row;
      for (const auto& z : range.steps) row.push_back(targets.at(x + z));
      nx.push_back(std::move(row));
    }
    next.push_back(std::move(nx));
    levels.push_back(std::move(lv));
  }
  double log_count = 0.0;
  for (int k = 0; k < n; ++k) log_count += static_cast<double>(levels[static_cast<std::size_t>(k)].size()) *
                                           std::log(static_cast<double>(support.size()));
  if (log_count > std::log(static_cast<double>(kBudget)) + 1e-9) throw BudgetError("oracle environment budget exceeded");

  std::vector<double> tilt(range.size());
  for (std::size_t k = 0; k < range.size(); ++k) tilt[k] = std::exp(dot(theta, range.steps[k]));
  const double norm = std::pow(phi(law, theta), n);
  double total = 0.0;
  auto rec = [&](auto&& self, int k, const std::vector<double>& w, double prob) -> void {
    if (k == n) {
      double s = 0.0;
      for (double v : w) s += v;
      total += prob * std::pow(s / norm, alpha);
      return;
    }
    const auto& sites = levels[static_cast<std::size_t>(k)];
    const auto& nx = next[static_cast<std::size_t>(k)];
    std::vector<std::size_t> idx(sites.size(), 0);
    std::vector<double> out(levels[static_cast<std::size_t>(k) + 1].size());
    for (;;) {
      std::fill(out.begin(), out.end(), 0.0);
      double p = prob;
      for (std::size_t i = 0; i < sites.size(); ++i) {
        const auto& sp = support[idx[i]];
        p *= sp.weight;
        for (std::size_t z = 0; z < range.size(); ++z) out[nx[i][z]] += w[i] * sp.probs[z] * tilt[z];
      }
      self(self, k + 1, out, p);
      std::size_t i = 0;
      while (i < idx.size() && ++idx[i] == support.size()) idx[i++] = 0;
      if (i == idx.size()) break;
    }
  };
  rec(rec, 0, std::vector<double>{1.0}, 1.0);
  return total;
}

}  // namespace rwre::oracle
