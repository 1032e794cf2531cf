#include "rwre/mgf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rwre/parallel.hpp"
#include "rwre/rng.hpp"
#include "rwre/stats.hpp"

namespace rwre {

namespace {

void require_space_time(const MarginalLaw& law, const char* what) {
  if (law.range().kind != RangeKind::SpaceTime)
    throw ConfigError(std::string(what) + " needs a space-time law (use the regeneration route for space-only)");
}

// Per-site transition factors pi(z) e^{<theta,z>} for one theta.
class FactorTable {
 public:
  FactorTable(const MarginalLaw& law, const Vec& theta) : law_(law) {
    const StepRange& r = law.range();
    for (std::size_t k = 0; k < r.size(); ++k) exp_[k] = std::exp(dot(theta, r.steps[k]));
    if (law.is_finite()) {
      for (const auto& sp : law.support()) {
        Kernel f{};
        for (std::size_t k = 0; k < r.size(); ++k) f[k] = sp.probs[k] * exp_[k];
        finite_.push_back(f);
      }
    }
  }
  // factors at site x of env; `idx` is the support index when finite
  Kernel at(const EnvironmentModel& env, const Site& x, std::size_t idx) const {
    if (law_.is_finite()) return finite_[idx];
    Kernel p = env.site_kernel(x);
    for (std::size_t k = 0; k < kMaxSteps; ++k) p[k] *= exp_[k];
    return p;
  }

 private:
  const MarginalLaw& law_;
  Kernel exp_{};
  std::vector<Kernel> finite_;
};

// Forward cone DP shared by the multi-theta mgf and the endpoint distribution.
// visit(level, arrays) is called after each level is complete and normalized.
struct Cone {
  int d;
  std::int64_t n;
  std::int64_t half;
  std::int64_t width;

  Cone(int d_, std::int64_t n_) : d(d_), n(n_), half(n_ + 1), width(2 * n_ + 3) {}
  std::size_t size() const {
    return d == 2 ? static_cast<std::size_t>(width) : static_cast<std::size_t>(width * width);
  }
  std::size_t idx(std::int64_t a, std::int64_t b) const {
    if (d == 2) return static_cast<std::size_t>(a + half);
    return static_cast<std::size_t>((a + half) * width + (b + half));
  }
  // calls f(a, b) for every site of level i (b = 0 when d = 2)
  template <class F>
  void for_level(std::int64_t i, F&& f) const {
    if (d == 2) {
      for (std::int64_t a = -i; a <= i; a += 2) f(a, std::int64_t{0});
      return;
    }
    for (std::int64_t a = -i; a <= i; ++a) {
      const std::int64_t rest = i - std::abs(a);
      for (std::int64_t b = -rest; b <= rest; b += 2) f(a, b);
    }
  }
  Site site(const Site& start, std::int64_t a, std::int64_t b, std::int64_t i) const {
    if (d == 2) return Site{start[0] + a, start[1] + i, 0};
    return Site{start[0] + a, start[1] + b, start[2] + i};
  }
};

// Runs the DP for several thetas; after each level calls on_level(i, log_norms).
template <class OnLevel>
void run_cone(const EnvironmentModel& env, std::span<const Vec> thetas, std::int64_t n, const Site& start,
              std::vector<std::vector<double>>& cur, OnLevel&& on_level) {
  const MarginalLaw& law = env.marginal();
  const StepRange& range = law.range();
  const int d = law.d();
  const Cone cone(d, n);
  const std::size_t t_count = thetas.size();
  std::vector<FactorTable> tables;
  tables.reserve(t_count);
  for (const Vec& th : thetas) tables.emplace_back(law, th);

  std::array<std::ptrdiff_t, kMaxSteps> offset{};
  for (std::size_t k = 0; k < range.size(); ++k) {
    const Site& z = range.steps[k];
    offset[k] = d == 2 ? static_cast<std::ptrdiff_t>(z[0])
                       : static_cast<std::ptrdiff_t>(z[0] * cone.width + z[1]);
  }
  cur.assign(t_count, std::vector<double>(cone.size(), 0.0));
  std::vector<std::vector<double>> nxt(t_count, std::vector<double>(cone.size(), 0.0));
  for (auto& c : cur) c[cone.idx(0, 0)] = 1.0;
  std::vector<double> log_norm(t_count, 0.0);
  on_level(0, log_norm);
  const bool finite = law.is_finite();
  const std::size_t ks = range.size();
  for (std::int64_t i = 0; i < n; ++i) {
    for (auto& v : nxt) cone.for_level(i + 1, [&](std::int64_t a, std::int64_t b) { v[cone.idx(a, b)] = 0.0; });
    cone.for_level(i, [&](std::int64_t a, std::int64_t b) {
      const std::size_t at = cone.idx(a, b);
      const Site x = cone.site(start, a, b, i);
      const std::size_t sidx = finite ? env.support_index(x) : 0;
      for (std::size_t t = 0; t < t_count; ++t) {
        const double v = cur[t][at];
        if (v == 0.0) continue;
        const Kernel f = tables[t].at(env, x, sidx);
        double* out = nxt[t].data() + at;
        for (std::size_t k = 0; k < ks; ++k) out[offset[k]] += v * f[k];
      }
    });
    for (std::size_t t = 0; t < t_count; ++t) {
      double s = 0.0;
      auto& v = nxt[t];
      cone.for_level(i + 1, [&](std::int64_t a, std::int64_t b) { s += v[cone.idx(a, b)]; });
      if (!(s > 0.0) || !std::isfinite(s)) throw ConvergenceError("cone DP lost all mass (under/overflow)");
      const double inv = 1.0 / s;
      cone.for_level(i + 1, [&](std::int64_t a, std::int64_t b) { v[cone.idx(a, b)] *= inv; });
      log_norm[t] += std::log(s);
    }
    std::swap(cur, nxt);
    on_level(i + 1, log_norm);
  }
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::ExactDp: return "exact-dp";
    case Method::ExactClosedForm: return "exact-closed-form";
    case Method::MonteCarlo: return "mc";
    case Method::RootFind: return "root-find";
  }
  return "unknown";
}

double log_phi(const MarginalLaw& law, const Vec& theta) {
  require_space_time(law, "log_phi");
  const StepRange& r = law.range();
  // log-sum-exp over the steps
  double mx = -INFINITY;
  for (std::size_t k = 0; k < r.size(); ++k) mx = std::max(mx, dot(theta, r.steps[k]));
  double s = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) s += law.mean_kernel()[k] * std::exp(dot(theta, r.steps[k]) - mx);
  return mx + std::log(s);
}

Kernel tilted_kernel(const MarginalLaw& law, const Vec& theta) {
  const double lp = log_phi(law, theta);
  Kernel q{};
  const StepRange& r = law.range();
  double s = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    q[k] = law.mean_kernel()[k] * std::exp(dot(theta, r.steps[k]) - lp);
    s += q[k];
  }
  for (std::size_t k = 0; k < r.size(); ++k) q[k] /= s;
  return q;
}

Vec grad_log_phi(const MarginalLaw& law, const Vec& theta) {
  const Kernel q = tilted_kernel(law, theta);
  Vec g{0.0, 0.0, 0.0};
  for (std::size_t k = 0; k < law.range().size(); ++k) g = g + q[k] * to_vec(law.range().steps[k]);
  return g;
}

std::uint64_t cone_sites(int d, std::int64_t n) {
  const auto m = static_cast<std::uint64_t>(n + 1);
  if (d == 2) return m * (m + 1) / 2;
  return m * (m + 1) * (2 * m + 1) / 6;
}

std::vector<std::vector<double>> quenched_log_mgf(const EnvironmentModel& env, std::span<const Vec> thetas,
                                                  std::span<const std::int64_t> levels, std::uint64_t budget) {
  const MarginalLaw& law = env.marginal();
  require_space_time(law, "quenched DP");
  const int d = law.d();
  std::int64_t nmax = 0;
  for (auto l : levels) {
    if (l < 0) throw ConfigError("DP level must be >= 0");
    nmax = std::max(nmax, l);
  }
  if (cone_sites(d, nmax) > budget) throw BudgetError("quenched DP cone exceeds the site budget");
  std::vector<std::vector<double>> out(thetas.size(), std::vector<double>(levels.size(), 0.0));
  std::vector<Vec> active;
  std::vector<std::size_t> active_idx;
  for (std::size_t t = 0; t < thetas.size(); ++t) {
    if (on_time_axis(thetas[t], d)) {
      // every path has <X_N, e_d> = N, so E^omega e^{<theta,X_N>} = e^{N theta_d}
      for (std::size_t l = 0; l < levels.size(); ++l)
        out[t][l] = static_cast<double>(levels[l]) * thetas[t][static_cast<std::size_t>(d - 1)];
    } else {
      active.push_back(thetas[t]);
      active_idx.push_back(t);
    }
  }
  if (active.empty()) return out;
  std::vector<std::vector<double>> cur;
  run_cone(env, active, nmax, Site{0, 0, 0}, cur, [&](std::int64_t i, const std::vector<double>& log_norm) {
    for (std::size_t l = 0; l < levels.size(); ++l)
      if (levels[l] == i)
        for (std::size_t t = 0; t < active.size(); ++t) out[active_idx[t]][l] = log_norm[t];
  });
  return out;
}

double quenched_mgf_dp(const EnvironmentModel& env, const Vec& theta, std::int64_t n, std::uint64_t budget) {
  if (n < 1) throw ConfigError("quenched_mgf_dp needs N >= 1");
  const std::array<Vec, 1> th{theta};
  const std::array<std::int64_t, 1> lv{n};
  return quenched_log_mgf(env, th, lv, budget)[0][0] / static_cast<double>(n);
}

std::size_t EndpointDistribution::index(std::int64_t a, std::int64_t b) const {
  const std::int64_t w = 2 * half + 1;
  if (d == 2) return static_cast<std::size_t>(a + half);
  return static_cast<std::size_t>((a + half) * w + (b + half));
}

double EndpointDistribution::weight(std::int64_t a, std::int64_t b) const {
  if (std::abs(a) > half || (d == 3 && std::abs(b) > half) || (d == 2 && b != 0)) return 0.0;
  return std::exp(log_scale) * weights[index(a, b)];
}

double EndpointDistribution::log_total() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return log_scale + std::log(s);
}

EndpointDistribution quenched_endpoint(const EnvironmentModel& env, const Vec& theta, std::int64_t n,
                                       const Site& start, std::uint64_t budget) {
  const MarginalLaw& law = env.marginal();
  require_space_time(law, "quenched endpoint DP");
  if (n < 0) throw ConfigError("endpoint DP needs n >= 0");
  if (cone_sites(law.d(), n) > budget) throw BudgetError("endpoint DP cone exceeds the site budget");
  const std::array<Vec, 1> th{theta};
  std::vector<std::vector<double>> cur;
  double log_norm = 0.0;
  run_cone(env, th, n, start, cur, [&](std::int64_t, const std::vector<double>& ln) { log_norm = ln[0]; });
  EndpointDistribution e;
  e.d = law.d();
  e.n = n;
  e.half = n + 1;
  e.log_scale = log_norm - static_cast<double>(n) * log_phi(law, theta);
  e.weights = std::move(cur[0]);
  return e;
}

WnValue w_n(const EnvironmentModel& env, const Vec& theta, std::int64_t n) {
  const MarginalLaw& law = env.marginal();
  require_space_time(law, "w_n");
  WnValue r;
  if (on_time_axis(theta, law.d())) return r;
  const std::array<Vec, 1> th{theta};
  const std::array<std::int64_t, 1> lv{n};
  r.log_w = quenched_log_mgf(env, th, lv)[0][0] - static_cast<double>(n) * log_phi(law, theta);
  r.w = std::exp(r.log_w);
  return r;
}

std::vector<MgfEstimate> lambda_q_estimate(std::shared_ptr<const MarginalLaw> law, std::span<const Vec> thetas,
                                           std::int64_t n, const LambdaQOptions& opts) {
  require_space_time(*law, "lambda_q_estimate");
  if (opts.replicas < 2) throw ConfigError("lambda_q_estimate needs at least 2 replicas");
  if (n < 2) throw ConfigError("lambda_q_estimate needs N >= 2");
  std::vector<std::int64_t> levels{n};
  if (opts.doubling_check) levels.insert(levels.begin(), n / 2);
  const auto runs = parallel_map(opts.replicas, opts.workers, [&](std::size_t r) {
    const EnvironmentModel env(law, derive_seed(opts.master_seed, Role::Environment, r));
    return quenched_log_mgf(env, thetas, levels);
  });
  std::vector<MgfEstimate> out;
  const std::size_t last = levels.size() - 1;
  for (std::size_t t = 0; t < thetas.size(); ++t) {
    std::vector<double> vals(opts.replicas);
    for (std::size_t r = 0; r < opts.replicas; ++r) vals[r] = runs[r][t][last] / static_cast<double>(n);
    const auto ms = stats::mean_se(vals);
    MgfEstimate e;
    e.theta = thetas[t];
    e.n = n;
    e.replicas = opts.replicas;
    e.value = ms.mean;
    e.std_error = ms.std_error;
    if (on_time_axis(thetas[t], law->d())) {
      e.method = Method::ExactClosedForm;
      e.std_error = 0.0;
    } else {
      e.method = Method::MonteCarlo;
      e.notes.push_back("replica mean of per-environment exact DP values");
    }
    if (opts.doubling_check) {
      std::vector<double> half(opts.replicas);
      for (std::size_t r = 0; r < opts.replicas; ++r) half[r] = runs[r][t][0] / static_cast<double>(n / 2);
      std::ostringstream os;
      os.precision(6);
      os << "N-doubling drift " << ms.mean - stats::mean_se(half).mean;
      e.notes.push_back(os.str());
    }
    out.push_back(std::move(e));
  }
  return out;
}

FractionalMomentResult summarize_fractional_moment(const std::vector<std::vector<double>>& powers,
                                                  std::span<const std::int64_t> n_list, const Vec& theta,
                                                  bool exact_one, const FractionalMomentOptions& opts) {
  const std::size_t nn = n_list.size();
  const std::size_t reps = powers.size();
  if (reps < 2) throw ConfigError("fractional moment summary needs at least 2 replicas");
  FractionalMomentResult res;
  std::vector<double> xs(nn);
  for (std::size_t i = 0; i < nn; ++i) {
    std::vector<double> col(reps);
    for (std::size_t r = 0; r < reps; ++r) col[r] = powers[r][i];
    const auto ms = stats::mean_se(col);
    MgfEstimate e;
    e.theta = theta;
    e.n = n_list[i];
    e.replicas = reps;
    e.value = ms.mean;
    e.std_error = exact_one ? 0.0 : ms.std_error;
    e.method = exact_one ? Method::ExactClosedForm : Method::MonteCarlo;
    res.per_n.push_back(e);
    res.log_mean.push_back(std::log(ms.mean));
    xs[i] = static_cast<double>(n_list[i]);
  }
  if (nn < 2) return res;
  res.slope = stats::linear_fit(xs, res.log_mean).slope;
  if (exact_one) {
    res.slope = 0.0;
    return res;
  }
  res.bootstrap = opts.bootstrap;
  std::vector<double> slopes = parallel_map(opts.bootstrap, opts.workers, [&](std::size_t b) {
    Stream s(derive_seed(opts.master_seed, Role::Bootstrap, b));
    std::vector<double> sums(nn, 0.0);
    for (std::size_t k = 0; k < reps; ++k) {
      const auto r = static_cast<std::size_t>(s.below(reps));
      for (std::size_t i = 0; i < nn; ++i) sums[i] += powers[r][i];
    }
    std::vector<double> lm(nn);
    for (std::size_t i = 0; i < nn; ++i) lm[i] = std::log(sums[i] / static_cast<double>(reps));
    return stats::linear_fit(xs, lm).slope;
  });
  if (!slopes.empty()) {
    std::sort(slopes.begin(), slopes.end());
    const double tail = (1.0 - opts.level) / 2.0;
    const auto pick = [&](double q) {
      const auto k = static_cast<std::size_t>(std::clamp(q * static_cast<double>(slopes.size() - 1), 0.0,
                                                         static_cast<double>(slopes.size() - 1)));
      return slopes[k];
    };
    res.slope_ci_lo = pick(tail);
    res.slope_ci_hi = pick(1.0 - tail);
  }
  return res;
}

FractionalMomentResult fractional_moment(std::shared_ptr<const MarginalLaw> law, const Vec& theta, double alpha,
                                         std::span<const std::int64_t> n_list, const FractionalMomentOptions& opts) {
  require_space_time(*law, "fractional_moment");
  if (n_list.empty()) throw ConfigError("fractional_moment needs a non-empty N list");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (opts.replicas < 2) throw ConfigError("fractional_moment needs at least 2 replicas");
  for (auto n : n_list)
    if (n < 1) throw ConfigError("N must be >= 1");
  const std::size_t nn = n_list.size();
  const std::size_t reps = opts.replicas;
  const bool exact_one = on_time_axis(theta, law->d());

  // powers[r][i] = W_{N_i}^alpha for replica r
  std::vector<std::vector<double>> powers;
  if (exact_one) {
    powers.assign(reps, std::vector<double>(nn, 1.0));
  } else {
    const double lp = log_phi(*law, theta);
    const std::array<Vec, 1> th{theta};
    powers = parallel_map(reps, opts.workers, [&](std::size_t r) {
      const EnvironmentModel env(law, derive_seed(opts.master_seed, Role::Environment, r));
      const auto lm = quenched_log_mgf(env, th, n_list)[0];
      std::vector<double> p(nn);
      for (std::size_t i = 0; i < nn; ++i) p[i] = std::exp(alpha * (lm[i] - static_cast<double>(n_list[i]) * lp));
      return p;
    });
  }
  return summarize_fractional_moment(powers, n_list, theta, exact_one, opts);
}

MgfEstimate lambda_a_regen(const BlockPool& pool, const Vec& theta, const LambdaAOptions& opts) {
  MgfEstimate e;
  e.method = Method::RootFind;
  e.theta = theta;
  e.n = static_cast<std::int64_t>(pool.blocks.size());
  e.replicas = pool.replicas;
  if (pool.blocks.size() < std::max<std::size_t>(opts.min_pool, 2))
    throw ConfigError("block pool too small for the root-find tolerance (" + std::to_string(pool.blocks.size()) +
                      " < " + std::to_string(opts.min_pool) + ")");
  if (opts.tail_rate > 0.0 && !ThetaDomain{opts.tail_rate}.contains(theta))
    e.notes.push_back("theta outside C(c3_hat): 2|theta| >= fitted tail rate");
  if (is_zero(theta)) return e;  // r(0) = 1 identically

  std::vector<Vec> ths{theta};
  if (opts.symmetrize && pool.isotropic) {
    ths.clear();
    for (const auto& g : transversal_symmetries(pool.d)) {
      // <theta, g x> = <g^T theta, x>
      IntMatrix gt{};
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) gt[i][j] = g[j][i];
      ths.push_back(rwre::apply(gt, theta));
    }
    e.notes.push_back("estimating equation averaged over transversal symmetries");
  }
  const std::size_t m = pool.blocks.size();
  const std::size_t g = ths.size();
  std::vector<double> tau(m), s(m * g);
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& b = pool.blocks[i];
    tau[i] = static_cast<double>(b.duration);
    for (std::size_t k = 0; k < g; ++k) {
      s[i * g + k] = dot(ths[k], b.displacement);
      lo = std::min(lo, s[i * g + k] / tau[i]);
      hi = std::max(hi, s[i * g + k] / tau[i]);
    }
  }
  // f(L) = log mean exp(s - L tau); decreasing and convex in L
  const auto eval = [&](double lam, double* slope) {
    double mx = -INFINITY;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < g; ++k) mx = std::max(mx, s[i * g + k] - lam * tau[i]);
    double sw = 0.0, stw = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t k = 0; k < g; ++k) {
        const double w = std::exp(s[i * g + k] - lam * tau[i] - mx);
        sw += w;
        stw += w * tau[i];
      }
    if (slope) *slope = -stw / sw;
    return mx + std::log(sw / static_cast<double>(m * g));
  };
  if (eval(lo, nullptr) < 0.0 || eval(hi, nullptr) > 0.0)
    throw ConvergenceError("Lambda_a root bracket not found (theta too large for the pool)");
  while (hi - lo > opts.tol) {
    const double mid = 0.5 * (lo + hi);
    if (eval(mid, nullptr) > 0.0) lo = mid; else hi = mid;
  }
  double lam = 0.5 * (lo + hi);
  for (int it = 0; it < 60; ++it) {
    double sl = 0.0;
    const double f = eval(lam, &sl);
    if (f == 0.0 || sl == 0.0) break;
    const double next = std::clamp(lam - f / sl, lo, hi);
    if (std::abs(next - lam) <= 1e-16 * std::max(1.0, std::abs(lam))) {
      lam = next;
      break;
    }
    lam = next;
  }
  e.value = lam;
  // delta method: Var(L) ~ Var(h) / (M (mean tau h)^2)
  std::vector<double> h(m);
  double sth = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < g; ++k) acc += std::exp(s[i * g + k] - lam * tau[i]);
    h[i] = acc / static_cast<double>(g);
    sth += tau[i] * h[i];
  }
  sth /= static_cast<double>(m);
  e.std_error = std::sqrt(stats::variance(h) / static_cast<double>(m)) / sth;
  return e;
}

ZetaEstimate zeta(const BlockPool& pool, const Vec& theta, double lambda_a) {
  ZetaEstimate z;
  z.lambda = lambda_a;
  z.blocks = pool.blocks.size();
  if (pool.blocks.size() < 2) throw ConfigError("zeta needs a block pool");
  for (std::size_t c = 0; c < static_cast<std::size_t>(pool.d); ++c) {
    std::vector<double> v(pool.blocks.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto& b = pool.blocks[i];
      v[i] = static_cast<double>(b.displacement[c]) *
             std::exp(dot(theta, b.displacement) - lambda_a * static_cast<double>(b.duration));
    }
    const auto ms = stats::mean_se(v);
    z.value[c] = ms.mean;
    z.std_error[c] = ms.std_error;
  }
  return z;
}

}  // namespace rwre
