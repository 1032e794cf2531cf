#include "rwre/walk.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "rwre/parallel.hpp"
#include "rwre/stats.hpp"

namespace rwre {

namespace {

constexpr double kProbTol = 1e-12;

std::size_t distinct_count(std::vector<Site> sites) {
  std::sort(sites.begin(), sites.end());
  return static_cast<std::size_t>(std::unique(sites.begin(), sites.end()) - sites.begin());
}

int sample_index(const Kernel& p, std::size_t k, double u) {
  double c = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    c += p[i];
    if (u < c) return static_cast<int>(i);
  }
  return static_cast<int>(k - 1);
}

Site bfu_increment(const BfuStep& s, int d) {
  Site z{0, 0, 0};
  if (s.b != 0) {
    z[static_cast<std::size_t>(d - 1)] = s.b;
  } else if (s.f_axis >= 0) {
    z[static_cast<std::size_t>(s.f_axis)] = s.f_sign;
  } else if (s.u_axis >= 0) {
    z[static_cast<std::size_t>(s.u_axis)] = s.u_sign;
  }
  return z;
}

LClass classify(std::int32_t n) {
  if (n == 0) return LClass::L0;
  if (n == 1) return LClass::L1;
  return LClass::L2plus;
}

void check_vertical(const ClassMSpec& spec, const StepRange& range, const Kernel& p) {
  const int d = spec.d;
  const double up = p[static_cast<std::size_t>(range.index_of_axis(d - 1, +1))];
  const double down = p[static_cast<std::size_t>(range.index_of_axis(d - 1, -1))];
  if (std::abs(up - spec.p_plus) > kProbTol || std::abs(down - spec.p_minus) > kProbTol)
    throw ConfigError("spec/env mismatch: vertical masses differ from (p_plus, p_minus)");
}

}  // namespace

std::size_t Path::visited_count(std::size_t j) const {
  j = std::min(j, sites.size());
  return distinct_count(std::vector<Site>(sites.begin(), sites.begin() + static_cast<std::ptrdiff_t>(j)));
}

StepGenerator StepGenerator::bfu(const ClassMSpec& spec) {
  const ValidationReport report = validate_class_m(spec);
  if (!report.ok()) throw ConfigError("bfu construction needs a valid class M spec");
  StepGenerator g;
  g.spec_ = spec;
  const double dm1 = spec.d - 1;
  g.p_f_zero_ = 2.0 * spec.epsilon * dm1 / spec.p_zero;
  g.u_floor_ = spec.p_zero / (2.0 * dm1) - spec.epsilon;
  g.u_scale_ = 2.0 * spec.epsilon * dm1;
  return g;
}

int StepGenerator::step(const EnvironmentModel& env, const Site& x, Stream& stream, BfuStep* trace) const {
  const StepRange& range = env.range();
  if (!spec_) return sample_index(env.site_kernel(x), range.size(), stream.uniform());

  const ClassMSpec& s = *spec_;
  const int d = s.d;
  if (range.kind != RangeKind::SpaceOnly || range.d != d) throw ConfigError("spec/env mismatch: range");
  BfuStep st;
  const double ub = stream.uniform();
  if (ub < s.p_plus) {
    st.b = 1;
  } else if (ub < s.p_plus + s.p_zero) {
    st.b = 0;
  } else {
    st.b = -1;
  }
  if (st.b == 0) {
    if (stream.uniform() < p_f_zero_) {
      const Kernel p = env.site_kernel(x);
      check_vertical(s, range, p);
      double c = 0.0;
      const double u = stream.uniform();
      bool chosen = false;
      for (int axis = 0; axis < d - 1 && !chosen; ++axis) {
        for (int sign : {-1, 1}) {
          const double q = (p[static_cast<std::size_t>(range.index_of_axis(axis, sign))] - u_floor_) / u_scale_;
          if (q < -kProbTol || q > 1.0 + kProbTol)
            throw ConfigError("U probability outside [0,1]: environment is not in class M");
          c += q;
          if (u < c || (axis == d - 2 && sign == 1)) {
            st.u_axis = static_cast<std::int8_t>(axis);
            st.u_sign = static_cast<std::int8_t>(sign);
            chosen = true;
            break;
          }
        }
      }
    } else {
      const auto k = static_cast<int>(stream.below(static_cast<std::uint64_t>(2 * (d - 1))));
      st.f_axis = static_cast<std::int8_t>(k / 2);
      st.f_sign = static_cast<std::int8_t>(k % 2 == 0 ? -1 : 1);
    }
  }
  if (trace) *trace = st;
  return range.index_of(bfu_increment(st, d));
}

Path sample_path(const EnvironmentModel& env, std::uint64_t walk_seed, const Site& start, std::size_t n,
                 const StepGenerator& gen, std::vector<BfuStep>* trace) {
  Path p;
  p.start = start;
  p.steps.reserve(n);
  p.sites.reserve(n + 1);
  p.sites.push_back(start);
  if (trace) trace->clear();
  Stream stream(walk_seed);
  Site x = start;
  for (std::size_t i = 0; i < n; ++i) {
    BfuStep st;
    const int k = gen.step(env, x, stream, trace ? &st : nullptr);
    if (trace) trace->push_back(st);
    p.steps.push_back(static_cast<std::uint32_t>(k));
    x = x + env.range().steps[static_cast<std::size_t>(k)];
    p.sites.push_back(x);
  }
  return p;
}

Path tilted_path(const StepRange& range, const Kernel& q_theta, std::uint64_t walk_seed, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < kMaxSteps; ++i) {
    if (i >= range.size() && q_theta[i] != 0.0) throw ConfigError("q_theta has mass outside the range");
    if (q_theta[i] < 0.0) throw ConfigError("q_theta has a negative entry");
    s += q_theta[i];
  }
  if (std::abs(s - 1.0) > kProbTol) throw ConfigError("q_theta is not normalized");
  Path p;
  p.sites.push_back(p.start);
  Stream stream(walk_seed);
  Site x = p.start;
  for (std::size_t i = 0; i < n; ++i) {
    const int k = sample_index(q_theta, range.size(), stream.uniform());
    p.steps.push_back(static_cast<std::uint32_t>(k));
    x = x + range.steps[static_cast<std::size_t>(k)];
    p.sites.push_back(x);
  }
  return p;
}

Path tilted_path(const DiscreteLaw& law, std::uint64_t walk_seed, std::size_t n) {
  if (law.atoms.empty() || law.atoms.size() != law.probs.size()) throw ConfigError("malformed discrete law");
  std::vector<double> cum(law.probs.size());
  double s = 0.0;
  for (std::size_t i = 0; i < law.probs.size(); ++i) {
    if (law.probs[i] < 0.0) throw ConfigError("discrete law has a negative entry");
    s += law.probs[i];
    cum[i] = s;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError("discrete law is not normalized");
  cum.back() = 1.0;
  Path p;
  p.sites.push_back(p.start);
  Stream stream(walk_seed);
  Site x = p.start;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = stream.uniform();
    const auto k = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin()), cum.size() - 1);
    p.steps.push_back(static_cast<std::uint32_t>(k));
    x = x + law.atoms[k];
    p.sites.push_back(x);
  }
  return p;
}

RegenResult regeneration_split(const EnvironmentModel& env, const StepGenerator& gen, std::uint64_t walk_seed,
                               const Site& start, std::size_t m, const RegenOptions& opts) {
  const int d = env.d();
  const auto ax = static_cast<std::size_t>(d - 1);
  Vec ed{0.0, 0.0, 0.0};
  ed[ax] = 1.0;
  if (!non_nestling(env.marginal(), ed)) throw ConfigError("law is not non-nestling relative to e_d");
  if (opts.horizon < 1) throw ConfigError("horizon must be >= 1");

  RegenResult out;
  const StepRange& range = env.range();
  const std::int64_t level0 = start[ax];

  struct Candidate {
    std::int64_t time;
    std::int64_t level;
  };

  for (std::int64_t attempt = 0;; ++attempt) {
    if (attempt >= opts.max_attempts) throw BudgetError("no walk with beta = infinity within max_attempts");
    out.attempts = attempt + 1;
    const EnvironmentModel e =
        (attempt == 0 || !opts.fresh_environment_on_restart)
            ? env
            : env.with_seed(derive_seed(env.seed(), Role::Attempt, static_cast<std::uint64_t>(attempt)));
    Stream stream(attempt == 0 ? walk_seed : derive_seed(walk_seed, Role::Attempt, static_cast<std::uint64_t>(attempt)));

    out.blocks.clear();
    out.late_violations = 0;
    out.env_seed = e.seed();

    // sites and U flags since the last confirmed regeneration time
    std::vector<Site> sites{start};
    std::vector<std::uint8_t> u_flags;
    std::int64_t offset = 0;  // time index of sites[0]
    std::deque<Candidate> cands;
    std::int64_t record = level0;
    std::int64_t confirmed_level = level0;
    bool undercut_flag = false;
    Site x = start;
    bool rejected = false;

    for (std::int64_t t = 1; out.blocks.size() < m; ++t) {
      if (++out.steps > opts.max_steps)
        throw BudgetError("horizon exhausted: " + std::to_string(out.blocks.size()) + " of " + std::to_string(m) +
                          " blocks after max_steps");
      BfuStep st;
      const int k = gen.step(e, x, stream, gen.is_bfu() ? &st : nullptr);
      u_flags.push_back(gen.is_bfu() && st.uses_environment() ? 1 : 0);
      x = x + range.steps[static_cast<std::size_t>(k)];
      sites.push_back(x);
      const std::int64_t level = x[ax];

      if (level < level0 && out.blocks.empty()) {
        rejected = true;
        break;
      }
      if (level < confirmed_level && !out.blocks.empty() && !undercut_flag) {
        ++out.late_violations;
        undercut_flag = true;
      }
      while (!cands.empty() && cands.back().level > level) cands.pop_back();
      if (level > record) {
        cands.push_back({t, level});
        record = level;
      }
      while (!cands.empty() && t - cands.front().time >= opts.horizon && out.blocks.size() < m) {
        const Candidate c = cands.front();
        cands.pop_front();
        const auto len = static_cast<std::size_t>(c.time - offset);
        RegenBlock b;
        b.displacement = sites[len] - sites[0];
        b.duration = c.time - offset;
        std::vector<Site> seen(sites.begin(), sites.begin() + static_cast<std::ptrdiff_t>(len));
        std::sort(seen.begin(), seen.end());
        seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
        b.visited = static_cast<std::int32_t>(seen.size());
        for (const Site& s : seen) b.drift_sum = b.drift_sum + drift(e.site_kernel(s), range);
        for (std::size_t i = 0; i < len; ++i) b.u_count += u_flags[i];
        b.l_class = classify(b.u_count);
        b.confirmed_to = opts.horizon;
        out.blocks.push_back(b);
        sites.erase(sites.begin(), sites.begin() + static_cast<std::ptrdiff_t>(len));
        u_flags.erase(u_flags.begin(), u_flags.begin() + static_cast<std::ptrdiff_t>(len));
        offset = c.time;
        confirmed_level = c.level;
        undercut_flag = false;
      }
    }
    if (!rejected) return out;
  }
}

BfuRecord decompose_bfu(const ClassMSpec& spec, const EnvironmentModel& env, const Path& path,
                        std::span<const BfuStep> trace, std::size_t from, std::size_t to) {
  if (to > path.length() || from > to || trace.size() < to) throw ConfigError("bfu segment out of range");
  const StepRange& range = env.range();
  if (range.kind != RangeKind::SpaceOnly || range.d != spec.d) throw ConfigError("spec/env mismatch: range");
  const int d = spec.d;
  const double floor_p = spec.p_zero / (2.0 * (d - 1)) - spec.epsilon;
  const double scale = 2.0 * spec.epsilon * (d - 1);
  BfuRecord r;
  r.running_count.push_back(0);
  for (std::size_t i = from; i < to; ++i) {
    const BfuStep& s = trace[i];
    const Kernel p = env.site_kernel(path.sites[i]);
    check_vertical(spec, range, p);
    for (int axis = 0; axis < d - 1; ++axis) {
      for (int sign : {-1, 1}) {
        const double q = (p[static_cast<std::size_t>(range.index_of_axis(axis, sign))] - floor_p) / scale;
        if (q < -kProbTol || q > 1.0 + kProbTol)
          throw ConfigError("U probability outside [0,1]: environment is not in class M");
      }
    }
    const Site inc = path.sites[i + 1] - path.sites[i];
    if (bfu_increment(s, d) != inc) throw ConfigError("bfu reconstruction identity fails at step " + std::to_string(i));
    r.steps.push_back(s);
    r.running_count.push_back(r.running_count.back() + (s.uses_environment() ? 1 : 0));
  }
  r.l_class = classify(r.running_count.back());
  return r;
}

BlockPool build_block_pool(std::shared_ptr<const MarginalLaw> marginal, const StepGenerator& gen,
                           std::uint64_t master_seed, std::size_t replicas, std::size_t blocks_per_replica,
                           const RegenOptions& opts, int workers) {
  if (replicas == 0 || blocks_per_replica == 0) throw ConfigError("block pool needs replicas and blocks > 0");
  auto runs = parallel_map(replicas, workers, [&](std::size_t r) {
    const EnvironmentModel env(marginal, derive_seed(master_seed, Role::Environment, r));
    return regeneration_split(env, gen, derive_seed(master_seed, Role::Walk, r), Site{0, 0, 0}, blocks_per_replica,
                              opts);
  });
  BlockPool pool;
  pool.d = marginal->d();
  pool.replicas = replicas;
  pool.blocks_per_replica = blocks_per_replica;
  pool.horizon = opts.horizon;
  pool.bfu = gen.is_bfu();
  pool.isotropic = marginal->isotropic();
  pool.mean_drift = marginal->mean_drift();
  pool.blocks.reserve(replicas * blocks_per_replica);
  for (auto& run : runs) {
    pool.attempts += run.attempts;
    pool.late_violations += run.late_violations;
    pool.blocks.insert(pool.blocks.end(), run.blocks.begin(), run.blocks.end());
  }
  return pool;
}

double TailFit::tail_at(std::int64_t t) const {
  if (!std::isfinite(slope)) return 0.0;
  return std::exp(intercept + slope * static_cast<double>(t));
}

TailFit fit_duration_tail(std::span<const RegenBlock> blocks, std::size_t min_count) {
  TailFit f;
  if (blocks.empty()) throw ConfigError("tail fit needs blocks");
  std::vector<std::int64_t> dur;
  dur.reserve(blocks.size());
  for (const auto& b : blocks) dur.push_back(b.duration);
  std::sort(dur.begin(), dur.end());
  const double total = static_cast<double>(dur.size());
  std::vector<double> xs, ys;
  for (std::int64_t n = 1;; ++n) {
    const auto above = static_cast<std::size_t>(dur.end() - std::upper_bound(dur.begin(), dur.end(), n));
    if (above < std::max<std::size_t>(min_count, 1)) break;
    xs.push_back(static_cast<double>(n));
    ys.push_back(std::log(static_cast<double>(above) / total));
  }
  f.n_lo = 1;
  f.n_hi = static_cast<std::int64_t>(xs.size());
  if (xs.size() < 3) {
    // tau is (almost) bounded: no tail to fit
    f.slope = -INFINITY;
    f.r_squared = 1.0;
    return f;
  }
  const stats::LinearFit lf = stats::linear_fit(xs, ys);
  f.slope = lf.slope;
  f.intercept = lf.intercept;
  f.r_squared = lf.r_squared;
  return f;
}

IidDiagnostics block_iid_diagnostics(const BlockPool& pool) {
  IidDiagnostics out;
  const std::size_t per = pool.blocks_per_replica;
  if (per < 3) return out;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < pool.replicas; ++r)
    for (std::size_t i = 1; i < per; ++i) {
      sum += static_cast<double>(pool.blocks[r * per + i].duration);
      ++n;
    }
  const double mean = sum / static_cast<double>(n);
  double num = 0.0, den = 0.0;
  std::size_t pairs = 0;
  for (std::size_t r = 0; r < pool.replicas; ++r) {
    for (std::size_t i = 1; i < per; ++i) {
      const double a = static_cast<double>(pool.blocks[r * per + i].duration) - mean;
      den += a * a;
      if (i + 1 < per) {
        num += a * (static_cast<double>(pool.blocks[r * per + i + 1].duration) - mean);
        ++pairs;
      }
    }
  }
  out.blocks = n;
  out.lag1_autocorrelation = den > 0.0 ? (num / static_cast<double>(pairs)) / (den / static_cast<double>(n)) : 0.0;
  out.lag1_band = 3.0 / std::sqrt(static_cast<double>(pairs));
  if (per >= 5 && pool.replicas >= 2) {
    std::vector<double> a, b;
    for (std::size_t r = 0; r < pool.replicas; ++r) {
      a.push_back(static_cast<double>(pool.blocks[r * per + 1].duration));
      b.push_back(static_cast<double>(pool.blocks[r * per + 4].duration));
    }
    const auto ks = stats::ks_two_sample(std::move(a), std::move(b));
    out.ks_statistic = ks.statistic;
    out.ks_p_value = ks.p_value;
  }
  return out;
}

double local_clt_deviation(const Kernel& q_theta, std::size_t m, const Site& z, const Site& z_prime) {
  const StepRange range = StepRange::space_time(3);
  if (m < 1) throw ConfigError("local CLT deviation needs m >= 1");
  if (m > 1024) throw BudgetError("m too large for the exact local CLT DP (cap 1024)");
  if (range.index_of(z) < 0 || range.index_of(z_prime) < 0) throw ConfigError("z and z' must lie in the 2+1 range");
  // P_0 after m steps on the transversal plane; P_z(X_m = x) = P_0(X_m = x - z)
  const auto half = static_cast<std::int64_t>(m) + 1;
  const auto w = static_cast<std::size_t>(2 * half + 1);
  std::vector<double> cur(w * w, 0.0), nxt(w * w, 0.0);
  auto at = [&](std::int64_t a, std::int64_t b) { return static_cast<std::size_t>(a + half) * w + static_cast<std::size_t>(b + half); };
  cur[at(0, 0)] = 1.0;
  for (std::size_t step = 0; step < m; ++step) {
    std::fill(nxt.begin(), nxt.end(), 0.0);
    const auto r = static_cast<std::int64_t>(step);
    for (std::int64_t a = -r; a <= r; ++a) {
      for (std::int64_t b = -r; b <= r; ++b) {
        const double v = cur[at(a, b)];
        if (v == 0.0) continue;
        for (std::size_t k = 0; k < range.size(); ++k)
          nxt[at(a + range.steps[k][0], b + range.steps[k][1])] += v * q_theta[k];
      }
    }
    std::swap(cur, nxt);
  }
  auto prob = [&](std::int64_t a, std::int64_t b) {
    if (a < -half || a > half || b < -half || b > half) return 0.0;
    return cur[at(a, b)];
  };
  double sup = 0.0;
  const std::int64_t lim = half + 1;
  for (std::int64_t a = -lim; a <= lim; ++a)
    for (std::int64_t b = -lim; b <= lim; ++b)
      sup = std::max(sup, std::abs(prob(a - z[0], b - z[1]) - prob(a - z_prime[0], b - z_prime[1])));
  return sup;
}

}  // namespace rwre
