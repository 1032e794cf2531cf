#include "rwre/fracmom.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

#include "rwre/parallel.hpp"
#include "rwre/rng.hpp"
#include "rwre/stats.hpp"

namespace rwre {
namespace {

std::int64_t exact_sqrt(std::int64_t n) {
  if (n < 0) return -1;
  auto r = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r * r == n ? r : -1;
}

std::size_t axis(int d) { return static_cast<std::size_t>(d - 1); }

// Transversal coordinates (a, b) of a site; b = 0 when d = 2.
struct Planar {
  std::int64_t a = 0;
  std::int64_t b = 0;
};
Planar planar(const Site& x, int d) { return d == 2 ? Planar{x[0], 0} : Planar{x[0], x[1]}; }

// Largest m >= 0 with m^2 < rem, or -1 when rem <= 0.
std::int64_t strict_half_width(double rem) {
  if (rem <= 0.0) return -1;
  auto m = static_cast<std::int64_t>(std::floor(std::sqrt(rem)));
  while (m >= 0 && static_cast<double>(m * m) >= rem) --m;
  while (static_cast<double>((m + 1) * (m + 1)) < rem) ++m;
  return m;
}

// Floor-nearest of delta * xi, transversal part.
Planar shift(const Vec& xi, std::int64_t delta, int d) {
  return planar(floor_nearest(static_cast<double>(delta) * xi, d), d);
}

// Values on one level of a tube, stored on a bounding box with row prefix sums along b.
class LevelGrid {
 public:
  LevelGrid() = default;
  LevelGrid(std::int64_t a_lo, std::int64_t a_hi, std::int64_t b_lo, std::int64_t b_hi)
      : a_lo_(a_lo), a_hi_(a_hi), b_lo_(b_lo), b_hi_(b_hi),
        width_(b_hi - b_lo + 2),
        prefix_(static_cast<std::size_t>((a_hi - a_lo + 1) * (b_hi - b_lo + 2)), 0.0) {}

  void add(const Planar& p, double v) { prefix_[slot(p.a, p.b - b_lo_ + 1)] += v; }
  void finish() {
    for (std::int64_t a = a_lo_; a <= a_hi_; ++a)
      for (std::int64_t k = 1; k < width_; ++k) prefix_[slot(a, k)] += prefix_[slot(a, k - 1)];
  }
  /// Sum over the row a and b in [lo, hi].
  double row(std::int64_t a, std::int64_t lo, std::int64_t hi) const {
    if (a < a_lo_ || a > a_hi_) return 0.0;
    lo = std::max(lo, b_lo_);
    hi = std::min(hi, b_hi_);
    if (lo > hi) return 0.0;
    return prefix_[slot(a, hi - b_lo_ + 1)] - prefix_[slot(a, lo - b_lo_)];
  }
  /// Sum over sites p with |p - c|^2 < r2.
  double disk(const Planar& c, double r2) const {
    const std::int64_t reach = strict_half_width(r2);
    if (reach < 0) return 0.0;
    double total = 0.0;
    const std::int64_t lo = std::max(c.a - reach, a_lo_), hi = std::min(c.a + reach, a_hi_);
    for (std::int64_t a = lo; a <= hi; ++a) {
      const double da = static_cast<double>(a - c.a);
      const std::int64_t w = strict_half_width(r2 - da * da);
      if (w < 0) continue;
      total += row(a, c.b - w, c.b + w);
    }
    return total;
  }

 private:
  std::size_t slot(std::int64_t a, std::int64_t k) const {
    return static_cast<std::size_t>((a - a_lo_) * width_ + k);
  }
  std::int64_t a_lo_ = 0, a_hi_ = -1, b_lo_ = 0, b_hi_ = -1, width_ = 1;
  std::vector<double> prefix_;
};

struct Level {
  std::int64_t time = 0;
  std::vector<std::pair<Planar, double>> points;
  LevelGrid grid;
};

// Groups tube sites by e_d coordinate and builds prefix grids of `values`.
std::vector<Level> group_levels(std::span<const Site> tube, std::span<const double> values, int d) {
  std::map<std::int64_t, Level> by_time;
  for (std::size_t i = 0; i < tube.size(); ++i) {
    auto& lvl = by_time[tube[i][axis(d)]];
    lvl.time = tube[i][axis(d)];
    lvl.points.emplace_back(planar(tube[i], d), values[i]);
  }
  std::vector<Level> out;
  out.reserve(by_time.size());
  for (auto& [t, lvl] : by_time) {
    std::int64_t a_lo = std::numeric_limits<std::int64_t>::max(), a_hi = std::numeric_limits<std::int64_t>::min();
    std::int64_t b_lo = a_lo, b_hi = a_hi;
    for (const auto& [p, v] : lvl.points) {
      a_lo = std::min(a_lo, p.a), a_hi = std::max(a_hi, p.a);
      b_lo = std::min(b_lo, p.b), b_hi = std::max(b_hi, p.b);
    }
    lvl.grid = LevelGrid(a_lo, a_hi, b_lo, b_hi);
    for (const auto& [p, v] : lvl.points) lvl.grid.add(p, v);
    lvl.grid.finish();
    out.push_back(std::move(lvl));
  }
  return out;
}

double tilt_statistic(const EnvironmentModel& env, const TiltSchedule& s, std::span<const Site> tube) {
  if (s.flavor == TiltFlavor::Quadratic) return d_quadratic(env, s.theta, tube, s.c2, s.center);
  return d_linear(env, s.theta, tube);
}

std::vector<Site> ball_offsets(int dims, double radius) {
  const double r2 = radius * radius * (1.0 + 1e-12);
  const auto reach = static_cast<std::int64_t>(std::floor(radius + 1e-9));
  std::vector<Site> out;
  if (dims == 1) {
    for (std::int64_t a = -reach; a <= reach; ++a) out.push_back({a, 0, 0});
  } else {
    for (std::int64_t a = -reach; a <= reach; ++a)
      for (std::int64_t b = -reach; b <= reach; ++b)
        if (static_cast<double>(a * a + b * b) <= r2) out.push_back({a, b, 0});
  }
  return out;
}

// Cells y in Z^dims with |y| <= r, ordered by |y| then lexicographically.
std::vector<Site> cells_within(int dims, int r) {
  std::vector<Site> out = ball_offsets(dims, static_cast<double>(r));
  std::stable_sort(out.begin(), out.end(), [](const Site& x, const Site& y) {
    return x[0] * x[0] + x[1] * x[1] < y[0] * y[0] + y[1] * y[1];
  });
  return out;
}

double cell_norm(const Site& y) { return std::sqrt(static_cast<double>(y[0] * y[0] + y[1] * y[1])); }

// Sum over |y| > r of P(|U| >= |y| - 1)^alpha for the weighted sample (|U|, w).
double tail_term(std::vector<std::pair<double, double>> sample, int dims, int r, double alpha) {
  if (sample.empty()) return 0.0;
  std::sort(sample.begin(), sample.end());
  std::vector<double> suffix(sample.size() + 1, 0.0);
  for (std::size_t i = sample.size(); i-- > 0;) suffix[i] = suffix[i + 1] + sample[i].second;
  const double u_max = sample.back().first;
  const auto reach = static_cast<std::int64_t>(std::ceil(u_max)) + 2;
  double total = 0.0;
  auto term = [&](const Site& y) {
    const double ny = cell_norm(y);
    if (ny <= static_cast<double>(r)) return;
    const double thr = ny - 1.0;
    const auto it = std::lower_bound(sample.begin(), sample.end(), std::make_pair(thr, -1.0));
    const double p = suffix[static_cast<std::size_t>(it - sample.begin())];
    if (p > 0.0) total += std::pow(p, alpha);
  };
  if (dims == 1) {
    for (std::int64_t a = -reach; a <= reach; ++a) term({a, 0, 0});
  } else {
    for (std::int64_t a = -reach; a <= reach; ++a)
      for (std::int64_t b = -reach; b <= reach; ++b) term({a, b, 0});
  }
  return total;
}

double per_cell_se(double s1, double s2, double m) {
  if (m < 2.0) return 0.0;
  const double mean = s1 / m;
  const double var = std::max(0.0, (s2 / m - mean * mean) * m / (m - 1.0));
  return std::sqrt(var / m);
}

void fill_rows(SingleBlockResult& out, const std::vector<Site>& cells, const std::vector<double>& s1,
               const std::vector<double>& s2, double m, double alpha) {
  double cum = 0.0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    BlockRow row;
    row.y = cells[c];
    row.value = s1[c] / m;
    row.std_error = per_cell_se(s1[c], s2[c], m);
    row.alpha_power = row.value > 0.0 ? std::pow(row.value, alpha) : 0.0;
    cum += row.alpha_power;
    row.cumulative = cum;
    out.rows.push_back(row);
  }
  out.truncated_sum = cum;
}

}  // namespace

double k_min(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  const double a = alpha / (1.0 - alpha);
  auto h = [&](double k) { return std::log(12.0) + a * k - 2.0 * k * k; };
  double lo = 0.0, hi = 1.0;
  while (h(hi) > 0.0) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (h(mid) > 0.0 ? lo : hi) = mid;
  }
  return hi;
}

TiltSchedule make_schedule(int d, RangeKind kind, TiltFlavor flavor, const Vec& theta, double alpha,
                           std::int64_t n, double c1, double c2, const Vec& center) {
  if (d != 2 && d != 3) throw ConfigError("d must be 2 or 3");
  const std::int64_t root = exact_sqrt(n);
  if (n < 4 || root < 0) throw ConfigError("block length n must be a perfect square >= 4");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (!(c1 >= 1.0)) throw ConfigError("C1 must be >= 1");
  if (!(c2 >= 1.0)) throw ConfigError("C2 must be >= 1");
  if (flavor == TiltFlavor::Quadratic && d != 3) throw ConfigError("quadratic tilt requires the 2+1 setting");
  for (std::size_t i = static_cast<std::size_t>(d); i < kMaxDim; ++i)
    if (theta[i] != 0.0) throw ConfigError("theta has components beyond d");

  TiltSchedule s;
  s.d = d;
  s.kind = kind;
  s.flavor = flavor;
  s.theta = theta;
  s.alpha = alpha;
  s.n = n;
  s.sqrt_n = root;
  s.c1 = c1;
  s.c2 = c2;
  s.k = k_min(alpha);
  const double dn = static_cast<double>(n);
  s.delta_n = flavor == TiltFlavor::Linear ? 1.0 / (std::sqrt(c1) * std::pow(dn, 0.75))
                                           : 1.0 / (dn * std::sqrt(std::log(dn)));
  s.a_n = std::pow(dn, 0.125);
  s.center = center;
  return s;
}

TiltSchedule make_schedule(const MarginalLaw& law, TiltFlavor flavor, const Vec& theta, double alpha,
                           std::int64_t n, double c1, double c2) {
  if (law.range().kind != RangeKind::SpaceTime)
    throw ConfigError("space-only schedules need zeta(theta) as the center");
  return make_schedule(law.d(), RangeKind::SpaceTime, flavor, theta, alpha, n, c1, c2, grad_log_phi(law, theta));
}

double f_k(double k, double u) { return u >= std::exp(k * k) ? -k : 0.0; }

Site floor_nearest(const Vec& u, int d) {
  Site out{0, 0, 0};
  for (std::size_t i = 0; i < static_cast<std::size_t>(d); ++i)
    out[i] = static_cast<std::int64_t>(std::ceil(u[i] - 0.5));
  return out;
}

Site cell_of(const Vec& u, std::int64_t sqrt_n, int dims) {
  Site y{0, 0, 0};
  const double r = static_cast<double>(sqrt_n);
  for (std::size_t i = 0; i < static_cast<std::size_t>(dims); ++i)
    y[i] = static_cast<std::int64_t>(std::floor(u[i] / r + 0.5));
  return y;
}

std::vector<Site> tube_sites(const TiltSchedule& s, std::int64_t j, const Site& y_prev, const Site& y_cur) {
  if (j < 1) throw ConfigError("tube index j must be >= 1");
  const double rn = static_cast<double>(s.sqrt_n);
  const double width = s.c1 * rn;
  std::vector<Site> out;

  if (s.kind == RangeKind::SpaceTime) {
    const std::vector<Site> disk = ball_offsets(s.d - 1, width);
    for (std::int64_t i = (j - 1) * s.n; i < j * s.n; ++i) {
      const Site c = floor_nearest(static_cast<double>(i) * s.center, s.d);
      for (const auto& o : disk) {
        if (s.d == 2) {
          out.push_back({c[0] + s.sqrt_n * y_prev[0] + o[0], i, 0});
        } else {
          out.push_back({c[0] + s.sqrt_n * y_prev[0] + o[0], c[1] + s.sqrt_n * y_prev[1] + o[1], i});
        }
      }
    }
    return out;
  }

  if (s.d != 2) throw ConfigError("space-only tubes are implemented for d=2");
  const double z1 = s.center[0], z2 = s.center[1];
  if (!(z2 > 0.0)) throw ConfigError("space-only tube needs <zeta, e_2> > 0");
  const double dn = static_cast<double>(s.n), dj = static_cast<double>(j);
  const double lo = (dj - 1.0) * dn * z2 + rn * (static_cast<double>(y_prev[1]) + 0.5);
  const double hi = dj * dn * z2 + rn * (static_cast<double>(y_cur[1]) - 0.5);
  const auto i_lo = static_cast<std::int64_t>(std::ceil(lo));
  const auto i_hi = static_cast<std::int64_t>(std::ceil(hi)) - 1;  // i < hi
  for (std::int64_t i = i_lo; i <= i_hi; ++i) {
    const double c = rn * static_cast<double>(y_prev[0]) +
                     (z1 / z2) * (static_cast<double>(i) - rn * static_cast<double>(y_prev[1]));
    const auto s_lo = static_cast<std::int64_t>(std::ceil(c - width - 1e-12));
    const auto s_hi = static_cast<std::int64_t>(std::floor(c + width + 1e-12));
    for (std::int64_t x = s_lo; x <= s_hi; ++x) out.push_back({x, i, 0});
  }
  return out;
}

namespace {
// Space-time laws have <v, e_d> = 1 identically, so only the transversal part of theta
// contributes; dropping the e_d part keeps a = 0 exact on the e_d axis.
Vec effective_theta(const EnvironmentModel& env, const Vec& theta) {
  return env.range().kind == RangeKind::SpaceTime ? transversal(theta, env.d()) : theta;
}
}  // namespace

double a_field(const EnvironmentModel& env, const Vec& theta, const Site& x, Convention) {
  const Vec v = drift(env.site_kernel(x), env.range());
  return dot(effective_theta(env, theta), v - env.marginal().mean_drift());
}

double d_linear(const EnvironmentModel& env, const Vec& theta, std::span<const Site> tube) {
  const Vec th = effective_theta(env, theta);
  if (is_zero(th)) return 0.0;
  const Vec centre = env.marginal().mean_drift();
  double total = 0.0;
  for (const auto& x : tube) total += dot(th, drift(env.site_kernel(x), env.range()) - centre);
  return total;
}

double v_kernel(const Site& x, const Site& y, double c2, const Vec& xi, int d) {
  const std::size_t t = axis(d);
  if (x[t] == y[t]) return 0.0;
  const Site& early = x[t] < y[t] ? x : y;
  const Site& late = x[t] < y[t] ? y : x;
  const std::int64_t delta = late[t] - early[t];
  const Planar e = planar(early, d), l = planar(late, d), f = shift(xi, delta, d);
  const double da = static_cast<double>(l.a - e.a - f.a);
  const double db = static_cast<double>(l.b - e.b - f.b);
  return da * da + db * db < c2 * c2 * static_cast<double>(delta) ? 1.0 / static_cast<double>(delta) : 0.0;
}

double d_quadratic(const EnvironmentModel& env, const Vec& theta, std::span<const Site> tube, double c2,
                   const Vec& xi) {
  const int d = env.d();
  std::vector<double> a(tube.size());
  for (std::size_t i = 0; i < tube.size(); ++i) a[i] = a_field(env, theta, tube[i]);
  const std::vector<Level> levels = group_levels(tube, a, d);
  double total = 0.0;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    for (std::size_t l = k + 1; l < levels.size(); ++l) {
      const std::int64_t delta = levels[l].time - levels[k].time;
      const Planar f = shift(xi, delta, d);
      const double r2 = c2 * c2 * static_cast<double>(delta);
      double pair = 0.0;
      for (const auto& [p, v] : levels[k].points) {
        if (v == 0.0) continue;
        pair += v * levels[l].grid.disk({p.a + f.a, p.b + f.b}, r2);
      }
      total += 2.0 * pair / static_cast<double>(delta);
    }
  }
  return total;
}

double h_of_n(std::int64_t n) {
  double h = 0.0;
  for (std::int64_t k = 1; k < n; ++k) h += 2.0 * static_cast<double>(n - k) / static_cast<double>(k);
  return h;
}

double nu_statistic(const Path& path, std::int64_t n, double c2, const Vec& xi) {
  if (path.sites.size() < static_cast<std::size_t>(n) + 1) throw ConfigError("path shorter than n");
  const int d = path.sites.size() > 1 && path.sites[1][2] != 0 ? 3 : 2;
  double nu = 0.0;
  for (std::int64_t i = 1; i <= n; ++i)
    for (std::int64_t j = i + 1; j <= n; ++j)
      nu += 2.0 * v_kernel(path.sites[static_cast<std::size_t>(i)], path.sites[static_cast<std::size_t>(j)], c2, xi, d);
  return nu;
}

double kernel_column_max(const Path& path, std::int64_t n, double c2, const Vec& xi) {
  const int d = path.sites.size() > 1 && path.sites[1][2] != 0 ? 3 : 2;
  const std::size_t t = axis(d);
  double best = 0.0;
  for (std::int64_t l = 1; l <= n; ++l) {
    struct Disk {
      Planar c;
      double r2, w;
    };
    std::vector<Disk> disks;
    std::int64_t a_lo = std::numeric_limits<std::int64_t>::max(), a_hi = std::numeric_limits<std::int64_t>::min();
    std::int64_t b_lo = a_lo, b_hi = a_hi;
    for (std::int64_t k = 1; k <= n; ++k) {
      const Site& x = path.sites[static_cast<std::size_t>(k)];
      const std::int64_t delta = std::abs(x[t] - l);
      if (delta == 0) continue;
      const Planar p = planar(x, d), f = shift(xi, delta, d);
      const Planar c = x[t] < l ? Planar{p.a + f.a, p.b + f.b} : Planar{p.a - f.a, p.b - f.b};
      const double r2 = c2 * c2 * static_cast<double>(delta);
      const std::int64_t reach = strict_half_width(r2);
      if (reach < 0) continue;
      disks.push_back({c, r2, 1.0 / static_cast<double>(delta)});
      a_lo = std::min(a_lo, c.a - reach), a_hi = std::max(a_hi, c.a + reach);
      b_lo = std::min(b_lo, c.b - reach), b_hi = std::max(b_hi, c.b + reach);
    }
    if (disks.empty()) continue;
    if (d == 2) b_lo = b_hi = 0;
    const std::int64_t w = b_hi - b_lo + 2;
    std::vector<double> diff(static_cast<std::size_t>((a_hi - a_lo + 1) * w), 0.0);
    for (const auto& dk : disks) {
      const std::int64_t reach = strict_half_width(dk.r2);
      for (std::int64_t a = dk.c.a - reach; a <= dk.c.a + reach; ++a) {
        const double da = static_cast<double>(a - dk.c.a);
        const std::int64_t hw = d == 2 ? (da * da < dk.r2 ? 0 : -1) : strict_half_width(dk.r2 - da * da);
        if (hw < 0) continue;
        const std::size_t row = static_cast<std::size_t>((a - a_lo) * w);
        diff[row + static_cast<std::size_t>(dk.c.b - hw - b_lo)] += dk.w;
        diff[row + static_cast<std::size_t>(dk.c.b + hw - b_lo + 1)] -= dk.w;
      }
    }
    for (std::int64_t a = a_lo; a <= a_hi; ++a) {
      double run = 0.0;
      const std::size_t row = static_cast<std::size_t>((a - a_lo) * w);
      for (std::int64_t k = 0; k + 1 < w; ++k) {
        run += diff[row + static_cast<std::size_t>(k)];
        best = std::max(best, run);
      }
    }
  }
  return best;
}

double kernel_tube_total(const Path& path, const TiltSchedule& s) {
  const int d = s.d;
  const std::size_t t = axis(d);
  const std::vector<Site> tube = tube_sites(s, 1, {0, 0, 0});
  const std::vector<double> ones(tube.size(), 1.0);
  const std::vector<Level> levels = group_levels(tube, ones, d);
  double total = 0.0;
  for (std::int64_t k = 1; k <= s.n; ++k) {
    const Site& x = path.sites[static_cast<std::size_t>(k)];
    const Planar p = planar(x, d);
    for (const auto& lvl : levels) {
      const std::int64_t delta = std::abs(x[t] - lvl.time);
      if (delta == 0) continue;
      const Planar f = shift(s.center, delta, d);
      const Planar c = x[t] < lvl.time ? Planar{p.a + f.a, p.b + f.b} : Planar{p.a - f.a, p.b - f.b};
      total += lvl.grid.disk(c, s.c2 * s.c2 * static_cast<double>(delta)) / static_cast<double>(delta);
    }
  }
  return total;
}

double kernel_v2_sum(const TiltSchedule& s) {
  if (s.kind != RangeKind::SpaceTime) throw ConfigError("V^2 tube sum is defined for space-time tubes");
  const int d = s.d;
  const std::vector<Site> shape = ball_offsets(d - 1, s.c1 * static_cast<double>(s.sqrt_n));
  // Disk shape placed on a single level at time 0; pair counts are memoized by (delta, offset).
  std::vector<Site> shape_sites;
  for (const auto& o : shape) shape_sites.push_back({o[0], d == 2 ? 0 : o[1], 0});
  const std::vector<double> ones(shape_sites.size(), 1.0);
  const std::vector<Level> base = group_levels(shape_sites, ones, d);
  const LevelGrid& grid = base.front().grid;

  std::vector<Planar> centers(static_cast<std::size_t>(s.n));
  for (std::int64_t i = 0; i < s.n; ++i) centers[static_cast<std::size_t>(i)] = shift(s.center, i, d);

  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, double> memo;
  double total = 0.0;
  for (std::int64_t k = 0; k < s.n; ++k) {
    for (std::int64_t l = k + 1; l < s.n; ++l) {
      const std::int64_t delta = l - k;
      const Planar f = shift(s.center, delta, d);
      const Planar& ck = centers[static_cast<std::size_t>(k)];
      const Planar& cl = centers[static_cast<std::size_t>(l)];
      const Planar o{cl.a - ck.a - f.a, cl.b - ck.b - f.b};
      const auto key = std::make_tuple(delta, o.a, o.b);
      auto it = memo.find(key);
      if (it == memo.end()) {
        // pairs (u, w) in D x D with |o + w - u| < C2 sqrt(delta)
        double count = 0.0;
        const double r2 = s.c2 * s.c2 * static_cast<double>(delta);
        for (const auto& u : shape) count += grid.disk({u[0] - o.a, u[1] - o.b}, r2);
        it = memo.emplace(key, count).first;
      }
      total += 2.0 * it->second / static_cast<double>(delta * delta);
    }
  }
  return total;
}

double select_c2(const Kernel& q_theta, const StepRange& range, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
  const int d = range.d;
  const int dims = d - 1;
  double mean[2] = {0.0, 0.0};
  double cov[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  for (std::size_t k = 0; k < range.size(); ++k) {
    for (int i = 0; i < dims; ++i) mean[i] += q_theta[k] * static_cast<double>(range.steps[k][static_cast<std::size_t>(i)]);
  }
  for (std::size_t k = 0; k < range.size(); ++k) {
    double z[2] = {0.0, 0.0};
    for (int i = 0; i < dims; ++i) z[i] = static_cast<double>(range.steps[k][static_cast<std::size_t>(i)]) - mean[i];
    for (int i = 0; i < dims; ++i)
      for (int j = 0; j < dims; ++j) cov[i][j] += q_theta[k] * z[i] * z[j];
  }
  const double target = 1.0 - delta / 2.0;

  auto prob = [&](double c) -> double {
    if (dims == 1) {
      const double sd = std::sqrt(cov[0][0]);
      return sd > 0.0 ? 2.0 * stats::normal_cdf(c / sd) - 1.0 : 1.0;
    }
    const double tr = cov[0][0] + cov[1][1];
    const double det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    const double l1 = tr / 2.0 + disc, l2 = std::max(0.0, tr / 2.0 - disc);
    if (l1 <= 0.0) return 1.0;
    const double g_max = c / std::sqrt(l1);
    auto inner = [&](double g) {
      const double rem = c * c - l1 * g * g;
      if (rem <= 0.0) return 0.0;
      const double pg = std::exp(-0.5 * g * g) / std::sqrt(2.0 * M_PI);
      if (l2 <= 1e-300) return pg;
      return pg * (2.0 * stats::normal_cdf(std::sqrt(rem / l2)) - 1.0);
    };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(inner, -g_max, g_max, 15, 1e-12);
  };

  if (prob(1.0) >= target) return 1.0;
  double lo = 1.0, hi = 2.0;
  while (prob(hi) < target) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (prob(mid) >= target ? hi : lo) = mid;
  }
  return hi;
}

SingleBlockResult single_block_estimate(std::shared_ptr<const MarginalLaw> law, const TiltSchedule& s,
                                        const SingleBlockOptions& opts) {
  if (!law) throw ConfigError("missing marginal");
  if (law->d() != s.d || law->range().kind != s.kind) throw ConfigError("schedule does not match the marginal");
  if (opts.replicas < 2) throw ConfigError("single block estimate needs at least 2 replicas");
  const double m = static_cast<double>(opts.replicas);
  const int dims = s.kind == RangeKind::SpaceTime ? s.d - 1 : s.d;
  SingleBlockResult out;
  out.replicas = opts.replicas;
  const std::vector<Site> cells = cells_within(dims, s.r);
  std::map<Site, std::size_t> cell_slot;
  for (std::size_t c = 0; c < cells.size(); ++c) cell_slot.emplace(cells[c], c);
  const double rn = static_cast<double>(s.sqrt_n);

  if (s.kind == RangeKind::SpaceTime) {
    const Site drift_shift = floor_nearest(static_cast<double>(s.n) * s.center, s.d);
    const std::vector<Site> tube = tube_sites(s, 1, {0, 0, 0});
    struct Replica {
      double tilt = 1.0;
      std::map<Site, double> mass;  // restricted W per cell (untilted)
    };
    auto run = [&](std::size_t i) {
      const EnvironmentModel env(law, derive_seed(opts.master_seed, Role::Environment, i));
      Replica r;
      r.tilt = std::exp(f_k(s.k, s.delta_n * tilt_statistic(env, s, tube)));
      const EndpointDistribution ep = quenched_endpoint(env, s.theta, s.n);
      const double scale = std::exp(ep.log_scale);
      const std::int64_t bh = s.d == 3 ? ep.half : 0;
      for (std::int64_t a = -ep.half; a <= ep.half; ++a) {
        for (std::int64_t b = -bh; b <= bh; ++b) {
          const double w = ep.weights[ep.index(a, b)];
          if (w == 0.0) continue;
          const Vec u{static_cast<double>(a - drift_shift[0]),
                      s.d == 3 ? static_cast<double>(b - drift_shift[1]) : 0.0, 0.0};
          r.mass[cell_of(u, s.sqrt_n, dims)] += scale * w;
        }
      }
      return r;
    };
    const std::vector<Replica> reps = parallel_map(opts.replicas, opts.workers, run);

    std::vector<double> s1(cells.size(), 0.0), s2(cells.size(), 0.0);
    std::map<Site, double> plain;
    double tilt_sum = 0.0, w_sum = 0.0;
    for (const auto& r : reps) {
      tilt_sum += r.tilt;
      if (r.tilt < 1.0) ++out.tilt_fired;
      for (const auto& [y, w] : r.mass) {
        w_sum += w;
        plain[y] += w;
        const auto it = cell_slot.find(y);
        if (it == cell_slot.end()) continue;
        s1[it->second] += r.tilt * w;
        s2[it->second] += r.tilt * w * r.tilt * w;
      }
    }
    fill_rows(out, cells, s1, s2, m, s.alpha);
    for (const auto& [y, w] : plain) out.plain_sum += std::pow(w / m, s.alpha);
    out.mean_tilt = tilt_sum / m;
    out.mean_w = w_sum / m;

    // Tail from the exact q^theta endpoint law (deterministic mean environment).
    const auto mean_law = std::make_shared<const MarginalLaw>(
        MarginalLaw::finite(law->range(), {SupportPoint{law->mean_kernel(), 1.0}}, law->kappa()));
    const EndpointDistribution q = quenched_endpoint(EnvironmentModel(mean_law, 0), s.theta, s.n);
    const double qs = std::exp(q.log_scale);
    std::vector<std::pair<double, double>> sample;
    const std::int64_t bh = s.d == 3 ? q.half : 0;
    for (std::int64_t a = -q.half; a <= q.half; ++a)
      for (std::int64_t b = -bh; b <= bh; ++b) {
        const double w = q.weights[q.index(a, b)];
        if (w == 0.0) continue;
        const double ua = static_cast<double>(a - drift_shift[0]) / rn;
        const double ub = s.d == 3 ? static_cast<double>(b - drift_shift[1]) / rn : 0.0;
        sample.emplace_back(std::sqrt(ua * ua + ub * ub), qs * w);
      }
    out.tail_term = tail_term(std::move(sample), dims, s.r, s.alpha);
  } else {
    if (s.d != 2) throw ConfigError("space-only single block estimate is implemented for d=2");
    const Site drift_shift = floor_nearest(static_cast<double>(s.n) * s.center, s.d);
    struct Sample {
      Site y{0, 0, 0};
      double u = 0.0;
      double weight = 0.0;
      double tilt = 1.0;
      bool empty_tube = false;
    };
    auto run = [&](std::size_t i) {
      const EnvironmentModel env(law, derive_seed(opts.master_seed, Role::Environment, i));
      const RegenResult rr = regeneration_split(env, StepGenerator::kernel(),
                                                derive_seed(opts.master_seed, Role::Walk, i), {0, 0, 0},
                                                static_cast<std::size_t>(s.n), opts.regen);
      Site x{0, 0, 0};
      std::int64_t tau = 0;
      for (const auto& b : rr.blocks) x = x + b.displacement, tau += b.duration;
      Sample out_s;
      out_s.weight = std::exp(dot(s.theta, x) - opts.lambda_a * static_cast<double>(tau));
      const Vec u = to_vec(x - drift_shift);
      out_s.y = cell_of(u, s.sqrt_n, 2);
      out_s.u = std::sqrt(u[0] * u[0] + u[1] * u[1]) / rn;
      const std::vector<Site> tube = tube_sites(s, 1, {0, 0, 0}, out_s.y);
      out_s.empty_tube = tube.empty();
      const EnvironmentModel accepted = env.with_seed(rr.env_seed);
      out_s.tilt = std::exp(f_k(s.k, s.delta_n * d_linear(accepted, s.theta, tube)));
      return out_s;
    };
    const std::vector<Sample> reps = parallel_map(opts.replicas, opts.workers, run);
    std::vector<double> s1(cells.size(), 0.0), s2(cells.size(), 0.0);
    std::map<Site, double> plain;
    std::vector<std::pair<double, double>> sample;
    double tilt_sum = 0.0, w_sum = 0.0;
    std::size_t empty = 0;
    for (const auto& r : reps) {
      tilt_sum += r.tilt;
      w_sum += r.weight;
      if (r.tilt < 1.0) ++out.tilt_fired;
      if (r.empty_tube) ++empty;
      plain[r.y] += r.weight;
      sample.emplace_back(r.u, r.weight / m);
      const auto it = cell_slot.find(r.y);
      if (it == cell_slot.end()) continue;
      const double v = r.tilt * r.weight;
      s1[it->second] += v;
      s2[it->second] += v * v;
    }
    fill_rows(out, cells, s1, s2, m, s.alpha);
    for (const auto& [y, w] : plain) out.plain_sum += std::pow(w / m, s.alpha);
    out.mean_tilt = tilt_sum / m;
    out.mean_w = w_sum / m;
    out.tail_term = tail_term(std::move(sample), dims, s.r, s.alpha);
    if (empty > 0) out.estimate.notes.push_back("empty tube in " + std::to_string(empty) + " replicas; D = 0 used");
  }

  out.total = out.truncated_sum + out.tail_term;
  out.estimate.value = out.total;
  double se2 = 0.0;
  for (const auto& row : out.rows)
    if (row.value > 0.0) {
      const double dpow = s.alpha * std::pow(row.value, s.alpha - 1.0) * row.std_error;
      se2 += dpow * dpow;
    }
  out.estimate.std_error = std::sqrt(se2);
  out.estimate.replicas = opts.replicas;
  out.estimate.method = Method::MonteCarlo;
  out.estimate.theta = s.theta;
  out.estimate.n = s.n;
  return out;
}

MgfEstimate tilt_inverse_moment(std::shared_ptr<const MarginalLaw> law, const TiltSchedule& s,
                                std::size_t replicas, std::uint64_t master_seed, int workers) {
  if (!law) throw ConfigError("missing marginal");
  if (replicas < 2) throw ConfigError("inverse moment needs at least 2 replicas");
  std::vector<std::vector<Site>> tubes;
  for (std::int64_t j = 1; j <= s.m; ++j) tubes.push_back(tube_sites(s, j, {0, 0, 0}));
  const double power = -s.alpha / (1.0 - s.alpha);
  auto run = [&](std::size_t i) {
    const EnvironmentModel env(law, derive_seed(master_seed, Role::Environment, i));
    double sum = 0.0;
    for (const auto& tube : tubes) sum += f_k(s.k, s.delta_n * tilt_statistic(env, s, tube));
    return std::exp(power * sum);
  };
  const std::vector<double> vals = parallel_map(replicas, workers, run);
  const auto ms = stats::mean_se(vals);
  MgfEstimate e;
  e.value = ms.mean;
  e.std_error = ms.std_error;
  e.replicas = replicas;
  e.method = Method::MonteCarlo;
  e.theta = s.theta;
  e.n = s.n;
  return e;
}

}  // namespace rwre
