#include "rwre/rate.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "rwre/parallel.hpp"
#include "rwre/rng.hpp"
#include "rwre/stats.hpp"

namespace rwre {
namespace {

constexpr double kInvPhi = 0.6180339887498949;

// Maximizes f over [lo, hi] (f concave along the segment).
std::pair<double, double> golden_max(const std::function<double(double)>& f, double lo, double hi) {
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a), d = a + kInvPhi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 200 && b - a > 1e-12 * std::max(1.0, std::abs(a) + std::abs(b)); ++it) {
    if (fc >= fd) {
      b = d, d = c, fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c, c = d, fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  const double x = 0.5 * (a + b);
  return {x, f(x)};
}

}  // namespace

LegendreResult legendre(const std::function<double(const Vec&)>& lambda, const Vec& xi, std::span<const int> axes,
                        const LegendreOptions& opts) {
  if (axes.empty() || axes.size() > 3) throw ConfigError("legendre needs 1 to 3 axes");
  if (opts.grid < 3 || opts.radii.empty()) throw ConfigError("legendre needs grid >= 3 and at least one box");
  auto objective = [&](const Vec& th) {
    const double l = lambda(th);
    return std::isfinite(l) ? dot(th, xi) - l : -std::numeric_limits<double>::infinity();
  };
  const std::size_t k = axes.size();
  LegendreResult res;
  double best = -std::numeric_limits<double>::infinity();
  Vec arg{0.0, 0.0, 0.0};
  for (double rho : opts.radii) {
    const double step = 2.0 * rho / static_cast<double>(opts.grid - 1);
    std::vector<int> idx(k, 0);
    for (;;) {
      Vec th{0.0, 0.0, 0.0};
      for (std::size_t j = 0; j < k; ++j)
        th[static_cast<std::size_t>(axes[j])] = -rho + step * static_cast<double>(idx[j]);
      const double v = objective(th);
      if (v > best) best = v, arg = th;
      std::size_t j = 0;
      while (j < k && ++idx[j] == opts.grid) idx[j++] = 0;
      if (j == k) break;
    }
    for (int pass = 0; pass < opts.refine_passes; ++pass) {
      for (std::size_t j = 0; j < k; ++j) {
        const auto ax = static_cast<std::size_t>(axes[j]);
        const double lo = std::max(-rho, arg[ax] - step), hi = std::min(rho, arg[ax] + step);
        Vec probe = arg;
        const auto [x, v] = golden_max(
            [&](double t) {
              probe[ax] = t;
              return objective(probe);
            },
            lo, hi);
        if (v > best) best = v, arg[ax] = x;
      }
    }
    res.box_values.push_back(best);
  }
  res.argmax = arg;
  const std::size_t nb = res.box_values.size();
  if (nb >= 2) {
    const double last = res.box_values[nb - 1], prev = res.box_values[nb - 2];
    if (last - prev > opts.tol * std::max(1.0, std::abs(last))) {
      res.bounded = false;
      std::ostringstream os;
      os.precision(10);
      os << "sup over |theta| <= " << opts.radii[nb - 2] << " is " << prev << ", over |theta| <= "
         << opts.radii[nb - 1] << " is " << last << "; growth indicates xi outside the gradient range";
      res.certificate = os.str();
      res.value = std::numeric_limits<double>::infinity();
      return res;
    }
  }
  res.value = best;
  return res;
}

LegendreResult legendre_grid(std::span<const double> thetas, std::span<const double> lambdas, double xi) {
  if (thetas.size() != lambdas.size() || thetas.empty()) throw ConfigError("legendre_grid needs paired samples");
  LegendreResult res;
  res.value = -std::numeric_limits<double>::infinity();
  std::size_t at = 0;
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const double v = thetas[i] * xi - lambdas[i];
    if (v > res.value) res.value = v, at = i;
  }
  res.argmax = {thetas[at], 0.0, 0.0};
  if (thetas.size() > 1 && (at == 0 || at + 1 == thetas.size())) {
    res.bounded = false;
    res.certificate = "maximum attained at the grid boundary";
  }
  return res;
}

RateGrid gap_profile(std::shared_ptr<const MarginalLaw> law, std::span<const Vec> thetas, std::int64_t n,
                     const GapOptions& opts) {
  if (!law || law->range().kind != RangeKind::SpaceTime)
    throw ConfigError("gap_profile needs a space-time law; space-only laws use space_only_gap_certificate");
  if (opts.replicas < 2) throw ConfigError("gap_profile needs at least 2 replicas");
  RateGrid grid;
  grid.d = law->d();
  grid.kind = RangeKind::SpaceTime;
  grid.n = n;
  grid.replicas = opts.replicas;
  grid.master_seed = opts.master_seed;

  LambdaQOptions q;
  q.replicas = opts.replicas;
  q.master_seed = opts.master_seed;
  q.workers = opts.workers;
  const std::vector<MgfEstimate> lq = lambda_q_estimate(law, thetas, n, q);
  const double crit = stats::t_critical(opts.level, opts.replicas - 1);
  const int d = law->d();

  for (std::size_t t = 0; t < thetas.size(); ++t) {
    RateRow row;
    row.theta = thetas[t];
    row.certificate = "gap";
    row.lambda_a = log_phi(*law, row.theta);
    auto grad = [&](double h) {
      Vec g{0.0, 0.0, 0.0};
      for (std::size_t i = 0; i < static_cast<std::size_t>(d); ++i) {
        Vec up = row.theta, dn = row.theta;
        up[i] += h;
        dn[i] -= h;
        g[i] = (log_phi(*law, up) - log_phi(*law, dn)) / (2.0 * h);
      }
      return g;
    };
    const Vec g1 = grad(opts.h), g2 = grad(opts.h / 2.0);
    row.xi = g1;
    for (std::size_t i = 0; i < static_cast<std::size_t>(d); ++i)
      if (std::abs(g1[i] - (4.0 * g2[i] - g1[i]) / 3.0) > 1e-4) row.gradient_flag = true;
    if (on_time_axis(row.theta, d)) {
      row.lambda_q = row.lambda_a;  // Lambda_q = log phi on the e_d axis
      row.lambda_q_se = 0.0;
    } else {
      row.lambda_q = lq[t].value;
      row.lambda_q_se = lq[t].std_error;
    }
    row.gap = row.lambda_a - row.lambda_q;
    row.gap_se = row.lambda_q_se;
    row.gap_ci_lo = row.gap - crit * row.gap_se;
    row.gap_ci_hi = row.gap + crit * row.gap_se;
    row.i_a = dot(row.theta, row.xi) - row.lambda_a;
    grid.rows.push_back(row);
  }
  return grid;
}

FractionalMomentResult space_only_gap_certificate(std::shared_ptr<const MarginalLaw> law, const Vec& theta,
                                                  double lambda_a, const SpaceOnlyGapOptions& opts) {
  if (!law || law->range().kind != RangeKind::SpaceOnly) throw ConfigError("space-only law required");
  if (opts.n_list.empty()) throw ConfigError("empty N list");
  if (opts.env_replicas < 2 || opts.inner_walks < 1) throw ConfigError("need >= 2 environments and >= 1 walk");
  if (!(opts.alpha > 0.0 && opts.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  const std::int64_t n_max = *std::max_element(opts.n_list.begin(), opts.n_list.end());
  if (*std::min_element(opts.n_list.begin(), opts.n_list.end()) < 1) throw ConfigError("N must be >= 1");
  RegenOptions regen = opts.regen;
  regen.fresh_environment_on_restart = false;  // quenched: restarts stay in the environment
  const std::size_t nn = opts.n_list.size();
  const auto powers = parallel_map(opts.env_replicas, opts.workers, [&](std::size_t r) {
    const EnvironmentModel env(law, derive_seed(opts.master_seed, Role::Environment, r));
    std::vector<double> w(nn, 0.0);
    for (std::size_t k = 0; k < opts.inner_walks; ++k) {
      const RegenResult rr = regeneration_split(env, StepGenerator::kernel(),
                                                derive_seed(opts.master_seed, Role::Walk, r * opts.inner_walks + k),
                                                {0, 0, 0}, static_cast<std::size_t>(n_max), regen);
      std::vector<double> logw(static_cast<std::size_t>(n_max) + 1, 0.0);
      Site x{0, 0, 0};
      std::int64_t tau = 0;
      for (std::size_t b = 0; b < rr.blocks.size(); ++b) {
        x = x + rr.blocks[b].displacement;
        tau += rr.blocks[b].duration;
        logw[b + 1] = dot(theta, x) - lambda_a * static_cast<double>(tau);
      }
      for (std::size_t i = 0; i < nn; ++i) w[i] += std::exp(logw[static_cast<std::size_t>(opts.n_list[i])]);
    }
    for (auto& v : w) v = std::pow(v / static_cast<double>(opts.inner_walks), opts.alpha);
    return w;
  });
  FractionalMomentOptions fo;
  fo.replicas = opts.env_replicas;
  fo.master_seed = opts.master_seed;
  fo.workers = opts.workers;
  fo.bootstrap = opts.bootstrap;
  fo.level = opts.level;
  return summarize_fractional_moment(powers, opts.n_list, theta, is_zero(theta), fo);
}

Vec lln_velocity(const MarginalLaw& law) {
  if (law.range().kind != RangeKind::SpaceTime)
    throw ConfigError("closed-form velocity needs a space-time law; pass a block pool instead");
  return law.mean_drift();
}

VelocityReport lln_velocity(const BlockPool& pool, double h, const LambdaAOptions& opts) {
  if (pool.blocks.empty()) throw ConfigError("empty block pool");
  VelocityReport rep;
  if (pool.bfu) rep.closed_form = pool.mean_drift;  // class M: E v = (p+ - p-) e_d = xi_o
  for (std::size_t i = 0; i < static_cast<std::size_t>(pool.d); ++i) {
    Vec up{0.0, 0.0, 0.0}, dn{0.0, 0.0, 0.0};
    up[i] = h;
    dn[i] = -h;
    const MgfEstimate a = lambda_a_regen(pool, up, opts);
    const MgfEstimate b = lambda_a_regen(pool, dn, opts);
    rep.finite_difference[i] = (a.value - b.value) / (2.0 * h);
    rep.finite_difference_se[i] = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error) / (2.0 * h);
  }
  Vec sx{0.0, 0.0, 0.0};
  double st = 0.0;
  for (const auto& b : pool.blocks) {
    sx = sx + to_vec(b.displacement);
    st += static_cast<double>(b.duration);
  }
  rep.empirical = (1.0 / st) * sx;
  return rep;
}

std::string rate_grid_svg(const RateGrid& grid) {
  constexpr double W = 640, H = 400, L = 70, R = 20, T = 30, B = 50;
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo, y_lo = 0.0, y_hi = 0.0;
  for (const auto& r : grid.rows) {
    x_lo = std::min(x_lo, r.xi[0]), x_hi = std::max(x_hi, r.xi[0]);
    y_lo = std::min(y_lo, r.gap_ci_lo), y_hi = std::max(y_hi, r.gap_ci_hi);
  }
  if (grid.rows.empty()) x_lo = -1, x_hi = 1;
  if (x_hi - x_lo < 1e-12) x_lo -= 1, x_hi += 1;
  if (y_hi - y_lo < 1e-12) y_hi = y_lo + 1;
  const double xm = 0.05 * (x_hi - x_lo), ym = 0.05 * (y_hi - y_lo);
  x_lo -= xm, x_hi += xm, y_lo -= ym, y_hi += ym;
  auto px = [&](double x) { return L + (x - x_lo) / (x_hi - x_lo) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y_lo) / (y_hi - y_lo) * (H - T - B); };

  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  if (y_lo < 0.0 && y_hi > 0.0)
    os << "<line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << W - R << "\" y2=\"" << py(0)
       << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x_lo + (x_hi - x_lo) * i / 4.0, yv = y_lo + (y_hi - y_lo) * i / 4.0;
    os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 18 << "\" font-size=\"11\" text-anchor=\"middle\">"
       << std::setprecision(3) << xv << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" font-size=\"11\" text-anchor=\"end\">"
       << std::setprecision(4) << yv << "</text>\n";
  }
  os << std::setprecision(3);
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10
     << "\" font-size=\"13\" text-anchor=\"middle\">&lt;xi, e_1&gt;</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << (T + H - B) / 2 << ")\">Lambda_a - Lambda_q</text>\n";
  for (const auto& r : grid.rows) {
    const double x = px(r.xi[0]);
    os << "<line x1=\"" << x << "\" y1=\"" << py(r.gap_ci_lo) << "\" x2=\"" << x << "\" y2=\"" << py(r.gap_ci_hi)
       << "\" stroke=\"steelblue\"/>\n";
    os << "<circle cx=\"" << x << "\" cy=\"" << py(r.gap) << "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace rwre
