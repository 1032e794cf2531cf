// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the number of failures.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "rwre/corr.hpp"
#include "rwre/fracmom.hpp"
#include "rwre/mgf.hpp"
#include "rwre/models.hpp"
#include "rwre/oracle.hpp"
#include "rwre/parallel.hpp"
#include "rwre/rate.hpp"
#include "rwre/stats.hpp"

using namespace rwre;
using stats::LinearFit;
using stats::MeanSe;
using stats::linear_fit;
using stats::mean_se;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

const int kWorkers = default_workers();

std::shared_ptr<const MarginalLaw> binary() {
  return std::make_shared<const MarginalLaw>(models::binary_space_time());
}
std::shared_ptr<const MarginalLaw> two_point() {
  return std::make_shared<const MarginalLaw>(models::two_point_2p1());
}
const ClassMSpec kClassM{2, 0.5, 0.3, 0.2, 0.05};

BlockPool class_m_pool(std::size_t replicas, std::size_t per_replica, std::uint64_t seed) {
  auto law = std::make_shared<const MarginalLaw>(canonical_class_m_marginal(kClassM));
  return build_block_pool(law, StepGenerator::bfu(kClassM), seed, replicas, per_replica, {}, kWorkers);
}

Outcome oracle_agreement() {
  const Vec th{1, 0, 0};
  const double exact = oracle::exact_fractional_moment(*binary(), th, 0.5, 1);
  FractionalMomentOptions o;
  o.replicas = 100000;
  o.bootstrap = 10;
  o.master_seed = 101;
  o.workers = kWorkers;
  const std::int64_t ns[] = {1};
  const auto res = fractional_moment(binary(), th, 0.5, ns, o);
  const double mc = res.per_n[0].value, se = res.per_n[0].std_error;
  const bool ok = std::abs(exact - 0.98804) < 1e-5 && std::abs(mc - exact) <= 3 * se;
  return {ok, "exact " + num(exact) + ", MC " + num(mc) + " +- " + num(se)};
}

Outcome normalization() {
  auto law = binary();
  const Vec th{1, 0, 0};
  bool ok = true;
  std::string detail;
  for (std::int64_t n : {1, 4, 16}) {
    const auto w = parallel_map(20000, kWorkers, [&](std::size_t r) {
      return w_n(EnvironmentModel(law, derive_seed(202, Role::Environment, r)), th, n).w;
    });
    const MeanSe m = mean_se(w);
    ok = ok && std::abs(m.mean - 1.0) <= 3 * m.std_error;
    detail += "E[W_" + std::to_string(n) + "]=" + num(m.mean) + "+-" + num(m.std_error) + " ";
  }
  const MarginalLaw det = models::degenerate_of(*law);
  const double dp = quenched_mgf_dp(EnvironmentModel(det, 7), th, 64);
  const double dp_err = std::abs(dp - log_phi(*law, th));
  ok = ok && dp_err <= 1e-10;
  double enum_err = 0.0;
  for (int n = 1; n <= 6; ++n)
    enum_err = std::max(enum_err, std::abs(oracle::exact_annealed_expectation(*law, th, n, oracle::Functional::ExpTheta) -
                                           std::pow(oracle::phi(*law, th), n)));
  ok = ok && enum_err <= 1e-12;
  return {ok, detail + "dp err " + num(dp_err) + ", enumeration err " + num(enum_err)};
}

Outcome mu_closed_form() {
  auto law = binary();
  double worst = 0.0;
  for (double t : {0.25, 0.5, 1.0})
    worst = std::max(worst, std::abs(mu_one_step(*law, {t, 0, 0}).mu_value - 0.16 * t * std::tanh(t)));
  bool axis_zero = true;
  for (double t : {0.5, 1.0, -2.0}) axis_zero = axis_zero && mu_one_step(*law, {0, t, 0}).mu_value == 0.0;
  return {worst <= 1e-12 && axis_zero, "max err " + num(worst) + (axis_zero ? ", axis exactly 0" : ", axis nonzero")};
}

Outcome gap_positive() {
  const std::vector<Vec> th{{0.5, 0, 0}, {-0.5, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 0, 0}, {0, 1, 0}};
  GapOptions o;
  o.replicas = 16;
  o.master_seed = 404;
  o.workers = kWorkers;
  const RateGrid g = gap_profile(binary(), th, 1 << 14, o);
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < g.rows.size(); ++i) {
    const auto& r = g.rows[i];
    const bool row_ok = i < 4 ? r.gap_ci_lo > 0.0 : (r.gap_ci_lo <= 0.0 && r.gap_ci_hi >= 0.0);
    ok = ok && row_ok;
    detail += num(r.gap) + "[" + num(r.gap_ci_lo) + "," + num(r.gap_ci_hi) + "] ";
  }
  return {ok, detail};
}

Outcome fractional_decay() {
  FractionalMomentOptions o;
  o.replicas = 1000;
  o.bootstrap = 1000;
  o.master_seed = 505;
  o.workers = kWorkers;
  const std::int64_t ns[] = {64, 128, 256, 512};
  const auto off = fractional_moment(binary(), {1, 0, 0}, 0.5, ns, o);
  const auto axis = fractional_moment(binary(), {0, 1, 0}, 0.5, ns, o);
  const bool ok = off.slope < 0 && off.slope_ci_hi < 0 && axis.slope_ci_lo <= 0 && axis.slope_ci_hi >= 0;
  return {ok, "slope(1,0) " + num(off.slope) + " CI [" + num(off.slope_ci_lo) + "," + num(off.slope_ci_hi) +
                  "], slope(0,1) " + num(axis.slope) + " CI [" + num(axis.slope_ci_lo) + "," +
                  num(axis.slope_ci_hi) + "]"};
}

Outcome kernel_bounds() {
  auto law = two_point();
  const Vec th{0.5, 0, 0};
  const Kernel q = tilted_kernel(*law, th);
  const double c2 = select_c2(q, law->range());
  std::size_t violations = 0;
  for (std::int64_t n : {64, 256}) {
    const TiltSchedule s = make_schedule(*law, TiltFlavor::Quadratic, th, 0.5, n, 1.0, c2);
    const double ln = std::log(static_cast<double>(n)), nn = static_cast<double>(n * n);
    if (kernel_v2_sum(s) > 32 * s.c1 * s.c1 * c2 * c2 * nn * ln) ++violations;
    const auto bad = parallel_map(100, kWorkers, [&](std::size_t i) {
      const Path p = tilted_path(law->range(), q, derive_seed(606 + n, Role::Walk, i), static_cast<std::size_t>(n));
      int v = 0;
      if (kernel_column_max(p, n, c2, s.center) > 2 * ln) ++v;
      if (kernel_tube_total(p, s) > 4 * c2 * c2 * nn) ++v;
      return v;
    });
    for (int v : bad) violations += static_cast<std::size_t>(v);
  }
  return {violations == 0, "C2 " + num(c2) + ", violations " + std::to_string(violations)};
}

Outcome nu_concentration() {
  auto law = two_point();
  const Vec th{0.5, 0, 0};
  const Kernel q = tilted_kernel(*law, th);
  const double c2 = select_c2(q, law->range());
  const Vec xi = grad_log_phi(*law, th);
  const std::int64_t n = 256;
  const double cut = static_cast<double>(n) * std::log(static_cast<double>(n - 1)) / 2.0;
  const auto below = parallel_map(1000, kWorkers, [&](std::size_t i) {
    const Path p = tilted_path(law->range(), q, derive_seed(707, Role::Walk, i), static_cast<std::size_t>(n));
    return nu_statistic(p, n, c2, xi) < cut ? 1 : 0;
  });
  double frac = 0.0;
  for (int b : below) frac += b;
  frac /= static_cast<double>(below.size());
  return {frac <= 0.1, "C2 " + num(c2) + ", P(nu < cut) " + num(frac)};
}

Outcome local_clt() {
  const Kernel q = tilted_kernel(*two_point(), {0.3, 0.2, 0});
  std::vector<double> lm, ld;
  for (std::size_t m : {16, 32, 64, 128, 256}) {
    lm.push_back(std::log(static_cast<double>(m)));
    ld.push_back(std::log(local_clt_deviation(q, m, {1, 0, 1}, {0, 1, 1})));
  }
  const LinearFit f = linear_fit(lm, ld);
  return {f.slope <= -1.2, "slope " + num(f.slope)};
}

Outcome regeneration() {
  const BlockPool pool = class_m_pool(20, 500, 909);
  const TailFit tf = fit_duration_tail(pool.blocks);
  const IidDiagnostics iid = block_iid_diagnostics(pool);
  const bool ok = tf.slope < 0 && tf.r_squared >= 0.98 && std::abs(iid.lag1_autocorrelation) <= iid.lag1_band;
  return {ok, "tail slope " + num(tf.slope) + " R2 " + num(tf.r_squared) + " over [" + std::to_string(tf.n_lo) + "," +
                  std::to_string(tf.n_hi) + "], lag1 " + num(iid.lag1_autocorrelation) + " band " +
                  num(iid.lag1_band) + ", M " + std::to_string(pool.blocks.size())};
}

Outcome correlation() {
  const BlockPool pool = class_m_pool(400, 10000, 1010);
  const Vec th{0.05, 0, 0};
  LambdaAOptions lo;
  lo.tail_rate = fit_duration_tail(pool.blocks).rate();
  const double la = lambda_a_regen(pool, th, lo).value;
  MuRegenOptions mo;
  mo.control_variate = true;
  mo.spec = kClassM;
  const CorrelationReport r = mu_regen(pool, th, la, mo);
  const CorrelationReport l = l_term_decomposition(pool, th, mo);
  const auto& d = *l.decomposition;
  const bool nulls = std::abs(r.mean_z.value) <= 3 * r.mean_z.std_error &&
                     std::abs(r.mean_tau_z.value) <= 3 * r.mean_tau_z.std_error;
  const bool ok = nulls && r.ci_lo > 0 && d[0].covers_zero() && d[1].ci_lo > 0;
  return {ok, "E[Z] " + num(r.mean_z.value) + "+-" + num(r.mean_z.std_error) + ", E[tau Z] " +
                  num(r.mean_tau_z.value) + "+-" + num(r.mean_tau_z.std_error) + ", mu " + num(r.mu_value) + " [" +
                  num(r.ci_lo) + "," + num(r.ci_hi) + "], L0 [" + num(d[0].ci_lo) + "," + num(d[0].ci_hi) +
                  "], L1 [" + num(d[1].ci_lo) + "," + num(d[1].ci_hi) + "], blocks " +
                  std::to_string(pool.blocks.size())};
}

Outcome lambda_regularity() {
  const BlockPool pool = class_m_pool(200, 2000, 1111);
  LambdaAOptions lo;
  lo.tail_rate = fit_duration_tail(pool.blocks).rate();
  const VelocityReport v = lln_velocity(pool, 1e-3, lo);
  const Vec target{0.0, kClassM.p_plus - kClassM.p_minus, 0.0};
  bool grad_ok = true;
  for (std::size_t i = 0; i < 2; ++i)
    grad_ok = grad_ok && std::abs(v.finite_difference[i] - target[i]) <= 1e-3 + 3 * v.finite_difference_se[i];

  auto lam = [&](const Vec& t) { return lambda_a_regen(pool, t, lo).value; };
  const Vec xi = v.finite_difference;
  double lo_ratio = INFINITY, hi_ratio = 0.0;
  for (const Vec dir : {Vec{1, 0, 0}, Vec{0, 1, 0}, Vec{0.6, 0.8, 0}})
    for (double r : {0.01, 0.02, 0.05, 0.1}) {
      const Vec t = r * dir;
      const double b = std::abs(lam(t) - dot(t, xi)) / (r * r);
      lo_ratio = std::min(lo_ratio, b);
      hi_ratio = std::max(hi_ratio, b);
    }
  const bool bound_ok = hi_ratio / lo_ratio <= 4.0;

  const double h = 0.01;
  double min_eig = INFINITY;
  for (double a : {-0.1, 0.0, 0.1})
    for (double b : {-0.1, 0.0, 0.1}) {
      const Vec c{a, b, 0};
      const double f0 = lam(c);
      const double fxx = (lam(c + Vec{h, 0, 0}) - 2 * f0 + lam(c - Vec{h, 0, 0})) / (h * h);
      const double fyy = (lam(c + Vec{0, h, 0}) - 2 * f0 + lam(c - Vec{0, h, 0})) / (h * h);
      const double fxy = (lam(c + Vec{h, h, 0}) - lam(c + Vec{h, -h, 0}) - lam(c + Vec{-h, h, 0}) +
                          lam(c + Vec{-h, -h, 0})) / (4 * h * h);
      const double tr = fxx + fyy, det = fxx * fyy - fxy * fxy;
      min_eig = std::min(min_eig, tr / 2 - std::sqrt(std::max(0.0, tr * tr / 4 - det)));
    }
  return {grad_ok && bound_ok && min_eig > 0,
          "grad (" + num(xi[0]) + "," + num(xi[1]) + ") se (" + num(v.finite_difference_se[0]) + "," +
              num(v.finite_difference_se[1]) + "), bound ratio " + num(hi_ratio / lo_ratio) + ", min eig " +
              num(min_eig)};
}

Outcome hessian_comparison() {
  auto law = std::make_shared<const MarginalLaw>(models::four_point_2p1());
  bool ok = true;
  double min_gap = INFINITY;
  for (double r : {0.02, 0.05, 0.1})
    for (const Vec dir : {Vec{1, 0, 0}, Vec{0, 1, 0}, Vec{-0.6, 0.8, 0}}) {
      const double g = fg_components(*law, r * dir).gap;
      min_gap = std::min(min_gap, g);
      ok = ok && g > 0;
    }
  const double at_zero = std::abs(fg_components(*law, {0, 0, 0}).gap);
  const MarginalLaw det = models::degenerate_of(*law);
  double degenerate = 0.0;
  for (double r : {0.02, 0.05, 0.1}) degenerate = std::max(degenerate, std::abs(fg_components(det, {r, 0, 0}).gap));
  ok = ok && at_zero <= 1e-12 && degenerate <= 1e-12;
  return {ok, "min F-G " + num(min_gap) + ", |F-G|(0) " + num(at_zero) + ", degenerate " + num(degenerate)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

Outcome reproducibility() {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "rwre_acceptance_repro";
  fs::remove_all(root);
  const std::string bin = R"({"kind":"preset","name":"binary_1p1"})";
  const std::string cm = R"({"kind":"class_m","d":2,"p_plus":0.5,"p_zero":0.3,"p_minus":0.2,"epsilon":0.05})";
  const std::string tp = R"({"kind":"preset","name":"two_point_2p1"})";
  const std::vector<std::vector<std::string>> runs{
      {"-m", bin, "gap", "-t", "1,0", "-t", "-0.5,0", "--n", "512", "--replicas", "8"},
      {"-m", bin, "fracmom", "-t", "1,0", "--n-list", "16,32", "--replicas", "64", "--bootstrap", "50"},
      {"-m", bin, "block", "-t", "1,0", "--n", "64", "--replicas", "32"},
      {"-m", tp, "block", "-t", "0.5,0,0", "--n", "16", "--replicas", "8"},
      {"-m", tp, "mgf", "-t", "0.5,0,0", "-t", "0,0.5,0", "--n", "128", "--replicas", "8"},
      {"-m", cm, "mgf", "-t", "0.1,0", "--pool-replicas", "20", "--blocks", "100"},
      {"-m", cm, "corr", "-t", "0.1,0", "--pool-replicas", "20", "--blocks", "100"},
      {"-m", cm, "regen", "--pool-replicas", "20", "--blocks", "100"},
      {"-m", cm, "block", "-t", "0.1,0", "--n", "16", "--replicas", "16", "--pool-replicas", "10", "--blocks", "100"},
      {"-m", cm, "gap", "-t", "0.1,0", "--n-list", "4,8", "--env-replicas", "16", "--inner", "8",
       "--bootstrap", "50", "--pool-replicas", "10", "--blocks", "100"},
  };
  std::size_t compared = 0, mismatched = 0;
  std::string detail;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::vector<fs::path> dirs;
    for (const char* w : {"1", "4", "16"}) {
      const fs::path dir = root / ("run" + std::to_string(i)) / w;
      std::vector<std::string> args{"rwre_cli", "--out", dir.string(), "--workers", w, "--seed", "1313"};
      args.insert(args.end(), runs[i].begin(), runs[i].end());
      std::vector<const char*> argv;
      for (const auto& a : args) argv.push_back(a.c_str());
      std::ostringstream out, err;
      if (cli::run(static_cast<int>(argv.size()), argv.data(), out, err) != cli::kExitOk) {
        ++mismatched;
        detail += "run " + std::to_string(i) + " failed: " + err.str();
      }
      dirs.push_back(dir);
    }
    for (const auto& entry : fs::directory_iterator(dirs[0])) {
      const auto ext = entry.path().extension();
      if (ext != ".csv" && ext != ".jsonl") continue;
      const std::string ref = slurp(entry.path());
      for (std::size_t k = 1; k < dirs.size(); ++k) {
        ++compared;
        if (slurp(dirs[k] / entry.path().filename()) != ref) {
          ++mismatched;
          detail += entry.path().filename().string() + " differs in run " + std::to_string(i) + "; ";
        }
      }
    }
  }
  fs::remove_all(root);
  return {mismatched == 0 && compared > 0,
          detail + std::to_string(compared) + " comparisons, " + std::to_string(mismatched) + " mismatches"};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> all{
      {"oracle agreement E[W_1^(1/2)]", oracle_agreement},
      {"normalization identities", normalization},
      {"one-step correlation closed form", mu_closed_form},
      {"quenched-averaged gap", gap_positive},
      {"fractional-moment decay", fractional_decay},
      {"deterministic kernel bounds", kernel_bounds},
      {"nu concentration", nu_concentration},
      {"local CLT rate", local_clt},
      {"regeneration structure", regeneration},
      {"isotropy nulls and correlation", correlation},
      {"Lambda_a regularity", lambda_regularity},
      {"Hessian comparison F - G", hessian_comparison},
      {"reproducibility across workers", reproducibility},
  };
  // optional filter: criterion numbers to run
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = all[i].fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("%s [%2d] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, all[i].name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures;
}
