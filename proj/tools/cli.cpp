#include "cli.hpp"

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "rwre/corr.hpp"
#include "rwre/fracmom.hpp"
#include "rwre/io.hpp"
#include "rwre/mgf.hpp"
#include "rwre/oracle.hpp"
#include "rwre/rate.hpp"
#include "rwre/stats.hpp"
#include "rwre/walk.hpp"

namespace rwre::cli {
namespace {

namespace fs = std::filesystem;
using io::fmt;
using io::json;

constexpr const char* kVersion = "1.0.0";

using Grid = std::vector<std::vector<double>>;
using Ints = std::vector<std::int64_t>;

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse number '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty list '" + s + "'");
  return out;
}

// Resolution order: flag, then the config file's params section, then the default.
// Every resolved value is recorded for the manifest.
class Params {
 public:
  explicit Params(json file) : file_(std::move(file)) {}

  template <typename T>
  T get(const std::string& key, const std::optional<T>& flag, T fallback) {
    T v = fallback;
    if (flag) {
      v = *flag;
    } else if (file_.contains(key)) {
      try {
        v = file_.at(key).get<T>();
      } catch (const json::exception& e) {
        throw ConfigError("params." + key + ": " + e.what());
      }
    }
    resolved_[key] = v;
    return v;
  }
  Grid grid(const std::string& key, const std::vector<std::string>& flag, Grid fallback) {
    std::optional<Grid> f;
    if (!flag.empty()) {
      Grid g;
      for (const auto& s : flag) g.push_back(parse_list(s));
      f = g;
    }
    return get<Grid>(key, f, std::move(fallback));
  }
  Ints ints(const std::string& key, const std::optional<std::string>& flag, Ints fallback) {
    std::optional<Ints> f;
    if (flag) {
      Ints v;
      for (double x : parse_list(*flag)) v.push_back(static_cast<std::int64_t>(x));
      f = v;
    }
    return get<Ints>(key, f, std::move(fallback));
  }
  const json& resolved() const { return resolved_; }

 private:
  json file_;
  json resolved_ = json::object();
};

struct Context {
  io::ModelSpec model;
  std::uint64_t seed = 1;
  int workers = 1;
  fs::path out;
  Params params{json::object()};
  std::vector<std::string> outputs;
  json summary = json::object();

  int d() const { return model.law->d(); }
  bool space_time() const { return model.law->range().kind == RangeKind::SpaceTime; }

  void write(const std::string& name, const std::string& content) {
    std::ofstream f(out / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (out / name).string());
    f << content;
    outputs.push_back(name);
  }
  Vec theta(const std::vector<double>& t) const {
    if (static_cast<int>(t.size()) != d()) throw ConfigError("theta needs " + std::to_string(d()) + " components");
    Vec v{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < t.size(); ++i) v[i] = t[i];
    return v;
  }
  std::vector<Vec> thetas(const Grid& g) const {
    std::vector<Vec> out;
    for (const auto& t : g) out.push_back(theta(t));
    if (out.empty()) throw ConfigError("theta grid is empty");
    return out;
  }
};

// Options shared by every subcommand.
struct Flags {
  std::string out;
  std::optional<std::string> config, model;
  std::optional<std::uint64_t> seed;
  int workers = 1;

  // subcommand parameters (unset unless given)
  std::vector<std::string> theta;
  std::optional<std::string> n_list;
  std::optional<std::int64_t> n, replicas, bootstrap, blocks, pool_replicas, horizon, r, inner, env_replicas, n_max;
  std::optional<double> alpha, c1, c2, tol, level;
  std::optional<std::string> flavor;
  std::optional<bool> doubling, symmetrize, control_variate;
};

std::vector<std::string> theta_header(int d) {
  std::vector<std::string> h;
  for (int i = 0; i < d; ++i) h.push_back("theta" + std::to_string(i + 1));
  return h;
}
void push_vec(std::vector<std::string>& row, const Vec& v, int d) {
  for (int i = 0; i < d; ++i) row.push_back(fmt(v[static_cast<std::size_t>(i)]));
}

json vec_json(const Vec& v, int d) {
  json a = json::array();
  for (int i = 0; i < d; ++i) a.push_back(v[static_cast<std::size_t>(i)]);
  return a;
}

json term_json(const TermEstimate& t) {
  return {{"value", t.value}, {"std_error", t.std_error}, {"ci_lo", t.ci_lo}, {"ci_hi", t.ci_hi}};
}

BlockPool make_pool(Context& c, const Flags& f) {
  const auto reps = static_cast<std::size_t>(c.params.get<std::int64_t>("pool_replicas", f.pool_replicas, 200));
  const auto per = static_cast<std::size_t>(c.params.get<std::int64_t>("blocks_per_replica", f.blocks, 500));
  RegenOptions ro;
  ro.horizon = c.params.get<std::int64_t>("horizon", f.horizon, 200);
  const StepGenerator gen = c.model.class_m ? StepGenerator::bfu(*c.model.class_m) : StepGenerator::kernel();
  return build_block_pool(c.model.law, gen, c.seed, reps, per, ro, c.workers);
}

LambdaAOptions lambda_a_options(Context& c, const Flags& f, const BlockPool& pool) {
  LambdaAOptions lo;
  lo.tol = c.params.get<double>("tol", f.tol, 1e-6);
  lo.symmetrize = c.params.get<bool>("symmetrize", f.symmetrize, true);
  lo.min_pool = std::min<std::size_t>(pool.blocks.size(), 100000);
  lo.tail_rate = fit_duration_tail(pool.blocks).rate();
  return lo;
}

// ---- subcommands ----

void cmd_validate(Context& c, const Flags&) {
  if (!c.model.class_m) throw ConfigError("validate needs a class_m model");
  const ValidationReport rep = validate_class_m(*c.model.class_m);
  json checks = json::array();
  for (const auto& ch : rep.checks) checks.push_back({{"name", ch.name}, {"pass", ch.pass}, {"detail", ch.detail}});
  json j = {{"ok", rep.ok()}, {"kappa", rep.kappa}, {"checks", checks}};
  c.write("validation.json", j.dump(2) + "\n");
  c.summary = {{"ok", rep.ok()}};
}

void cmd_mgf(Context& c, const Flags& f) {
  const auto th = c.thetas(c.params.grid("theta", f.theta, {}));
  std::ostringstream csv;
  io::CsvWriter w(csv);
  if (c.space_time()) {
    LambdaQOptions o;
    o.replicas = static_cast<std::size_t>(c.params.get<std::int64_t>("replicas", f.replicas, 16));
    o.master_seed = c.seed;
    o.workers = c.workers;
    o.doubling_check = c.params.get<bool>("doubling_check", f.doubling, false);
    const std::int64_t n = c.params.get<std::int64_t>("n", f.n, 1024);
    const auto est = lambda_q_estimate(c.model.law, th, n, o);
    auto head = theta_header(c.d());
    for (const char* h : {"n", "lambda_a", "lambda_q", "lambda_q_se", "gap", "replicas", "method"}) head.push_back(h);
    w.row(head);
    for (std::size_t i = 0; i < th.size(); ++i) {
      std::vector<std::string> row;
      push_vec(row, th[i], c.d());
      const double la = log_phi(*c.model.law, th[i]);
      const double lq = on_time_axis(th[i], c.d()) ? la : est[i].value;
      for (const auto& s : {std::to_string(n), fmt(la), fmt(lq), fmt(est[i].std_error), fmt(la - lq),
                            std::to_string(est[i].replicas), to_string(est[i].method)})
        row.push_back(s);
      w.row(row);
    }
  } else {
    const BlockPool pool = make_pool(c, f);
    const LambdaAOptions lo = lambda_a_options(c, f, pool);
    auto head = theta_header(c.d());
    for (const char* h : {"lambda_a", "lambda_a_se", "blocks"}) head.push_back(h);
    for (int i = 0; i < c.d(); ++i) head.push_back("zeta" + std::to_string(i + 1));
    w.row(head);
    for (const auto& t : th) {
      const MgfEstimate la = lambda_a_regen(pool, t, lo);
      const ZetaEstimate z = zeta(pool, t, la.value);
      std::vector<std::string> row;
      push_vec(row, t, c.d());
      row.push_back(fmt(la.value));
      row.push_back(fmt(la.std_error));
      row.push_back(std::to_string(pool.blocks.size()));
      push_vec(row, z.value, c.d());
      w.row(row);
    }
  }
  c.write("mgf.csv", csv.str());
}

void write_fracmom(Context& c, const FractionalMomentResult& res, const Ints& ns) {
  std::ostringstream csv;
  io::CsvWriter w(csv);
  w.row({"n", "mean_w_alpha", "std_error", "log_mean", "replicas", "method"});
  for (std::size_t i = 0; i < ns.size(); ++i)
    w.row({std::to_string(ns[i]), fmt(res.per_n[i].value), fmt(res.per_n[i].std_error), fmt(res.log_mean[i]),
           std::to_string(res.per_n[i].replicas), to_string(res.per_n[i].method)});
  c.write("fracmom.csv", csv.str());
  json s = {{"slope", res.slope}, {"slope_ci_lo", res.slope_ci_lo}, {"slope_ci_hi", res.slope_ci_hi},
            {"bootstrap", res.bootstrap}};
  c.write("fracmom_summary.json", s.dump(2) + "\n");
  c.summary = s;
}

void cmd_fracmom(Context& c, const Flags& f) {
  const Vec th = c.theta(c.params.grid("theta", f.theta, {})[0]);
  const double alpha = c.params.get<double>("alpha", f.alpha, 0.5);
  if (c.space_time()) {
    const Ints ns = c.params.ints("n_list", f.n_list, {64, 128, 256, 512});
    FractionalMomentOptions o;
    o.replicas = static_cast<std::size_t>(c.params.get<std::int64_t>("replicas", f.replicas, 1000));
    o.bootstrap = static_cast<std::size_t>(c.params.get<std::int64_t>("bootstrap", f.bootstrap, 1000));
    o.level = c.params.get<double>("level", f.level, 0.95);
    o.master_seed = c.seed;
    o.workers = c.workers;
    write_fracmom(c, fractional_moment(c.model.law, th, alpha, ns, o), ns);
  } else {
    const BlockPool pool = make_pool(c, f);
    const double la = lambda_a_regen(pool, th, lambda_a_options(c, f, pool)).value;
    SpaceOnlyGapOptions o;
    o.n_list = c.params.ints("n_list", f.n_list, {8, 16, 32, 64});
    o.env_replicas = static_cast<std::size_t>(c.params.get<std::int64_t>("env_replicas", f.env_replicas, 200));
    o.inner_walks = static_cast<std::size_t>(c.params.get<std::int64_t>("inner_walks", f.inner, 50));
    o.bootstrap = static_cast<std::size_t>(c.params.get<std::int64_t>("bootstrap", f.bootstrap, 500));
    o.alpha = alpha;
    o.master_seed = c.seed;
    o.workers = c.workers;
    write_fracmom(c, space_only_gap_certificate(c.model.law, th, la, o), o.n_list);
  }
}

void cmd_block(Context& c, const Flags& f) {
  const Vec th = c.theta(c.params.grid("theta", f.theta, {})[0]);
  const double alpha = c.params.get<double>("alpha", f.alpha, 0.5);
  const std::int64_t n = c.params.get<std::int64_t>("n", f.n, 64);
  const double c1 = c.params.get<double>("c1", f.c1, 1.0);
  const std::string flavor_name = c.params.get<std::string>("flavor", f.flavor, c.d() == 3 ? "quadratic" : "linear");
  if (flavor_name != "linear" && flavor_name != "quadratic") throw ConfigError("flavor must be linear or quadratic");
  const TiltFlavor flavor = flavor_name == "linear" ? TiltFlavor::Linear : TiltFlavor::Quadratic;
  SingleBlockOptions o;
  o.replicas = static_cast<std::size_t>(c.params.get<std::int64_t>("replicas", f.replicas, 1000));
  o.master_seed = c.seed;
  o.workers = c.workers;
  TiltSchedule s;
  if (c.space_time()) {
    double c2 = c.params.get<double>("c2", f.c2, 0.0);
    if (c2 <= 0.0) c2 = select_c2(tilted_kernel(*c.model.law, th), c.model.law->range());
    s = make_schedule(*c.model.law, flavor, th, alpha, n, c1, c2);
  } else {
    const BlockPool pool = make_pool(c, f);
    const MgfEstimate la = lambda_a_regen(pool, th, lambda_a_options(c, f, pool));
    const ZetaEstimate z = zeta(pool, th, la.value);
    s = make_schedule(c.d(), RangeKind::SpaceOnly, flavor, th, alpha, n, c1, c.params.get<double>("c2", f.c2, 1.0), z.value);
    o.lambda_a = la.value;
    o.regen.horizon = c.params.get<std::int64_t>("horizon", f.horizon, 200);
  }
  s.r = static_cast<int>(c.params.get<std::int64_t>("r", f.r, 6));
  const SingleBlockResult res = single_block_estimate(c.model.law, s, o);

  std::ostringstream csv;
  io::CsvWriter w(csv);
  std::vector<std::string> head;
  const int dims = c.space_time() ? c.d() - 1 : c.d();
  for (int i = 0; i < dims; ++i) head.push_back("y" + std::to_string(i + 1));
  for (const char* h : {"value", "std_error", "alpha_power", "cumulative"}) head.push_back(h);
  w.row(head);
  for (const auto& row : res.rows) {
    std::vector<std::string> cells;
    for (int i = 0; i < dims; ++i) cells.push_back(std::to_string(row.y[static_cast<std::size_t>(i)]));
    for (double v : {row.value, row.std_error, row.alpha_power, row.cumulative}) cells.push_back(fmt(v));
    w.row(cells);
  }
  c.write("block.csv", csv.str());
  c.write("schedule.json", io::schedule_to_json(s).dump(2) + "\n");
  json sum = {{"truncated_sum", res.truncated_sum}, {"tail_term", res.tail_term}, {"total", res.total},
              {"std_error", res.estimate.std_error}, {"plain_sum", res.plain_sum}, {"mean_tilt", res.mean_tilt},
              {"mean_w", res.mean_w}, {"tilt_fired", res.tilt_fired}, {"replicas", res.replicas},
              {"notes", res.estimate.notes}};
  c.write("block_summary.json", sum.dump(2) + "\n");
  c.summary = sum;
}

void cmd_corr(Context& c, const Flags& f) {
  const auto th = c.thetas(c.params.grid("theta", f.theta, {}));
  std::ostringstream csv;
  io::CsvWriter w(csv);
  json reports = json::array();
  if (c.space_time()) {
    auto head = theta_header(c.d());
    for (const char* h : {"mu", "verdict", "f", "g", "f_minus_g"}) head.push_back(h);
    w.row(head);
    for (const auto& t : th) {
      const CorrelationReport r = mu_one_step(*c.model.law, t);
      std::vector<std::string> row;
      push_vec(row, t, c.d());
      row.push_back(fmt(r.mu_value));
      row.push_back(r.verdict);
      if (ThetaDomain::transversal(t, c.d())) {
        const FgValue fg = fg_components(*c.model.law, t);
        for (double v : {fg.f, fg.g, fg.gap}) row.push_back(fmt(v));
      } else {
        row.insert(row.end(), {"", "", ""});
      }
      w.row(row);
    }
  } else {
    const BlockPool pool = make_pool(c, f);
    const LambdaAOptions lo = lambda_a_options(c, f, pool);
    MuRegenOptions mo;
    mo.level = c.params.get<double>("level", f.level, 0.95);
    mo.control_variate = c.params.get<bool>("control_variate", f.control_variate, pool.isotropic);
    mo.spec = c.model.class_m;
    auto head = theta_header(c.d());
    for (const char* h : {"lambda_a", "mu", "mu_se", "mu_ci_lo", "mu_ci_hi", "verdict", "mean_z", "mean_z_se",
                          "mean_tau_z", "mean_tau_z_se", "l0", "l0_se", "l1", "l1_se", "l2", "l2_se",
                          "z_bound_violations", "blocks"})
      head.push_back(h);
    w.row(head);
    for (const auto& t : th) {
      const double la = lambda_a_regen(pool, t, lo).value;
      const CorrelationReport r = mu_regen(pool, t, la, mo);
      std::vector<std::string> row;
      push_vec(row, t, c.d());
      for (double v : {la, r.mu_value, r.std_error, r.ci_lo, r.ci_hi}) row.push_back(fmt(v));
      row.push_back(r.verdict);
      for (double v : {r.mean_z.value, r.mean_z.std_error, r.mean_tau_z.value, r.mean_tau_z.std_error})
        row.push_back(fmt(v));
      json rj = {{"theta", vec_json(t, c.d())}, {"lambda_a", la}, {"mu", r.mu_value}, {"verdict", r.verdict},
                 {"notes", r.notes}};
      if (pool.bfu) {
        const CorrelationReport l = l_term_decomposition(pool, t, mo);
        for (const auto& term : *l.decomposition) {
          row.push_back(fmt(term.value));
          row.push_back(fmt(term.std_error));
        }
        rj["l_terms"] = {term_json((*l.decomposition)[0]), term_json((*l.decomposition)[1]),
                         term_json((*l.decomposition)[2])};
      } else {
        row.insert(row.end(), 6, "");
      }
      row.push_back(std::to_string(r.z_bound_violations));
      row.push_back(std::to_string(r.blocks));
      w.row(row);
      reports.push_back(rj);
    }
  }
  c.write("corr.csv", csv.str());
  if (!reports.empty()) c.write("corr.json", reports.dump(2) + "\n");
}

void cmd_gap(Context& c, const Flags& f) {
  const auto th = c.thetas(c.params.grid("theta", f.theta, {}));
  if (c.space_time()) {
    GapOptions o;
    o.replicas = static_cast<std::size_t>(c.params.get<std::int64_t>("replicas", f.replicas, 16));
    o.level = c.params.get<double>("level", f.level, 0.95);
    o.master_seed = c.seed;
    o.workers = c.workers;
    const std::int64_t n = c.params.get<std::int64_t>("n", f.n, 16384);
    const RateGrid grid = gap_profile(c.model.law, th, n, o);
    std::ostringstream csv;
    io::write_rate_grid_csv(csv, grid);
    c.write("gap.csv", csv.str());
    // the plot is drawn from the CSV alone
    std::istringstream back(csv.str());
    c.write("gap.svg", rate_grid_svg(io::read_rate_grid_csv(back, c.d())));
    return;
  }
  const BlockPool pool = make_pool(c, f);
  const LambdaAOptions lo = lambda_a_options(c, f, pool);
  SpaceOnlyGapOptions o;
  o.n_list = c.params.ints("n_list", f.n_list, {8, 16, 32, 64});
  o.env_replicas = static_cast<std::size_t>(c.params.get<std::int64_t>("env_replicas", f.env_replicas, 200));
  o.inner_walks = static_cast<std::size_t>(c.params.get<std::int64_t>("inner_walks", f.inner, 50));
  o.bootstrap = static_cast<std::size_t>(c.params.get<std::int64_t>("bootstrap", f.bootstrap, 500));
  o.master_seed = c.seed;
  o.workers = c.workers;
  std::ostringstream csv;
  io::CsvWriter w(csv);
  auto head = theta_header(c.d());
  for (const char* h : {"lambda_a", "lambda_a_se", "surrogate_slope", "slope_ci_lo", "slope_ci_hi", "certificate"})
    head.push_back(h);
  w.row(head);
  for (const auto& t : th) {
    const MgfEstimate la = lambda_a_regen(pool, t, lo);
    const FractionalMomentResult fm = space_only_gap_certificate(c.model.law, t, la.value, o);
    std::vector<std::string> row;
    push_vec(row, t, c.d());
    for (double v : {la.value, la.std_error, fm.slope, fm.slope_ci_lo, fm.slope_ci_hi}) row.push_back(fmt(v));
    row.push_back("fractional-moment-surrogate");
    w.row(row);
  }
  c.write("gap.csv", csv.str());
}

void cmd_regen(Context& c, const Flags& f) {
  const BlockPool pool = make_pool(c, f);
  std::ostringstream blocks;
  io::write_blocks_jsonl(blocks, pool);
  c.write("blocks.jsonl", blocks.str());
  const TailFit tf = fit_duration_tail(pool.blocks);
  const IidDiagnostics iid = block_iid_diagnostics(pool);
  double mean_tau = 0.0;
  for (const auto& b : pool.blocks) mean_tau += static_cast<double>(b.duration);
  mean_tau /= static_cast<double>(pool.blocks.size());
  json j = {{"blocks", pool.blocks.size()},
            {"replicas", pool.replicas},
            {"acceptance_rate", pool.acceptance_rate()},
            {"late_violations", pool.late_violations},
            {"horizon", pool.horizon},
            {"mean_duration", mean_tau},
            {"tail_fit",
             {{"slope", tf.slope}, {"intercept", tf.intercept}, {"r_squared", tf.r_squared}, {"n_lo", tf.n_lo},
              {"n_hi", tf.n_hi}, {"rate", tf.rate()}, {"horizon_bias", tf.tail_at(pool.horizon)}}},
            {"iid",
             {{"lag1_autocorrelation", iid.lag1_autocorrelation}, {"lag1_band", iid.lag1_band},
              {"pairs", iid.blocks}, {"ks_statistic", iid.ks_statistic}, {"ks_p_value", iid.ks_p_value}}}};
  c.write("regen.json", j.dump(2) + "\n");
  c.summary = j;
}

void cmd_oracle(Context& c, const Flags& f) {
  const auto th = c.thetas(c.params.grid("theta", f.theta, {}));
  const double alpha = c.params.get<double>("alpha", f.alpha, 0.5);
  const std::int64_t n_max = c.params.get<std::int64_t>("n_max", f.n_max, 4);
  json entries = json::array();
  for (const auto& t : th) {
    json e = {{"theta", vec_json(t, c.d())}, {"alpha", alpha}};
    json rows = json::array();
    for (int n = 1; n <= n_max; ++n) {
      json r = {{"n", n}};
      try {
        r["annealed_exp_theta"] = oracle::exact_annealed_expectation(*c.model.law, t, n, oracle::Functional::ExpTheta);
      } catch (const BudgetError&) {
        r["annealed_exp_theta"] = nullptr;
      }
      if (c.space_time()) {
        r["phi_power"] = std::pow(oracle::phi(*c.model.law, t), n);
        try {
          r["fractional_moment"] = oracle::exact_fractional_moment(*c.model.law, t, alpha, n);
        } catch (const BudgetError&) {
          r["fractional_moment"] = nullptr;
        }
        if (n == 1)
          r["w1_times_a"] = oracle::exact_annealed_expectation(*c.model.law, t, 1, oracle::Functional::WnTimesA);
      }
      rows.push_back(r);
    }
    e["rows"] = rows;
    entries.push_back(e);
  }
  json doc = {{"version", 1}, {"model", c.model.source}, {"entries", entries}};
  c.write("fixtures.json", doc.dump(2) + "\n");
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json model_document(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\n");
  if (first != std::string::npos && arg[first] == '{') {
    try {
      return json::parse(arg);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("--model: ") + e.what());
    }
  }
  return read_json_file(arg);
}

void error_line(std::ostream& err, const char* kind, const std::string& msg) {
  err << json{{"error", kind}, {"message", msg}}.dump() << '\n';
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Random walks in random environment: quenched and averaged estimators"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--out,-o", f.out, "output directory")->required();
  app.add_option("--config,-c", f.config, "JSON config {model, master_seed, params}");
  app.add_option("--model,-m", f.model, "model JSON (inline or file path)");
  app.add_option("--seed,-s", f.seed, "master seed");
  app.add_option("--workers,-w", f.workers, "worker threads (0 = hardware)");

  struct Sub {
    const char* name;
    const char* help;
    void (*fn)(Context&, const Flags&);
  };
  const std::vector<Sub> subs{
      {"validate", "class M validation report", cmd_validate},
      {"mgf", "Lambda_a / Lambda_q tables", cmd_mgf},
      {"fracmom", "fractional-moment decay table", cmd_fracmom},
      {"block", "single-block estimate", cmd_block},
      {"corr", "correlation reports", cmd_corr},
      {"gap", "gap profile (CSV + SVG)", cmd_gap},
      {"regen", "regeneration blocks, tail fit, i.i.d. diagnostics", cmd_regen},
      {"oracle", "exact oracle fixtures", cmd_oracle},
  };
  std::vector<CLI::App*> apps;
  for (const auto& s : subs) {
    CLI::App* sc = app.add_subcommand(s.name, s.help);
    sc->add_option("--theta,-t", f.theta, "theta as comma list (repeatable)");
    sc->add_option("--n", f.n, "N or block length n");
    sc->add_option("--n-list", f.n_list, "comma list of N");
    sc->add_option("--replicas", f.replicas, "environment replicas");
    sc->add_option("--bootstrap", f.bootstrap, "bootstrap resamples");
    sc->add_option("--alpha", f.alpha, "fractional exponent");
    sc->add_option("--c1", f.c1, "tube width C1");
    sc->add_option("--c2", f.c2, "kernel window C2 (0 = CLT rule)");
    sc->add_option("--r", f.r, "tail cutoff R");
    sc->add_option("--flavor", f.flavor, "tilt flavor: linear | quadratic");
    sc->add_option("--blocks", f.blocks, "blocks per replica (space-only pools)");
    sc->add_option("--pool-replicas", f.pool_replicas, "replicas in the block pool");
    sc->add_option("--horizon", f.horizon, "confirmation horizon T");
    sc->add_option("--env-replicas", f.env_replicas, "environments (space-only surrogate)");
    sc->add_option("--inner", f.inner, "walks per environment (space-only surrogate)");
    sc->add_option("--n-max", f.n_max, "largest N for oracle tables");
    sc->add_option("--tol", f.tol, "root-find tolerance");
    sc->add_option("--level", f.level, "confidence level");
    sc->add_option("--doubling", f.doubling, "also evaluate at N/2");
    sc->add_option("--symmetrize", f.symmetrize, "average over transversal symmetries");
    sc->add_option("--control-variate", f.control_variate, "control variate for mu_regen");
    apps.push_back(sc);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    error_line(err, "config", e.what());
    return kExitConfig;
  }

  try {
    json cfg = f.config ? read_json_file(*f.config) : json::object();
    if (!cfg.is_object()) throw ConfigError("config must be a JSON object");
    std::size_t which = 0;
    for (; which < apps.size(); ++which)
      if (apps[which]->parsed()) break;
    json doc;
    if (f.model) {
      doc = model_document(*f.model);
    } else if (cfg.contains("model")) {
      doc = cfg.at("model");
    } else {
      throw ConfigError("no model given (--model or config.model)");
    }
    Context c;
    if (std::string(subs[which].name) == "validate") {
      // an invalid spec must still produce a report
      c.model.class_m = io::class_m_from_json(doc);
      c.model.source = doc;
    } else {
      c.model = io::model_from_json(doc);
    }
    c.seed = f.seed ? *f.seed : cfg.value("master_seed", std::uint64_t{1});
    c.workers = f.workers;
    c.params = Params(cfg.value("params", json::object()));
    c.out = f.out;
    fs::create_directories(c.out);

    subs[which].fn(c, f);

    json config = {{"subcommand", subs[which].name},
                   {"model", c.model.source},
                   {"master_seed", c.seed},
                   {"params", c.params.resolved()}};
    json manifest = {{"config", config},
                     {"config_hash", io::hash_hex(config.dump())},
                     {"versions",
                      {{"rwre", kVersion}, {"compiler", __VERSION__}, {"boost", BOOST_LIB_VERSION},
                       {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                             std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                             std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                       {"cli11", CLI11_VERSION}}},
                     {"outputs", c.outputs},
                     {"runtime", {{"workers", c.workers}}}};
    std::ofstream mf(c.out / "manifest.json", std::ios::binary);
    mf << manifest.dump(2) << '\n';
    out << json{{"ok", true}, {"subcommand", subs[which].name}, {"outputs", c.outputs}, {"summary", c.summary}}.dump()
        << '\n';
    return kExitOk;
  } catch (const ConfigError& e) {
    error_line(err, "config", e.what());
    return kExitConfig;
  } catch (const BudgetError& e) {
    error_line(err, "budget", e.what());
    return kExitBudget;
  } catch (const ConvergenceError& e) {
    error_line(err, "convergence", e.what());
    return kExitConvergence;
  } catch (const json::exception& e) {
    error_line(err, "config", e.what());
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    error_line(err, "config", e.what());
    return kExitConfig;
  }
}

}  // namespace rwre::cli
