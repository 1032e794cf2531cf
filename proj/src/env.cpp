#include "rwre/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rwre/rng.hpp"

namespace rwre {

namespace {

constexpr double kSumTol = 1e-12;

Site axis_site(int axis, int sign) {
  Site s{0, 0, 0};
  s[static_cast<std::size_t>(axis)] = sign;
  return s;
}

void sort_lex(std::vector<Site>& steps) { std::sort(steps.begin(), steps.end()); }

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(12);
  os << x;
  return os.str();
}

}  // namespace

StepRange StepRange::space_time(int d) {
  if (d != 2 && d != 3) throw ConfigError("space-time range needs d in {2,3}, got " + std::to_string(d));
  StepRange r;
  r.kind = RangeKind::SpaceTime;
  r.d = d;
  for (int axis = 0; axis < d - 1; ++axis) {
    for (int sign : {-1, 1}) {
      Site z = axis_site(axis, sign);
      z[static_cast<std::size_t>(d - 1)] = 1;
      r.steps.push_back(z);
    }
  }
  sort_lex(r.steps);
  return r;
}

StepRange StepRange::space_only(int d) {
  if (d < 1 || d > kMaxDim) throw ConfigError("space-only range needs d in {1,2,3}, got " + std::to_string(d));
  StepRange r;
  r.kind = RangeKind::SpaceOnly;
  r.d = d;
  for (int axis = 0; axis < d; ++axis)
    for (int sign : {-1, 1}) r.steps.push_back(axis_site(axis, sign));
  sort_lex(r.steps);
  return r;
}

int StepRange::index_of(const Site& z) const {
  for (std::size_t i = 0; i < steps.size(); ++i)
    if (steps[i] == z) return static_cast<int>(i);
  return -1;
}

int StepRange::index_of_axis(int axis, int sign) const {
  Site z = axis_site(axis, sign);
  if (kind == RangeKind::SpaceTime) z[static_cast<std::size_t>(d - 1)] = 1;
  return index_of(z);
}

MarginalLaw MarginalLaw::finite(StepRange range, std::vector<SupportPoint> support, double kappa,
                                bool isotropic) {
  MarginalLaw m;
  m.range_ = std::move(range);
  m.support_ = std::move(support);
  m.kappa_ = kappa;
  m.isotropic_ = isotropic;
  m.validate();
  m.finish();
  return m;
}

MarginalLaw MarginalLaw::pair_uniform(StepRange range, PairUniformLaw law, double kappa) {
  MarginalLaw m;
  m.range_ = std::move(range);
  m.param_ = std::move(law);
  m.parametric_ = true;
  m.kappa_ = kappa;
  m.validate();
  m.finish();
  return m;
}

std::span<const SupportPoint> MarginalLaw::support() const {
  if (parametric_) throw ConfigError("marginal law is parametric; no finite support");
  return support_;
}

const PairUniformLaw& MarginalLaw::parametric() const {
  if (!parametric_) throw ConfigError("marginal law has finite support");
  return param_;
}

void MarginalLaw::validate() const {
  const std::size_t k = range_.size();
  if (!(kappa_ > 0.0) || !std::isfinite(kappa_)) throw ConfigError("kappa must be a finite positive number");
  auto check_kernel = [&](const Kernel& p, const std::string& what) {
    double s = 0.0;
    for (std::size_t i = 0; i < kMaxSteps; ++i) {
      if (!std::isfinite(p[i])) throw ConfigError(what + ": non-finite probability");
      if (i >= k && p[i] != 0.0) throw ConfigError(what + ": mass outside the step range");
      if (i < k && p[i] < kappa_ - kSumTol)
        throw ConfigError(what + ": entry " + fmt(p[i]) + " below kappa " + fmt(kappa_));
      s += p[i];
    }
    if (std::abs(s - 1.0) > kSumTol) throw ConfigError(what + ": probabilities sum to " + fmt(s));
  };
  if (!parametric_) {
    if (support_.empty()) throw ConfigError("finite marginal needs at least one support point");
    double w = 0.0;
    for (std::size_t i = 0; i < support_.size(); ++i) {
      check_kernel(support_[i].probs, "support point " + std::to_string(i));
      if (!(support_[i].weight > 0.0)) throw ConfigError("support weights must be positive");
      w += support_[i].weight;
    }
    if (std::abs(w - 1.0) > kSumTol) throw ConfigError("support weights sum to " + fmt(w));
  } else {
    check_kernel(param_.base, "parametric base");
    if (!(param_.amplitude >= 0.0) || !std::isfinite(param_.amplitude))
      throw ConfigError("parametric amplitude must be finite and non-negative");
    std::vector<int> used(k, 0);
    for (const auto& pr : param_.pairs) {
      for (int idx : pr) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= k) throw ConfigError("parametric pair index out of range");
        if (used[static_cast<std::size_t>(idx)]++) throw ConfigError("parametric pairs overlap");
        if (param_.base[static_cast<std::size_t>(idx)] - param_.amplitude < kappa_ - kSumTol)
          throw ConfigError("parametric law violates ellipticity: base - amplitude < kappa");
      }
    }
  }
}

void MarginalLaw::finish() {
  if (!parametric_) {
    cumulative_.clear();
    double c = 0.0;
    mean_.fill(0.0);
    for (const auto& sp : support_) {
      c += sp.weight;
      cumulative_.push_back(c);
      for (std::size_t i = 0; i < kMaxSteps; ++i) mean_[i] += sp.weight * sp.probs[i];
    }
    cumulative_.back() = 1.0;
  } else {
    mean_ = param_.base;
  }
}

Vec MarginalLaw::mean_drift() const { return drift(mean_, range_); }

bool MarginalLaw::degenerate() const {
  if (parametric_) return param_.amplitude == 0.0 || param_.pairs.empty();
  for (const auto& sp : support_)
    if (sp.probs != support_.front().probs) return false;
  return true;
}

std::size_t MarginalLaw::index_for(double u) const {
  // support sizes are tiny in practice; linear scan beats binary search there
  if (cumulative_.size() <= 8) {
    std::size_t i = 0;
    while (i + 1 < cumulative_.size() && u >= cumulative_[i]) ++i;
    return i;
  }
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
}

Kernel MarginalLaw::realize(std::uint64_t key) const {
  Stream s(key);
  if (!parametric_) return support_[index_for(s.uniform())].probs;
  Kernel p = param_.base;
  for (const auto& pr : param_.pairs) {
    const double shift = param_.amplitude * (2.0 * s.uniform() - 1.0);
    p[static_cast<std::size_t>(pr[1])] += shift;
    p[static_cast<std::size_t>(pr[0])] -= shift;
  }
  return p;
}

double MarginalLaw::min_drift_projection(const Vec& u) const {
  if (!parametric_) {
    double m = INFINITY;
    for (const auto& sp : support_) m = std::min(m, dot(drift(sp.probs, range_), u));
    return m;
  }
  // drift is affine in the independent pair shifts, each ranging over [-a, a]
  double m = dot(drift(param_.base, range_), u);
  for (const auto& pr : param_.pairs) {
    const Vec dz = to_vec(range_.steps[static_cast<std::size_t>(pr[1])]) -
                   to_vec(range_.steps[static_cast<std::size_t>(pr[0])]);
    m -= param_.amplitude * std::abs(dot(dz, u));
  }
  return m;
}

Vec drift(const Kernel& kernel, const StepRange& range) {
  Vec v{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < range.size(); ++i) v = v + kernel[i] * to_vec(range.steps[i]);
  return v;
}

bool non_nestling(const MarginalLaw& law, const Vec& direction) {
  return law.min_drift_projection(direction) > 0.0;
}

Kernel EnvironmentModel::site_kernel(const Site& x) const { return marginal_->realize(site_key(seed_, x)); }

std::size_t EnvironmentModel::support_index(const Site& x) const {
  Stream s(site_key(seed_, x));
  return marginal_->index_for(s.uniform());
}

bool ValidationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

ValidationReport validate_class_m(const ClassMSpec& spec) {
  if (spec.d != 2 && spec.d != 3) throw ConfigError("class M needs d in {2,3}");
  for (double v : {spec.p_plus, spec.p_zero, spec.p_minus, spec.epsilon}) {
    if (!std::isfinite(v)) throw ConfigError("class M parameters must be finite");
    if (!(v > 0.0)) throw ConfigError("class M parameters must be positive");
  }
  const double dm1 = spec.d - 1;
  ValidationReport r;
  r.checks.push_back({"a_product_space_only", true, "i.i.d. product law on nearest-neighbour steps"});
  const bool order = spec.p_minus < spec.p_plus;
  const double sum = spec.p_plus + spec.p_zero + spec.p_minus;
  const bool sums = std::abs(sum - 1.0) <= kSumTol;
  r.checks.push_back({"b_vertical_masses", order && sums,
                      std::string(order ? "" : "p_minus >= p_plus; ") + (sums ? "" : "p sums to " + fmt(sum))});
  const double centre = spec.p_zero / (2.0 * dm1);
  const bool window = centre - spec.epsilon > 0.0;
  r.checks.push_back({"c_transversal_window", window,
                      "pi(0,e_1) in (" + fmt(centre - spec.epsilon) + "," + fmt(centre + spec.epsilon) +
                          ") with |pi - " + fmt(centre) + "| > " + fmt(spec.epsilon / 2)});
  r.checks.push_back({"d_isotropy", true, "enforced by exact symmetrization over rotations fixing e_d"});
  const double bound = spec.p_zero / (4.0 * dm1);
  r.checks.push_back({"ellipticity_bound", spec.epsilon <= bound,
                      "epsilon " + fmt(spec.epsilon) + (spec.epsilon <= bound ? " <= " : " > ") + fmt(bound)});
  r.kappa = std::min({spec.p_plus, spec.p_minus, centre - spec.epsilon});
  return r;
}

MarginalLaw canonical_class_m_marginal(const ClassMSpec& spec) {
  const ValidationReport report = validate_class_m(spec);
  if (!report.ok()) {
    std::string why;
    for (const auto& c : report.checks)
      if (!c.pass) why += c.name + " ";
    throw ConfigError("class M spec does not validate: " + why);
  }
  const int d = spec.d;
  const StepRange range = StepRange::space_only(d);
  const auto idx = [&](int axis, int sign) { return static_cast<std::size_t>(range.index_of_axis(axis, sign)); };
  const double centre = spec.p_zero / (2.0 * (d - 1));
  const double delta = 0.75 * spec.epsilon;
  Kernel base{};
  base[idx(d - 1, +1)] = spec.p_plus;
  base[idx(d - 1, -1)] = spec.p_minus;
  std::vector<SupportPoint> support;
  if (d == 2) {
    for (int sigma : {1, -1}) {
      Kernel p = base;
      p[idx(0, +1)] = centre + sigma * delta;
      p[idx(0, -1)] = centre - sigma * delta;
      support.push_back({p, 0.5});
    }
  } else {
    // deviations on the cyclic order (e1, e2, -e1, -e2); quarter turns shift the pattern
    const std::array<std::pair<int, int>, 4> cyc{{{0, +1}, {1, +1}, {0, -1}, {1, -1}}};
    const std::array<int, 4> pattern{+1, +1, -1, -1};
    for (int rot = 0; rot < 4; ++rot) {
      Kernel p = base;
      for (int k = 0; k < 4; ++k) {
        const auto [axis, sign] = cyc[static_cast<std::size_t>((k + rot) % 4)];
        p[idx(axis, sign)] = centre + pattern[static_cast<std::size_t>(k)] * delta;
      }
      support.push_back({p, 0.25});
    }
  }
  return MarginalLaw::finite(range, std::move(support), report.kappa, /*isotropic=*/true);
}

std::vector<IntMatrix> transversal_symmetries(int d) {
  const IntMatrix id{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  if (d == 2) {
    const IntMatrix flip{{{-1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    return {id, flip};
  }
  if (d == 3) {
    const IntMatrix quarter{{{0, -1, 0}, {1, 0, 0}, {0, 0, 1}}};
    std::vector<IntMatrix> out{id};
    for (int k = 1; k < 4; ++k) {
      IntMatrix next{};
      const IntMatrix& prev = out.back();
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          for (int l = 0; l < 3; ++l) next[i][j] += quarter[i][l] * prev[l][j];
      out.push_back(next);
    }
    return out;
  }
  return {id};
}

Site apply(const IntMatrix& m, const Site& x) {
  Site y{0, 0, 0};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) y[i] += m[i][j] * x[j];
  return y;
}

Vec apply(const IntMatrix& m, const Vec& x) {
  Vec y{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) y[i] += m[i][j] * x[j];
  return y;
}

}  // namespace rwre
