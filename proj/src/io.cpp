#include "rwre/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "rwre/models.hpp"

namespace rwre::io {
namespace {

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T field_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? field<T>(j, key) : fallback;
}

StepRange range_from(const json& j) {
  const auto name = field<std::string>(j, "range");
  const int d = field<int>(j, "d");
  if (d != 2 && d != 3) throw ConfigError("d must be 2 or 3");
  if (name == "space_time") return StepRange::space_time(d);
  if (name == "space_only") return StepRange::space_only(d);
  throw ConfigError("range must be 'space_time' or 'space_only'");
}

Kernel kernel_from(const json& j, const StepRange& range) {
  if (!j.is_array() || j.size() != range.size())
    throw ConfigError("kernel needs " + std::to_string(range.size()) + " probabilities");
  Kernel k{};
  for (std::size_t i = 0; i < range.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError("kernel entries must be numbers");
    k[i] = j[i].get<double>();
  }
  return k;
}

json kernel_to(const Kernel& k, const StepRange& range) {
  json a = json::array();
  for (std::size_t i = 0; i < range.size(); ++i) a.push_back(k[i]);
  return a;
}

}  // namespace

ClassMSpec class_m_from_json(const json& j) {
  if (!j.is_object() || j.value("kind", "") != "class_m") throw ConfigError("expected a class_m model");
  ClassMSpec s;
  s.d = field<int>(j, "d");
  s.p_plus = field<double>(j, "p_plus");
  s.p_zero = field<double>(j, "p_zero");
  s.p_minus = field<double>(j, "p_minus");
  s.epsilon = field<double>(j, "epsilon");
  return s;
}

ModelSpec model_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model must be a JSON object");
  const auto kind = field<std::string>(j, "kind");
  ModelSpec m;
  if (kind == "class_m") {
    const ClassMSpec s = class_m_from_json(j);
    m.law = std::make_shared<const MarginalLaw>(canonical_class_m_marginal(s));
    m.class_m = s;
    m.source = {{"kind", "class_m"}, {"d", s.d}, {"p_plus", s.p_plus}, {"p_zero", s.p_zero},
                {"p_minus", s.p_minus}, {"epsilon", s.epsilon}};
    return m;
  }
  if (kind == "preset") {
    const auto name = field<std::string>(j, "name");
    if (name == "binary_1p1") {
      const double lo = field_or<double>(j, "p_lo", 0.3), hi = field_or<double>(j, "p_hi", 0.7);
      m.law = std::make_shared<const MarginalLaw>(models::binary_space_time(lo, hi));
      m.source = {{"kind", "preset"}, {"name", name}, {"p_lo", lo}, {"p_hi", hi}};
    } else if (name == "two_point_2p1") {
      m.law = std::make_shared<const MarginalLaw>(models::two_point_2p1());
      m.source = {{"kind", "preset"}, {"name", name}};
    } else if (name == "four_point_2p1") {
      m.law = std::make_shared<const MarginalLaw>(models::four_point_2p1());
      m.source = {{"kind", "preset"}, {"name", name}};
    } else {
      throw ConfigError("unknown preset '" + name + "'");
    }
    return m;
  }
  const StepRange range = range_from(j);
  const double kappa = field<double>(j, "kappa");
  if (kind == "finite") {
    const json& sup = j.contains("support") ? j.at("support") : json();
    if (!sup.is_array() || sup.empty()) throw ConfigError("finite marginal needs a non-empty 'support' array");
    std::vector<SupportPoint> pts;
    for (const auto& p : sup) pts.push_back({kernel_from(p.at("probs"), range), field<double>(p, "weight")});
    m.law = std::make_shared<const MarginalLaw>(
        MarginalLaw::finite(range, std::move(pts), kappa, field_or<bool>(j, "isotropic", false)));
  } else if (kind == "pair_uniform") {
    PairUniformLaw p;
    p.base = kernel_from(j.at("base"), range);
    p.amplitude = field<double>(j, "amplitude");
    for (const auto& pr : field<json>(j, "pairs")) {
      if (!pr.is_array() || pr.size() != 2) throw ConfigError("pairs must be [i, j] index pairs");
      p.pairs.push_back({pr[0].get<int>(), pr[1].get<int>()});
    }
    m.law = std::make_shared<const MarginalLaw>(MarginalLaw::pair_uniform(range, std::move(p), kappa));
  } else {
    throw ConfigError("unknown model kind '" + kind + "'");
  }
  m.source = marginal_to_json(*m.law);
  return m;
}

json marginal_to_json(const MarginalLaw& law) {
  json j;
  j["range"] = law.range().kind == RangeKind::SpaceTime ? "space_time" : "space_only";
  j["d"] = law.d();
  j["kappa"] = law.kappa();
  if (law.is_finite()) {
    j["kind"] = "finite";
    j["isotropic"] = law.isotropic();
    json sup = json::array();
    for (const auto& sp : law.support()) sup.push_back({{"probs", kernel_to(sp.probs, law.range())}, {"weight", sp.weight}});
    j["support"] = sup;
  } else {
    const auto& p = law.parametric();
    j["kind"] = "pair_uniform";
    j["base"] = kernel_to(p.base, law.range());
    j["amplitude"] = p.amplitude;
    json pairs = json::array();
    for (const auto& pr : p.pairs) pairs.push_back({pr[0], pr[1]});
    j["pairs"] = pairs;
  }
  return j;
}

json schedule_to_json(const TiltSchedule& s) {
  auto vec = [&](const Vec& v) {
    json a = json::array();
    for (int i = 0; i < s.d; ++i) a.push_back(v[static_cast<std::size_t>(i)]);
    return a;
  };
  return {{"d", s.d},
          {"range", s.kind == RangeKind::SpaceTime ? "space_time" : "space_only"},
          {"flavor", s.flavor == TiltFlavor::Linear ? "linear" : "quadratic"},
          {"theta", vec(s.theta)},
          {"alpha", s.alpha},
          {"n", s.n},
          {"m", s.m},
          {"c1", s.c1},
          {"c2", s.c2},
          {"k", s.k},
          {"delta_n", s.delta_n},
          {"r", s.r},
          {"a_n", s.a_n},
          {"center", vec(s.center)}};
}

void write_blocks_jsonl(std::ostream& os, const BlockPool& pool) {
  for (const auto& b : pool.blocks) {
    json j;
    j["displacement"] = {b.displacement[0], b.displacement[1], b.displacement[2]};
    j["duration"] = b.duration;
    j["visited"] = b.visited;
    j["drift_sum"] = {b.drift_sum[0], b.drift_sum[1], b.drift_sum[2]};
    j["u_count"] = b.u_count;
    j["l_class"] = static_cast<int>(b.l_class);
    j["confirmed_to"] = b.confirmed_to;
    os << j.dump() << '\n';
  }
}

std::vector<RegenBlock> read_blocks_jsonl(std::istream& is) {
  std::vector<RegenBlock> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("block line: ") + e.what());
    }
    RegenBlock b;
    for (std::size_t i = 0; i < 3; ++i) {
      b.displacement[i] = j.at("displacement")[i].get<std::int64_t>();
      b.drift_sum[i] = j.at("drift_sum")[i].get<double>();
    }
    b.duration = field<std::int64_t>(j, "duration");
    b.visited = field<std::int32_t>(j, "visited");
    b.u_count = field<std::int32_t>(j, "u_count");
    b.l_class = static_cast<LClass>(field<int>(j, "l_class"));
    b.confirmed_to = field<std::int64_t>(j, "confirmed_to");
    out.push_back(b);
  }
  return out;
}

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string fmt(const Vec& v, int d, char sep) {
  std::string s;
  for (int i = 0; i < d; ++i) {
    if (i) s += sep;
    s += fmt(v[static_cast<std::size_t>(i)]);
  }
  return s;
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) os_ << ',';
    os_ << cells[i];
  }
  os_ << '\n';
}

void write_rate_grid_csv(std::ostream& os, const RateGrid& grid) {
  CsvWriter w(os);
  std::vector<std::string> head;
  for (int i = 0; i < grid.d; ++i) head.push_back("theta" + std::to_string(i + 1));
  for (int i = 0; i < grid.d; ++i) head.push_back("xi" + std::to_string(i + 1));
  for (const char* c : {"lambda_a", "lambda_a_se", "lambda_q", "lambda_q_se", "gap", "gap_se", "gap_ci_lo",
                        "gap_ci_hi", "i_a", "gradient_flag", "certificate"})
    head.push_back(c);
  w.row(head);
  for (const auto& r : grid.rows) {
    std::vector<std::string> c;
    for (int i = 0; i < grid.d; ++i) c.push_back(fmt(r.theta[static_cast<std::size_t>(i)]));
    for (int i = 0; i < grid.d; ++i) c.push_back(fmt(r.xi[static_cast<std::size_t>(i)]));
    for (double v : {r.lambda_a, r.lambda_a_se, r.lambda_q, r.lambda_q_se, r.gap, r.gap_se, r.gap_ci_lo, r.gap_ci_hi,
                     r.i_a})
      c.push_back(fmt(v));
    c.push_back(r.gradient_flag ? "1" : "0");
    c.push_back(r.certificate);
    w.row(c);
  }
}

RateGrid read_rate_grid_csv(std::istream& is, int d) {
  RateGrid g;
  g.d = d;
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("empty rate grid CSV");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::size_t need = static_cast<std::size_t>(2 * d) + 11;
    if (cells.size() != need) throw ConfigError("rate grid CSV row has " + std::to_string(cells.size()) + " cells");
    RateRow r;
    std::size_t k = 0;
    auto num = [&] { return std::stod(cells[k++]); };
    for (int i = 0; i < d; ++i) r.theta[static_cast<std::size_t>(i)] = num();
    for (int i = 0; i < d; ++i) r.xi[static_cast<std::size_t>(i)] = num();
    r.lambda_a = num(), r.lambda_a_se = num(), r.lambda_q = num(), r.lambda_q_se = num();
    r.gap = num(), r.gap_se = num(), r.gap_ci_lo = num(), r.gap_ci_hi = num(), r.i_a = num();
    r.gradient_flag = cells[k++] == "1";
    r.certificate = cells[k++];
    g.rows.push_back(r);
  }
  return g;
}

std::string hash_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rwre::io
