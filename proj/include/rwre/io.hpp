#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rwre/env.hpp"
#include "rwre/fracmom.hpp"
#include "rwre/rate.hpp"
#include "rwre/walk.hpp"

namespace rwre::io {

using json = nlohmann::json;

/// A model as read from configuration. Class M models keep their parameters.
struct ModelSpec {
  std::shared_ptr<const MarginalLaw> law;
  std::optional<ClassMSpec> class_m;
  json source;  // normalized document, every default filled in
};

/// Accepted forms (field "kind"):
///   finite:       {range: "space_time"|"space_only", d, kappa, isotropic?, support: [{probs, weight}]}
///   pair_uniform: {range, d, kappa, base, amplitude, pairs: [[i, j], ...]}
///   class_m:      {d, p_plus, p_zero, p_minus, epsilon}
///   preset:       {name: "binary_1p1" (p_lo?, p_hi?) | "two_point_2p1" | "four_point_2p1"}
/// Throws ConfigError on malformed input.
ModelSpec model_from_json(const json& j);
/// Class M parameters only; no validation, so invalid specs can still be reported.
ClassMSpec class_m_from_json(const json& j);
json marginal_to_json(const MarginalLaw& law);

json schedule_to_json(const TiltSchedule& s);

/// One JSON object per line, fields in a fixed order.
void write_blocks_jsonl(std::ostream& os, const BlockPool& pool);
std::vector<RegenBlock> read_blocks_jsonl(std::istream& is);

/// Shortest round-trip decimal form of a double ("inf", "-inf", "nan" for the rest).
std::string fmt(double x);
std::string fmt(const Vec& v, int d, char sep = ' ');

/// Comma-separated writer; cells are written verbatim.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}
  void row(const std::vector<std::string>& cells);

 private:
  std::ostream& os_;
};

void write_rate_grid_csv(std::ostream& os, const RateGrid& grid);
RateGrid read_rate_grid_csv(std::istream& is, int d);

/// FNV-1a 64-bit hash of a string, as 16 hex digits.
std::string hash_hex(const std::string& s);

}  // namespace rwre::io
