#include "rwre/rng.hpp"

#include <sstream>

namespace rwre {

namespace {
constexpr std::uint64_t kFoldConst[kMaxDim] = {
    0x243f6a8885a308d3ULL,
    0x13198a2e03707344ULL,
    0xa4093822299f31d0ULL,
};
}  // namespace

std::uint64_t derive_seed(std::uint64_t master, Role role, std::uint64_t index) {
  const std::uint64_t tagged = mix64(master ^ static_cast<std::uint64_t>(role));
  return mix64(tagged + index * 0xd1b54a32d192ed03ULL);
}

std::uint64_t fold_site(const Site& x) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(x[0]) + kFoldConst[0]);
  h = mix64(h ^ (static_cast<std::uint64_t>(x[1]) + kFoldConst[1]));
  h = mix64(h ^ (static_cast<std::uint64_t>(x[2]) + kFoldConst[2]));
  return h;
}

std::uint64_t site_key(std::uint64_t seed, const Site& x) { return mix64(seed ^ fold_site(x)); }

std::string to_string(const Site& x, int d) {
  std::ostringstream os;
  os << '(';
  for (int i = 0; i < d; ++i) os << (i ? "," : "") << x[static_cast<std::size_t>(i)];
  os << ')';
  return os.str();
}

std::string to_string(const Vec& v, int d) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (int i = 0; i < d; ++i) os << (i ? "," : "") << v[static_cast<std::size_t>(i)];
  os << ')';
  return os.str();
}

}  // namespace rwre
