#include <doctest.h>

#include <cmath>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/stats.hpp"

using namespace rwre;

TEST_CASE("class M validation: passing and failing parameter sets") {
  const ValidationReport ok = validate_class_m({2, 0.5, 0.3, 0.2, 0.05});
  CHECK(ok.ok());
  CHECK(ok.kappa == doctest::Approx(0.10).epsilon(1e-12));

  CHECK_FALSE(validate_class_m({2, 0.2, 0.3, 0.5, 0.05}).ok());  // p_minus >= p_plus
  CHECK_FALSE(validate_class_m({3, 0.5, 0.3, 0.2, 0.05}).ok());  // eps above p0/(4(d-1)) = 0.0375
  CHECK_FALSE(validate_class_m({2, 0.5, 0.3, 0.1, 0.05}).ok());  // masses do not sum to 1
  CHECK_THROWS_AS(validate_class_m({2, NAN, 0.3, 0.2, 0.05}), ConfigError);
}

TEST_CASE("canonical class M marginal, d=2") {
  const MarginalLaw law = canonical_class_m_marginal({2, 0.5, 0.3, 0.2, 0.04});
  const int plus = law.range().index_of_axis(0, +1), minus = law.range().index_of_axis(0, -1);
  REQUIRE(law.support().size() == 2);
  std::vector<double> e1, me1;
  for (const auto& sp : law.support()) {
    CHECK(sp.weight == doctest::Approx(0.5));
    e1.push_back(sp.probs[static_cast<std::size_t>(plus)]);
    me1.push_back(sp.probs[static_cast<std::size_t>(minus)]);
  }
  std::sort(e1.begin(), e1.end());
  std::sort(me1.begin(), me1.end());
  CHECK(e1[0] == doctest::Approx(0.12));
  CHECK(e1[1] == doctest::Approx(0.18));
  // x -> -x symmetry: the two coordinates have the same law
  CHECK(e1 == me1);
  CHECK_THROWS_AS(canonical_class_m_marginal({2, 0.5, 0.3, 0.2, 0.0}), ConfigError);
}

TEST_CASE("canonical class M marginal, d=3 keeps the vertical masses") {
  const MarginalLaw law = canonical_class_m_marginal({3, 0.5, 0.3, 0.2, 0.03});
  const int up = law.range().index_of_axis(2, +1), down = law.range().index_of_axis(2, -1);
  for (const auto& sp : law.support()) {
    CHECK(sp.probs[static_cast<std::size_t>(up)] == doctest::Approx(0.5));
    CHECK(sp.probs[static_cast<std::size_t>(down)] == doctest::Approx(0.2));
    double s = 0.0;
    for (std::size_t k = 0; k < law.range().size(); ++k) s += sp.probs[k];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("site kernels are pure functions of (seed, x)") {
  const EnvironmentModel env(canonical_class_m_marginal({2, 0.5, 0.3, 0.2, 0.05}), 42);
  for (std::int64_t a = -5; a <= 5; ++a) {
    const Site x{a, 3 * a - 1, 0};
    CHECK(env.site_kernel(x) == env.site_kernel(x));
    CHECK(env.site_kernel(x) == env.with_seed(42).site_kernel(x));
  }
}

TEST_CASE("single-point marginal gives the same kernel everywhere") {
  const StepRange r = StepRange::space_only(2);
  const Kernel k{0.2, 0.1, 0.4, 0.3};
  const EnvironmentModel env(MarginalLaw::finite(r, {{k, 1.0}}, 0.1), 9);
  for (std::int64_t a = -3; a <= 3; ++a) CHECK(env.site_kernel({a, -a, 0}) == k);
  CHECK(env.marginal().degenerate());
}

TEST_CASE("empirical site mean of pi(0,e1) matches the marginal mean") {
  const EnvironmentModel env(canonical_class_m_marginal({2, 0.5, 0.3, 0.2, 0.05}), 2024);
  const auto plus = static_cast<std::size_t>(env.range().index_of_axis(0, +1));
  std::vector<double> xs;
  for (std::int64_t i = 0; i < 100000; ++i) xs.push_back(env.site_kernel({i % 317, i / 317, 0})[plus]);
  const auto m = stats::mean_se(xs);
  CHECK(std::abs(m.mean - env.marginal().mean_kernel()[plus]) <= 3 * m.std_error);
}

TEST_CASE("drift of kernels") {
  const MarginalLaw cm = canonical_class_m_marginal({2, 0.5, 0.3, 0.2, 0.05});
  for (const auto& sp : cm.support()) CHECK(drift(sp.probs, cm.range())[1] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(non_nestling(cm, {0, 1, 0}));
  CHECK_FALSE(non_nestling(cm, {1, 0, 0}));

  const Vec v = drift({0.25, 0.25, 0.25, 0.25}, StepRange::space_only(2));
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 0.0);

  const StepRange st = StepRange::space_time(3);
  CHECK(drift({0.1, 0.2, 0.3, 0.4}, st)[2] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("malformed marginals are rejected") {
  const StepRange r = StepRange::space_only(2);
  CHECK_THROWS_AS(MarginalLaw::finite(r, {{{0.5, 0.5, 0.5, 0.5}, 1.0}}, 0.1), ConfigError);
  CHECK_THROWS_AS(MarginalLaw::finite(r, {{{0.25, 0.25, 0.25, 0.25}, 0.5}}, 0.1), ConfigError);
  CHECK_THROWS_AS(MarginalLaw::finite(r, {{{0.05, 0.25, 0.35, 0.35}, 1.0}}, 0.1), ConfigError);
}
