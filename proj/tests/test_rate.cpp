#include <doctest.h>

#include <cmath>
#include <sstream>

#include "rwre/io.hpp"
#include "rwre/mgf.hpp"
#include "rwre/models.hpp"
#include "rwre/rate.hpp"

using namespace rwre;

namespace {
double log_cosh(const Vec& t) { return std::log(std::cosh(t[0])); }
}  // namespace

TEST_CASE("Legendre transform of log cosh") {
  const int axes[] = {0};
  CHECK(legendre(log_cosh, {0, 0, 0}, axes).value == doctest::Approx(0.0).epsilon(1e-9));
  const auto at1 = legendre(log_cosh, {1, 0, 0}, axes);
  CHECK(at1.value == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  const auto mid = legendre(log_cosh, {std::tanh(1.0), 0, 0}, axes);
  CHECK(mid.value == doctest::Approx(std::tanh(1.0) - std::log(std::cosh(1.0))).epsilon(1e-9));
  CHECK(std::abs(mid.value - 0.327811) <= 1e-5);
  CHECK(mid.argmax[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(mid.bounded);
}

TEST_CASE("Legendre transform detects unbounded suprema") {
  const int axes[] = {0};
  const auto r = legendre(log_cosh, {1.5, 0, 0}, axes);
  CHECK_FALSE(r.bounded);
  CHECK_FALSE(r.certificate.empty());
}

TEST_CASE("Legendre transform on a grid") {
  std::vector<double> th, la;
  for (int i = -300; i <= 300; ++i) {
    th.push_back(i * 0.01);
    la.push_back(std::log(std::cosh(i * 0.01)));
  }
  CHECK(legendre_grid(th, la, std::tanh(1.0)).value == doctest::Approx(0.327811).epsilon(1e-5));
}

TEST_CASE("gap profile on the e_d axis is exactly zero") {
  auto law = std::make_shared<const MarginalLaw>(models::binary_space_time());
  const std::vector<Vec> th{{0, 0, 0}, {0, 1, 0}, {0, -0.5, 0}};
  GapOptions o;
  o.replicas = 4;
  const RateGrid g = gap_profile(law, th, 256, o);
  for (const auto& r : g.rows) {
    CHECK(r.gap == 0.0);
    CHECK(r.gap_ci_lo <= 0.0);
    CHECK(r.gap_ci_hi >= 0.0);
  }
  CHECK(g.rows[1].i_a == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("rate grid survives a CSV round trip") {
  auto law = std::make_shared<const MarginalLaw>(models::binary_space_time());
  const std::vector<Vec> th{{0.5, 0, 0}, {-1, 0, 0}};
  GapOptions o;
  o.replicas = 3;
  const RateGrid g = gap_profile(law, th, 128, o);
  std::stringstream csv;
  io::write_rate_grid_csv(csv, g);
  const RateGrid back = io::read_rate_grid_csv(csv, 2);
  REQUIRE(back.rows.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.rows[i].gap == g.rows[i].gap);
    CHECK(back.rows[i].xi == g.rows[i].xi);
    CHECK(back.rows[i].certificate == g.rows[i].certificate);
  }
  CHECK(rate_grid_svg(back) == rate_grid_svg(g));
  CHECK(rate_grid_svg(g).rfind("<svg", 0) == 0);
}

TEST_CASE("LLN velocity") {
  const Vec v = lln_velocity(models::binary_space_time());
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 1.0);
  const ClassMSpec spec{2, 0.5, 0.3, 0.2, 0.05};
  auto law = std::make_shared<const MarginalLaw>(canonical_class_m_marginal(spec));
  const BlockPool pool = build_block_pool(law, StepGenerator::bfu(spec), 2, 100, 500);
  LambdaAOptions lo;
  lo.min_pool = 0;
  const VelocityReport r = lln_velocity(pool, 1e-3, lo);
  REQUIRE(r.closed_form);
  CHECK((*r.closed_form)[1] == doctest::Approx(0.3));
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(std::abs(r.finite_difference[i] - (*r.closed_form)[i]) <= 1e-3 + 3 * r.finite_difference_se[i]);
  }
}
