// Randomized and exhaustive checks of structural invariants.
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "rwre/corr.hpp"
#include "rwre/fracmom.hpp"
#include "rwre/io.hpp"
#include "rwre/mgf.hpp"
#include "rwre/models.hpp"
#include "rwre/oracle.hpp"
#include "rwre/rate.hpp"
#include "rwre/stats.hpp"

using namespace rwre;

namespace {
std::shared_ptr<const MarginalLaw> binary() { return std::make_shared<const MarginalLaw>(models::binary_space_time()); }

// random finite marginal over `range`, every entry >= kappa
MarginalLaw random_law(const StepRange& range, std::uint64_t seed, std::size_t points, double kappa) {
  Stream s(seed);
  std::vector<SupportPoint> sup;
  for (std::size_t i = 0; i < points; ++i) {
    Kernel k{};
    double total = 0;
    for (std::size_t j = 0; j < range.size(); ++j) total += (k[j] = 0.2 + s.uniform());
    for (std::size_t j = 0; j < range.size(); ++j) k[j] = kappa + (1 - kappa * range.size()) * k[j] / total;
    sup.push_back({k, 1.0 / static_cast<double>(points)});
  }
  return MarginalLaw::finite(range, std::move(sup), kappa);
}
}  // namespace

TEST_CASE("step ranges") {
  for (int d : {2, 3}) {
    const StepRange st = StepRange::space_time(d), so = StepRange::space_only(d);
    CHECK(st.size() == static_cast<std::size_t>(2 * (d - 1)));
    CHECK(so.size() == static_cast<std::size_t>(2 * d));
    for (const auto& z : st.steps) {
      CHECK(z[static_cast<std::size_t>(d - 1)] == 1);
      std::int64_t l1 = 0;
      for (int i = 0; i + 1 < d; ++i) l1 += std::abs(z[static_cast<std::size_t>(i)]);
      CHECK(l1 == 1);
    }
    for (const auto& z : so.steps) CHECK(std::abs(z[0]) + std::abs(z[1]) + std::abs(z[2]) == 1);
    CHECK(std::is_sorted(st.steps.begin(), st.steps.end()));
    CHECK(std::is_sorted(so.steps.begin(), so.steps.end()));
  }
}

TEST_CASE("marginal law invariants on the built-in models") {
  std::vector<MarginalLaw> laws{models::binary_space_time(), models::two_point_2p1(), models::four_point_2p1(),
                                canonical_class_m_marginal({2, 0.5, 0.3, 0.2, 0.05}),
                                canonical_class_m_marginal({3, 0.5, 0.3, 0.2, 0.03})};
  for (const auto& law : laws) {
    double w = 0;
    for (const auto& sp : law.support()) {
      w += sp.weight;
      double s = 0;
      for (std::size_t k = 0; k < law.range().size(); ++k) {
        s += sp.probs[k];
        CHECK(sp.probs[k] >= law.kappa() - 1e-15);
      }
      CHECK(std::abs(s - 1) <= 1e-12);
    }
    CHECK(std::abs(w - 1) <= 1e-12);
    double q = 0;
    for (std::size_t k = 0; k < law.range().size(); ++k) q += law.mean_kernel()[k];
    CHECK(std::abs(q - 1) <= 1e-12);
  }
}

TEST_CASE("class M realizations") {
  for (const ClassMSpec spec : {ClassMSpec{2, 0.5, 0.3, 0.2, 0.05}, ClassMSpec{3, 0.45, 0.4, 0.15, 0.04}}) {
    const EnvironmentModel env(canonical_class_m_marginal(spec), 99);
    const auto& r = env.range();
    const int d = spec.d;
    const double centre = spec.p_zero / (2.0 * (d - 1));
    for (std::int64_t i = 0; i < 2000; ++i) {
      const Kernel k = env.site_kernel({i % 41, i / 41, i % 3});
      CHECK(k[static_cast<std::size_t>(r.index_of_axis(d - 1, +1))] == doctest::Approx(spec.p_plus).epsilon(1e-15));
      CHECK(k[static_cast<std::size_t>(r.index_of_axis(d - 1, -1))] == doctest::Approx(spec.p_minus).epsilon(1e-15));
      const double dev = std::abs(k[static_cast<std::size_t>(r.index_of_axis(0, +1))] - centre);
      CHECK(dev > spec.epsilon / 2);
      CHECK(dev < spec.epsilon);
      for (int j = 0; j + 1 < d; ++j)
        for (int sgn : {-1, 1}) CHECK(k[static_cast<std::size_t>(r.index_of_axis(j, sgn))] >= centre - spec.epsilon);
    }
    // the support is invariant under the rotations fixing e_d
    const MarginalLaw& law = env.marginal();
    for (const auto& m : transversal_symmetries(d)) {
      std::multiset<std::vector<double>> a, b;
      for (const auto& sp : law.support()) {
        std::vector<double> orig(r.size()), rot(r.size());
        for (std::size_t k = 0; k < r.size(); ++k) {
          orig[k] = std::round(sp.probs[k] * 1e12);
          rot[static_cast<std::size_t>(r.index_of(apply(m, r.steps[k])))] = std::round(sp.probs[k] * 1e12);
        }
        a.insert(orig);
        b.insert(rot);
      }
      CHECK(a == b);
    }
  }
}

TEST_CASE("environment snapshot equals re-query") {
  const EnvironmentModel env(models::four_point_2p1(), 1234);
  std::map<Site, Kernel> snap;
  for (std::int64_t a = -6; a <= 6; ++a)
    for (std::int64_t b = -6; b <= 6; ++b)
      for (std::int64_t t = 0; t < 6; ++t) snap[{a, b, t}] = env.site_kernel({a, b, t});
  for (const auto& [x, k] : snap) CHECK(env.site_kernel(x) == k);
}

TEST_CASE("path invariants") {
  const ClassMSpec spec{2, 0.5, 0.3, 0.2, 0.05};
  const EnvironmentModel so(canonical_class_m_marginal(spec), 3);
  const EnvironmentModel st(models::two_point_2p1(), 3);
  for (std::uint64_t w = 0; w < 20; ++w) {
    const Path a = sample_path(so, w, {0, 0, 0}, 300, StepGenerator::bfu(spec));
    const Path b = sample_path(st, w, {0, 0, 0}, 300);
    for (const Path* p : {&a, &b}) {
      const StepRange& r = p == &a ? so.range() : st.range();
      for (std::size_t i = 0; i < p->length(); ++i) CHECK(r.index_of(p->sites[i + 1] - p->sites[i]) >= 0);
    }
    for (std::size_t j : {1, 10, 100, 300}) {
      CHECK(a.visited_count(j) <= j);
      CHECK(b.visited_count(j) == j);
    }
  }
}

TEST_CASE("block invariants and L-classes") {
  const ClassMSpec spec{2, 0.5, 0.3, 0.2, 0.05};
  auto law = std::make_shared<const MarginalLaw>(canonical_class_m_marginal(spec));
  const BlockPool pool = build_block_pool(law, StepGenerator::bfu(spec), 12, 20, 500);
  std::size_t classes[3] = {0, 0, 0};
  for (const auto& b : pool.blocks) {
    CHECK(b.duration >= 1);
    CHECK(b.displacement[1] >= 1);
    CHECK(b.visited <= b.duration);
    const LClass expect = b.u_count == 0 ? LClass::L0 : b.u_count == 1 ? LClass::L1 : LClass::L2plus;
    CHECK(b.l_class == expect);
    ++classes[static_cast<int>(b.l_class)];
  }
  CHECK(classes[0] > 0);
  CHECK(classes[1] > 0);
  const IidDiagnostics iid = block_iid_diagnostics(pool);
  CHECK(std::abs(iid.lag1_autocorrelation) <= iid.lag1_band);
  CHECK(iid.ks_p_value >= 0.01);
  const auto st = build_block_pool(binary(), StepGenerator::kernel(), 1, 5, 40);
  for (const auto& b : st.blocks) {
    CHECK(b.duration == 1);
    CHECK(st.d == 2);
    CHECK(StepRange::space_time(2).index_of(b.displacement) >= 0);
  }
}

TEST_CASE("theta domain membership") {
  const ThetaDomain dom{0.5};
  CHECK(dom.contains({0.2, 0.1, 0}));
  CHECK_FALSE(dom.contains({0.25, 0, 0}));
  CHECK(ThetaDomain::transversal({0.3, 0, 0}, 2));
  CHECK_FALSE(ThetaDomain::transversal({0.3, 0.1, 0}, 2));
}

TEST_CASE("Lambda_a is convex over a pool") {
  const ClassMSpec spec{2, 0.5, 0.3, 0.2, 0.05};
  auto law = std::make_shared<const MarginalLaw>(canonical_class_m_marginal(spec));
  const BlockPool pool = build_block_pool(law, StepGenerator::bfu(spec), 21, 50, 400);
  LambdaAOptions lo;
  lo.min_pool = 0;
  const std::vector<Vec> grid{{-0.2, 0, 0}, {0.2, 0.1, 0}, {0, -0.2, 0}, {0.1, 0.3, 0}};
  for (const auto& a : grid)
    for (const auto& b : grid)
      for (double l : {0.25, 0.5, 0.75}) {
        const auto ea = lambda_a_regen(pool, a, lo), eb = lambda_a_regen(pool, b, lo);
        const auto em = lambda_a_regen(pool, l * a + (1 - l) * b, lo);
        CHECK(em.value <= l * ea.value + (1 - l) * eb.value + 3 * (ea.std_error + eb.std_error + em.std_error) + 1e-9);
      }
}

TEST_CASE("quenched below annealed and gap sign") {
  std::vector<Vec> th;
  for (double t : {-1.5, -0.7, 0.0, 0.4, 1.2}) th.push_back({t, 0.3, 0});
  GapOptions o;
  o.replicas = 6;
  const RateGrid g = gap_profile(binary(), th, 512, o);
  for (const auto& r : g.rows) {
    CHECK(r.lambda_q <= r.lambda_a + 3 * r.lambda_q_se + 1e-12);
    CHECK(r.gap >= -3 * r.gap_se - 1e-12);
    CHECK(r.i_a >= -1e-9);
  }
  // I_a vanishes at the LLN velocity
  const int axes[] = {0};
  const auto ia = legendre([&](const Vec& t) { return log_phi(*binary(), t); }, {0, 0, 0}, axes);
  CHECK(std::abs(ia.value) <= 1e-9);
}

TEST_CASE("Legendre duality round trip and convexity of I") {
  std::vector<double> th, la, xi, rate;
  for (int i = -400; i <= 400; ++i) {
    th.push_back(i * 0.01);
    la.push_back(std::log(std::cosh(i * 0.01)));
  }
  for (int i = -90; i <= 90; ++i) {
    xi.push_back(i * 0.01);
    rate.push_back(legendre_grid(th, la, i * 0.01).value);
  }
  for (std::size_t i = 1; i + 1 < rate.size(); ++i) CHECK(rate[i] <= 0.5 * (rate[i - 1] + rate[i + 1]) + 1e-9);
  for (double t : {-0.8, -0.3, 0.0, 0.5, 1.0}) {
    const double back = legendre_grid(xi, rate, t).value;
    CHECK(back == doctest::Approx(std::log(std::cosh(t))).epsilon(2e-3));
  }
}

TEST_CASE("block geometry") {
  for (std::int64_t n : {16, 36, 64})
    for (double c1 : {1.0, 2.0}) {
      const auto s = make_schedule(*binary(), TiltFlavor::Linear, {0.5, 0, 0}, 0.5, n, c1);
      const auto b1 = tube_sites(s, 1, {0, 0, 0});
      const auto width = static_cast<std::size_t>(std::floor(c1 * static_cast<double>(s.sqrt_n)));
      CHECK(b1.size() == static_cast<std::size_t>(n) * (2 * width + 1));
      std::set<Site> seen(b1.begin(), b1.end());
      CHECK(seen.size() == b1.size());
      for (std::int64_t j = 2; j <= 3; ++j)
        for (const auto& x : tube_sites(s, j, {j - 3, 0, 0})) CHECK(seen.insert(x).second);
    }
  // half-open cells tile the line
  const std::int64_t sq = 4;
  for (std::int64_t y = -3; y <= 3; ++y) {
    CHECK(cell_of({(y - 0.5) * sq, 0, 0}, sq, 1)[0] == y);
    CHECK(cell_of({(y + 0.5) * sq - 1e-9, 0, 0}, sq, 1)[0] == y);
  }
  std::map<std::int64_t, int> counts;
  for (std::int64_t u = -20; u < 20; ++u) ++counts[cell_of({static_cast<double>(u), 0, 0}, sq, 1)[0]];
  for (const auto& [y, c] : counts)
    if (y > -5 && y < 5) CHECK(c == sq);
}

TEST_CASE("endpoint cells partition W_n") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const EnvironmentModel env(binary(), seed);
    const Vec th{0.8, 0, 0};
    const auto e = quenched_endpoint(env, th, 64);
    double total = 0;
    for (double w : e.weights) total += w;
    CHECK(std::log(total) + e.log_scale == doctest::Approx(w_n(env, th, 64).log_w).epsilon(1e-12));
  }
}

TEST_CASE("tilt weight and its inverse moment") {
  auto s = make_schedule(*binary(), TiltFlavor::Linear, {1, 0, 0}, 0.5, 16, 1.0);
  s.m = 2;
  const auto m = tilt_inverse_moment(binary(), s, 2000, 11);
  CHECK(m.value >= 1.0);
  CHECK(m.value <= 4.0 + 3 * m.std_error);
  for (double u : {0.0, 1.0, 1e3, 1e9}) {
    const double g = std::exp(f_k(s.k, u));
    CHECK(g > 0.0);
    CHECK(g <= 1.0);
  }
}

TEST_CASE("one-step correlation sign on random 1+1 marginals") {
  const StepRange r = StepRange::space_time(2);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const MarginalLaw law = random_law(r, seed, 2 + seed % 4, 0.05);
    for (double t : {-1.0, 0.3, 2.0}) CHECK(mu_one_step(law, {t, 0, 0}).mu_value > 0.0);
    CHECK(mu_one_step(law, {0, 1.0, 0}).mu_value == 0.0);
    CHECK(mu_one_step(models::degenerate_of(law), {1.0, 0, 0}).mu_value == 0.0);
  }
}

TEST_CASE("Monte Carlo fractional moment covers the exact value across seeds") {
  const double exact = oracle::exact_fractional_moment(*binary(), {1, 0, 0}, 0.5, 2);
  FractionalMomentOptions o;
  o.replicas = 2000;
  o.bootstrap = 5;
  const std::int64_t ns[] = {2};
  int covered = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    o.master_seed = 1000 + trial;
    const auto r = fractional_moment(binary(), {1, 0, 0}, 0.5, ns, o);
    covered += std::abs(r.per_n[0].value - exact) <= 3 * r.per_n[0].std_error;
  }
  CHECK(covered >= 99);
}

TEST_CASE("a manifest re-run reproduces every CSV") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "rwre_test_manifest_rerun";
  fs::remove_all(dir);
  auto call = [](std::vector<std::string> args) {
    args.insert(args.begin(), "rwre_cli");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  };
  auto slurp = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
  };
  REQUIRE(call({"--out", (dir / "a").string(), "--seed", "77", "--model", R"({"kind":"preset","name":"binary_1p1"})",
                "block", "-t", "0.7,0", "--n", "36", "--replicas", "20"}) == cli::kExitOk);
  const io::json man = io::json::parse(slurp(dir / "a" / "manifest.json"));
  const auto& cfg = man.at("config");
  std::ofstream(dir / "cfg.json") << io::json{{"model", cfg.at("model")},
                                               {"master_seed", cfg.at("master_seed")},
                                               {"params", cfg.at("params")}}
                                         .dump();
  REQUIRE(call({"--out", (dir / "b").string(), "--config", (dir / "cfg.json").string(),
                cfg.at("subcommand").get<std::string>()}) == cli::kExitOk);
  for (const auto& name : man.at("outputs")) CHECK(slurp(dir / "a" / name.get<std::string>()) == slurp(dir / "b" / name.get<std::string>()));
  CHECK(io::json::parse(slurp(dir / "b" / "manifest.json")).at("config_hash") == man.at("config_hash"));
}
