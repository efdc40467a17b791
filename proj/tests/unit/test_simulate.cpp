#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "eqmix/numeric.hpp"
#include "eqmix/simulate.hpp"
#include "eqmix/spectral.hpp"

using namespace eqmix;

TEST_CASE("xoshiro256** reference outputs") {
  // Independent Python implementation of SplitMix64 seeding and xoshiro256**.
  Rng a(1);
  CHECK(a.next() == 0xb3f2af6d0fc710c5ULL);
  CHECK(a.next() == 0x853b559647364ceaULL);
  CHECK(a.next() == 0x92f89756082a4514ULL);
  CHECK(a.next() == 0x642e1c7bc266a3a7ULL);
  Rng b(0);
  CHECK(b.next() == 0x99ec5f36cb75f2b4ULL);
  CHECK(b.next() == 0xbf6e1f784956452aULL);
  Rng c = Rng::stream(1, 1);
  CHECK(c.next() == 0x332802f81eaae9d0ULL);
  CHECK(c.next() == 0x02d18d7749b84f96ULL);
}

TEST_CASE("uniform and below stay in range") {
  Rng r(5);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    ++counts[r.below(7)];
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
  CHECK_THROWS(r.below(0));
}

TEST_CASE("Bose-Einstein placement is exactly uniform") {
  for (int n = 0; n <= 5; ++n) {
    for (int k = 1; k <= 5; ++k) {
      const auto law = be_placement_probabilities(n, k);
      const double expect = 1.0 / static_cast<double>(binomial_exact(n + k - 1, k - 1));
      CHECK(law.size() == binomial_exact(n + k - 1, k - 1));
      for (const auto& [occ, p] : law) CHECK(std::abs(p - expect) <= 1e-12);
    }
  }
}

TEST_CASE("Bose-Einstein sampler draws occupancy vectors") {
  Rng r(3);
  std::map<std::vector<int>, int> seen;
  for (int i = 0; i < 20000; ++i) {
    const auto occ = bose_einstein_sample(3, 3, r);
    int total = 0;
    for (int v : occ) total += v;
    REQUIRE(total == 3);
    ++seen[occ];
  }
  CHECK(seen.size() == 10);
  for (const auto& [occ, c] : seen) CHECK(std::abs(c - 2000) < 250);
  CHECK_THROWS(bose_einstein_sample(1, 0, r));
}

TEST_CASE("uniform class sampling, both routes") {
  const ModelSpec m = ModelSpec::ising(8, 1.0);
  const EnergyClass c{ModelKind::Ising, 2, 0, 1};
  for (OrbitRoute route : {OrbitRoute::Unranking, OrbitRoute::BoseEinstein}) {
    Rng r(route == OrbitRoute::Unranking ? 10 : 11);
    std::map<std::vector<int>, int> seen;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
      const SpinConfiguration x = sample_uniform_class(m, c, r, route);
      REQUIRE(class_of(m, x) == c);
      ++seen[x.values];
    }
    REQUIRE(seen.size() == 56);
    const double e = draws / 56.0;
    double chi2 = 0.0;
    for (const auto& [x, n] : seen) chi2 += (n - e) * (n - e) / e;
    const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(55), chi2));
    CHECK(p > 0.001);
  }
}

TEST_CASE("BEG class sampling") {
  const ModelSpec m = ModelSpec::beg(6, 1.0, 1.0);
  Rng r(2);
  std::set<std::vector<int>> seen;
  for (int i = 0; i < 5000; ++i) {
    const SpinConfiguration x = sample_uniform_class(m, {ModelKind::Beg, 1, 3, -1}, r);
    REQUIRE(magnetization(x) == -1);
    REQUIRE(quadrupole(x) == 3);
    seen.insert(x.values);
  }
  // C(6,3) placements of the non-zeros times 3 sign patterns
  CHECK(seen.size() == 60);
  CHECK_THROWS(sample_uniform_class(m, {ModelKind::Beg, 2, 1, 1}, r));
  CHECK_THROWS(sample_uniform_class(m, {ModelKind::Beg, 0, 2, 1}, r));
}

TEST_CASE("orbit proposals are never rejected") {
  for (const ModelSpec& m : {ModelSpec::ising(30, 1.5), ModelSpec::beg(20, 2.0, 1.5)}) {
    RunConfig cfg;
    cfg.steps = 20000;
    const RunStats s = run_estimate(m, ChainKind::EquiEnergy, cfg);
    const auto orbit = static_cast<std::size_t>(Component::Orbit);
    CHECK(s.cost.proposed[orbit] > 0);
    CHECK(s.cost.accepted[orbit] == s.cost.proposed[orbit]);
    CHECK(s.acceptance_rate(Component::Orbit) == 1.0);
    for (auto c : {Component::Local, Component::GlobalFlip}) {
      CHECK(s.acceptance_rate(c) >= 0.0);
      CHECK(s.acceptance_rate(c) <= 1.0);
    }
  }
}

TEST_CASE("infinite temperature accepts everything") {
  RunConfig cfg;
  cfg.steps = 5000;
  const RunStats s = run_estimate(ModelSpec::ising(12, 0.0), ChainKind::EquiEnergy, cfg);
  for (std::size_t c = 0; c < kComponents; ++c) CHECK(s.cost.accepted[c] == s.cost.proposed[c]);
}

TEST_CASE("runs are reproducible and streams differ") {
  const ModelSpec m = ModelSpec::beg(10, 1.0, 1.0);
  RunConfig cfg;
  cfg.steps = 3000;
  cfg.keep_trace = true;
  const RunStats a = run_estimate(m, ChainKind::EquiEnergy, cfg);
  const RunStats b = run_estimate(m, ChainKind::EquiEnergy, cfg);
  std::ostringstream sa, sb;
  write_trace_csv(sa, a);
  write_trace_csv(sb, b);
  CHECK(sa.str() == sb.str());
  CHECK(run_stats_json(m, ChainKind::EquiEnergy, cfg, a) == run_stats_json(m, ChainKind::EquiEnergy, cfg, b));
  cfg.run_index = 1;
  const RunStats c = run_estimate(m, ChainKind::EquiEnergy, cfg);
  std::ostringstream sc;
  write_trace_csv(sc, c);
  CHECK(sc.str() != sa.str());
}

TEST_CASE("run configuration checks") {
  const ModelSpec m = ModelSpec::ising(4, 1.0);
  RunConfig cfg;
  cfg.steps = 10;
  cfg.burn_in = 10;
  CHECK_THROWS_AS(run_estimate(m, ChainKind::Naive, cfg), ValidationError);
  cfg.burn_in = 0;
  cfg.thinning = 0;
  CHECK_THROWS_AS(run_estimate(m, ChainKind::Naive, cfg), ValidationError);
  cfg.thinning = 1;
  cfg.observable = "R/N";
  CHECK_THROWS_AS(run_estimate(m, ChainKind::Naive, cfg), ValidationError);
  cfg.observable = "energy";
  CHECK_THROWS_AS(run_estimate(m, ChainKind::Naive, cfg), ValidationError);
  CHECK_THROWS_AS(run_estimate(ModelSpec::ising(4, 1.0), ChainKind::SmallWorld, RunConfig{}), ValidationError);
}

TEST_CASE("batch means on an independent sequence") {
  Rng r(17);
  std::vector<double> v(40000);
  for (auto& x : v) x = r.uniform();
  const BatchMeans bm = batch_means_avar(v);
  CHECK(bm.batches == 200);
  CHECK(bm.batch_size == 200);
  // iid uniform: avar = variance = 1/12
  CHECK(std::abs(bm.avar - 1.0 / 12) < 4 * bm.se);
  CHECK_THROWS(batch_means_avar(std::vector<double>(99, 0.0)));
}

TEST_CASE("batch means agree with the spectral value on a lumped chain") {
  const ModelSpec m = ModelSpec::ising(10, 0.8);
  RunConfig cfg;
  cfg.steps = 400000;
  cfg.observable = "S/N";
  const RunStats s = run_estimate(m, ChainKind::EquiEnergy, cfg);
  const FiniteKernel p = signed_lumped_chain(m, ChainKind::EquiEnergy);
  const ClassTable t = class_table(m);
  std::vector<double> f(p.size());
  for (std::size_t i = 0; i < t.size(); ++i) f[i] = t.entries()[i].cls.sign * t.entries()[i].cls.s / 10.0;
  const AvarResult a = avar_spectral(p, f);
  CHECK(std::abs(s.avar - a.avar) < 4 * s.avar_se);
  CHECK(a.avar <= a.bound);
}

TEST_CASE("cost profile") {
  RunConfig cfg;
  cfg.steps = 10000;
  const ModelSpec m = ModelSpec::ising(50, 1.0);
  const RunStats s = run_estimate(m, ChainKind::Naive, cfg);
  const CostSummary c = cost_profile(s, 50);
  CHECK(c.ops_per_step == doctest::Approx(50.0));
  CHECK(c.ops_per_step_over_n == doctest::Approx(1.0));
  CHECK(c.frequency[0] == 1.0);
}
