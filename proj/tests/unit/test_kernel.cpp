#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "eqmix/kernel.hpp"
#include "eqmix/model.hpp"
#include "support.hpp"

using namespace eqmix;

namespace {

std::vector<ModelSpec> random_models(test::Gen& g, int count) {
  std::vector<ModelSpec> out;
  for (int i = 0; i < count; ++i) {
    const double p1 = g.real(0.05, 0.9);
    const double p2 = g.real(0.01, 0.99 - p1);
    switch (g.below(3)) {
      case 0: out.push_back(ModelSpec::ising(g.even(2, 10), g.real(0, 4), p1, p2)); break;
      case 1: out.push_back(ModelSpec::beg(g.even(2, 6), g.real(0, 4), g.real(0, 4), p1, p2)); break;
      default: out.push_back(ModelSpec::warmup(1 + static_cast<int>(g.below(30)), g.real(1.05, 5), g.real(0.01, 0.99)));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("Metropolis chains are stochastic and reversible") {
  test::Gen g(21);
  for (const ModelSpec& m : random_models(g, 40)) {
    const std::vector<ChainKind> kinds = m.kind == ModelKind::Warmup
                                             ? std::vector{ChainKind::Naive, ChainKind::SmallWorld}
                                             : std::vector{ChainKind::Naive, ChainKind::EquiEnergy};
    for (ChainKind k : kinds) {
      const FiniteKernel p = metropolis_chain(m, k, Exec::Serial);
      CHECK(p.row_sum_error() <= 1e-12);
      CHECK(p.min_entry() >= 0.0);
      CHECK(p.detailed_balance_error() <= 1e-12);
      if (m.kind != ModelKind::Warmup) {
        const FiniteKernel l = signed_lumped_chain(m, k);
        CHECK(l.row_sum_error() <= 1e-12);
        CHECK(l.detailed_balance_error() <= 1e-12);
      }
    }
  }
}

TEST_CASE("serial and parallel construction agree") {
  const ModelSpec m = ModelSpec::beg(4, 1.5, 0.5);
  const FiniteKernel a = metropolis_chain(m, ChainKind::EquiEnergy, Exec::Serial);
  const FiniteKernel b = metropolis_chain(m, ChainKind::EquiEnergy, Exec::Parallel);
  REQUIRE(a.nonzeros() == b.nonzeros());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(a.prob(i, j) == b.prob(i, j));
}

TEST_CASE("uniform target leaves a symmetric proposal unchanged") {
  const ModelSpec m = ModelSpec::ising(6, 0.0);
  const FiniteKernel k = equi_energy_proposal(m, Exec::Serial);
  const std::vector<double> flat(k.size(), 0.0);
  const FiniteKernel p = metropolize(k, flat, Exec::Serial);
  for (std::size_t i = 0; i < k.size(); ++i)
    for (std::size_t j = 0; j < k.size(); ++j) CHECK(p.prob(i, j) == doctest::Approx(k.prob(i, j)).epsilon(1e-15));
  // idempotence
  const FiniteKernel pp = metropolize(p, flat, Exec::Serial);
  for (std::size_t i = 0; i < k.size(); ++i)
    for (std::size_t j = 0; j < k.size(); ++j) CHECK(pp.prob(i, j) == doctest::Approx(p.prob(i, j)).epsilon(1e-15));
}

TEST_CASE("beta = 0 single flip chain is the hypercube walk") {
  const ModelSpec m = ModelSpec::ising(5 + 1, 0.0);
  const FiniteKernel p = metropolis_chain(m, ChainKind::Naive, Exec::Serial);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p.diagonal(i) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    for (std::size_t b = 0; b < 6; ++b) CHECK(p.prob(i, i ^ (std::size_t{1} << b)) == doctest::Approx(1.0 / 6));
  }
}

TEST_CASE("equi-energy moves within a class are never rejected") {
  test::Gen g(4);
  for (int rep = 0; rep < 10; ++rep) {
    const ModelSpec m = ModelSpec::beg(4, g.real(0, 3), g.real(0, 3));
    const FiniteKernel k = equi_energy_proposal(m, Exec::Serial);
    const FiniteKernel p = metropolis_chain(m, ChainKind::EquiEnergy, Exec::Serial);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const EnergyClass ci = class_of(m, state_at(m, i));
      for (const auto& t : k.row(i)) {
        if (t.to == i) continue;
        const EnergyClass cj = class_of(m, state_at(m, t.to));
        if (ci.s == cj.s && ci.r == cj.r) CHECK(p.prob(i, t.to) == doctest::Approx(t.prob).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("BEG local moves wrap around") {
  const auto moves = local_moves({ModelKind::Beg, {1, 0}});
  REQUIRE(moves.size() == 4);
  double total = 0.0;
  bool wrapped = false;
  for (const auto& [y, p] : moves) {
    total += p;
    if (y.values[0] == -1) wrapped = true;
  }
  CHECK(total == doctest::Approx(1.0));
  CHECK(wrapped);
}

TEST_CASE("signed lumping equals projection of the full chain") {
  for (const ModelSpec& m : {ModelSpec::ising(8, 1.7), ModelSpec::beg(4, 2.0, 1.5)}) {
    for (ChainKind k : {ChainKind::Naive, ChainKind::EquiEnergy}) {
      const FiniteKernel full = metropolis_chain(m, k, Exec::Serial);
      const FiniteKernel proj = lumped_projection(full, class_partition(m, true));
      const FiniteKernel l = signed_lumped_chain(m, k);
      REQUIRE(proj.size() == l.size());
      // The projection carries a factor 1/2 off the diagonal.
      for (std::size_t i = 0; i < l.size(); ++i)
        for (std::size_t j = 0; j < l.size(); ++j)
          if (i != j) CHECK(2.0 * proj.prob(i, j) == doctest::Approx(l.prob(i, j)).epsilon(1e-12).scale(1e-300));
    }
  }
}

TEST_CASE("printed lumped rates match direct lumping") {
  for (int n = 2; n <= 10; n += 2) {
    const ModelSpec m = ModelSpec::ising(n, 1.3);
    const FiniteKernel direct = lumped_projection(metropolis_chain(m, ChainKind::EquiEnergy, Exec::Serial),
                                                  class_partition(m, false));
    const DiscrepancyReport r = compare_ising_printed(m, direct);
    CHECK(r.compared > 0);
    CHECK(r.mismatches.empty());
  }
  for (int n = 2; n <= 6; n += 2) {
    const ModelSpec m = ModelSpec::beg(n, 0.9, 1.1);
    const FiniteKernel direct = lumped_projection(metropolis_chain(m, ChainKind::EquiEnergy, Exec::Serial),
                                                  class_partition(m, false));
    const DiscrepancyReport r = compare_beg_printed(m, direct);
    CHECK(r.compared > 0);
    CHECK(r.acceptable());
    for (const auto& d : r.mismatches) CHECK(d.annotated);
  }
}

TEST_CASE("documented typos are reproduced by the corrections") {
  const ModelSpec m = ModelSpec::beg(6, 1.2, 0.7);
  const FiniteKernel direct = beg_lumped(m);
  const DiscrepancyReport r = compare_beg_printed(m, direct);
  CHECK(r.acceptable());
  CHECK_FALSE(r.mismatches.empty());
  for (const auto& d : r.mismatches) CHECK(d.corrected == doctest::Approx(d.direct).epsilon(1e-12));
  CHECK_FALSE(beg_documented_typos().empty());
}

TEST_CASE("Ising birth-death rates agree with the lumped kernel") {
  const ModelSpec m = ModelSpec::ising(12, 2.5, 0.4, 0.3);
  const BirthDeathChain bd = ising_lumped_bd(m);
  CHECK_NOTHROW(bd.validate());
  const FiniteKernel k = bd.to_kernel();
  CHECK(k.is_tridiagonal());
  CHECK(k.detailed_balance_error() <= 1e-12);
  const BirthDeathChain back = BirthDeathChain::from_kernel(k);
  for (std::size_t i = 0; i < bd.size(); ++i) {
    CHECK(back.up[i] == doctest::Approx(bd.up[i]));
    CHECK(back.down[i] == doctest::Approx(bd.down[i]));
  }
}

TEST_CASE("warmup projection rates") {
  // theta = 2, eps = 0.3: outward steps always accepted, so
  // P_H(i, i+1) = (1 - eps) / 4 from blocks {+-i}, i >= 2, and block {-1,0,1}
  // sends (1 - eps)/4 * 2 theta / (1 + 2 theta) = 0.14.
  const ModelSpec m = ModelSpec::warmup(8, 2.0, 0.3);
  const FiniteKernel p = metropolis_chain(m, ChainKind::SmallWorld, Exec::Serial);
  const FiniteKernel h = lumped_projection(p, warmup_partition(m));
  REQUIRE(h.size() == 8);
  CHECK(h.prob(0, 1) == doctest::Approx(0.14).epsilon(1e-14));
  for (std::size_t i = 1; i + 1 < h.size(); ++i) CHECK(h.prob(i, i + 1) == doctest::Approx(0.175).epsilon(1e-14));
  CHECK(h.detailed_balance_error() <= 1e-12);
}

TEST_CASE("restriction keeps rows stochastic") {
  const ModelSpec m = ModelSpec::warmup(6, 3.0, 0.2);
  const FiniteKernel p = metropolis_chain(m, ChainKind::SmallWorld, Exec::Serial);
  const std::vector<std::size_t> block{2, 3, 4, 10};
  const FiniteKernel r = restriction(p, block);
  CHECK(r.size() == 4);
  CHECK(r.row_sum_error() <= 1e-12);
  CHECK(r.prob(0, 1) == p.prob(2, 3));
  CHECK_THROWS(restriction(p, std::vector<std::size_t>{1, 1}));
  CHECK_THROWS(restriction(p, std::vector<std::size_t>{}));
}

TEST_CASE("kernel construction checks") {
  CHECK_THROWS_AS(FiniteKernel({"a", "b"}, {0.0, 0.0}, {{{1, 0.7}}, {{0, 0.5}}}).check(), KernelError);
  const FiniteKernel k({"a", "b"}, {0.0, std::log(2.0)}, {{{0, 0.5}, {1, 0.5}}, {{0, 0.25}, {1, 0.75}}});
  CHECK_NOTHROW(k.check());
  CHECK(k.diagonal(0) == doctest::Approx(0.5));
  CHECK(k.stationary()[1] == doctest::Approx(2.0 / 3));
  CHECK_THROWS(Partition{{0, 2}, 2}.validate(2));
  CHECK_THROWS_AS(class_partition(ModelSpec::ising(kMaxFullIsingN + 2, 1.0), true), CapacityError);
}

TEST_CASE("kernel text format") {
  const FiniteKernel k({"a", "b"}, {0.0, 0.0}, {{{0, 0.5}, {1, 0.5}}, {{0, 0.5}, {1, 0.5}}});
  std::ostringstream os;
  write_kernel_text(os, k);
  CHECK(os.str() == "a: a=0.5 b=0.5\nb: a=0.5 b=0.5\n");
}
