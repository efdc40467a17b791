#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "eqmix/simulate.hpp"
#include "eqmix/verify.hpp"

using namespace eqmix;

TEST_CASE("Ising fast-mixing bound value") {
  // (p1 p2 / 32) (N/2 + 1)^-3 min((1-p1-p2)/2, (1-p1)/p2) at N = 10
  CHECK(ising_fast_bound(10, 0.5, 0.25) == doctest::Approx(2.2605613425925925e-06).epsilon(1e-14));
  CHECK(beg_decomposition_bound(0.2, 0.5, 0.25) == doctest::Approx(0.2 * 0.125 * 0.125));
}

TEST_CASE("scaled parameters") {
  const ScaledParams a = scaled_params(1.0, 10);
  CHECK(a.p1 == doctest::Approx(0.95));
  CHECK(a.p2 == doctest::Approx(0.1));
  CHECK_FALSE(a.valid);
  const ScaledParams b = scaled_params_fallback(1.0, 10);
  CHECK(b.p1 == doctest::Approx(0.9));
  CHECK(b.p2 == doctest::Approx(0.05));
  CHECK(b.valid);
  CHECK_THROWS(scaled_params(10.0, 10));
  CHECK_THROWS(scaled_params_fallback(0.0, 10));
}

TEST_CASE("shape helpers") {
  CHECK(is_unimodal({0, 1, 2, 1, 0}));
  CHECK(is_unimodal({0, 1, 1, 0}));
  CHECK_FALSE(is_unimodal({1, 0, 1}));
  CHECK(is_unimodal({3, 2, 1}));
  CHECK(is_nonincreasing({3, 2, 2, 1}));
  CHECK_FALSE(is_nonincreasing({3, 2, 2.5}));
  CHECK(is_nonincreasing({1, 1 + 1e-14, 1}));
  CHECK(threshold_n({{4, false}, {6, true}, {8, true}}) == 6);
  CHECK(threshold_n({{4, true}, {6, false}, {8, true}}) == 8);
  CHECK_FALSE(threshold_n({{4, true}, {6, false}}).has_value());
}

TEST_CASE("rate function") {
  // Minimisers from the stationarity condition z = c'(2 K beta z), mpmath.
  CHECK(rate_minimizers(1.0, 1.0) == std::vector<double>{0.0});
  CHECK(rate_minimizers(0.5, 0.5) == std::vector<double>{0.0});
  struct Case {
    double beta, k, z;
  };
  for (const Case c : {Case{1, 2, 0.9393319264506571}, Case{1, 1.5, 0.77864661944010088},
                       Case{0.5, 3, 0.88910169112602668}}) {
    const auto z = rate_minimizers(c.beta, c.k);
    REQUIRE(z.size() == 2);
    CHECK(z[0] == doctest::Approx(c.z).epsilon(1e-6));
    CHECK(z[1] == -z[0]);
    CHECK(rate_function(c.beta, c.k, z[0]) == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
  }
  CHECK(rate_minimizers(3.0, 5.0).front() > 0.99);
  // differences do not depend on the normalisation; mpmath
  CHECK(rate_function(3, 5, 0.0) - rate_function(3, 5, 0.5) == doctest::Approx(2.849456005017067525).epsilon(1e-8));
  for (double z : {0.1, 0.37, 0.8, 1.0}) {
    CHECK(rate_function(1.3, 0.9, z) == doctest::Approx(rate_function(1.3, 0.9, -z)).epsilon(1e-10));
    CHECK(rate_function(1.3, 0.9, z) >= 0.0);
  }
  CHECK_THROWS(rate_function(1.0, 1.0, 1.5));
}

TEST_CASE("class histogram concentrates at the rate-function minimiser") {
  const double beta = 1.0, k = 1.5;
  const double zstar = rate_minimizers(beta, k).front();
  const ModelSpec m = ModelSpec::beg(40, beta, k);
  RunConfig cfg;
  cfg.steps = 200000;
  cfg.class_histogram = true;
  const RunStats s = run_estimate(m, ChainKind::EquiEnergy, cfg);
  const ClassTable t = class_table(m);
  std::vector<double> by_s(m.n + 1, 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) by_s[t.entries()[i].cls.s] += s.class_counts[i];
  const auto mode = std::max_element(by_s.begin(), by_s.end()) - by_s.begin();
  CHECK(std::abs(static_cast<double>(mode) / m.n - zstar) <= 0.15);
}

TEST_CASE("grid validation") {
  ScanGrid g;
  CHECK_THROWS(g.validate());
  g.ns = {4, 6};
  CHECK_NOTHROW(g.validate());
  g.p1s = {0.9};
  CHECK_THROWS(g.validate());
  g.p1s = {0.5};
  g.ns = {5};
  CHECK_THROWS_AS(g.validate(), OddSizeError);
  g.ns = {4, 6};
  g.betas = {0.5, 1.0};
  CHECK(g.cells().size() == 4);
}

TEST_CASE("gap scan: serial and parallel agree") {
  ScanGrid g;
  g.kind = ModelKind::Beg;
  g.ns = {4, 6, 8};
  g.betas = {0.5, 2.0};
  g.ks = {0.5, 1.5};
  g.exec = Exec::Serial;
  const BoundReport a = gap_scan(g);
  g.exec = Exec::Parallel;
  const BoundReport b = gap_scan(g);
  REQUIRE(a.cells.size() == 12);
  REQUIRE(b.cells.size() == 12);
  for (std::size_t i = 0; i < a.cells.size(); ++i) CHECK(a.cells[i].gap == b.cells[i].gap);
}

TEST_CASE("small Ising fast-mixing verification") {
  ScanGrid g;
  g.kind = ModelKind::Ising;
  for (int n = 10; n <= 40; n += 2) g.ns.push_back(n);
  g.betas = {0.5, 2.0};
  const BoundReport r = verify_ising_fast(g);
  CHECK_FALSE(r.has_defect());
  CHECK_FALSE(r.failed());
  for (const Audit* a : r.find_audits("pbar_lambda1_bound")) CHECK(a->pass);
  const FitRecord* f = r.find_fit("loglog_gap", "beta=2,p1=0.5,p2=0.25");
  REQUIRE(f != nullptr);
  CHECK(f->fitted);
}

TEST_CASE("small Ising slow-mixing verification") {
  ScanGrid g;
  for (int n = 10; n <= 30; n += 2) g.ns.push_back(n);
  g.betas = {0.0, 2.0};
  const BoundReport r = verify_ising_slow(g);
  CHECK_FALSE(r.failed());
  for (const Audit* a : r.find_audits("hypercube_relaxation_gap")) CHECK(a->pass);
  const FitRecord* f = r.find_fit("log_gap_vs_n", "beta=2");
  REQUIRE(f != nullptr);
  CHECK(f->fit.slope_hi < -0.05);
}

TEST_CASE("report writers") {
  ScanGrid g;
  g.ns = {4, 6};
  const BoundReport r = gap_scan(g);
  std::ostringstream cells, audits, fits;
  write_cells_csv(cells, r);
  write_audits_csv(audits, r);
  write_fits_csv(fits, r);
  CHECK(cells.str().rfind("# eqmix.cells/1\n", 0) == 0);
  CHECK(audits.str().rfind("# eqmix.audits/1\n", 0) == 0);
  CHECK(fits.str().rfind("# eqmix.fits/1\n", 0) == 0);
  const std::string text = cells.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  CHECK(report_json(r).find("\"eqmix.boundreport/1\"") != std::string::npos);
  Series s{"q beg=2,K=1", "r", "log q", {{0, 1.5}, {1, 2.5}}};
  CHECK(series_file_name(s) == "q_beg-2_K-1.dat");
  std::ostringstream os;
  write_series(os, s);
  CHECK(os.str().find("1 2.5\n") != std::string::npos);
}
