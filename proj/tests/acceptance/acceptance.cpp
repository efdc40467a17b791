// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 1).

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "eqmix/kernel.hpp"
#include "eqmix/numeric.hpp"
#include "eqmix/simulate.hpp"
#include "eqmix/spectral.hpp"
#include "eqmix/verify.hpp"

using namespace eqmix;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

SpectralOptions double_opt() {
  SpectralOptions o;
  o.precision = Precision::Double;
  return o;
}

std::vector<ModelSpec> small_models() {
  std::vector<ModelSpec> out;
  for (int n : {2, 4, 6, 8})
    for (double b : {0.0, 0.5, 1.0, 2.0, 4.0}) out.push_back(ModelSpec::ising(n, b));
  for (int n : {2, 4, 6})
    for (double b : {0.0, 0.5, 2.0})
      for (double k : {0.0, 1.0, 5.0}) out.push_back(ModelSpec::beg(n, b, k));
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// 1. stochasticity, detailed balance and within-orbit acceptance.
Outcome kernel_correctness() {
  Outcome o;
  std::size_t kernels = 0;
  double worst_row = 0.0, worst_db = 0.0;
  for (const ModelSpec& m : small_models()) {
    std::vector<FiniteKernel> ks;
    for (ChainKind c : {ChainKind::Naive, ChainKind::EquiEnergy}) {
      ks.push_back(metropolis_chain(m, c));
      ks.push_back(signed_lumped_chain(m, c));
      ks.push_back(lumped_projection(ks.back(), sign_merge_partition(class_table(m))));
    }
    ks.push_back(single_flip_proposal(m));
    ks.push_back(equi_energy_proposal(m));
    for (const auto& k : ks) {
      ++kernels;
      worst_row = std::max(worst_row, k.row_sum_error());
      worst_db = std::max(worst_db, k.detailed_balance_error());
      if (k.min_entry() < 0.0) o.pass = false;
    }
    // within-orbit moves keep the proposal mass
    const FiniteKernel& prop = ks.back();
    const FiniteKernel& chain = ks[3];
    for (std::size_t i = 0; i < prop.size(); ++i) {
      const EnergyClass ci = class_of(m, state_at(m, i));
      for (const auto& t : prop.row(i)) {
        if (t.to == i) continue;
        const EnergyClass cj = class_of(m, state_at(m, t.to));
        if (ci.s == cj.s && ci.r == cj.r && std::abs(chain.prob(i, t.to) - t.prob) > 1e-15) o.pass = false;
      }
    }
    RunConfig cfg;
    cfg.steps = 2000;
    const RunStats s = run_estimate(m, ChainKind::EquiEnergy, cfg);
    const auto orb = static_cast<std::size_t>(Component::Orbit);
    if (s.cost.accepted[orb] != s.cost.proposed[orb]) o.pass = false;
  }
  if (worst_row > 1e-12 || worst_db > 1e-12) o.pass = false;
  o.detail = std::to_string(kernels) + " kernels, max row error " + fmt(worst_row) + ", max balance error " +
             fmt(worst_db);
  return o;
}

// 2. printed lumped rates against direct lumping of the full chain.
Outcome lumping_oracle() {
  Outcome o;
  std::size_t compared = 0, mismatches = 0;
  std::map<std::string, std::size_t> families;
  for (int n = 2; n <= 12; n += 2) {
    for (double b : {0.0, 0.7, 2.0}) {
      const ModelSpec m = ModelSpec::ising(n, b, 0.4, 0.35);
      const FiniteKernel direct =
          lumped_projection(metropolis_chain(m, ChainKind::EquiEnergy), class_partition(m, false));
      const DiscrepancyReport r = compare_ising_printed(m, direct);
      compared += r.compared;
      mismatches += r.mismatches.size();
      for (const auto& d : r.mismatches) ++families["ising " + d.family];
      if (!r.acceptable()) o.pass = false;
    }
  }
  for (int n = 2; n <= 8; n += 2) {
    for (auto [b, k] : {std::pair{0.8, 1.1}, std::pair{2.0, 0.5}}) {
      const ModelSpec m = ModelSpec::beg(n, b, k);
      const FiniteKernel direct =
          lumped_projection(metropolis_chain(m, ChainKind::EquiEnergy), class_partition(m, false));
      const DiscrepancyReport r = compare_beg_printed(m, direct);
      compared += r.compared;
      mismatches += r.mismatches.size();
      for (const auto& d : r.mismatches) {
        ++families["beg " + d.family + (d.annotated ? " (documented typo)" : " (UNANNOTATED)")];
        if (!d.annotated) {
          std::printf("  discrepancy %s %s -> %s printed %.17g direct %.17g\n", d.family.c_str(), d.from.c_str(),
                      d.to.c_str(), d.printed, d.direct);
        }
      }
      if (!r.acceptable()) o.pass = false;
    }
  }
  for (const auto& [f, c] : families) std::printf("  discrepancy family %s: %zu rates\n", f.c_str(), c);
  o.detail = std::to_string(compared) + " rates compared, " + std::to_string(mismatches) + " mismatches";
  return o;
}

// 3. lumped spectrum contained in the full spectrum.
Outcome containment() {
  Outcome o;
  std::size_t cells = 0, equal = 0;
  double worst = 0.0;
  auto cell = [&](const ModelSpec& m, ChainKind c) {
    ++cells;
    const Spectrum full = spectrum(metropolis_chain(m, c), double_opt());
    const Spectrum lump = spectrum(signed_lumped_chain(m, c), double_opt());
    for (double l : lump.eigenvalues) {
      double d = 1e300;
      for (double f : full.eigenvalues) d = std::min(d, std::abs(l - f));
      worst = std::max(worst, d);
    }
    if (lump.gap() < full.gap() - 1e-10) o.pass = false;
    const bool eq = std::abs(lump.gap() - full.gap()) <= 1e-10;
    if (eq) ++equal;
    std::printf("  %s N=%d beta=%g K=%g %s: gap full %.6g lumped %.6g %s\n", to_string(m.kind).c_str(), m.n,
                m.beta, m.coupling, to_string(c).c_str(), full.gap(), lump.gap(), eq ? "equal" : "differ");
  };
  for (int n = 2; n <= 12; n += 2)
    for (double b : {0.5, 2.0})
      for (ChainKind c : {ChainKind::Naive, ChainKind::EquiEnergy}) cell(ModelSpec::ising(n, b), c);
  for (int n = 2; n <= 6; n += 2)
    for (ChainKind c : {ChainKind::Naive, ChainKind::EquiEnergy}) cell(ModelSpec::beg(n, 1.0, 1.0), c);
  if (worst > 1e-8) o.pass = false;
  o.detail = std::to_string(cells) + " cells, worst eigenvalue distance " + fmt(worst) + ", gaps equal in " +
             std::to_string(equal);
  return o;
}

// 4. Cheeger sandwich on every kernel of at most 24 states.
Outcome cheeger() {
  Outcome o;
  std::vector<FiniteKernel> ks;
  for (int n = 2; n <= 22; n += 4)
    for (double b : {0.5, 1.5, 3.0})
      for (ChainKind c : {ChainKind::Naive, ChainKind::EquiEnergy}) {
        const ModelSpec m = ModelSpec::ising(n, b);
        ks.push_back(signed_lumped_chain(m, c));
        ks.push_back(lumped_projection(ks.back(), sign_merge_partition(class_table(m))));
      }
  for (int n : {2, 4})
    for (ChainKind c : {ChainKind::Naive, ChainKind::EquiEnergy}) ks.push_back(signed_lumped_chain(ModelSpec::beg(n, 1.0, 2.0), c));
  ks.push_back(beg_lumped(ModelSpec::beg(6, 1.0, 1.0)));
  for (int n : {3, 7, 11})
    for (ChainKind c : {ChainKind::Naive, ChainKind::SmallWorld}) ks.push_back(metropolis_chain(ModelSpec::warmup(n, 2.0, 0.3), c));
  for (int n : {2, 4}) ks.push_back(metropolis_chain(ModelSpec::ising(n, 1.0), ChainKind::EquiEnergy));
  std::size_t used = 0;
  for (const auto& k : ks) {
    if (k.size() > kMaxConductanceStates || k.size() < 2) continue;
    ++used;
    const Conductance h = conductance_exact(k);
    const double gap = spectrum(k, double_opt()).relaxation_gap();
    if (!(h.h * h.h / 2.0 <= gap + 1e-10 && gap <= 2.0 * h.h + 1e-10)) {
      o.pass = false;
      std::printf("  sandwich fails: h=%.6g gap=%.6g\n", h.h, gap);
    }
  }
  o.detail = std::to_string(used) + " kernels";
  return o;
}

// 5. decomposition bound on kernel/partition pairs.
Outcome decomposition() {
  Outcome o;
  std::size_t pairs = 0;
  double tightest = 1e300;
  auto audit = [&](const FiniteKernel& p, const Partition& parts, const std::string& what) {
    ++pairs;
    const double g = spectrum(p, double_opt()).gap();
    const BoundRecord b = decomposition_bound(p, parts, double_opt());
    if (g < b.value - 1e-10) {
      o.pass = false;
      std::printf("  %s: gap %.6g < bound %.6g\n", what.c_str(), g, b.value);
    }
    if (b.value > 0) tightest = std::min(tightest, g / b.value);
  };
  for (int n = 3; n <= 10; ++n)
    for (double th : {2.0, 3.0}) {
      const ModelSpec m = ModelSpec::warmup(n, th, 0.3);
      audit(metropolis_chain(m, ChainKind::SmallWorld), warmup_partition(m), "warmup N=" + std::to_string(n));
    }
  for (int n : {4, 6, 8})
    for (double b : {0.5, 2.0}) {
      const ModelSpec m = ModelSpec::ising(n, b);
      const FiniteKernel full = metropolis_chain(m, ChainKind::EquiEnergy);
      audit(full, class_partition(m, false), "ising unsigned classes");
      audit(full, class_partition(m, true), "ising signed classes");
      const FiniteKernel lumped = signed_lumped_chain(m, ChainKind::EquiEnergy);
      audit(lumped, sign_merge_partition(class_table(m)), "ising sign merge");
    }
  for (int n : {2, 4})
    for (double b : {0.5, 2.0}) {
      const ModelSpec m = ModelSpec::beg(n, b, 1.0);
      const FiniteKernel full = metropolis_chain(m, ChainKind::EquiEnergy);
      audit(full, class_partition(m, false), "beg unsigned classes");
      audit(signed_lumped_chain(m, ChainKind::EquiEnergy), sign_merge_partition(class_table(m)), "beg sign merge");
    }
  if (pairs < 20) o.pass = false;
  o.detail = std::to_string(pairs) + " pairs, smallest gap/bound ratio " + fmt(tightest);
  return o;
}

std::vector<int> even_range(int lo, int hi) {
  std::vector<int> v;
  for (int n = lo; n <= hi; n += 2) v.push_back(n);
  return v;
}

// 6. Ising fast-mixing bound from some N0 on.
Outcome ising_fast() {
  Outcome o;
  ScanGrid g;
  g.kind = ModelKind::Ising;
  g.ns = even_range(10, 200);
  g.betas = {0.5, 1.0, 2.0, 4.0};
  const BoundReport r = verify_ising_fast(g);
  if (r.has_defect()) o.pass = false;
  const auto n0 = r.find_audits("n0_found");
  if (n0.size() != 4) o.pass = false;
  for (const Audit* a : n0) {
    if (!a->pass) o.pass = false;
    o.detail += a->group + " " + a->detail + "; ";
  }
  return o;
}

// 7. Ising slow mixing at beta = 2.
Outcome ising_slow() {
  Outcome o;
  ScanGrid g;
  g.ns = even_range(10, 60);
  g.betas = {2.0};
  const BoundReport r = verify_ising_slow(g);
  const FitRecord* f = r.find_fit("log_gap_vs_n", "beta=2");
  if (!f || !f->fitted || r.has_defect()) return {false, "no fit"};
  o.pass = f->fit.slope_hi < -0.05;
  o.detail = "slope " + fmt(f->fit.slope) + ", 95% interval [" + fmt(f->fit.slope_lo) + ", " + fmt(f->fit.slope_hi) + "]";
  return o;
}

// 8. warming-up chain: small-world gap times N^2 bounded below, naive gap
// decaying like theta^-N.
Outcome warmup() {
  Outcome o;
  ScanGrid g;
  g.kind = ModelKind::Warmup;
  for (int n = 10; n <= 200; n += 10) g.ns.push_back(n);
  g.thetas = {2.0};
  g.epsilons = {0.3};
  const BoundReport r = verify_warmup(g);
  if (r.has_defect()) o.pass = false;
  for (const std::string name : {"inf_gap_n2_positive", "no_decreasing_trend", "naive_exponential_decay"}) {
    const auto as = r.find_audits(name);
    if (as.empty()) o.pass = false;
    for (const Audit* a : as) {
      if (!a->pass) o.pass = false;
      o.detail += name + "=" + fmt(a->lhs) + " ";
    }
  }
  return o;
}

// 9. BEG slow region and fast region.
Outcome beg_phases() {
  Outcome o;
  ScanGrid s;
  s.kind = ModelKind::Beg;
  s.ns = even_range(6, 24);
  s.betas = {3.0};
  s.ks = {5.0};
  s.slow_cells = {{3.0, 5.0}};
  const BoundReport slow = verify_beg_slow(s);
  const auto dec = slow.find_audits("exponential_decay");
  if (dec.empty() || slow.has_defect()) o.pass = false;
  for (const Audit* a : dec) {
    if (!a->pass) o.pass = false;
    o.detail += "(3,5) naive slope upper " + fmt(a->lhs) + "; ";
  }
  ScanGrid f;
  f.kind = ModelKind::Beg;
  f.ns = even_range(6, 30);
  f.betas = {1.0};
  f.ks = {1.0};
  const BoundReport fast = verify_beg_fast(f);
  const auto poly = fast.find_audits("polynomial_decay");
  if (poly.empty() || fast.has_defect()) o.pass = false;
  for (const Audit* a : poly) {
    if (!a->pass) o.pass = false;
    o.detail += "(1,1) equi-energy log-log slope lower " + fmt(a->lhs);
  }
  return o;
}

// 10. Bose-Einstein sampler.
Outcome bose_einstein() {
  Outcome o;
  double worst = 0.0;
  for (int n = 0; n <= 5; ++n)
    for (int k = 1; k <= 5; ++k) {
      const double expect = 1.0 / static_cast<double>(binomial_exact(n + k - 1, k - 1));
      const auto law = be_placement_probabilities(n, k);
      if (law.size() != binomial_exact(n + k - 1, k - 1)) o.pass = false;
      for (const auto& [occ, p] : law) worst = std::max(worst, std::abs(p - expect));
    }
  if (worst > 1e-12) o.pass = false;
  const ModelSpec m = ModelSpec::ising(8, 1.0);
  Rng rng(2024);
  std::map<std::vector<int>, int> counts;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i)
    ++counts[sample_uniform_class(m, {ModelKind::Ising, 2, 0, 1}, rng, OrbitRoute::BoseEinstein).values];
  double chi2 = 0.0;
  const double e = draws / 56.0;
  for (const auto& [x, c] : counts) chi2 += (c - e) * (c - e) / e;
  chi2 += (56.0 - static_cast<double>(counts.size())) * e;
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(55), chi2));
  if (counts.size() != 56 || !(p > 0.001)) o.pass = false;
  o.detail = "max enumeration error " + fmt(worst) + ", chi-square " + fmt(chi2) + " (p = " + fmt(p) + ")";
  return o;
}

// 11. asymptotic variance.
Outcome avar() {
  Outcome o;
  // two-state chain simulated directly
  {
    const double a = 0.3, b = 0.1;
    const FiniteKernel p({"0", "1"}, {std::log(b), std::log(a)}, {{{0, 1 - a}, {1, a}}, {{0, b}, {1, 1 - b}}});
    const AvarResult spec = avar_spectral(p, {0.0, 1.0});
    Rng rng(7);
    int x = 0;
    std::vector<double> trace;
    for (int t = 0; t < 1100000; ++t) {
      const double u = rng.uniform();
      x = x == 0 ? (u < a ? 1 : 0) : (u < b ? 0 : 1);
      if (t >= 100000) trace.push_back(x);
    }
    const BatchMeans bm = batch_means_avar(trace);
    const bool ok = std::abs(bm.avar - spec.avar) < 4 * bm.se && spec.avar <= spec.bound;
    if (!ok) o.pass = false;
    o.detail += "two-state " + fmt(bm.avar) + " vs " + fmt(spec.avar) + "; ";
  }
  for (auto [m, c] : {std::pair{ModelSpec::ising(10, 0.8), ChainKind::EquiEnergy},
                      std::pair{ModelSpec::ising(6, 0.5), ChainKind::Naive},
                      std::pair{ModelSpec::ising(8, 1.5), ChainKind::EquiEnergy}}) {
    RunConfig cfg;
    cfg.steps = 1000000;
    cfg.seed = 11;
    const RunStats s = run_estimate(m, c, cfg);
    const ClassTable t = class_table(m);
    std::vector<double> f(t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
      f[i] = t.entries()[i].cls.sign * t.entries()[i].cls.s / static_cast<double>(m.n);
    const AvarResult spec = avar_spectral(signed_lumped_chain(m, c), f);
    const bool ok = std::abs(s.avar - spec.avar) < 4 * s.avar_se && spec.avar <= spec.bound;
    if (!ok) o.pass = false;
    o.detail += "Ising N=" + std::to_string(m.n) + " " + fmt(s.avar) + " vs " + fmt(spec.avar) + "; ";
  }
  return o;
}

// 12. unimodality scans.
Outcome unimodality() {
  Outcome o;
  ScanGrid g;
  g.kind = ModelKind::Beg;
  g.ns = {15};
  for (int n = 2; n <= 60; n += 2) g.ns.push_back(n);
  g.betas = {0.5, 1.0, 2.0, 3.0};
  g.ks = {0.5, 1.0, 2.0, 5.0};
  UnimodalityScan s = unimodality_scan(g);
  for (auto [beta, n0] : s.ising_n0) {
    if (beta != 0.5 && beta != 2.0) continue;
    if (!n0 || *n0 > 50) o.pass = false;
    o.detail += "Ising beta=" + fmt(beta) + " N0=" + (n0 ? std::to_string(*n0) : std::string("none")) + "; ";
  }
  std::size_t n15 = 0;
  for (const auto& ser : s.report.series)
    if (ser.name.rfind("q_beg_", 0) == 0 && ser.name.find("N=15") != std::string::npos && ser.points.size() == 16)
      ++n15;
  if (n15 != 16) o.pass = false;
  o.detail += std::to_string(n15) + " BEG profiles at N=15";
  return o;
}

// 13. determinism of every subcommand.
Outcome determinism() {
  Outcome o;
  const std::vector<std::vector<std::string>> runs = {
      {"gap-scan", "--model", "beg", "--n", "4..10..2", "--beta", "1,3", "--k", "1,5"},
      {"verify", "ising-fast", "--n", "10..30..2", "--beta", "2"},
      {"verify", "warmup", "--n", "10..80..10"},
      {"unimodality-scan", "--model", "beg", "--n", "4..20..2,15"},
      {"simulate", "--model", "ising", "--n", "20", "--beta", "1.5", "--steps", "1e5", "--runs", "2", "--seed", "42",
       "--trace"},
      {"conductance", "--model", "warmup", "--n", "8", "--chain", "small-world"},
      {"export-kernel", "--model", "ising", "--n", "6", "--space", "unsigned"},
  };
  const fs::path root = fs::temp_directory_path() / "eqmix-acceptance";
  fs::remove_all(root);
  auto tree = [](const fs::path& dir) {
    std::map<std::string, std::string> t;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      std::ifstream in(e.path(), std::ios::binary);
      t[fs::relative(e.path(), dir).string()] = {std::istreambuf_iterator<char>(in), {}};
    }
    return t;
  };
  std::size_t files = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::map<std::string, std::string> first;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path dir = root / (std::to_string(i) + "-" + std::to_string(rep));
      std::vector<std::string> args = runs[i];
      args.insert(args.begin(), "eqmix");
      args.push_back("--out");
      args.push_back(dir.string());
      std::vector<const char*> argv;
      for (const auto& a : args) argv.push_back(a.c_str());
      std::ostringstream out, err;
      if (cli::run(static_cast<int>(argv.size()), argv.data(), out, err) != 0) {
        o.pass = false;
        std::printf("  %s failed: %s\n", runs[i][0].c_str(), err.str().c_str());
      }
      auto t = tree(dir);
      if (rep == 0) {
        first = std::move(t);
        files += first.size();
      } else if (t != first) {
        o.pass = false;
        std::printf("  %s: outputs differ between runs\n", runs[i][0].c_str());
      }
    }
  }
  fs::remove_all(root);
  o.detail = std::to_string(runs.size()) + " invocations, " + std::to_string(files) + " files compared";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"kernel correctness", kernel_correctness},
      {"lumping oracle equivalence", lumping_oracle},
      {"signed-lumping spectral containment", containment},
      {"Cheeger sandwich", cheeger},
      {"decomposition bound", decomposition},
      {"Ising fast mixing", ising_fast},
      {"Ising slow mixing", ising_slow},
      {"warming-up chain", warmup},
      {"BEG phase behaviour", beg_phases},
      {"Bose-Einstein sampler", bose_einstein},
      {"asymptotic variance", avar},
      {"unimodality scans", unimodality},
      {"determinism", determinism},
  };
  // Optional argument: run a single criterion.
  const int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<int>(i + 1) != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %zu (%s): %s [%.1f s] %s\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                secs, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
