#include "eqmix/verify.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <set>

#include <json.hpp>

#include "eqmix/parallel.hpp"

namespace eqmix {

namespace {

// Relative slack granted to floating-point comparisons in inequality audits.
constexpr double kAuditRelTol = 1e-9;

bool at_least(double lhs, double rhs) {
  return lhs >= rhs - kAuditRelTol * std::abs(rhs) - std::numeric_limits<double>::min();
}

std::string short_real(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string tag(std::initializer_list<std::pair<const char*, double>> kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    if (!out.empty()) out += ',';
    out += k;
    out += '=';
    out += short_real(v);
  }
  return out;
}

template <class T>
void require_nonempty(const std::vector<T>& v, const char* what) {
  if (v.empty()) throw ValidationError(std::string("scan grid: ") + what + " list is empty");
}

CellRecord make_record(const std::string& analysis, const ModelSpec& m, ChainKind chain,
                       const std::string& surrogate, const Spectrum& s) {
  CellRecord c;
  c.analysis = analysis;
  c.model = m;
  c.chain = chain;
  c.surrogate = surrogate;
  c.states = s.dimension;
  c.gap = s.gap();
  c.relaxation_gap = s.relaxation_gap();
  c.one_plus_min = s.one_plus_min;
  c.digits = s.digits;
  c.resolution = s.resolution;
  c.underflow = s.dimension > 1 && c.relaxation_gap < s.resolution;
  return c;
}

// Runs make(i, options) for every job, over grid cells in parallel when
// asked; each job's own spectral work is then serial.
template <class Make>
void run_jobs(const ScanGrid& g, std::size_t count, Make make) {
  SpectralOptions inner = g.spectral;
  const bool outer = g.exec == Exec::Parallel && count > 1;
  if (outer) inner.exec = Exec::Serial;
  for_each_task(outer ? Exec::Parallel : Exec::Serial, count,
                [&](std::size_t i) { make(i, inner); });
}

FitRecord fit_cells(const std::string& name, const std::string& group, const std::string& xl,
                    const std::string& yl, const std::vector<double>& xs,
                    const std::vector<double>& ys, const std::vector<bool>& keep) {
  FitRecord f;
  f.name = name;
  f.group = group;
  f.x = xl;
  f.y = yl;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (keep[i] && std::isfinite(ys[i])) {
      x.push_back(xs[i]);
      y.push_back(ys[i]);
    } else {
      ++f.excluded;
    }
  }
  if (x.size() >= kMinFitPoints) {
    f.fit = fit_line(x, y);
    f.fitted = true;
  } else {
    f.fit.points = x.size();
  }
  return f;
}

Audit make_audit(std::string name, Severity sev, std::string group, std::optional<std::size_t> cell,
                 double lhs, double rhs, bool pass, std::string detail = {},
                 bool hypotheses_ok = true) {
  Audit a;
  a.name = std::move(name);
  a.severity = sev;
  a.group = std::move(group);
  a.cell = cell;
  a.lhs = lhs;
  a.rhs = rhs;
  a.hypotheses_ok = hypotheses_ok;
  a.pass = pass;
  a.detail = std::move(detail);
  return a;
}

// Eigenvalue containment of a lumped chain in the full-space spectrum.
struct Containment {
  double worst = 0.0;  // largest distance from a lumped eigenvalue to the full spectrum
  double gap_full = 0.0;
  double gap_lumped = 0.0;
};

Containment containment(const Spectrum& lumped, const ModelSpec& m, ChainKind chain,
                        const SpectralOptions& opt) {
  SpectralOptions o = opt;
  o.precision = Precision::Double;
  const Spectrum full = spectrum(metropolis_chain(m, chain, o.exec), o);
  std::vector<double> ev = full.eigenvalues;
  std::sort(ev.begin(), ev.end());
  Containment c;
  for (double l : lumped.eigenvalues) {
    auto it = std::lower_bound(ev.begin(), ev.end(), l);
    double d = std::numeric_limits<double>::infinity();
    if (it != ev.end()) d = std::min(d, *it - l);
    if (it != ev.begin()) d = std::min(d, l - *std::prev(it));
    c.worst = std::max(c.worst, d);
  }
  c.gap_full = full.gap();
  c.gap_lumped = lumped.gap();
  return c;
}

void push_containment(BoundReport& rep, const std::string& group, std::size_t cell,
                      const Containment& c) {
  rep.audits.push_back(make_audit("lumped_spectrum_contained", Severity::Theorem, group, cell,
                                  c.worst, 1e-8, c.worst <= 1e-8));
  rep.audits.push_back(make_audit("lumped_gap_at_least_full", Severity::Theorem, group, cell,
                                  c.gap_lumped, c.gap_full - 1e-10,
                                  c.gap_lumped >= c.gap_full - 1e-10));
  rep.audits.push_back(make_audit("lumped_gap_equals_full", Severity::Info, group, cell,
                                  c.gap_lumped, c.gap_full,
                                  std::abs(c.gap_lumped - c.gap_full) <= 1e-10));
}

// A kernel with its states reordered: new state k is old state order[k].
FiniteKernel permuted(const FiniteKernel& p, const std::vector<std::size_t>& order) {
  const std::size_t n = p.size();
  std::vector<std::size_t> pos(n);
  for (std::size_t k = 0; k < n; ++k) pos[order[k]] = k;
  std::vector<std::string> labels(n);
  std::vector<double> lw(n);
  std::vector<std::vector<Transition>> rows(n);
  for (std::size_t k = 0; k < n; ++k) {
    labels[k] = p.label(order[k]);
    lw[k] = p.log_weights()[order[k]];
    for (const auto& t : p.row(order[k])) rows[k].push_back({pos[t.to], t.prob});
  }
  return FiniteKernel(std::move(labels), std::move(lw), std::move(rows));
}

// Signed class states sorted by signed magnetisation.
std::vector<std::size_t> magnetisation_order(const ClassTable& table) {
  std::vector<std::size_t> order(table.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = table.entries()[a].cls;
    const auto& cb = table.entries()[b].cls;
    return ca.sign * ca.s < cb.sign * cb.s;
  });
  return order;
}

// Full-space size when it is small enough for a containment check.
bool full_check(const ScanGrid& g, const ModelSpec& m) {
  const int limit = m.kind == ModelKind::Ising ? kMaxFullIsingN : kMaxFullBegN;
  return m.kind != ModelKind::Warmup && m.n <= limit && full_space_size(m) <= g.full_check_states;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

bool slow_cell(const ScanGrid& g, double beta, double k) {
  return std::any_of(g.slow_cells.begin(), g.slow_cells.end(),
                     [&](const auto& c) { return c.first == beta && c.second == k; });
}

std::vector<int> sorted_ns(const ScanGrid& g) {
  std::vector<int> ns = g.ns;
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  return ns;
}

}  // namespace

std::string to_string(Severity s) {
  switch (s) {
    case Severity::Theorem: return "theorem";
    case Severity::Assertion: return "assertion";
    case Severity::Info: return "info";
  }
  return "info";
}

// ---- grid ----------------------------------------------------------------

std::vector<ModelSpec> ScanGrid::cells() const {
  std::vector<ModelSpec> out;
  for (double beta_or_theta : kind == ModelKind::Warmup ? thetas : betas) {
    switch (kind) {
      case ModelKind::Warmup:
        for (double e : epsilons)
          for (int n : ns) out.push_back(ModelSpec::warmup(n, beta_or_theta, e));
        break;
      case ModelKind::Ising:
        for (double p1 : p1s)
          for (double p2 : p2s)
            for (int n : ns) out.push_back(ModelSpec::ising(n, beta_or_theta, p1, p2));
        break;
      case ModelKind::Beg:
        for (double k : ks)
          for (double p1 : p1s)
            for (double p2 : p2s)
              for (int n : ns) out.push_back(ModelSpec::beg(n, beta_or_theta, k, p1, p2));
        break;
    }
  }
  return out;
}

void ScanGrid::validate() const {
  require_nonempty(ns, "N");
  require_nonempty(chains, "chain");
  if (kind == ModelKind::Warmup) {
    require_nonempty(thetas, "theta");
    require_nonempty(epsilons, "epsilon");
  } else {
    require_nonempty(betas, "beta");
    require_nonempty(p1s, "p1");
    require_nonempty(p2s, "p2");
    if (kind == ModelKind::Beg) require_nonempty(ks, "K");
  }
  for (ChainKind c : chains) {
    if (c == ChainKind::SmallWorld && kind != ModelKind::Warmup) {
      throw ValidationError("scan grid: the small-world chain exists only for the warmup model");
    }
  }
  for (double a : as) {
    if (!(a > 0.0)) throw ValidationError("scan grid: a must be positive");
  }
  (void)cells();  // every cell validates on construction
}

// ---- small helpers -------------------------------------------------------

bool BoundReport::has_defect() const {
  return std::any_of(audits.begin(), audits.end(), [](const Audit& a) {
    return a.severity == Severity::Theorem && a.hypotheses_ok && !a.pass;
  });
}

bool BoundReport::failed() const {
  return has_defect() || std::any_of(audits.begin(), audits.end(), [](const Audit& a) {
           return a.severity == Severity::Assertion && !a.pass;
         });
}

const FitRecord* BoundReport::find_fit(const std::string& name, const std::string& group) const {
  for (const auto& f : fits) {
    if (f.name == name && f.group == group) return &f;
  }
  return nullptr;
}

std::vector<const Audit*> BoundReport::find_audits(const std::string& name) const {
  std::vector<const Audit*> out;
  for (const auto& a : audits) {
    if (a.name == name) out.push_back(&a);
  }
  return out;
}

double ising_fast_bound(int n, double p1, double p2) {
  const double m = n / 2.0 + 1.0;
  return p1 * p2 / 32.0 * std::pow(m, -3.0) * std::min((1.0 - p1 - p2) / 2.0, (1.0 - p1) / p2);
}

double beg_decomposition_bound(double gap_pbar, double p1, double p2) {
  return gap_pbar * p2 / 2.0 * std::min((1.0 - p1) / 2.0, (1.0 - p1 - p2) / 2.0);
}

namespace {

// Signs of successive differences with flats removed.
std::vector<int> slope_signs(const std::vector<double>& v, double tol) {
  std::vector<int> signs;
  for (std::size_t i = 1; i < v.size(); ++i) {
    const double d = v[i] - v[i - 1];
    if (d > tol) signs.push_back(1);
    else if (d < -tol) signs.push_back(-1);
  }
  return signs;
}

}  // namespace

bool is_unimodal(const std::vector<double>& log_profile, double tol) {
  bool descending = false;
  for (int s : slope_signs(log_profile, tol)) {
    if (s < 0) descending = true;
    else if (descending) return false;
  }
  return true;
}

bool is_nonincreasing(const std::vector<double>& log_profile, double tol) {
  const auto s = slope_signs(log_profile, tol);
  return std::none_of(s.begin(), s.end(), [](int v) { return v > 0; });
}

std::optional<int> threshold_n(const std::vector<std::pair<int, bool>>& by_n) {
  if (by_n.empty() || !by_n.back().second) return std::nullopt;
  std::size_t i = by_n.size();
  while (i > 0 && by_n[i - 1].second) --i;
  return by_n[i].first;
}

ScaledParams scaled_params(double a, int n) {
  if (!(a > 0.0 && a < n)) throw ValidationError("scaled parameters need 0 < a < N");
  ScaledParams s;
  s.p1 = 1.0 - a / (2.0 * n);
  s.p2 = a / n;
  s.valid = s.p1 > 0.0 && s.p2 > 0.0 && s.p1 + s.p2 < 1.0;
  return s;
}

ScaledParams scaled_params_fallback(double a, int n) {
  if (!(a > 0.0 && a < n)) throw ValidationError("scaled parameters need 0 < a < N");
  ScaledParams s;
  s.p1 = 1.0 - a / n;
  s.p2 = a / (2.0 * n);
  s.valid = s.p1 > 0.0 && s.p2 > 0.0 && s.p1 + s.p2 < 1.0;
  return s;
}

// ---- rate function -------------------------------------------------------

namespace {

constexpr double kRateTol = 1e-10;
constexpr double kTMax = 30.0;

// Log-moment generating function of one spin under the beta-tilted law.
double cumulant(double beta, double t) {
  const double eb = std::exp(-beta);
  return std::log1p(eb * (std::exp(t) + std::exp(-t))) - std::log1p(2.0 * eb);
}

double cumulant_prime(double beta, double t) {
  const double eb = std::exp(-beta);
  return eb * (std::exp(t) - std::exp(-t)) / (1.0 + eb * (std::exp(t) + std::exp(-t)));
}

// J(z) = sup_t {t z - c(t)}; the maximiser solves c'(t) = z.
double legendre(double beta, double z) {
  const double az = std::abs(z);
  if (az >= 1.0) return beta + std::log1p(2.0 * std::exp(-beta));
  double lo = 0.0, hi = kTMax;
  if (cumulant_prime(beta, hi) <= az) {
    // Maximiser beyond the bracket: J is within exp(-30) of the endpoint value.
    return hi * az - cumulant(beta, hi);
  }
  while (hi - lo > kRateTol) {
    const double mid = 0.5 * (lo + hi);
    if (cumulant_prime(beta, mid) < az) lo = mid;
    else hi = mid;
  }
  const double t = 0.5 * (lo + hi);
  return t * az - cumulant(beta, t);
}

double tilted(double beta, double k, double z) { return legendre(beta, z) - beta * k * z * z; }

// Global minimiser of tilted() on [0, 1]: grid search, then golden section.
std::pair<double, double> tilted_min(double beta, double k) {
  constexpr int kGrid = 2000;
  int best = 0;
  double best_v = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= kGrid; ++i) {
    const double v = tilted(beta, k, static_cast<double>(i) / kGrid);
    if (v < best_v) {
      best_v = v;
      best = i;
    }
  }
  double a = std::max(0, best - 1) / static_cast<double>(kGrid);
  double b = std::min(kGrid, best + 1) / static_cast<double>(kGrid);
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = tilted(beta, k, c), fd = tilted(beta, k, d);
  int iter = 0;
  while (b - a > kRateTol) {
    if (++iter > 200) throw ConvergenceError("rate function: golden-section search did not converge");
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = tilted(beta, k, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = tilted(beta, k, d);
    }
  }
  double z = 0.5 * (a + b);
  double v = tilted(beta, k, z);
  if (best_v < v) {
    z = static_cast<double>(best) / kGrid;
    v = best_v;
  }
  return {z, v};
}

void check_rate_args(double beta, double k) {
  if (!(std::isfinite(beta) && beta >= 0.0 && std::isfinite(k) && k >= 0.0)) {
    throw ValidationError("rate function: beta and K must be finite and >= 0");
  }
}

}  // namespace

double rate_function(double beta, double coupling, double z) {
  check_rate_args(beta, coupling);
  if (!(z >= -1.0 && z <= 1.0)) throw ValidationError("rate function: z must lie in [-1,1]");
  const double floor = tilted_min(beta, coupling).second;
  return std::max(0.0, tilted(beta, coupling, z) - floor);
}

std::vector<double> rate_minimizers(double beta, double coupling) {
  check_rate_args(beta, coupling);
  const double z = tilted_min(beta, coupling).first;
  if (z < 1e-6) return {0.0};
  return {z, -z};
}

// ---- scans ---------------------------------------------------------------

BoundReport gap_scan(const ScanGrid& grid) {
  grid.validate();
  BoundReport rep;
  rep.analysis = "gap-scan";
  const auto models = grid.cells();
  struct Job {
    ModelSpec m;
    ChainKind chain;
  };
  std::vector<Job> jobs;
  for (ChainKind c : grid.chains)
    for (const auto& m : models) jobs.push_back({m, c});
  rep.cells.resize(jobs.size());
  run_jobs(grid, jobs.size(), [&](std::size_t i, const SpectralOptions& opt) {
    const auto& j = jobs[i];
    const bool full = j.m.kind == ModelKind::Warmup;
    const FiniteKernel k = full ? metropolis_chain(j.m, j.chain, opt.exec) : signed_lumped_chain(j.m, j.chain);
    rep.cells[i] = make_record(rep.analysis, j.m, j.chain, full ? "full" : "signed-lumped", spectrum(k, opt));
  });
  return rep;
}

BoundReport verify_ising_fast(const ScanGrid& in) {
  ScanGrid g = in;
  g.kind = ModelKind::Ising;
  g.validate();
  BoundReport rep;
  rep.analysis = "ising-fast";
  const auto ns = sorted_ns(g);

  struct Job {
    ModelSpec m;
    std::string group;
    bool scaled = false;
  };
  std::vector<Job> jobs;
  std::vector<std::string> groups, scaled_groups;
  for (double beta : g.betas)
    for (double p1 : g.p1s)
      for (double p2 : g.p2s) {
        const std::string grp = tag({{"beta", beta}, {"p1", p1}, {"p2", p2}});
        groups.push_back(grp);
        for (int n : ns) jobs.push_back({ModelSpec::ising(n, beta, p1, p2), grp, false});
      }
  for (double a : g.as)
    for (double beta : g.betas) {
      const std::string grp = tag({{"beta", beta}, {"a", a}});
      scaled_groups.push_back(grp);
      for (int n : ns) {
        if (!(a < n)) {
          rep.audits.push_back(make_audit("scaled_cell_skipped", Severity::Info, grp, std::nullopt, n, a,
                                          true, "a >= N"));
          continue;
        }
        const ScaledParams printed = scaled_params(a, n);
        rep.audits.push_back(make_audit(
            "scaled_printed_pair_valid", Severity::Info, grp, std::nullopt, printed.p1 + printed.p2, 1.0,
            printed.valid, "printed pair p1=1-a/(2N), p2=a/N at N=" + std::to_string(n)));
        const ScaledParams fb = scaled_params_fallback(a, n);
        if (!fb.valid) continue;
        ModelSpec m = ModelSpec::ising(n, beta, fb.p1, fb.p2);
        m.a = a;
        jobs.push_back({m, grp, true});
      }
    }

  struct Extra {
    double pbar_relax = 0.0;
    double pbar_lambda_min = 0.0;
    BoundRecord path;
    std::optional<Containment> contained;
  };
  std::vector<CellRecord> cells(jobs.size());
  std::vector<Extra> extra(jobs.size());
  run_jobs(g, jobs.size(), [&](std::size_t i, const SpectralOptions& opt) {
    const auto& j = jobs[i];
    const Spectrum s = spectrum(signed_lumped_chain(j.m, ChainKind::EquiEnergy), opt);
    cells[i] = make_record(rep.analysis, j.m, ChainKind::EquiEnergy, "signed-lumped", s);
    if (j.scaled) return;
    const BirthDeathChain bd = ising_lumped_bd(j.m);
    const Spectrum sb = spectrum(bd, opt);
    extra[i].pbar_relax = sb.relaxation_gap();
    extra[i].pbar_lambda_min = sb.lambda_min();
    extra[i].path = bd_path_bound_checked(bd, j.m.p1 / 8.0, 1.0, 2.0, argmax(bd.log_weights));
    if (full_check(g, j.m)) {
      extra[i].contained = containment(s, j.m, ChainKind::EquiEnergy, opt);
    }
  });
  rep.cells = cells;

  auto process = [&](const std::string& grp, bool scaled) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].group == grp && jobs[i].scaled == scaled) idx.push_back(i);
    }
    std::vector<double> xs, ys;
    std::vector<bool> keep;
    std::vector<std::pair<int, bool>> holds;
    Series ser{(scaled ? "ising_fast_scaled_gap_" : "ising_fast_gap_") + grp, "N", "gap", {}};
    for (std::size_t i : idx) {
      const auto& c = cells[i];
      const ModelSpec& m = jobs[i].m;
      xs.push_back(std::log(static_cast<double>(m.n)));
      ys.push_back(std::log(c.gap));
      keep.push_back(!c.underflow && c.gap > 0.0);
      ser.points.emplace_back(m.n, c.gap);
      if (scaled) continue;
      const double bound = ising_fast_bound(m.n, m.p1, m.p2);
      const bool ok = at_least(c.gap, bound);
      holds.emplace_back(m.n, ok);
      rep.audits.push_back(make_audit("gap_lower_bound", Severity::Info, grp, i, c.gap, bound, ok,
                                      "N=" + std::to_string(m.n)));
      const Extra& e = extra[i];
      const double nb = m.n / 2.0 + 1.0;
      const double rhs = m.p1 / 16.0 * std::pow(nb, -3.0);
      rep.audits.push_back(make_audit("pbar_path_lemma", Severity::Theorem, grp, i, e.pbar_relax,
                                      1.0 - e.path.value, at_least(e.pbar_relax, 1.0 - e.path.value),
                                      e.path.hypotheses_ok ? "hypotheses verified" : e.path.detail,
                                      e.path.hypotheses_ok));
      rep.audits.push_back(make_audit("pbar_lambda1_bound", Severity::Assertion, grp, i, e.pbar_relax, rhs,
                                      at_least(e.pbar_relax, rhs), "1-lambda_1(Pbar) >= (p1/16)(N/2+1)^-3"));
      rep.audits.push_back(make_audit("pbar_lambda_min_bound", Severity::Assertion, grp, i,
                                      e.pbar_lambda_min, 1.0 - m.p1,
                                      e.pbar_lambda_min >= 1.0 - m.p1 - 1e-12,
                                      "lambda_min(Pbar) >= 1-p1"));
      if (e.contained) push_containment(rep, grp, i, *e.contained);
    }
    FitRecord f = fit_cells(scaled ? "scaled_loglog_gap" : "loglog_gap", grp, "log N", "log gap", xs, ys, keep);
    if (scaled) {
      const bool ok = f.fitted && f.fit.slope_lo >= -5.25;
      rep.audits.push_back(make_audit("scaled_slope_at_least_-5.25", Severity::Assertion, grp, std::nullopt,
                                      f.fitted ? f.fit.slope_lo : std::nan(""), -5.25, ok,
                                      f.fitted ? "" : "too few points to fit"));
    } else {
      const auto n0 = threshold_n(holds);
      rep.audits.push_back(make_audit("n0_found", Severity::Assertion, grp, std::nullopt,
                                      n0 ? *n0 : std::nan(""), ns.back(), n0.has_value(),
                                      n0 ? "N0=" + std::to_string(*n0) : "bound fails at the largest N"));
      rep.audits.push_back(make_audit("n0_at_most_20", Severity::Info, grp, std::nullopt,
                                      n0 ? *n0 : std::nan(""), 20, n0 && *n0 <= 20));
    }
    rep.fits.push_back(std::move(f));
    rep.series.push_back(std::move(ser));
  };
  for (const auto& grp : groups) process(grp, false);
  for (const auto& grp : scaled_groups) process(grp, true);
  return rep;
}

BoundReport verify_ising_slow(const ScanGrid& in) {
  ScanGrid g = in;
  g.kind = ModelKind::Ising;
  g.p1s = {g.p1s.empty() ? 0.5 : g.p1s.front()};
  g.p2s = {g.p2s.empty() ? 0.25 : g.p2s.front()};
  g.validate();
  BoundReport rep;
  rep.analysis = "ising-slow";
  const auto ns = sorted_ns(g);
  struct Job {
    ModelSpec m;
    std::string group;
  };
  std::vector<Job> jobs;
  for (double beta : g.betas)
    for (int n : ns) jobs.push_back({ModelSpec::ising(n, beta, g.p1s[0], g.p2s[0]), tag({{"beta", beta}})});
  std::vector<CellRecord> cells(jobs.size());
  std::vector<double> h_int(jobs.size());
  std::vector<std::optional<Containment>> contained(jobs.size());
  run_jobs(g, jobs.size(), [&](std::size_t i, const SpectralOptions& opt) {
    const ModelSpec& m = jobs[i].m;
    const FiniteKernel k = signed_lumped_chain(m, ChainKind::Naive);
    const Spectrum s = spectrum(k, opt);
    cells[i] = make_record(rep.analysis, m, ChainKind::Naive, "signed-lumped", s);
    h_int[i] = interval_conductance(permuted(k, magnetisation_order(class_table(m)))).h;
    if (full_check(g, m)) contained[i] = containment(s, m, ChainKind::Naive, opt);
  });
  rep.cells = cells;

  for (double beta : g.betas) {
    const std::string grp = tag({{"beta", beta}});
    std::vector<double> n_lin, n_log, y;
    std::vector<bool> keep;
    Series ser{"ising_slow_gap_" + grp, "N", "relaxation_gap", {}};
    Series hs{"ising_slow_interval_conductance_" + grp, "N", "h_interval", {}};
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].group != grp) continue;
      const auto& c = cells[i];
      const int n = jobs[i].m.n;
      n_lin.push_back(n);
      n_log.push_back(std::log(static_cast<double>(n)));
      y.push_back(std::log(c.relaxation_gap));
      keep.push_back(!c.underflow && c.relaxation_gap > 0.0);
      ser.points.emplace_back(n, c.relaxation_gap);
      hs.points.emplace_back(n, h_int[i]);
      rep.audits.push_back(make_audit("cheeger_upper_interval", Severity::Theorem, grp, i, c.relaxation_gap,
                                      2.0 * h_int[i], c.relaxation_gap <= 2.0 * h_int[i] * (1 + kAuditRelTol) + 1e-10,
                                      "1-lambda_1 <= 2h <= 2h_interval"));
      if (c.underflow) {
        rep.audits.push_back(make_audit("underflow", Severity::Info, grp, i, c.relaxation_gap, c.resolution,
                                        false, "excluded from fits"));
      }
      if (beta == 0.0) {
        const double expect = 2.0 / n;
        rep.audits.push_back(make_audit("hypercube_relaxation_gap", Severity::Theorem, grp, i,
                                        c.relaxation_gap, expect,
                                        std::abs(c.relaxation_gap - expect) <= 1e-12 * expect + 1e-15,
                                        "1-lambda_1 = 2/N at beta=0"));
      }
      if (contained[i]) push_containment(rep, grp, i, *contained[i]);
    }
    FitRecord lin = fit_cells("log_gap_vs_n", grp, "N", "log relaxation_gap", n_lin, y, keep);
    if (beta > 1.0) {
      const bool ok = lin.fitted && lin.fit.slope_hi < -0.01;
      rep.audits.push_back(make_audit("exponential_decay", Severity::Assertion, grp, std::nullopt,
                                      lin.fitted ? lin.fit.slope_hi : std::nan(""), -0.01, ok,
                                      lin.fitted ? "upper 95% slope edge" : "too few points to fit"));
    } else {
      rep.fits.push_back(fit_cells("loglog_gap", grp, "log N", "log relaxation_gap", n_log, y, keep));
    }
    rep.fits.push_back(std::move(lin));
    rep.series.push_back(std::move(ser));
    rep.series.push_back(std::move(hs));
  }
  return rep;
}

BoundReport verify_warmup(const ScanGrid& in) {
  ScanGrid g = in;
  g.kind = ModelKind::Warmup;
  g.validate();
  BoundReport rep;
  rep.analysis = "warmup";
  const auto ns = sorted_ns(g);
  struct Job {
    ModelSpec m;
    std::string group;
  };
  std::vector<Job> jobs;
  for (double theta : g.thetas)
    for (double eps : g.epsilons)
      for (int n : ns) jobs.push_back({ModelSpec::warmup(n, theta, eps), tag({{"theta", theta}, {"epsilon", eps}})});

  struct Extra {
    CellRecord naive;
    BoundRecord decomposition;
    double worst_projection = 0.0;   // max |P_H(i,i+1) - (1-eps)/4|, blocks i >= 1
    double worst_restriction = 0.0;  // max entry error of the two-state restrictions
    double h_half = 0.0;             // conductance of {x >= 1} under the naive chain
    double h_bound = 0.0;            // pi(0) / (1 - pi(0))
    double h_interval = 0.0;
  };
  std::vector<CellRecord> cells(jobs.size());
  std::vector<Extra> extra(jobs.size());
  run_jobs(g, jobs.size(), [&](std::size_t i, const SpectralOptions& opt) {
    const ModelSpec& m = jobs[i].m;
    Extra& e = extra[i];
    const FiniteKernel sw = metropolis_chain(m, ChainKind::SmallWorld, opt.exec);
    cells[i] = make_record(rep.analysis, m, ChainKind::SmallWorld, "full", spectrum(sw, opt));
    const FiniteKernel naive = metropolis_chain(m, ChainKind::Naive, opt.exec);
    e.naive = make_record(rep.analysis, m, ChainKind::Naive, "full", spectrum(naive, opt));

    const Partition parts = warmup_partition(m);
    e.decomposition = decomposition_bound(sw, parts, opt);
    const FiniteKernel ph = lumped_projection(sw, parts);
    const double target = (1.0 - m.epsilon) / 4.0;
    for (std::size_t b = 1; b + 1 < ph.size(); ++b) {
      e.worst_projection = std::max(e.worst_projection, std::abs(ph.prob(b, b + 1) - target));
    }
    const auto members = parts.members();
    for (std::size_t b = 1; b < members.size(); ++b) {
      const FiniteKernel r = restriction(sw, members[b]);
      for (std::size_t x = 0; x < 2; ++x) {
        e.worst_restriction = std::max(e.worst_restriction, std::abs(r.prob(x, x) - (1.0 - m.epsilon)));
        e.worst_restriction = std::max(e.worst_restriction, std::abs(r.prob(x, 1 - x) - m.epsilon));
      }
    }
    const auto pi = naive.stationary();
    const std::size_t zero = static_cast<std::size_t>(m.n);
    std::vector<std::size_t> upper;
    for (std::size_t x = zero + 1; x < naive.size(); ++x) upper.push_back(x);
    e.h_half = set_conductance(naive, upper);
    e.h_bound = pi[zero] / (1.0 - pi[zero]);
    e.h_interval = interval_conductance(naive).h;
  });
  rep.cells = cells;
  for (const auto& e : extra) rep.cells.push_back(e.naive);

  for (double theta : g.thetas)
    for (double eps : g.epsilons) {
      const std::string grp = tag({{"theta", theta}, {"epsilon", eps}});
      std::vector<double> logn, scaled, nlin, naive_y;
      std::vector<bool> keep_sw, keep_naive;
      Series s1{"warmup_gap_n2_" + grp, "N", "gap*N^2", {}};
      Series s2{"warmup_naive_gap_" + grp, "N", "relaxation_gap", {}};
      Series s3{"warmup_naive_conductance_" + grp, "N", "h_interval", {}};
      double inf_scaled = std::numeric_limits<double>::infinity();
      bool any_underflow = false;
      const int last_decade_from = (ns.back() + 9) / 10;
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (jobs[i].group != grp) continue;
        const auto& c = cells[i];
        const auto& e = extra[i];
        const int n = jobs[i].m.n;
        const double gn2 = c.gap * n * n;
        inf_scaled = std::min(inf_scaled, gn2);
        any_underflow = any_underflow || c.underflow;
        if (n >= last_decade_from) {
          logn.push_back(std::log(static_cast<double>(n)));
          scaled.push_back(std::log(gn2));
          keep_sw.push_back(!c.underflow && c.gap > 0.0);
        }
        nlin.push_back(n);
        naive_y.push_back(std::log(e.naive.relaxation_gap));
        keep_naive.push_back(!e.naive.underflow && e.naive.relaxation_gap > 0.0);
        s1.points.emplace_back(n, gn2);
        s2.points.emplace_back(n, e.naive.relaxation_gap);
        s3.points.emplace_back(n, e.h_interval);
        const std::string at = "N=" + std::to_string(n);
        rep.audits.push_back(make_audit("decomposition_bound", Severity::Theorem, grp, i, c.gap,
                                        e.decomposition.value, at_least(c.gap, e.decomposition.value),
                                        e.decomposition.detail));
        rep.audits.push_back(make_audit("projection_rate", Severity::Theorem, grp, i, e.worst_projection, 1e-12,
                                        e.worst_projection <= 1e-12, at + " P_H(i,i+1) = (1-eps)/4, i >= 1"));
        rep.audits.push_back(make_audit("pair_restriction", Severity::Theorem, grp, i, e.worst_restriction,
                                        1e-12, e.worst_restriction <= 1e-12,
                                        at + " restriction to {-i,i} is [[1-eps,eps],[eps,1-eps]]"));
        rep.audits.push_back(make_audit("naive_conductance_bound", Severity::Theorem, grp, i, e.h_half,
                                        e.h_bound, e.h_half <= e.h_bound * (1 + kAuditRelTol), at));
      }
      rep.audits.push_back(make_audit("inf_gap_n2_positive", Severity::Assertion, grp, std::nullopt, inf_scaled,
                                      0.0, inf_scaled > 0.0 && !any_underflow));
      FitRecord f = fit_cells("last_decade_log_gap_n2", grp, "log N", "log(gap*N^2)", logn, scaled, keep_sw);
      rep.audits.push_back(make_audit("no_decreasing_trend", Severity::Assertion, grp, std::nullopt,
                                      f.fitted ? f.fit.slope_lo : std::nan(""), -0.1,
                                      f.fitted && f.fit.slope_lo >= -0.1,
                                      "lower 95% slope edge over N >= " + std::to_string(last_decade_from)));
      FitRecord fn = fit_cells("naive_log_gap_vs_n", grp, "N", "log relaxation_gap", nlin, naive_y, keep_naive);
      const double limit = -std::log(theta) + 0.1;
      rep.audits.push_back(make_audit("naive_exponential_decay", Severity::Assertion, grp, std::nullopt,
                                      fn.fitted ? fn.fit.slope_hi : std::nan(""), limit,
                                      fn.fitted && fn.fit.slope_hi <= limit, "upper 95% slope edge"));
      rep.fits.push_back(std::move(f));
      rep.fits.push_back(std::move(fn));
      rep.series.push_back(std::move(s1));
      rep.series.push_back(std::move(s2));
      rep.series.push_back(std::move(s3));
    }
  return rep;
}

BoundReport verify_beg_slow(const ScanGrid& in) {
  ScanGrid g = in;
  g.kind = ModelKind::Beg;
  g.p1s = {g.p1s.empty() ? 0.5 : g.p1s.front()};
  g.p2s = {g.p2s.empty() ? 0.25 : g.p2s.front()};
  g.validate();
  BoundReport rep;
  rep.analysis = "beg-slow";
  const auto ns = sorted_ns(g);
  struct Job {
    ModelSpec m;
    std::string group;
  };
  std::vector<Job> jobs;
  for (double beta : g.betas)
    for (double k : g.ks)
      for (int n : ns)
        jobs.push_back({ModelSpec::beg(n, beta, k, g.p1s[0], g.p2s[0]), tag({{"beta", beta}, {"K", k}})});
  std::vector<CellRecord> cells(jobs.size());
  std::vector<std::optional<Containment>> contained(jobs.size());
  run_jobs(g, jobs.size(), [&](std::size_t i, const SpectralOptions& opt) {
    const ModelSpec& m = jobs[i].m;
    const Spectrum s = spectrum(signed_lumped_chain(m, ChainKind::Naive), opt);
    cells[i] = make_record(rep.analysis, m, ChainKind::Naive, "signed-lumped", s);
    if (full_check(g, m)) contained[i] = containment(s, m, ChainKind::Naive, opt);
  });
  rep.cells = cells;

  for (double beta : g.betas) {
    Series phase{"beg_phase_map_" + tag({{"beta", beta}}), "K", "slope of log gap vs N", {}};
    for (double k : g.ks) {
      const std::string grp = tag({{"beta", beta}, {"K", k}});
      std::vector<double> xs, ys;
      std::vector<bool> keep;
      Series ser{"beg_slow_gap_" + grp, "N", "relaxation_gap", {}};
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (jobs[i].group != grp) continue;
        const auto& c = cells[i];
        xs.push_back(jobs[i].m.n);
        ys.push_back(std::log(c.relaxation_gap));
        keep.push_back(!c.underflow && c.relaxation_gap > 0.0);
        ser.points.emplace_back(jobs[i].m.n, c.relaxation_gap);
        if (c.underflow) {
          rep.audits.push_back(make_audit("underflow", Severity::Info, grp, i, c.relaxation_gap, c.resolution,
                                          false, "excluded from fits"));
        }
        if (contained[i]) push_containment(rep, grp, i, *contained[i]);
      }
      FitRecord f = fit_cells("log_gap_vs_n", grp, "N", "log relaxation_gap", xs, ys, keep);
      if (f.fitted) phase.points.emplace_back(k, f.fit.slope);
      if (slow_cell(g, beta, k)) {
        rep.audits.push_back(make_audit("exponential_decay", Severity::Assertion, grp, std::nullopt,
                                        f.fitted ? f.fit.slope_hi : std::nan(""), -0.05,
                                        f.fitted && f.fit.slope_hi < -0.05, "upper 95% slope edge"));
      }
      const auto z = rate_minimizers(beta, k);
      std::string zs;
      for (double v : z) zs += (zs.empty() ? "" : " ") + short_real(v);
      rep.audits.push_back(make_audit("rate_minimizers", Severity::Info, grp, std::nullopt, z.front(),
                                      f.fitted ? f.fit.slope : std::nan(""), z.front() > 0.0,
                                      "argmin of the rate function: " + zs));
      rep.fits.push_back(std::move(f));
      rep.series.push_back(std::move(ser));
    }
    rep.series.push_back(std::move(phase));
  }
  return rep;
}

BoundReport verify_beg_fast(const ScanGrid& in) {
  ScanGrid g = in;
  g.kind = ModelKind::Beg;
  g.validate();
  BoundReport rep;
  rep.analysis = "beg-fast";
  const auto ns = sorted_ns(g);

  struct Job {
    ModelSpec m;
    std::string group;
  };
  std::vector<Job> jobs;
  std::vector<std::pair<std::string, double>> groups;  // group, p1
  for (double beta : g.betas)
    for (double k : g.ks) {
      std::vector<std::pair<int, bool>> uni;
      for (int n : ns) uni.emplace_back(n, is_unimodal(beg_row_log_q_profile(n, beta, k)));
      const auto n0 = threshold_n(uni);
      const std::string pair_tag = tag({{"beta", beta}, {"K", k}});
      rep.audits.push_back(make_audit("unimodal_profile", Severity::Info, pair_tag, std::nullopt,
                                      n0 ? *n0 : std::nan(""), ns.back(), n0.has_value(),
                                      n0 ? "N0=" + std::to_string(*n0) : "not unimodal at the largest N; cells skipped"));
      if (!n0) continue;
      for (double p1 : g.p1s)
        for (double p2 : g.p2s) {
          const std::string grp = tag({{"beta", beta}, {"K", k}, {"p1", p1}, {"p2", p2}});
          groups.emplace_back(grp, p1);
          for (int n : ns) {
            if (n >= *n0) jobs.push_back({ModelSpec::beg(n, beta, k, p1, p2), grp});
          }
        }
    }

  std::vector<CellRecord> cells(jobs.size());
  std::vector<CellRecord> pbar(jobs.size());
  std::vector<std::optional<Containment>> contained(jobs.size());
  run_jobs(g, jobs.size(), [&](std::size_t i, const SpectralOptions& opt) {
    const ModelSpec& m = jobs[i].m;
    const Spectrum s = spectrum(signed_lumped_chain(m, ChainKind::EquiEnergy), opt);
    cells[i] = make_record(rep.analysis, m, ChainKind::EquiEnergy, "signed-lumped", s);
    pbar[i] = make_record(rep.analysis, m, ChainKind::EquiEnergy, "unsigned-lumped", spectrum(beg_lumped(m), opt));
    if (full_check(g, m)) contained[i] = containment(s, m, ChainKind::EquiEnergy, opt);
  });
  rep.cells = cells;
  rep.cells.insert(rep.cells.end(), pbar.begin(), pbar.end());

  std::map<std::string, double> constants;
  for (const auto& [grp, p1] : groups) {
    std::vector<double> xs, ys;
    std::vector<bool> keep;
    Series ser{"beg_fast_gap_" + grp, "N", "gap", {}};
    Series serp{"beg_fast_pbar_gap_" + grp, "N", "gap", {}};
    double constant = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].group != grp) continue;
      const auto& c = cells[i];
      const ModelSpec& m = jobs[i].m;
      const double n = m.n;
      xs.push_back(std::log(n));
      ys.push_back(std::log(c.gap));
      keep.push_back(!c.underflow && c.gap > 0.0);
      ser.points.emplace_back(n, c.gap);
      serp.points.emplace_back(n, pbar[i].gap);
      constant = std::min(constant, c.gap * std::pow(n, 6.0) / (p1 * p1));
      const double b = beg_decomposition_bound(pbar[i].gap, m.p1, m.p2);
      rep.audits.push_back(make_audit("gap_vs_projection_bound", Severity::Theorem, grp, i, c.gap, b,
                                      at_least(c.gap, b), "Gap(M) >= Gap(Pbar)(p2/2)min((1-p1)/2,(1-p1-p2)/2)"));
      if (contained[i]) push_containment(rep, grp, i, *contained[i]);
    }
    FitRecord f = fit_cells("loglog_gap", grp, "log N", "log gap", xs, ys, keep);
    rep.audits.push_back(make_audit("polynomial_decay", Severity::Assertion, grp, std::nullopt,
                                    f.fitted ? f.fit.slope_lo : std::nan(""), -6.25,
                                    f.fitted && f.fit.slope_lo >= -6.25, "lower 95% slope edge"));
    rep.audits.push_back(make_audit("implied_constant", Severity::Info, grp, std::nullopt, constant, 0.0,
                                    constant > 0.0, "inf over N of Gap N^6 / p1^2"));
    constants[grp] = constant;
    rep.fits.push_back(std::move(f));
    rep.series.push_back(std::move(ser));
    rep.series.push_back(std::move(serp));
  }
  // Constant ratios between p1 values that differ by a factor 2.
  for (double beta : g.betas)
    for (double k : g.ks)
      for (double p1 : g.p1s)
        for (double p2 : g.p2s) {
          const auto a = constants.find(tag({{"beta", beta}, {"K", k}, {"p1", p1}, {"p2", p2}}));
          const auto b = constants.find(tag({{"beta", beta}, {"K", k}, {"p1", p1 / 2}, {"p2", p2}}));
          if (a == constants.end() || b == constants.end()) continue;
          const double ratio = b->second / a->second;
          rep.audits.push_back(make_audit("p1_halving_constant_ratio", Severity::Info, a->first, std::nullopt,
                                          ratio, 4.0, ratio <= 4.0 && ratio >= 0.25));
        }
  return rep;
}

UnimodalityScan unimodality_scan(const ScanGrid& g) {
  require_nonempty(g.ns, "N");
  require_nonempty(g.betas, "beta");
  for (int n : g.ns) {
    if (n < 1) throw ValidationError("scan grid: N must be positive");
  }
  UnimodalityScan out;
  BoundReport& rep = out.report;
  rep.analysis = "unimodality-scan";
  const auto ns = sorted_ns(g);
  for (double beta : g.betas) {
    for (double k : g.ks) {
      const std::string grp = tag({{"beta", beta}, {"K", k}});
      std::vector<std::pair<int, bool>> uni;
      for (int n : ns) {
        const auto q = beg_row_log_q_profile(n, beta, k);
        const bool ok = is_unimodal(q);
        uni.emplace_back(n, ok);
        rep.audits.push_back(make_audit("beg_unimodal", Severity::Info, grp, std::nullopt, n, 0.0, ok,
                                        "N=" + std::to_string(n)));
        Series s{"q_beg_" + tag({{"beta", beta}, {"K", k}, {"N", static_cast<double>(n)}}), "r", "log q", {}};
        for (std::size_t r = 0; r < q.size(); ++r) s.points.emplace_back(r, q[r]);
        rep.series.push_back(std::move(s));
      }
      const auto n0 = threshold_n(uni);
      out.beg_n0.push_back({{beta, k}, n0});
      rep.audits.push_back(make_audit("beg_n0", Severity::Info, grp, std::nullopt, n0 ? *n0 : std::nan(""),
                                      ns.back(), n0.has_value()));
    }
    // Ising profiles: nonincreasing below beta = 1, unimodal from there on.
    const std::string grp = tag({{"beta", beta}});
    const bool monotone = beta < 1.0;
    std::vector<std::pair<int, bool>> shape;
    for (int n : ns) {
      if (n % 2 != 0) continue;
      const auto q = ising_log_q(ModelSpec::ising(n, beta));
      const bool ok = monotone ? is_nonincreasing(q) : is_unimodal(q);
      shape.emplace_back(n, ok);
      Series s{"q_ising_" + tag({{"beta", beta}, {"N", static_cast<double>(n)}}), "i", "log q", {}};
      for (std::size_t j = 0; j < q.size(); ++j) s.points.emplace_back(2.0 * j, q[j]);
      rep.series.push_back(std::move(s));
    }
    if (shape.empty()) continue;
    const auto n0 = threshold_n(shape);
    out.ising_n0.emplace_back(beta, n0);
    rep.audits.push_back(make_audit(monotone ? "ising_monotone_n0" : "ising_unimodal_n0", Severity::Assertion,
                                    grp, std::nullopt, n0 ? *n0 : std::nan(""), shape.back().first,
                                    n0.has_value(), n0 ? "N0=" + std::to_string(*n0) : "fails at the largest N"));
  }
  return out;
}

// ---- output --------------------------------------------------------------

void write_cells_csv(std::ostream& os, const BoundReport& r) {
  os << "# eqmix.cells/1\n";
  os << "analysis,model,chain,surrogate,n,beta,k,theta,p1,p2,epsilon,a,states,gap,relaxation_gap,"
        "one_plus_min,digits,resolution,underflow\n";
  for (const auto& c : r.cells) {
    const ModelSpec& m = c.model;
    os << c.analysis << ',' << to_string(m.kind) << ',' << to_string(c.chain) << ',' << c.surrogate << ','
       << m.n << ',' << format_real(m.beta) << ',' << format_real(m.coupling) << ',' << format_real(m.theta)
       << ',' << format_real(m.p1) << ',' << format_real(m.p2) << ',' << format_real(m.epsilon) << ','
       << (m.a ? format_real(*m.a) : std::string()) << ',' << c.states << ',' << format_real(c.gap) << ','
       << format_real(c.relaxation_gap) << ',' << format_real(c.one_plus_min) << ',' << c.digits << ','
       << format_real(c.resolution) << ',' << (c.underflow ? 1 : 0) << '\n';
  }
}

namespace {

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

}  // namespace

void write_audits_csv(std::ostream& os, const BoundReport& r) {
  os << "# eqmix.audits/1\n";
  os << "analysis,name,severity,group,cell,lhs,rhs,hypotheses_ok,pass,detail\n";
  for (const auto& a : r.audits) {
    os << r.analysis << ',' << a.name << ',' << to_string(a.severity) << ',' << csv_quote(a.group) << ','
       << (a.cell ? std::to_string(*a.cell) : std::string()) << ',' << format_real(a.lhs) << ','
       << format_real(a.rhs) << ',' << (a.hypotheses_ok ? 1 : 0) << ',' << (a.pass ? 1 : 0) << ','
       << csv_quote(a.detail) << '\n';
  }
}

void write_fits_csv(std::ostream& os, const BoundReport& r) {
  os << "# eqmix.fits/1\n";
  os << "analysis,name,group,x,y,fitted,points,excluded,slope,slope_lo,slope_hi,slope_stderr,intercept\n";
  for (const auto& f : r.fits) {
    os << r.analysis << ',' << f.name << ',' << csv_quote(f.group) << ',' << csv_quote(f.x) << ','
       << csv_quote(f.y) << ',' << (f.fitted ? 1 : 0) << ',' << f.fit.points << ',' << f.excluded << ','
       << format_real(f.fit.slope) << ',' << format_real(f.fit.slope_lo) << ',' << format_real(f.fit.slope_hi)
       << ',' << format_real(f.fit.slope_stderr) << ',' << format_real(f.fit.intercept) << '\n';
  }
}

void write_series(std::ostream& os, const Series& s) {
  os << "# " << s.name << '\n' << "# " << s.x << ' ' << s.y << '\n';
  for (const auto& [x, y] : s.points) os << format_real(x) << ' ' << format_real(y) << '\n';
}

std::string series_file_name(const Series& s) {
  std::string out;
  for (char ch : s.name) {
    const bool plain = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') ||
                       ch == '.' || ch == '-' || ch == '_';
    out += plain ? ch : (ch == '=' ? '-' : '_');
  }
  return out + ".dat";
}

std::string report_json(const BoundReport& r) {
  using nlohmann::ordered_json;
  auto num = [](double v) -> ordered_json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  ordered_json j;
  j["schema"] = "eqmix.boundreport/1";
  j["analysis"] = r.analysis;
  j["defect"] = r.has_defect();
  j["failed"] = r.failed();
  ordered_json cells = ordered_json::array();
  for (const auto& c : r.cells) {
    ordered_json o;
    o["model"] = to_string(c.model.kind);
    o["chain"] = to_string(c.chain);
    o["surrogate"] = c.surrogate;
    o["n"] = c.model.n;
    o["beta"] = c.model.beta;
    o["k"] = c.model.coupling;
    o["theta"] = c.model.theta;
    o["p1"] = c.model.p1;
    o["p2"] = c.model.p2;
    o["epsilon"] = c.model.epsilon;
    o["a"] = c.model.a ? num(*c.model.a) : ordered_json(nullptr);
    o["states"] = c.states;
    o["gap"] = num(c.gap);
    o["relaxation_gap"] = num(c.relaxation_gap);
    o["one_plus_min"] = num(c.one_plus_min);
    o["digits"] = c.digits;
    o["resolution"] = num(c.resolution);
    o["underflow"] = c.underflow;
    cells.push_back(std::move(o));
  }
  j["cells"] = std::move(cells);
  ordered_json audits = ordered_json::array();
  for (const auto& a : r.audits) {
    ordered_json o;
    o["name"] = a.name;
    o["severity"] = to_string(a.severity);
    o["group"] = a.group;
    o["cell"] = a.cell ? ordered_json(*a.cell) : ordered_json(nullptr);
    o["lhs"] = num(a.lhs);
    o["rhs"] = num(a.rhs);
    o["hypotheses_ok"] = a.hypotheses_ok;
    o["pass"] = a.pass;
    o["detail"] = a.detail;
    audits.push_back(std::move(o));
  }
  j["audits"] = std::move(audits);
  ordered_json fits = ordered_json::array();
  for (const auto& f : r.fits) {
    ordered_json o;
    o["name"] = f.name;
    o["group"] = f.group;
    o["x"] = f.x;
    o["y"] = f.y;
    o["fitted"] = f.fitted;
    o["points"] = f.fit.points;
    o["excluded"] = f.excluded;
    o["slope"] = f.fitted ? num(f.fit.slope) : ordered_json(nullptr);
    o["slope_lo"] = f.fitted ? num(f.fit.slope_lo) : ordered_json(nullptr);
    o["slope_hi"] = f.fitted ? num(f.fit.slope_hi) : ordered_json(nullptr);
    o["intercept"] = f.fitted ? num(f.fit.intercept) : ordered_json(nullptr);
    fits.push_back(std::move(o));
  }
  j["fits"] = std::move(fits);
  ordered_json series = ordered_json::array();
  for (const auto& s : r.series) series.push_back({{"name", s.name}, {"file", series_file_name(s)}});
  j["series"] = std::move(series);
  return j.dump(2);
}

}  // namespace eqmix
