#include "eqmix/spectral.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include <boost/multiprecision/mpfr.hpp>

#include "eqmix/eigen.hpp"
#include "eqmix/numeric.hpp"

namespace eqmix {

namespace {

namespace bmp = boost::multiprecision;
template <unsigned D>
using mp_real = bmp::number<bmp::mpfr_float_backend<D, bmp::allocate_stack>, bmp::et_off>;

// Order of the states along a path graph, if the transition graph is one.
std::optional<std::vector<std::size_t>> path_order(const FiniteKernel& p) {
  const std::size_t n = p.size();
  std::vector<std::vector<std::size_t>> nb(n);
  std::size_t edges = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& t : p.row(i)) {
      if (t.to == i || t.prob == 0.0) continue;
      if (nb[i].size() >= 2) return std::nullopt;
      nb[i].push_back(t.to);
      if (t.to > i) ++edges;
    }
  }
  if (n <= 1) return std::vector<std::size_t>(n, 0);
  if (edges != n - 1) return std::nullopt;
  std::size_t start = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (nb[i].size() == 1) {
      start = i;
      break;
    }
  }
  if (start == n) return std::nullopt;
  std::vector<std::size_t> order{start};
  std::vector<char> seen(n, 0);
  seen[start] = 1;
  while (order.size() < n) {
    const std::size_t cur = order.back();
    std::size_t next = n;
    for (std::size_t j : nb[cur]) {
      if (!seen[j]) next = j;
    }
    if (next == n) return std::nullopt;
    seen[next] = 1;
    order.push_back(next);
  }
  return order;
}

struct RawSpectrum {
  std::vector<double> relaxation;  // ascending
  double one_plus_min = 2.0;
};

// Laplacian entries of I - D^1/2 P D^-1/2 in scalar type T. The diagonal is
// rebuilt from the symmetrised off-diagonals so that D^1/2 1 is an exact
// null vector.
template <class T>
RawSpectrum solve(const FiniteKernel& p, const std::optional<std::vector<std::size_t>>& order,
                  Exec exec) {
  using std::exp;
  const std::size_t n = p.size();
  const auto& lw = p.log_weights();
  std::vector<T> eig;
  if (order) {
    const auto& ord = *order;
    std::vector<std::size_t> pos(n);
    for (std::size_t k = 0; k < n; ++k) pos[ord[k]] = k;
    Tridiagonal<T> t;
    t.diag.assign(n, T(0));
    t.off.assign(n, T(0));
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const std::size_t i = ord[k];
      const std::size_t j = ord[k + 1];
      const double pij = p.prob(i, j);
      const double pji = p.prob(j, i);
      const T a = exp(T((std::log(pij) + std::log(pji)) / 2.0));
      t.off[k] = -a;
      t.diag[k] += a * exp((T(lw[j]) - T(lw[i])) / 2);
      t.diag[k + 1] += a * exp((T(lw[i]) - T(lw[j])) / 2);
    }
    tridiagonal_ql(t);
    eig = std::move(t.diag);
  } else {
    DenseMatrix<T> a(n, n, T(0));
    for_each_index(exec, n, [&](std::size_t i) {
      T diag(0);
      for (const auto& tr : p.row(i)) {
        const std::size_t j = tr.to;
        if (j == i || tr.prob == 0.0) continue;
        const double pji = p.prob(j, i);
        const T s = exp(T((std::log(tr.prob) + std::log(pji)) / 2.0));
        a(i, j) = -s;
        diag += s * exp((T(lw[j]) - T(lw[i])) / 2);
      }
      a(i, i) = diag;
    });
    Tridiagonal<T> t = householder_tridiagonalize(a, nullptr, exec);
    tridiagonal_ql(t);
    eig = std::move(t.diag);
  }
  std::sort(eig.begin(), eig.end());
  RawSpectrum out;
  out.relaxation.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.relaxation[k] = static_cast<double>(eig[k]);
  if (n > 0) out.one_plus_min = std::max(0.0, static_cast<double>(T(2) - eig.back()));
  // The null vector is exact; pin it.
  if (n > 0) out.relaxation[0] = std::max(0.0, out.relaxation[0]);
  return out;
}

Spectrum assemble(const RawSpectrum& raw, std::size_t n, int digits, double resolution) {
  Spectrum s;
  s.dimension = n;
  s.digits = digits;
  s.resolution = resolution;
  s.relaxation = raw.relaxation;
  s.one_plus_min = raw.one_plus_min;
  s.eigenvalues.resize(n);
  for (std::size_t k = 0; k < n; ++k) s.eigenvalues[k] = 1.0 - raw.relaxation[k];
  return s;
}

double mp_resolution(int digits) { return std::max(1e-300, std::pow(10.0, -(digits - 10))); }

Spectrum solve_multi(const FiniteKernel& p, const std::optional<std::vector<std::size_t>>& order,
                     int digits, Exec exec) {
  RawSpectrum raw;
  switch (digits) {
    case 50: raw = solve<mp_real<50>>(p, order, exec); break;
    case 100: raw = solve<mp_real<100>>(p, order, exec); break;
    case 200: raw = solve<mp_real<200>>(p, order, exec); break;
    case 400: raw = solve<mp_real<400>>(p, order, exec); break;
    default: throw ValidationError("precision digits must be 50, 100, 200 or 400");
  }
  return assemble(raw, p.size(), digits, mp_resolution(digits));
}

}  // namespace

double Spectrum::lambda1() const { return dimension > 1 ? eigenvalues[1] : 1.0; }
double Spectrum::lambda_min() const { return eigenvalues.empty() ? 1.0 : eigenvalues.back(); }
double Spectrum::relaxation_gap() const { return dimension > 1 ? relaxation[1] : 1.0; }

double Spectrum::gap() const {
  if (dimension <= 1) return 1.0;
  return std::min(relaxation[1], one_plus_min);
}

double gap(const Spectrum& s) { return s.gap(); }

Spectrum spectrum(const FiniteKernel& p, const SpectralOptions& opt) {
  const std::size_t n = p.size();
  if (n == 0) throw ValidationError("spectrum of an empty kernel");
  for (double w : p.log_weights()) {
    if (!std::isfinite(w)) throw KernelError("spectrum: stationary weights must be positive");
  }
  const double db = p.detailed_balance_error();
  if (db > opt.balance_tol) {
    throw KernelError("spectrum: kernel is not reversible (residual " + format_real(db) + ")");
  }
  const auto order = path_order(p);
  if (!order && n > opt.dense_limit) {
    throw CapacityError("spectrum: dimension " + std::to_string(n) + " exceeds the dense limit " +
                        std::to_string(opt.dense_limit));
  }
  if (opt.precision == Precision::Multi) return solve_multi(p, order, opt.digits, opt.exec);
  Spectrum s = assemble(solve<double>(p, order, opt.exec), n, 16, kDoubleResolution);
  if (opt.precision == Precision::Double || !s.below_resolution()) return s;
  for (int digits : {50, 100, 200, 400}) {
    s = solve_multi(p, order, digits, opt.exec);
    if (!s.below_resolution()) break;
  }
  return s;
}

Spectrum spectrum(const BirthDeathChain& c, const SpectralOptions& opt) {
  return spectrum(c.to_kernel(), opt);
}

std::vector<double> symmetric_eigenvalues(DenseMatrix<double> a, Exec exec) {
  Tridiagonal<double> t = householder_tridiagonalize(a, nullptr, exec);
  tridiagonal_ql(t);
  std::sort(t.diag.begin(), t.diag.end(), std::greater<>());
  return t.diag;
}

// ---- conductance ---------------------------------------------------------

namespace {

struct Flows {
  std::vector<double> pi;
  DenseMatrix<double> f;  // pi(x) P(x,y)
};

Flows flows_of(const FiniteKernel& p) {
  Flows fl;
  fl.pi = p.stationary();
  fl.f = DenseMatrix<double>(p.size(), p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (const auto& t : p.row(i)) {
      if (t.to != i) fl.f(i, t.to) = fl.pi[i] * t.prob;
    }
  }
  return fl;
}

constexpr double kHalfSlack = 1e-12;

struct ChunkBest {
  double h = std::numeric_limits<double>::infinity();
  std::uint64_t mask = 0;
};

}  // namespace

double set_conductance(const FiniteKernel& p, const std::vector<std::size_t>& set) {
  const Flows fl = flows_of(p);
  std::vector<char> in(p.size(), 0);
  for (std::size_t i : set) in.at(i) = 1;
  double q = 0.0;
  double pa = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!in[i]) continue;
    pa += fl.pi[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (!in[j]) q += fl.f(i, j);
    }
  }
  if (pa == 0.0) throw ValidationError("set_conductance: set has zero mass");
  return q / pa;
}

Conductance conductance_exact(const FiniteKernel& p, Exec exec) {
  const std::size_t n = p.size();
  if (n > kMaxConductanceStates) {
    throw CapacityError("conductance_exact: more than " + std::to_string(kMaxConductanceStates) +
                        " states");
  }
  if (n < 2) throw ValidationError("conductance_exact: needs at least two states");
  const Flows fl = flows_of(p);
  // The top bits select a chunk; each chunk walks its low bits in Gray
  // order, restarting the running sums from scratch.
  const std::size_t top = n > 12 ? 6 : 0;
  const std::size_t low = n - top;
  const std::size_t chunks = std::size_t{1} << top;
  std::vector<ChunkBest> best(chunks);
  for_each_index(exec, chunks, [&](std::size_t c) {
    std::uint64_t mask = static_cast<std::uint64_t>(c) << low;
    double pa = 0.0;
    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!((mask >> i) & 1U)) continue;
      pa += fl.pi[i];
      for (std::size_t j = 0; j < n; ++j) {
        if (!((mask >> j) & 1U)) q += fl.f(i, j);
      }
    }
    ChunkBest& b = best[c];
    auto consider = [&] {
      if (mask != 0 && pa > 0.0 && pa <= 0.5 + kHalfSlack) {
        const double h = std::max(0.0, q) / pa;
        if (h < b.h) {
          b.h = h;
          b.mask = mask;
        }
      }
    };
    consider();
    const std::uint64_t steps = std::uint64_t{1} << low;
    for (std::uint64_t g = 1; g < steps; ++g) {
      const std::size_t v = static_cast<std::size_t>(std::countr_zero(g));
      const bool entering = !((mask >> v) & 1U);
      double out = 0.0;
      double into = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == v) continue;
        if ((mask >> j) & 1U) {
          into += fl.f(j, v);
        } else {
          out += fl.f(v, j);
        }
      }
      if (entering) {
        q += out - into;
        pa += fl.pi[v];
        mask |= std::uint64_t{1} << v;
      } else {
        q += into - out;
        pa -= fl.pi[v];
        mask &= ~(std::uint64_t{1} << v);
      }
      consider();
    }
  });
  ChunkBest overall;
  for (const auto& b : best) {
    if (b.h < overall.h) overall = b;
  }
  Conductance c;
  for (std::size_t i = 0; i < n; ++i) {
    if ((overall.mask >> i) & 1U) c.argmin.push_back(i);
  }
  c.h = set_conductance(p, c.argmin);
  return c;
}

Conductance interval_conductance(const FiniteKernel& p) {
  const std::size_t n = p.size();
  if (n < 2) throw ValidationError("interval_conductance: needs at least two states");
  const auto pi = p.stationary();
  Conductance best;
  best.h = std::numeric_limits<double>::infinity();
  auto scan = [&](bool forward) {
    double pa = 0.0;
    double q = 0.0;
    std::vector<char> in(n, 0);
    for (std::size_t step = 0; step + 1 < n; ++step) {
      const std::size_t v = forward ? step : n - 1 - step;
      for (const auto& t : p.row(v)) {
        if (t.to == v) continue;
        if (in[t.to]) {
          q -= pi[t.to] * p.prob(t.to, v);
        } else {
          q += pi[v] * t.prob;
        }
      }
      in[v] = 1;
      pa += pi[v];
      if (pa > 0.5 + kHalfSlack) break;
      const double h = std::max(0.0, q) / pa;
      if (h < best.h) {
        best.h = h;
        best.argmin.clear();
        for (std::size_t i = 0; i < n; ++i) {
          if (in[i]) best.argmin.push_back(i);
        }
      }
    }
  };
  scan(true);
  scan(false);
  if (best.argmin.empty()) throw ValidationError("interval_conductance: no admissible interval");
  return best;
}

CheegerInterval cheeger_interval(double h) {
  if (!(h >= 0.0 && h <= 1.0)) throw ValidationError("cheeger_interval: h must lie in [0,1]");
  return {1.0 - 2.0 * h, 1.0 - h * h / 2.0};
}

// ---- bounds --------------------------------------------------------------

BoundRecord decomposition_bound(const FiniteKernel& p, const Partition& parts,
                                const SpectralOptions& opt) {
  parts.validate(p.size());
  const double gh = spectrum(lumped_projection(p, parts), opt).gap();
  double worst = 1.0;
  std::size_t worst_block = 0;
  const auto members = parts.members();
  for (std::size_t b = 0; b < members.size(); ++b) {
    if (members[b].size() < 2) continue;
    const double g = spectrum(restriction(p, members[b]), opt).gap();
    if (g < worst) {
      worst = g;
      worst_block = b;
    }
  }
  BoundRecord r;
  r.name = "decomposition";
  r.value = 0.5 * gh * worst;
  r.detail = "gap_projection=" + format_real(gh) + " min_restriction_gap=" + format_real(worst) +
             " at_block=" + std::to_string(worst_block);
  return r;
}

BoundRecord bd_path_bound_checked(const BirthDeathChain& c, double a, double q, double b,
                                  std::size_t k) {
  c.validate(1e-10);
  BoundRecord r;
  r.name = "bd_path";
  const std::size_t n = c.size();
  if (!(a > 0.0 && q > 0.0 && b > 0.0)) throw ValidationError("bd_path_bound: A, q, B must be positive");
  if (k >= n) throw ValidationError("bd_path_bound: k outside the state range");
  const double nn = static_cast<double>(n);
  r.value = 1.0 - (a / b) * std::pow(nn, -(q + 2.0));
  const double floor_rate = a * std::pow(nn, -q);
  auto fail = [&](const std::string& why) {
    if (r.hypotheses_ok) r.detail = why;
    r.hypotheses_ok = false;
  };
  for (std::size_t i = 0; i < n && r.hypotheses_ok; ++i) {
    if (i + 1 < n && c.up[i] < floor_rate) {
      fail("rate P(" + std::to_string(i) + "," + std::to_string(i + 1) + ")=" + format_real(c.up[i]) +
           " below A n^-q=" + format_real(floor_rate));
    }
    if (i > 0 && c.down[i] < floor_rate) {
      fail("rate P(" + std::to_string(i) + "," + std::to_string(i - 1) + ")=" +
           format_real(c.down[i]) + " below A n^-q=" + format_real(floor_rate));
    }
  }
  const double lb = std::log(b);
  const auto& w = c.log_weights;
  // p(i) <= B p(j) for i <= j <= k: prefix maxima.
  double run = -std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t j = 0; j <= k && r.hypotheses_ok; ++j) {
    if (w[j] > run) {
      run = w[j];
      arg = j;
    }
    if (run > lb + w[j] + 1e-12) {
      fail("unimodality fails for pair (" + std::to_string(arg) + "," + std::to_string(j) +
           ") left of k=" + std::to_string(k));
    }
  }
  // p(j) <= B p(i) for k <= i <= j: suffix maxima.
  run = -std::numeric_limits<double>::infinity();
  for (std::size_t i = n; i-- > k && r.hypotheses_ok;) {
    if (w[i] > run) {
      run = w[i];
      arg = i;
    }
    if (run > lb + w[i] + 1e-12) {
      fail("unimodality fails for pair (" + std::to_string(i) + "," + std::to_string(arg) +
           ") right of k=" + std::to_string(k));
    }
  }
  return r;
}

BoundRecord bd_path_bound(const BirthDeathChain& c, double a, double q, double b, std::size_t k) {
  BoundRecord r = bd_path_bound_checked(c, a, q, b, k);
  if (!r.hypotheses_ok) throw HypothesisError("bd_path_bound: " + r.detail);
  return r;
}

BoundRecord gershgorin_bound(const FiniteKernel& p) {
  double mn = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) mn = std::min(mn, p.diagonal(i));
  return {"gershgorin", -1.0 + 2.0 * mn, true, ""};
}

BoundRecord gershgorin_bound(const BirthDeathChain& c) {
  double mx = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) mx = std::max(mx, c.up[i] + c.down[i]);
  return {"gershgorin_bd", 1.0 - 2.0 * mx, true, ""};
}

double lazy_mixture_bound(double gap_of_p, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("lazy mixture: epsilon must lie in [0,1]");
  return (1.0 - epsilon) * gap_of_p;
}

FiniteKernel lazy_mixture(const FiniteKernel& p, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("lazy mixture: epsilon must lie in [0,1]");
  std::vector<std::vector<Transition>> rows(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    double off = 0.0;
    for (const auto& t : p.row(i)) {
      if (t.to == i) continue;
      rows[i].push_back({t.to, (1.0 - epsilon) * t.prob});
      off += (1.0 - epsilon) * t.prob;
    }
    rows[i].push_back({i, 1.0 - off});
  }
  return FiniteKernel(p.labels(), p.log_weights(), std::move(rows));
}

AvarResult avar_spectral(const FiniteKernel& p, const std::vector<double>& f) {
  const std::size_t n = p.size();
  if (f.size() != n) throw ValidationError("avar_spectral: observable length differs from state count");
  const auto pi = p.stationary();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += pi[i] * f[i];
  AvarResult r;
  for (std::size_t i = 0; i < n; ++i) r.variance += pi[i] * (f[i] - mean) * (f[i] - mean);
  double scale = 0.0;
  for (double v : f) scale = std::max(scale, std::abs(v));
  if (r.variance <= 1e-28 * std::max(1.0, scale * scale)) {
    r.degenerate = true;
    r.variance = 0.0;
    return r;
  }
  const auto& lw = p.log_weights();
  DenseMatrix<double> a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double diag = 0.0;
    for (const auto& t : p.row(i)) {
      if (t.to == i || t.prob == 0.0) continue;
      const double s = std::exp((std::log(t.prob) + std::log(p.prob(t.to, i))) / 2.0);
      a(i, t.to) = -s;
      diag += s * std::exp((lw[t.to] - lw[i]) / 2.0);
    }
    a(i, i) = diag;
  }
  DenseMatrix<double> q;
  Tridiagonal<double> t = householder_tridiagonalize(a, &q, Exec::Serial);
  tridiagonal_ql(t, &q);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return t.diag[x] < t.diag[y]; });
  const double mu1 = n > 1 ? t.diag[idx[1]] : 1.0;
  if (mu1 < kDoubleResolution) {
    throw KernelError("avar_spectral: eigenvalue 1 is not simple (reducible chain)");
  }
  for (std::size_t kk = 1; kk < n; ++kk) {
    const std::size_t k = idx[kk];
    double ak = 0.0;
    for (std::size_t x = 0; x < n; ++x) ak += (f[x] - mean) * std::sqrt(pi[x]) * q(x, k);
    const double mu = t.diag[k];
    r.avar += ak * ak * (2.0 - mu) / mu;
  }
  r.bound = 2.0 * r.variance / mu1;
  return r;
}

double tv_bound(const Spectrum& s, double px, std::size_t k) {
  if (!(px > 0.0)) throw ValidationError("tv_bound: state has zero stationary mass");
  const double rho = std::max(0.0, 1.0 - s.gap());
  return std::sqrt((1.0 - px) / (4.0 * px)) * std::pow(rho, static_cast<double>(k));
}

double tv_bound(const FiniteKernel& p, std::size_t x, std::size_t k) {
  if (x >= p.size()) throw ValidationError("tv_bound: state out of range");
  return tv_bound(spectrum(p), p.stationary()[x], k);
}

}  // namespace eqmix
