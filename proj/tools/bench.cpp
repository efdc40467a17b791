// Serial reference versus OpenMP kernels: wall time and agreement.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include <CLI11.hpp>

#include "eqmix/eigen.hpp"
#include "eqmix/kernel.hpp"
#include "eqmix/simulate.hpp"
#include "eqmix/spectral.hpp"
#include "eqmix/verify.hpp"

using namespace eqmix;

namespace {

double best_ms(int reps, const std::function<void()>& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void row(const char* name, double serial, double parallel, double diff) {
  std::printf("%-28s %12.2f %12.2f %8.2fx %12.3g\n", name, serial, parallel, serial / parallel, diff);
}

std::vector<double> eigenvalues(DenseMatrix<double> a, Exec exec) {
  Tridiagonal<double> t = householder_tridiagonalize(a, nullptr, exec);
  tridiagonal_ql(t);
  std::sort(t.diag.begin(), t.diag.end());
  return t.diag;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eqmix-bench: serial reference versus parallel kernels"};
  int size = 800;
  int ising_n = 12;
  int reps = 3;
  int threads = 0;
  app.add_option("--size", size, "dense eigensolve dimension");
  app.add_option("--ising-n", ising_n, "Ising size for the full-space build");
  app.add_option("--reps", reps, "repetitions (best time is reported)");
  app.add_option("--threads", threads, "OpenMP threads (0: default)");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) omp_set_num_threads(threads);

  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-28s %12s %12s %9s %12s\n", "kernel", "serial ms", "parallel ms", "speedup", "max diff");

  // Dense symmetric eigensolve.
  Rng rng(12345);
  DenseMatrix<double> a(size, size);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng.uniform() - 0.5;
  std::vector<double> es, ep;
  const double t_es = best_ms(reps, [&] { es = eigenvalues(a, Exec::Serial); });
  const double t_ep = best_ms(reps, [&] { ep = eigenvalues(a, Exec::Parallel); });
  double d = 0.0;
  for (std::size_t i = 0; i < es.size(); ++i) d = std::max(d, std::abs(es[i] - ep[i]));
  row("householder + QL", t_es, t_ep, d);

  // Full-space Metropolis construction.
  const ModelSpec m = ModelSpec::ising(ising_n, 1.0);
  FiniteKernel ks, kp;
  const double t_ks = best_ms(reps, [&] { ks = metropolis_chain(m, ChainKind::EquiEnergy, Exec::Serial); });
  const double t_kp = best_ms(reps, [&] { kp = metropolis_chain(m, ChainKind::EquiEnergy, Exec::Parallel); });
  d = ks.nonzeros() == kp.nonzeros() ? 0.0 : 1.0;
  for (std::size_t i = 0; i < ks.size() && d == 0.0; ++i) {
    const auto rs = ks.row(i);
    const auto rp = kp.row(i);
    for (std::size_t j = 0; j < rs.size(); ++j) d = std::max(d, std::abs(rs[j].prob - rp[j].prob));
  }
  row("full-space Metropolis", t_ks, t_kp, d);

  // Exhaustive conductance on 21 states.
  const FiniteKernel small = signed_lumped_chain(ModelSpec::ising(20, 1.5), ChainKind::Naive);
  Conductance cs, cp;
  const double t_cs = best_ms(reps, [&] { cs = conductance_exact(small, Exec::Serial); });
  const double t_cp = best_ms(reps, [&] { cp = conductance_exact(small, Exec::Parallel); });
  row("exact conductance (21)", t_cs, t_cp, std::abs(cs.h - cp.h));

  // Grid of independent cells.
  ScanGrid g;
  g.kind = ModelKind::Ising;
  for (int n = 10; n <= 120; n += 2) g.ns.push_back(n);
  g.betas = {0.5, 2.0};
  BoundReport rs, rp;
  const double t_gs = best_ms(reps, [&] {
    g.exec = Exec::Serial;
    rs = gap_scan(g);
  });
  const double t_gp = best_ms(reps, [&] {
    g.exec = Exec::Parallel;
    rp = gap_scan(g);
  });
  d = 0.0;
  for (std::size_t i = 0; i < rs.cells.size(); ++i) d = std::max(d, std::abs(rs.cells[i].gap - rp.cells[i].gap));
  row("gap scan (112 cells)", t_gs, t_gp, d);
  return 0;
}
