#pragma once

// Spectral and geometric analysis of reversible kernels.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "eqmix/kernel.hpp"
#include "eqmix/parallel.hpp"

namespace eqmix {

// Gaps smaller than this are "below resolution" in double precision.
inline constexpr double kDoubleResolution = 1e-12;

struct Spectrum {
  std::vector<double> eigenvalues;  // descending, eigenvalues[0] ~ 1
  // 1 - lambda_k in ascending order, computed directly from the Laplacian
  // so that tiny values keep their relative accuracy.
  std::vector<double> relaxation;
  double one_plus_min = 2.0;  // 1 + lambda_min
  double resolution = kDoubleResolution;
  int digits = 16;  // decimal digits of the arithmetic used
  std::size_t dimension = 0;

  double lambda1() const;
  double lambda_min() const;
  double relaxation_gap() const;  // 1 - lambda_1
  // 1 - max(lambda_1, |lambda_min|); 1 for a single state.
  double gap() const;
  bool below_resolution() const { return dimension > 1 && gap() < resolution; }
};

enum class Precision { Double, Multi, Auto };

struct SpectralOptions {
  Precision precision = Precision::Auto;
  // Decimal digits for Multi (50, 100, 200 or 400); Auto escalates through them.
  int digits = 50;
  Exec exec = Exec::Parallel;
  std::size_t dense_limit = 6000;
  double balance_tol = 1e-8;
};

Spectrum spectrum(const FiniteKernel& p, const SpectralOptions& opt = {});
Spectrum spectrum(const BirthDeathChain& c, const SpectralOptions& opt = {});
// Eigenvalues of a dense symmetric matrix, descending (double precision).
std::vector<double> symmetric_eigenvalues(DenseMatrix<double> a, Exec exec = Exec::Parallel);

double gap(const Spectrum& s);

// Structured result of a bound evaluation.
struct BoundRecord {
  std::string name;
  double value = 0.0;
  bool hypotheses_ok = true;
  std::string detail;
};

struct Conductance {
  double h = 0.0;
  std::vector<std::size_t> argmin;  // a minimising set, p(A) <= 1/2
};

inline constexpr std::size_t kMaxConductanceStates = 24;

// Exhaustive minimum of Q(A, A^c) / p(A) over sets with p(A) <= 1/2.
Conductance conductance_exact(const FiniteKernel& p, Exec exec = Exec::Parallel);
// The same minimum restricted to prefixes and suffixes of the state order:
// an upper bound on h, exact for nothing in particular.
Conductance interval_conductance(const FiniteKernel& p);
// Q(A, A^c) / p(A) for one set.
double set_conductance(const FiniteKernel& p, const std::vector<std::size_t>& set);

struct CheegerInterval {
  double lower = 0.0;
  double upper = 0.0;
};
CheegerInterval cheeger_interval(double h);

// 1/2 Gap(P_H) min_i Gap(P_{A_i}).
BoundRecord decomposition_bound(const FiniteKernel& p, const Partition& parts,
                                const SpectralOptions& opt = {});

// 1 - (A/B) n^-(q+2) on lambda_1 after checking the rate and B-unimodality
// hypotheses around k (0-based). Throws HypothesisError naming the failure.
BoundRecord bd_path_bound(const BirthDeathChain& c, double a, double q, double b, std::size_t k);
// Same checks without throwing; hypotheses_ok reports the outcome.
BoundRecord bd_path_bound_checked(const BirthDeathChain& c, double a, double q, double b,
                                  std::size_t k);

// -1 + 2 min_i P(i,i), a lower bound on lambda_min.
BoundRecord gershgorin_bound(const FiniteKernel& p);
// 1 - 2 max_i (up + down) for birth-death chains.
BoundRecord gershgorin_bound(const BirthDeathChain& c);

// (1 - eps) Gap(P), a lower bound on Gap((1-eps)P + eps I).
double lazy_mixture_bound(double gap_of_p, double epsilon);
FiniteKernel lazy_mixture(const FiniteKernel& p, double epsilon);

struct AvarResult {
  double avar = 0.0;
  double variance = 0.0;  // Var_pi(f)
  double bound = 0.0;     // 2 Var / (1 - lambda_1)
  bool degenerate = false;  // f constant
};
// Spectral asymptotic variance sum_k a_k^2 (1 + l_k) / (1 - l_k).
AvarResult avar_spectral(const FiniteKernel& p, const std::vector<double>& f);

// sqrt((1 - p(x)) / (4 p(x))) max(lambda_1, |lambda_min|)^k.
double tv_bound(const FiniteKernel& p, std::size_t x, std::size_t k);
double tv_bound(const Spectrum& s, double px, std::size_t k);

}  // namespace eqmix
