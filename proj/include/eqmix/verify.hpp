#pragma once

// Parameter scans that compare exact gaps with the fast- and slow-mixing
// statements for the three models, plus the profile scans behind the BEG
// unimodality condition.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eqmix/kernel.hpp"
#include "eqmix/model.hpp"
#include "eqmix/numeric.hpp"
#include "eqmix/spectral.hpp"

namespace eqmix {

struct ScanGrid {
  ModelKind kind = ModelKind::Ising;
  std::vector<int> ns;
  std::vector<double> betas{1.0};
  std::vector<double> ks{1.0};
  std::vector<double> thetas{2.0};
  std::vector<double> p1s{0.5};
  std::vector<double> p2s{0.25};
  std::vector<double> epsilons{0.3};
  std::vector<double> as;  // scaled-parameter runs (Ising fast)
  std::vector<ChainKind> chains{ChainKind::EquiEnergy};
  SpectralOptions spectral;
  // (beta, K) pairs whose naive BEG chain must show exponential decay.
  std::vector<std::pair<double, double>> slow_cells{{3.0, 5.0}};
  // Cells with at most this many full-space states are also solved on the
  // full space and compared with the lumped chain.
  std::size_t full_check_states = 800;
  Exec exec = Exec::Parallel;

  // Throws ValidationError when a list is empty or some cell is invalid.
  void validate() const;
  // Every model cell of the grid, in scan order.
  std::vector<ModelSpec> cells() const;
};

struct CellRecord {
  std::string analysis;
  ModelSpec model;
  ChainKind chain = ChainKind::EquiEnergy;
  std::string surrogate;  // "signed-lumped", "full", "unsigned-lumped"
  std::size_t states = 0;
  double gap = 0.0;             // 1 - max(lambda_1, |lambda_min|)
  double relaxation_gap = 0.0;  // 1 - lambda_1
  double one_plus_min = 0.0;
  int digits = 16;
  double resolution = kDoubleResolution;
  bool underflow = false;  // relaxation gap below the arithmetic's resolution
};

enum class Severity { Theorem, Assertion, Info };
std::string to_string(Severity s);

struct Audit {
  std::string name;
  Severity severity = Severity::Info;
  std::string group;  // parameter tag, e.g. "beta=2,p1=0.5,p2=0.25"
  std::optional<std::size_t> cell;
  double lhs = 0.0;
  double rhs = 0.0;
  bool hypotheses_ok = true;
  bool pass = true;
  std::string detail;
};

struct FitRecord {
  std::string name;
  std::string group;
  std::string x;  // "N" or "log N"
  std::string y;
  LinearFit fit;
  std::size_t excluded = 0;  // underflowed cells left out
  bool fitted = false;       // false when fewer than kMinFitPoints remain
};

inline constexpr std::size_t kMinFitPoints = 6;

struct Series {
  std::string name;
  std::string x;
  std::string y;
  std::vector<std::pair<double, double>> points;
};

struct BoundReport {
  std::string analysis;
  std::vector<CellRecord> cells;
  std::vector<Audit> audits;
  std::vector<FitRecord> fits;
  std::vector<Series> series;

  // A proven inequality failed while its hypotheses held.
  bool has_defect() const;
  // has_defect() or a failed assertion.
  bool failed() const;
  const FitRecord* find_fit(const std::string& name, const std::string& group) const;
  std::vector<const Audit*> find_audits(const std::string& name) const;
};

// Exact gaps of the chosen chains, no audits.
BoundReport gap_scan(const ScanGrid& grid);

BoundReport verify_ising_fast(const ScanGrid& grid);
BoundReport verify_ising_slow(const ScanGrid& grid);
BoundReport verify_warmup(const ScanGrid& grid);
BoundReport verify_beg_slow(const ScanGrid& grid);
BoundReport verify_beg_fast(const ScanGrid& grid);

// Lower bound on Gap(M) for the Ising equi-energy chain.
double ising_fast_bound(int n, double p1, double p2);
// Gap(P-bar) (p2/2) min((1-p1)/2, (1-p1-p2)/2).
double beg_decomposition_bound(double gap_pbar, double p1, double p2);

// Plateau-tolerant shape tests on a log profile: differences within tol are
// treated as flat.
bool is_unimodal(const std::vector<double>& log_profile, double tol = 1e-12);
bool is_nonincreasing(const std::vector<double>& log_profile, double tol = 1e-12);

// Smallest N of the (sorted) scanned sizes from which ok holds through the
// end, or nothing when the last size fails.
std::optional<int> threshold_n(const std::vector<std::pair<int, bool>>& by_n);

struct UnimodalityScan {
  BoundReport report;
  // Per (beta, K): smallest scanned N0 with unimodal profiles from N0 on.
  std::vector<std::pair<std::pair<double, double>, std::optional<int>>> beg_n0;
  std::vector<std::pair<double, std::optional<int>>> ising_n0;  // per beta
};
// BEG q_[N] profiles over betas x ks x ns and the Ising q_N profiles over
// betas x ns.
UnimodalityScan unimodality_scan(const ScanGrid& grid);

// Rate function of S/N for the mean-field BEG model.
double rate_function(double beta, double coupling, double z);
// Minimisers of the rate function on [-1, 1], nonnegative first (so {0} or
// {z*, -z*}).
std::vector<double> rate_minimizers(double beta, double coupling);

struct ScaledParams {
  double p1 = 0.0;
  double p2 = 0.0;
  bool valid = false;  // p1 + p2 < 1
};
// p1 = 1 - a/(2N), p2 = a/N as printed; requires 0 < a < N.
ScaledParams scaled_params(double a, int n);
// Self-consistent variant p1 = 1 - a/N, p2 = a/(2N).
ScaledParams scaled_params_fallback(double a, int n);

// ---- output --------------------------------------------------------------

// Versioned CSV headers.
void write_cells_csv(std::ostream& os, const BoundReport& r);
void write_audits_csv(std::ostream& os, const BoundReport& r);
void write_fits_csv(std::ostream& os, const BoundReport& r);
// Two-column "x y" file with a comment header.
void write_series(std::ostream& os, const Series& s);
std::string series_file_name(const Series& s);
// Schema "eqmix.boundreport/1".
std::string report_json(const BoundReport& r);

}  // namespace eqmix
