#pragma once

// Explicit finite reversible kernels: proposals, Metropolis chains and the
// lumped / restricted / projected chains derived from them.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "eqmix/model.hpp"
#include "eqmix/parallel.hpp"

namespace eqmix {

struct Transition {
  std::size_t to = 0;
  double prob = 0.0;
};

template <class T>
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  T* row(std::size_t i) { return data_.data() + i * cols_; }
  const T* row(std::size_t i) const { return data_.data() + i * cols_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

// Row-stochastic matrix stored row-sparse (CSR, columns sorted, diagonal
// always present) together with unnormalised log stationary weights.
class FiniteKernel {
 public:
  FiniteKernel() = default;
  // Entries with equal column are summed; missing diagonals are added as 0.
  FiniteKernel(std::vector<std::string> labels, std::vector<double> log_weights,
               std::vector<std::vector<Transition>> rows);

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(std::size_t i) const { return labels_[i]; }
  const std::vector<double>& log_weights() const { return log_weights_; }
  std::span<const Transition> row(std::size_t i) const;
  double prob(std::size_t i, std::size_t j) const;
  double diagonal(std::size_t i) const { return prob(i, i); }
  std::size_t nonzeros() const { return entries_.size(); }

  // Normalised stationary distribution and its logarithm.
  std::vector<double> stationary() const;
  std::vector<double> log_stationary() const;

  DenseMatrix<double> to_dense() const;

  // max_i |sum_j P(i,j) - 1|, and the smallest entry.
  double row_sum_error() const;
  double min_entry() const;
  // max over pairs of |pi(x)P(x,y) - pi(y)P(y,x)| / max(pi(x)P(x,y), pi(y)P(y,x)),
  // evaluated in log space.
  double detailed_balance_error() const;
  // Throws KernelError when either check exceeds tol.
  void check(double tol = 1e-12) const;

  // True when every transition is to i-1, i or i+1.
  bool is_tridiagonal() const;

 private:
  std::vector<std::string> labels_;
  std::vector<double> log_weights_;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<Transition> entries_;
};

struct Partition {
  std::vector<std::size_t> block_of;
  std::size_t blocks = 0;

  // Throws ValidationError on empty blocks or out-of-range ids.
  void validate(std::size_t states) const;
  std::vector<std::vector<std::size_t>> members() const;

  static Partition trivial(std::size_t states);
  static Partition singletons(std::size_t states);
};

// Chain on 0..n-1 moving only to neighbours.
struct BirthDeathChain {
  std::vector<double> up;    // P(i, i+1); up.back() == 0
  std::vector<double> down;  // P(i, i-1); down.front() == 0
  std::vector<double> log_weights;

  std::size_t size() const { return up.size(); }
  double hold(std::size_t i) const { return 1.0 - up[i] - down[i]; }
  // Throws KernelError when rates are inconsistent.
  void validate(double tol = 1e-12) const;
  FiniteKernel to_kernel(std::vector<std::string> labels = {}) const;
  static BirthDeathChain from_kernel(const FiniteKernel& k);
};

enum class ChainKind { Naive, EquiEnergy, SmallWorld };
std::string to_string(ChainKind kind);
ChainKind parse_chain_kind(const std::string& name);

// Off-diagonal K(x,y) min(1, pi(y)K(y,x) / (pi(x)K(x,y))), evaluated as
// exp(min(0, dlog)); the diagonal takes the rejected mass.
FiniteKernel metropolize(const FiniteKernel& proposal, std::span<const double> target_log_weights,
                         Exec exec = Exec::Parallel);

// ---- full state space (small N only) ------------------------------------

inline constexpr int kMaxFullIsingN = 14;
inline constexpr int kMaxFullBegN = 8;

// Canonical enumeration of the full state space. Ising: bit j of the index
// set means x_j = +1. BEG: base-3 digit d means x_j = d - 1. Warmup:
// index i means x = i - N.
std::size_t full_space_size(const ModelSpec& m);
SpinConfiguration state_at(const ModelSpec& m, std::size_t index);
std::size_t index_of_state(const ModelSpec& m, const SpinConfiguration& x);
std::string state_label(const SpinConfiguration& x);

// The local proposal targets of a single configuration with their masses
// (Ising: N flips of 1/N; BEG: 2N moves of 1/2N with -1-1 = 1 and 1+1 = -1;
// Warmup: +-1 steps of 1/2 with holding at the boundary). Any length >= 1
// is accepted here.
std::vector<std::pair<SpinConfiguration, double>> local_moves(const SpinConfiguration& x,
                                                              int warmup_n = 0);

FiniteKernel single_flip_proposal(const ModelSpec& m, Exec exec = Exec::Parallel);
FiniteKernel equi_energy_proposal(const ModelSpec& m, Exec exec = Exec::Parallel);
FiniteKernel small_world_proposal(const ModelSpec& m, double epsilon);

// Metropolis chains on the full space for the three proposal families.
FiniteKernel metropolis_chain(const ModelSpec& m, ChainKind kind, Exec exec = Exec::Parallel);

// The state partition by energy class (signed or unsigned).
Partition class_partition(const ModelSpec& m, bool signed_classes);
// The warming-up partition A_1 = {-1,0,1}, A_i = {+-i}.
Partition warmup_partition(const ModelSpec& m);

// ---- derived chains ------------------------------------------------------

// P_H(i,j) = (1 / 2p(A_i)) sum_{x in A_i, y in A_j} P(x,y) p(x), i != j.
FiniteKernel lumped_projection(const FiniteKernel& p, const Partition& parts);

// P restricted to block, escaping mass added to the diagonal.
FiniteKernel restriction(const FiniteKernel& p, std::span<const std::size_t> block);

// Exact strong lumping onto signed energy classes, built from class-level
// counting. States follow class_table(m) order.
FiniteKernel signed_lumped_chain(const ModelSpec& m, ChainKind kind);

// Partition of the signed class chain into unsigned classes.
Partition sign_merge_partition(const ClassTable& table);

// Ising P-bar from the closed-form birth-and-death rates, on i = 0,2,..,N.
BirthDeathChain ising_lumped_bd(const ModelSpec& m);

// BEG P-bar on D_N by direct lumping of the class-level chain (authoritative).
FiniteKernel beg_lumped(const ModelSpec& m);

// One printed closed-form BEG rate, evaluated.
struct PrintedRate {
  std::string family;
  std::pair<int, int> from;  // (s, r)
  std::pair<int, int> to;
  double printed = 0.0;
};
std::vector<PrintedRate> beg_printed_rates(const ModelSpec& m);

// Families of the printed BEG rate list known to carry a typo; each entry
// states the corrected expression that direct lumping reproduces.
struct DocumentedTypo {
  std::string family;
  std::string printed;
  std::string corrected;
};
const std::vector<DocumentedTypo>& beg_documented_typos();
// Corrected value of a printed family (used to confirm the annotation).
double beg_corrected_rate(const ModelSpec& m, const PrintedRate& rate);

struct Discrepancy {
  std::string family;
  std::string from;
  std::string to;
  double printed = 0.0;
  double direct = 0.0;
  double corrected = 0.0;  // NaN when the family is not annotated
  bool annotated = false;
};

struct DiscrepancyReport {
  std::size_t compared = 0;
  std::vector<Discrepancy> mismatches;
  bool acceptable() const;  // every mismatch annotated and corrected value matching
};

DiscrepancyReport compare_beg_printed(const ModelSpec& m, const FiniteKernel& direct,
                                      double tol = 1e-12);
DiscrepancyReport compare_ising_printed(const ModelSpec& m, const FiniteKernel& direct,
                                        double tol = 1e-12);

// "label: neighbour=prob ..." per line, probabilities with 17 digits.
void write_kernel_text(std::ostream& os, const FiniteKernel& k);

}  // namespace eqmix
