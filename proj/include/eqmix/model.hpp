#pragma once

// Target distributions: the warming-up double-peak walk on {-N..N}, the
// mean-field Ising model on {-1,1}^N and the mean-field
// Blume-Emery-Griffiths model on {-1,0,1}^N. Everything is kept in log
// space; orbits of S_N x {+1,-1} are the "energy classes".

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eqmix/error.hpp"

namespace eqmix {

enum class ModelKind { Warmup, Ising, Beg };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

// Ising and BEG need an even number of spins.
class OddSizeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct ModelSpec {
  ModelKind kind = ModelKind::Ising;
  int n = 2;
  double beta = 1.0;     // Ising, BEG
  double coupling = 1.0; // K, BEG
  double theta = 2.0;    // Warmup
  double p1 = 0.5;       // local-move weight of the equi-energy proposal
  double p2 = 0.25;      // global-flip weight
  double epsilon = 0.3;  // Warmup reflection weight
  std::optional<double> a;  // scaled-parameter mode, informational

  static ModelSpec warmup(int n, double theta, double epsilon);
  static ModelSpec ising(int n, double beta, double p1 = 0.5, double p2 = 0.25);
  static ModelSpec beg(int n, double beta, double coupling, double p1 = 0.5,
                       double p2 = 0.25);

  // Throws ValidationError (OddSizeError for odd Ising/BEG sizes).
  void validate() const;
};

struct SpinConfiguration {
  ModelKind kind = ModelKind::Ising;
  std::vector<int> values;  // Warmup: a single coordinate in [-N, N]
};

// Throws ValidationError when x does not belong to the state space of m.
void check_configuration(const ModelSpec& m, const SpinConfiguration& x);

// Sign convention: -1, +1, or 0 when the magnetization vanishes.
struct EnergyClass {
  ModelKind kind = ModelKind::Ising;
  int s = 0;     // |S| (Warmup: |x|)
  int r = 0;     // R, BEG only (0 otherwise)
  int sign = 0;

  auto operator<=>(const EnergyClass&) const = default;
  std::string label() const;
  EnergyClass unsigned_class() const { return {kind, s, r, 0}; }
};

int magnetization(const SpinConfiguration& x);
int quadrupole(const SpinConfiguration& x);

// Unnormalised log density from the sufficient statistics.
double log_weight_of_stats(const ModelSpec& m, int magnetization, int quadrupole);
double log_weight(const ModelSpec& m, const SpinConfiguration& x);

EnergyClass class_of(const ModelSpec& m, const SpinConfiguration& x);

struct ClassEntry {
  EnergyClass cls;
  double log_cardinality = 0.0;
  double log_weight_per_state = 0.0;
  double log_class_weight = 0.0;
};

// Fixed order: Ising/Warmup by i ascending, BEG by (r, s) lexicographic;
// within a class pair the minus sign precedes the plus sign.
class ClassTable {
 public:
  ClassTable(ModelSpec spec, std::vector<ClassEntry> entries);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<ClassEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  double log_partition() const { return log_partition_; }

  double probability(std::size_t i) const;
  double log_probability(std::size_t i) const;
  std::optional<std::size_t> find(const EnergyClass& c) const;
  std::size_t index_of(const EnergyClass& c) const;

 private:
  ModelSpec spec_;
  std::vector<ClassEntry> entries_;
  double log_partition_ = 0.0;
};

// Largest class list class_table() will build.
inline constexpr std::size_t kMaxClassCount = 4'000'000;

ClassTable class_table(const ModelSpec& m);

// The index set D_N of (s, r) pairs, sorted by (r, s).
std::vector<std::pair<int, int>> enumerate_beg_classes(int n);

// log q_N(i), i = 0, 2, ..., N: C(N, (N-i)/2) exp(beta i^2 / 2N).
std::vector<double> ising_log_q(const ModelSpec& m);

// log q_[N](r), r = 0..N, by summing the class table over s.
std::vector<double> beg_row_log_q(const ModelSpec& m);
// Same profile from the closed even/odd formulas.
std::vector<double> beg_row_log_q_closed_form(const ModelSpec& m);
// The closed form for any N >= 1 (odd N included), no model validation.
std::vector<double> beg_row_log_q_profile(int n, double beta, double coupling);

}  // namespace eqmix
