#include "eqmix/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "eqmix/numeric.hpp"

namespace eqmix {

namespace {

double acceptance(double dlog) { return std::exp(std::min(0.0, dlog)); }

bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b)) + 1e-300;
}

std::size_t ipow(std::size_t b, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

void require_full_space(const ModelSpec& m) {
  m.validate();
  if (m.kind == ModelKind::Ising && m.n > kMaxFullIsingN) {
    throw CapacityError("full Ising space limited to N <= " + std::to_string(kMaxFullIsingN));
  }
  if (m.kind == ModelKind::Beg && m.n > kMaxFullBegN) {
    throw CapacityError("full BEG space limited to N <= " + std::to_string(kMaxFullBegN));
  }
}

std::vector<std::string> full_labels(const ModelSpec& m) {
  const std::size_t n = full_space_size(m);
  std::vector<std::string> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = state_label(state_at(m, i));
  return labels;
}

std::vector<double> full_log_weights(const ModelSpec& m) {
  const std::size_t n = full_space_size(m);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = log_weight(m, state_at(m, i));
  return w;
}

// Index of -x in the canonical enumeration.
std::size_t reflected_index(const ModelSpec& m, std::size_t i) {
  switch (m.kind) {
    case ModelKind::Ising: return (full_space_size(m) - 1) ^ i;
    case ModelKind::Warmup: return 2 * static_cast<std::size_t>(m.n) - i;
    case ModelKind::Beg: return full_space_size(m) - 1 - i;  // digit d -> 2-d
  }
  return i;
}

// Member lists of the signed classes, indexed like class_table(m).
std::vector<std::vector<std::size_t>> class_members(const ModelSpec& m, const ClassTable& table,
                                                    std::vector<std::size_t>& class_of_state) {
  const std::size_t n = full_space_size(m);
  class_of_state.resize(n);
  std::vector<std::vector<std::size_t>> members(table.size());
  for (std::size_t i = 0; i < n; ++i) {
    class_of_state[i] = table.index_of(class_of(m, state_at(m, i)));
    members[class_of_state[i]].push_back(i);
  }
  return members;
}

std::string unsigned_label(const EnergyClass& c) {
  switch (c.kind) {
    case ModelKind::Warmup: return "x=" + std::to_string(c.s);
    case ModelKind::Ising: return "S=" + std::to_string(c.s);
    case ModelKind::Beg: return "s=" + std::to_string(c.s) + ",r=" + std::to_string(c.r);
  }
  return "?";
}

}  // namespace

// ---- FiniteKernel --------------------------------------------------------

FiniteKernel::FiniteKernel(std::vector<std::string> labels, std::vector<double> log_weights,
                           std::vector<std::vector<Transition>> rows)
    : labels_(std::move(labels)), log_weights_(std::move(log_weights)) {
  const std::size_t n = labels_.size();
  if (log_weights_.size() != n || rows.size() != n) {
    throw KernelError("FiniteKernel: labels, weights and rows differ in size");
  }
  row_ptr_.assign(1, 0);
  row_ptr_.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = rows[i];
    std::sort(r.begin(), r.end(), [](const Transition& a, const Transition& b) { return a.to < b.to; });
    bool has_diag = false;
    for (std::size_t k = 0; k < r.size();) {
      const std::size_t col = r[k].to;
      if (col >= n) throw KernelError("FiniteKernel: column out of range");
      double v = 0.0;
      while (k < r.size() && r[k].to == col) v += r[k++].prob;
      if (!(v >= 0.0)) throw KernelError("FiniteKernel: negative or NaN transition mass");
      if (v == 0.0 && col != i) continue;
      if (!has_diag && col > i) {
        entries_.push_back({i, 0.0});
        has_diag = true;
      }
      if (col == i) has_diag = true;
      entries_.push_back({col, v});
    }
    if (!has_diag) entries_.push_back({i, 0.0});
    row_ptr_.push_back(entries_.size());
  }
}

std::span<const Transition> FiniteKernel::row(std::size_t i) const {
  return {entries_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
}

double FiniteKernel::prob(std::size_t i, std::size_t j) const {
  const auto r = row(i);
  auto it = std::lower_bound(r.begin(), r.end(), j,
                             [](const Transition& t, std::size_t c) { return t.to < c; });
  if (it == r.end() || it->to != j) return 0.0;
  return it->prob;
}

std::vector<double> FiniteKernel::log_stationary() const {
  const double z = log_sum_exp(log_weights_);
  std::vector<double> out(log_weights_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = log_weights_[i] - z;
  return out;
}

std::vector<double> FiniteKernel::stationary() const {
  auto lp = log_stationary();
  for (double& v : lp) v = std::exp(v);
  return lp;
}

DenseMatrix<double> FiniteKernel::to_dense() const {
  DenseMatrix<double> d(size(), size());
  for (std::size_t i = 0; i < size(); ++i) {
    for (const auto& t : row(i)) d(i, t.to) = t.prob;
  }
  return d;
}

double FiniteKernel::row_sum_error() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    double s = 0.0;
    for (const auto& t : row(i)) s += t.prob;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

double FiniteKernel::min_entry() const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& t : entries_) m = std::min(m, t.prob);
  return entries_.empty() ? 0.0 : m;
}

double FiniteKernel::detailed_balance_error() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    for (const auto& t : row(i)) {
      const std::size_t j = t.to;
      if (j == i || t.prob == 0.0) continue;
      const double pji = prob(j, i);
      if (pji == 0.0) return 1.0;
      if (j < i) continue;
      const double a = log_weights_[i] + std::log(t.prob);
      const double b = log_weights_[j] + std::log(pji);
      worst = std::max(worst, -std::expm1(-std::abs(a - b)));
    }
  }
  return worst;
}

void FiniteKernel::check(double tol) const {
  if (min_entry() < 0.0) throw KernelError("kernel has a negative entry");
  const double rs = row_sum_error();
  if (rs > tol) throw KernelError("kernel rows do not sum to 1 (error " + format_real(rs) + ")");
  const double db = detailed_balance_error();
  if (db > tol) throw KernelError("kernel violates detailed balance (error " + format_real(db) + ")");
}

bool FiniteKernel::is_tridiagonal() const {
  for (std::size_t i = 0; i < size(); ++i) {
    for (const auto& t : row(i)) {
      const std::size_t d = t.to > i ? t.to - i : i - t.to;
      if (d > 1 && t.prob != 0.0) return false;
    }
  }
  return true;
}

// ---- Partition -----------------------------------------------------------

void Partition::validate(std::size_t states) const {
  if (block_of.size() != states) throw ValidationError("partition size differs from state count");
  std::vector<char> seen(blocks, 0);
  for (std::size_t b : block_of) {
    if (b >= blocks) throw ValidationError("partition block id out of range");
    seen[b] = 1;
  }
  for (std::size_t b = 0; b < blocks; ++b) {
    if (!seen[b]) throw ValidationError("partition has an empty block " + std::to_string(b));
  }
}

std::vector<std::vector<std::size_t>> Partition::members() const {
  std::vector<std::vector<std::size_t>> out(blocks);
  for (std::size_t i = 0; i < block_of.size(); ++i) out[block_of[i]].push_back(i);
  return out;
}

Partition Partition::trivial(std::size_t states) { return {std::vector<std::size_t>(states, 0), 1}; }

Partition Partition::singletons(std::size_t states) {
  Partition p{std::vector<std::size_t>(states), states};
  for (std::size_t i = 0; i < states; ++i) p.block_of[i] = i;
  return p;
}

// ---- BirthDeathChain -----------------------------------------------------

void BirthDeathChain::validate(double tol) const {
  const std::size_t n = size();
  if (n == 0 || down.size() != n || log_weights.size() != n) {
    throw KernelError("birth-death chain: inconsistent array sizes");
  }
  if (up.back() != 0.0 || down.front() != 0.0) {
    throw KernelError("birth-death chain: boundary state has an outward rate");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (up[i] < 0.0 || down[i] < 0.0 || up[i] + down[i] > 1.0 + tol) {
      throw KernelError("birth-death chain: invalid rates at state " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if ((up[i] == 0.0) != (down[i + 1] == 0.0)) {
      throw KernelError("birth-death chain: one-sided edge at " + std::to_string(i));
    }
    if (up[i] == 0.0) continue;
    const double a = log_weights[i] + std::log(up[i]);
    const double b = log_weights[i + 1] + std::log(down[i + 1]);
    if (-std::expm1(-std::abs(a - b)) > tol) {
      throw KernelError("birth-death chain: detailed balance fails at edge " + std::to_string(i));
    }
  }
}

FiniteKernel BirthDeathChain::to_kernel(std::vector<std::string> labels) const {
  const std::size_t n = size();
  if (labels.empty()) {
    for (std::size_t i = 0; i < n; ++i) labels.push_back(std::to_string(i));
  }
  std::vector<std::vector<Transition>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) rows[i].push_back({i - 1, down[i]});
    rows[i].push_back({i, hold(i)});
    if (i + 1 < n) rows[i].push_back({i + 1, up[i]});
  }
  return FiniteKernel(std::move(labels), log_weights, std::move(rows));
}

BirthDeathChain BirthDeathChain::from_kernel(const FiniteKernel& k) {
  if (!k.is_tridiagonal()) throw KernelError("kernel is not a birth-death chain");
  BirthDeathChain c;
  const std::size_t n = k.size();
  c.up.assign(n, 0.0);
  c.down.assign(n, 0.0);
  c.log_weights = k.log_weights();
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 < n) c.up[i] = k.prob(i, i + 1);
    if (i > 0) c.down[i] = k.prob(i, i - 1);
  }
  return c;
}

std::string to_string(ChainKind kind) {
  switch (kind) {
    case ChainKind::Naive: return "naive";
    case ChainKind::EquiEnergy: return "equi-energy";
    case ChainKind::SmallWorld: return "small-world";
  }
  return "unknown";
}

ChainKind parse_chain_kind(const std::string& name) {
  if (name == "naive") return ChainKind::Naive;
  if (name == "equi-energy" || name == "equi") return ChainKind::EquiEnergy;
  if (name == "small-world") return ChainKind::SmallWorld;
  throw ValidationError("unknown chain kind '" + name + "' (expected naive, equi-energy or small-world)");
}

FiniteKernel metropolize(const FiniteKernel& proposal, std::span<const double> target, Exec exec) {
  const std::size_t n = proposal.size();
  if (target.size() != n) throw KernelError("metropolize: target and proposal sizes differ");
  std::vector<std::vector<Transition>> rows(n);
  for_each_index(exec, n, [&](std::size_t i) {
    auto& out = rows[i];
    const auto r = proposal.row(i);
    out.reserve(r.size());
    for (const auto& t : r) {
      if (t.to == i || t.prob == 0.0) continue;
      const double back = proposal.prob(t.to, i);
      if (back == 0.0) {
        throw KernelError("metropolize: proposal support is not reversible (" + proposal.label(i) +
                          " -> " + proposal.label(t.to) + ")");
      }
      const double dlog = target[t.to] + std::log(back) - target[i] - std::log(t.prob);
      out.push_back({t.to, t.prob * acceptance(dlog)});
    }
    double off = 0.0;
    for (const auto& t : out) off += t.prob;
    out.push_back({i, std::max(0.0, 1.0 - off)});
  });
  return FiniteKernel(proposal.labels(), std::vector<double>(target.begin(), target.end()),
                      std::move(rows));
}

// ---- full state space ----------------------------------------------------

std::size_t full_space_size(const ModelSpec& m) {
  switch (m.kind) {
    case ModelKind::Warmup: return 2 * static_cast<std::size_t>(m.n) + 1;
    case ModelKind::Ising: return std::size_t{1} << m.n;
    case ModelKind::Beg: return ipow(3, m.n);
  }
  return 0;
}

SpinConfiguration state_at(const ModelSpec& m, std::size_t index) {
  SpinConfiguration x;
  x.kind = m.kind;
  switch (m.kind) {
    case ModelKind::Warmup:
      x.values = {static_cast<int>(index) - m.n};
      break;
    case ModelKind::Ising:
      x.values.resize(m.n);
      for (int j = 0; j < m.n; ++j) x.values[j] = ((index >> j) & 1U) ? 1 : -1;
      break;
    case ModelKind::Beg:
      x.values.resize(m.n);
      for (int j = 0; j < m.n; ++j) {
        x.values[j] = static_cast<int>(index % 3) - 1;
        index /= 3;
      }
      break;
  }
  return x;
}

std::size_t index_of_state(const ModelSpec& m, const SpinConfiguration& x) {
  check_configuration(m, x);
  switch (m.kind) {
    case ModelKind::Warmup: return static_cast<std::size_t>(x.values[0] + m.n);
    case ModelKind::Ising: {
      std::size_t i = 0;
      for (int j = 0; j < m.n; ++j) {
        if (x.values[j] > 0) i |= std::size_t{1} << j;
      }
      return i;
    }
    case ModelKind::Beg: {
      std::size_t i = 0;
      for (int j = m.n - 1; j >= 0; --j) i = 3 * i + static_cast<std::size_t>(x.values[j] + 1);
      return i;
    }
  }
  return 0;
}

std::string state_label(const SpinConfiguration& x) {
  if (x.kind == ModelKind::Warmup) return "x=" + std::to_string(x.values.at(0));
  std::string s;
  for (int v : x.values) s += v > 0 ? '+' : (v < 0 ? '-' : '0');
  return s;
}

std::vector<std::pair<SpinConfiguration, double>> local_moves(const SpinConfiguration& x,
                                                              int warmup_n) {
  std::vector<std::pair<SpinConfiguration, double>> out;
  if (x.kind == ModelKind::Warmup) {
    if (warmup_n < 1) throw ValidationError("local_moves: warmup chain needs N >= 1");
    for (int d : {-1, 1}) {
      SpinConfiguration y = x;
      const int v = x.values.at(0) + d;
      if (std::abs(v) <= warmup_n) y.values[0] = v;
      out.emplace_back(std::move(y), 0.5);
    }
    return out;
  }
  const std::size_t n = x.values.size();
  if (n == 0) throw ValidationError("local_moves: empty configuration");
  if (x.kind == ModelKind::Ising) {
    for (std::size_t j = 0; j < n; ++j) {
      SpinConfiguration y = x;
      y.values[j] = -y.values[j];
      out.emplace_back(std::move(y), 1.0 / static_cast<double>(n));
    }
    return out;
  }
  // BEG: x_j +- 1 with 1 + 1 = -1 and -1 - 1 = 1.
  for (std::size_t j = 0; j < n; ++j) {
    for (int d : {1, -1}) {
      SpinConfiguration y = x;
      int v = y.values[j] + d;
      if (v == 2) v = -1;
      if (v == -2) v = 1;
      y.values[j] = v;
      out.emplace_back(std::move(y), 1.0 / (2.0 * static_cast<double>(n)));
    }
  }
  return out;
}

FiniteKernel single_flip_proposal(const ModelSpec& m, Exec exec) {
  require_full_space(m);
  const std::size_t n = full_space_size(m);
  std::vector<std::vector<Transition>> rows(n);
  for_each_index(exec, n, [&](std::size_t i) {
    for (auto& [y, p] : local_moves(state_at(m, i), m.n)) {
      rows[i].push_back({index_of_state(m, y), p});
    }
  });
  return FiniteKernel(full_labels(m), std::vector<double>(n, 0.0), std::move(rows));
}

FiniteKernel equi_energy_proposal(const ModelSpec& m, Exec exec) {
  if (m.kind == ModelKind::Warmup) return small_world_proposal(m, m.epsilon);
  require_full_space(m);
  const std::size_t n = full_space_size(m);
  const ClassTable table = class_table(m);
  std::vector<std::size_t> cls;
  const auto members = class_members(m, table, cls);
  std::vector<std::vector<Transition>> rows(n);
  for_each_index(exec, n, [&](std::size_t i) {
    auto& row = rows[i];
    for (auto& [y, p] : local_moves(state_at(m, i), m.n)) {
      row.push_back({index_of_state(m, y), m.p1 * p});
    }
    const auto& same = members[cls[i]];
    double uniform = 1.0 - m.p1;
    if (table.entries()[cls[i]].cls.s != 0) {
      row.push_back({reflected_index(m, i), m.p2});
      uniform -= m.p2;
    }
    const double each = uniform / static_cast<double>(same.size());
    for (std::size_t j : same) row.push_back({j, each});
  });
  return FiniteKernel(full_labels(m), std::vector<double>(n, 0.0), std::move(rows));
}

FiniteKernel small_world_proposal(const ModelSpec& m, double epsilon) {
  if (m.kind != ModelKind::Warmup) throw ValidationError("small_world_proposal: warmup model required");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ValidationError("epsilon must lie in (0,1)");
  m.validate();
  const std::size_t n = full_space_size(m);
  std::vector<std::vector<Transition>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& [y, p] : local_moves(state_at(m, i), m.n)) {
      rows[i].push_back({index_of_state(m, y), (1.0 - epsilon) * p});
    }
    rows[i].push_back({reflected_index(m, i), epsilon});
  }
  return FiniteKernel(full_labels(m), std::vector<double>(n, 0.0), std::move(rows));
}

FiniteKernel metropolis_chain(const ModelSpec& m, ChainKind kind, Exec exec) {
  require_full_space(m);
  FiniteKernel proposal;
  switch (kind) {
    case ChainKind::Naive: proposal = single_flip_proposal(m, exec); break;
    case ChainKind::EquiEnergy:
      proposal = m.kind == ModelKind::Warmup ? small_world_proposal(m, m.epsilon)
                                             : equi_energy_proposal(m, exec);
      break;
    case ChainKind::SmallWorld:
      if (m.kind != ModelKind::Warmup) {
        throw ValidationError("small-world chain is defined for the warmup model only");
      }
      proposal = small_world_proposal(m, m.epsilon);
      break;
  }
  const auto w = full_log_weights(m);
  return metropolize(proposal, w, exec);
}

Partition class_partition(const ModelSpec& m, bool signed_classes) {
  require_full_space(m);
  const ClassTable table = class_table(m);
  std::vector<std::size_t> cls;
  class_members(m, table, cls);
  if (signed_classes) return {cls, table.size()};
  const Partition merge = sign_merge_partition(table);
  Partition p{std::vector<std::size_t>(cls.size()), merge.blocks};
  for (std::size_t i = 0; i < cls.size(); ++i) p.block_of[i] = merge.block_of[cls[i]];
  return p;
}

Partition warmup_partition(const ModelSpec& m) {
  if (m.kind != ModelKind::Warmup) throw ValidationError("warmup_partition: warmup model required");
  m.validate();
  const std::size_t n = full_space_size(m);
  Partition p{std::vector<std::size_t>(n), static_cast<std::size_t>(m.n)};
  for (std::size_t i = 0; i < n; ++i) {
    const int x = std::abs(static_cast<int>(i) - m.n);
    p.block_of[i] = x <= 1 ? 0 : static_cast<std::size_t>(x - 1);
  }
  return p;
}

// ---- derived chains ------------------------------------------------------

FiniteKernel lumped_projection(const FiniteKernel& p, const Partition& parts) {
  parts.validate(p.size());
  const auto members = parts.members();
  const auto& lw = p.log_weights();
  std::vector<double> block_lw(parts.blocks);
  for (std::size_t b = 0; b < parts.blocks; ++b) {
    std::vector<double> w;
    w.reserve(members[b].size());
    for (std::size_t x : members[b]) w.push_back(lw[x]);
    block_lw[b] = log_sum_exp(w);
  }
  std::vector<std::vector<Transition>> rows(parts.blocks);
  std::vector<std::string> labels(parts.blocks);
  for (std::size_t b = 0; b < parts.blocks; ++b) {
    std::map<std::size_t, double> acc;
    for (std::size_t x : members[b]) {
      const double px = std::exp(lw[x] - block_lw[b]);
      for (const auto& t : p.row(x)) {
        const std::size_t c = parts.block_of[t.to];
        if (c != b) acc[c] += 0.5 * px * t.prob;
      }
    }
    double off = 0.0;
    for (auto [c, v] : acc) {
      rows[b].push_back({c, v});
      off += v;
    }
    rows[b].push_back({b, std::max(0.0, 1.0 - off)});
    labels[b] = members[b].size() == 1 ? p.label(members[b][0]) : "block" + std::to_string(b);
  }
  return FiniteKernel(std::move(labels), std::move(block_lw), std::move(rows));
}

FiniteKernel restriction(const FiniteKernel& p, std::span<const std::size_t> block) {
  if (block.empty()) throw ValidationError("restriction: empty block");
  std::map<std::size_t, std::size_t> local;
  for (std::size_t k = 0; k < block.size(); ++k) {
    if (block[k] >= p.size()) throw ValidationError("restriction: state out of range");
    if (!local.emplace(block[k], k).second) throw ValidationError("restriction: repeated state");
  }
  std::vector<std::string> labels;
  std::vector<double> lw;
  std::vector<std::vector<Transition>> rows(block.size());
  for (std::size_t k = 0; k < block.size(); ++k) {
    labels.push_back(p.label(block[k]));
    lw.push_back(p.log_weights()[block[k]]);
    double off = 0.0;
    for (const auto& t : p.row(block[k])) {
      if (t.to == block[k]) continue;
      auto it = local.find(t.to);
      if (it == local.end()) continue;
      rows[k].push_back({it->second, t.prob});
      off += t.prob;
    }
    rows[k].push_back({k, std::max(0.0, 1.0 - off)});
  }
  return FiniteKernel(std::move(labels), std::move(lw), std::move(rows));
}

FiniteKernel signed_lumped_chain(const ModelSpec& m, ChainKind kind) {
  m.validate();
  if (kind == ChainKind::SmallWorld && m.kind != ModelKind::Warmup) {
    throw ValidationError("small-world chain is defined for the warmup model only");
  }
  const ClassTable table = class_table(m);
  const auto& entries = table.entries();
  const std::size_t n = table.size();
  const bool equi = kind != ChainKind::Naive;
  std::vector<std::vector<Transition>> rows(n);
  std::vector<std::string> labels(n);
  std::vector<double> lw(n);

  auto index_signed = [&](int s, int r) {
    const int sign = s > 0 ? 1 : (s < 0 ? -1 : 0);
    return table.index_of({m.kind, std::abs(s), r, sign});
  };

  for (std::size_t c = 0; c < n; ++c) {
    const EnergyClass& e = entries[c].cls;
    labels[c] = e.label();
    lw[c] = entries[c].log_class_weight;
    const int s = e.sign * e.s;
    const int r = e.r;
    const double w0 = entries[c].log_weight_per_state;
    auto& row = rows[c];
    auto add_move = [&](int s2, int r2, double mass) {
      if (mass <= 0.0) return;
      const double w1 = log_weight_of_stats(m, s2, r2);
      row.push_back({index_signed(s2, r2), mass * acceptance(w1 - w0)});
    };
    switch (m.kind) {
      case ModelKind::Warmup: {
        const double local = equi ? 1.0 - m.epsilon : 1.0;
        for (int d : {-1, 1}) {
          if (std::abs(s + d) <= m.n) add_move(s + d, 0, 0.5 * local);
        }
        if (equi && s != 0) row.push_back({index_signed(-s, 0), m.epsilon});
        break;
      }
      case ModelKind::Ising: {
        const double per = (equi ? m.p1 : 1.0) / m.n;
        const int plus = (m.n + s) / 2;
        const int minus = (m.n - s) / 2;
        add_move(s - 2, 0, per * plus);
        add_move(s + 2, 0, per * minus);
        if (equi && s != 0) row.push_back({index_signed(-s, 0), m.p2});
        break;
      }
      case ModelKind::Beg: {
        const double per = (equi ? m.p1 : 1.0) / (2.0 * m.n);
        const int plus = (r + s) / 2;
        const int minus = (r - s) / 2;
        const int zero = m.n - r;
        add_move(s + 1, r - 1, per * minus);  // -1 -> 0
        add_move(s + 1, r + 1, per * zero);   //  0 -> 1
        add_move(s - 2, r, per * plus);       //  1 -> -1
        add_move(s - 1, r - 1, per * plus);   //  1 -> 0
        add_move(s - 1, r + 1, per * zero);   //  0 -> -1
        add_move(s + 2, r, per * minus);      // -1 -> 1
        if (equi && s != 0) row.push_back({index_signed(-s, r), m.p2});
        break;
      }
    }
    double off = 0.0;
    for (const auto& t : row) {
      if (t.to != c) off += t.prob;
    }
    row.erase(std::remove_if(row.begin(), row.end(), [&](const Transition& t) { return t.to == c; }),
              row.end());
    row.push_back({c, std::max(0.0, 1.0 - off)});
  }
  return FiniteKernel(std::move(labels), std::move(lw), std::move(rows));
}

Partition sign_merge_partition(const ClassTable& table) {
  Partition p{std::vector<std::size_t>(table.size()), 0};
  std::map<std::pair<int, int>, std::size_t> ids;
  for (std::size_t c = 0; c < table.size(); ++c) {
    const auto& e = table.entries()[c].cls;
    auto [it, fresh] = ids.emplace(std::make_pair(e.r, e.s), p.blocks);
    if (fresh) ++p.blocks;
    p.block_of[c] = it->second;
  }
  return p;
}

namespace {

FiniteKernel unsigned_lumped(const ModelSpec& m, ChainKind kind) {
  const ClassTable table = class_table(m);
  const Partition merge = sign_merge_partition(table);
  FiniteKernel lumped = lumped_projection(signed_lumped_chain(m, kind), merge);
  std::vector<std::string> labels(merge.blocks);
  for (std::size_t c = 0; c < table.size(); ++c) {
    labels[merge.block_of[c]] = unsigned_label(table.entries()[c].cls);
  }
  std::vector<std::vector<Transition>> rows(lumped.size());
  for (std::size_t i = 0; i < lumped.size(); ++i) {
    rows[i].assign(lumped.row(i).begin(), lumped.row(i).end());
  }
  return FiniteKernel(std::move(labels), lumped.log_weights(), std::move(rows));
}

}  // namespace

BirthDeathChain ising_lumped_bd(const ModelSpec& m) {
  if (m.kind != ModelKind::Ising) throw ValidationError("ising_lumped_bd: Ising model required");
  m.validate();
  const int n = m.n;
  const std::size_t states = static_cast<std::size_t>(n / 2 + 1);
  BirthDeathChain c;
  c.up.assign(states, 0.0);
  c.down.assign(states, 0.0);
  c.log_weights = ising_log_q(m);
  for (std::size_t k = 1; k < states; ++k) c.log_weights[k] += std::log(2.0);
  for (std::size_t k = 0; k < states; ++k) {
    const int i = 2 * static_cast<int>(k);
    if (k + 1 < states) c.up[k] = i == 0 ? m.p1 / 2.0 : (m.p1 / 4.0) * (n - i) / n;
    if (k > 0) {
      c.down[k] = (m.p1 / 4.0) * (static_cast<double>(n + i) / n) * std::exp(2.0 * m.beta * (1 - i) / n);
    }
  }
  return c;
}

FiniteKernel beg_lumped(const ModelSpec& m) {
  if (m.kind != ModelKind::Beg) throw ValidationError("beg_lumped: BEG model required");
  return unsigned_lumped(m, ChainKind::EquiEnergy);
}

std::vector<PrintedRate> beg_printed_rates(const ModelSpec& m) {
  if (m.kind != ModelKind::Beg) throw ValidationError("beg_printed_rates: BEG model required");
  m.validate();
  const int n = m.n;
  const double nn = n;
  const double p1 = m.p1;
  const double kb = m.coupling * m.beta / nn;
  const double b = m.beta;
  auto mn = [](double v) { return std::min(1.0, std::exp(v)); };
  auto valid = [n](int s, int r) { return s >= 0 && s <= r && r <= n && (r - s) % 2 == 0; };
  std::vector<PrintedRate> out;
  auto push = [&](const char* fam, int s, int r, int s2, int r2, double v) {
    if (valid(s, r) && valid(s2, r2)) out.push_back({fam, {s, r}, {s2, r2}, v});
  };
  push("F1", 0, 0, 1, 1, p1 / 2.0 * mn(kb - b));
  push("F2", 0, n, 1, n - 1, p1 / 4.0);
  push("F3", 0, n, 2, n, p1 / 4.0);
  for (int r = 0; r <= n - 2; r += 2) {
    push("F4", 0, r, 2, r, p1 / (4.0 * nn));
    push("F5", 0, r, 1, r - 1, p1 / (4.0 * nn));
    push("F6", 0, r, 1, r + 1, p1 / (2.0 * nn) * mn(kb - b));
  }
  for (auto [s, r] : enumerate_beg_classes(n)) {
    if (s == 0) continue;
    if (s <= n - 2) push("F7", s, r, s + 2, r, p1 / (8.0 * nn) * (r - s));
    // From s = 1 the move lands in the same unsigned class.
    if (s >= 2) push("F8", s, r, s - 2, r, p1 / (8.0 * nn) * (r + s) * std::exp(4.0 * kb * (1 - s)));
    if (r <= n - 1) {
      push("F9", s, r, s + 1, r + 1, p1 / (4.0 * nn) * (n - r) * mn(kb * (2 * s + 1) - b));
      push("F10", s, r, s - 1, r + 1, p1 / (4.0 * nn) * (n - r) * std::exp(kb * (1 - 2 * s) - b));
    }
    if (s <= n - 2) push("F11", s, r, s + 1, r - 1, p1 / (8.0 * nn) * (r - s));
    push("F12", s, r, s - 1, r - 1, p1 / (8.0 * nn) * (r + s) * mn(kb * (2 * s + 1) - b));
  }
  return out;
}

const std::vector<DocumentedTypo>& beg_documented_typos() {
  static const std::vector<DocumentedTypo> typos = {
      {"F4", "p1/(4N)", "p1*r/(4N)"},
      {"F5", "p1/(4N)", "p1*r/(4N)"},
      {"F6", "p1/(2N)*min(1,exp(K*beta/N-beta))", "p1*(N-r)/(2N)*min(1,exp(K*beta/N-beta))"},
      {"F12", "p1/(8N)*(r+s)*min(1,exp(K*beta*(2s+1)/N-beta))",
       "p1/(8N)*(r+s)*min(1,exp(beta-K*beta*(2s-1)/N))"},
  };
  return typos;
}

double beg_corrected_rate(const ModelSpec& m, const PrintedRate& rate) {
  const double nn = m.n;
  const double kb = m.coupling * m.beta / nn;
  const auto [s, r] = rate.from;
  if (rate.family == "F4" || rate.family == "F5") return m.p1 * r / (4.0 * nn);
  if (rate.family == "F6") {
    return m.p1 * (m.n - r) / (2.0 * nn) * std::min(1.0, std::exp(kb - m.beta));
  }
  if (rate.family == "F12") {
    return m.p1 / (8.0 * nn) * (r + s) * std::min(1.0, std::exp(m.beta - kb * (2 * s - 1)));
  }
  return rate.printed;
}

bool DiscrepancyReport::acceptable() const {
  for (const auto& d : mismatches) {
    if (!d.annotated) return false;
    if (!rel_close(d.corrected, d.direct, 1e-12)) return false;
  }
  return true;
}

DiscrepancyReport compare_beg_printed(const ModelSpec& m, const FiniteKernel& direct, double tol) {
  const auto classes = enumerate_beg_classes(m.n);
  if (direct.size() != classes.size()) {
    throw KernelError("compare_beg_printed: kernel is not on the unsigned class set");
  }
  std::map<std::pair<int, int>, std::size_t> index;
  for (std::size_t i = 0; i < classes.size(); ++i) index[classes[i]] = i;
  auto label = [](std::pair<int, int> c) {
    return "(" + std::to_string(c.first) + "," + std::to_string(c.second) + ")";
  };
  DiscrepancyReport rep;
  for (const auto& pr : beg_printed_rates(m)) {
    const double d = direct.prob(index.at(pr.from), index.at(pr.to));
    ++rep.compared;
    if (rel_close(pr.printed, d, tol)) continue;
    Discrepancy x;
    x.family = pr.family;
    x.from = label(pr.from);
    x.to = label(pr.to);
    x.printed = pr.printed;
    x.direct = d;
    const auto& typos = beg_documented_typos();
    x.annotated = std::any_of(typos.begin(), typos.end(),
                              [&](const DocumentedTypo& t) { return t.family == pr.family; });
    x.corrected = x.annotated ? beg_corrected_rate(m, pr) : std::nan("");
    rep.mismatches.push_back(x);
  }
  return rep;
}

DiscrepancyReport compare_ising_printed(const ModelSpec& m, const FiniteKernel& direct, double tol) {
  const BirthDeathChain bd = ising_lumped_bd(m);
  if (direct.size() != bd.size()) {
    throw KernelError("compare_ising_printed: kernel is not on the unsigned class set");
  }
  DiscrepancyReport rep;
  auto cmp = [&](const char* fam, std::size_t i, std::size_t j, double printed) {
    const double d = direct.prob(i, j);
    ++rep.compared;
    if (rel_close(printed, d, tol)) return;
    rep.mismatches.push_back({fam, std::to_string(2 * i), std::to_string(2 * j), printed, d,
                              std::nan(""), false});
  };
  for (std::size_t k = 0; k < bd.size(); ++k) {
    if (k + 1 < bd.size()) cmp(k == 0 ? "up0" : "up", k, k + 1, bd.up[k]);
    if (k > 0) cmp("down", k, k - 1, bd.down[k]);
  }
  return rep;
}

void write_kernel_text(std::ostream& os, const FiniteKernel& k) {
  for (std::size_t i = 0; i < k.size(); ++i) {
    os << k.label(i) << ':';
    for (const auto& t : k.row(i)) {
      if (t.prob == 0.0 && t.to != i) continue;
      os << ' ' << k.label(t.to) << '=' << format_real(t.prob);
    }
    os << '\n';
  }
}

}  // namespace eqmix
