#include "eqmix/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "eqmix/numeric.hpp"

namespace eqmix {

namespace {

auto order_key(const EnergyClass& c) { return std::make_tuple(c.r, c.s, c.sign); }

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Warmup: return "warmup";
    case ModelKind::Ising: return "ising";
    case ModelKind::Beg: return "beg";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "warmup") return ModelKind::Warmup;
  if (name == "ising") return ModelKind::Ising;
  if (name == "beg") return ModelKind::Beg;
  throw ValidationError("unknown model '" + name + "' (expected warmup, ising or beg)");
}

ModelSpec ModelSpec::warmup(int n, double theta, double epsilon) {
  ModelSpec m;
  m.kind = ModelKind::Warmup;
  m.n = n;
  m.theta = theta;
  m.epsilon = epsilon;
  m.validate();
  return m;
}

ModelSpec ModelSpec::ising(int n, double beta, double p1, double p2) {
  ModelSpec m;
  m.kind = ModelKind::Ising;
  m.n = n;
  m.beta = beta;
  m.p1 = p1;
  m.p2 = p2;
  m.validate();
  return m;
}

ModelSpec ModelSpec::beg(int n, double beta, double coupling, double p1, double p2) {
  ModelSpec m;
  m.kind = ModelKind::Beg;
  m.n = n;
  m.beta = beta;
  m.coupling = coupling;
  m.p1 = p1;
  m.p2 = p2;
  m.validate();
  return m;
}

void ModelSpec::validate() const {
  require(n >= 1, "N must be a positive integer");
  if (kind == ModelKind::Warmup) {
    require(std::isfinite(theta) && theta > 1.0, "theta must be > 1");
    require(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0,1)");
    return;
  }
  if (n % 2 != 0) {
    throw OddSizeError(to_string(kind) + " model requires an even N (got " +
                       std::to_string(n) + ")");
  }
  // beta = 0 is admitted as the infinite-temperature limit.
  require(std::isfinite(beta) && beta >= 0.0, "beta must be >= 0");
  if (kind == ModelKind::Beg) {
    require(std::isfinite(coupling) && coupling >= 0.0, "K must be >= 0");
  }
  require(p1 > 0.0 && p1 < 1.0, "p1 must lie in (0,1)");
  require(p2 > 0.0 && p2 < 1.0, "p2 must lie in (0,1)");
  require(p1 + p2 < 1.0, "p1 + p2 must be < 1");
  if (a) require(*a > 0.0, "a must be positive");
}

void check_configuration(const ModelSpec& m, const SpinConfiguration& x) {
  if (x.kind != m.kind) throw ValidationError("configuration/model kind mismatch");
  if (m.kind == ModelKind::Warmup) {
    require(x.values.size() == 1, "warmup state is a single coordinate");
    require(std::abs(x.values[0]) <= m.n, "warmup coordinate outside [-N,N]");
    return;
  }
  require(x.values.size() == static_cast<std::size_t>(m.n),
          "configuration length differs from N");
  for (int v : x.values) {
    if (m.kind == ModelKind::Ising) {
      require(v == 1 || v == -1, "Ising spins must be +1 or -1");
    } else {
      require(v >= -1 && v <= 1, "BEG spins must be -1, 0 or +1");
    }
  }
}

std::string EnergyClass::label() const {
  const char* sg = sign > 0 ? "+" : (sign < 0 ? "-" : "0");
  switch (kind) {
    case ModelKind::Warmup: return "x=" + std::to_string(s) + sg;
    case ModelKind::Ising: return "S=" + std::to_string(s) + sg;
    case ModelKind::Beg:
      return "s=" + std::to_string(s) + ",r=" + std::to_string(r) + sg;
  }
  return "?";
}

int magnetization(const SpinConfiguration& x) {
  int s = 0;
  for (int v : x.values) s += v;
  return s;
}

int quadrupole(const SpinConfiguration& x) {
  if (x.kind != ModelKind::Beg) throw ValidationError("quadrupole is defined for BEG only");
  int r = 0;
  for (int v : x.values) r += v * v;
  return r;
}

double log_weight_of_stats(const ModelSpec& m, int s, int r) {
  const double sd = s;
  switch (m.kind) {
    case ModelKind::Warmup: return std::abs(sd) * std::log(m.theta);
    case ModelKind::Ising: return m.beta * sd * sd / (2.0 * m.n);
    case ModelKind::Beg: return -m.beta * r + m.coupling * m.beta * sd * sd / m.n;
  }
  return 0.0;
}

double log_weight(const ModelSpec& m, const SpinConfiguration& x) {
  check_configuration(m, x);
  const int s = magnetization(x);
  const int r = m.kind == ModelKind::Beg ? quadrupole(x) : 0;
  return log_weight_of_stats(m, s, r);
}

EnergyClass class_of(const ModelSpec& m, const SpinConfiguration& x) {
  check_configuration(m, x);
  const int s = magnetization(x);
  const int sign = s > 0 ? 1 : (s < 0 ? -1 : 0);
  const int r = m.kind == ModelKind::Beg ? quadrupole(x) : 0;
  return {m.kind, std::abs(s), r, sign};
}

ClassTable::ClassTable(ModelSpec spec, std::vector<ClassEntry> entries)
    : spec_(std::move(spec)), entries_(std::move(entries)) {
  std::vector<double> w(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) w[i] = entries_[i].log_class_weight;
  log_partition_ = log_sum_exp(w);
}

double ClassTable::log_probability(std::size_t i) const {
  return entries_.at(i).log_class_weight - log_partition_;
}

double ClassTable::probability(std::size_t i) const { return std::exp(log_probability(i)); }

std::optional<std::size_t> ClassTable::find(const EnergyClass& c) const {
  auto it = std::lower_bound(
      entries_.begin(), entries_.end(), c,
      [](const ClassEntry& e, const EnergyClass& k) { return order_key(e.cls) < order_key(k); });
  if (it == entries_.end() || it->cls != c) return std::nullopt;
  return static_cast<std::size_t>(it - entries_.begin());
}

std::size_t ClassTable::index_of(const EnergyClass& c) const {
  auto i = find(c);
  if (!i) throw ValidationError("class " + c.label() + " is not in the table");
  return *i;
}

std::vector<std::pair<int, int>> enumerate_beg_classes(int n) {
  if (n < 2 || n % 2 != 0) throw OddSizeError("enumerate_beg_classes: N must be even and >= 2");
  std::vector<std::pair<int, int>> out;
  for (int r = 0; r <= n; ++r) {
    for (int s = r % 2; s <= r; s += 2) out.emplace_back(s, r);
  }
  return out;
}

ClassTable class_table(const ModelSpec& m) {
  m.validate();
  std::vector<ClassEntry> entries;
  auto push = [&](EnergyClass c, double log_card) {
    ClassEntry e;
    e.cls = c;
    e.log_cardinality = log_card;
    e.log_weight_per_state = log_weight_of_stats(m, c.sign * c.s, c.r);
    e.log_class_weight = e.log_cardinality + e.log_weight_per_state;
    entries.push_back(e);
  };
  switch (m.kind) {
    case ModelKind::Warmup:
      push({m.kind, 0, 0, 0}, 0.0);
      for (int i = 1; i <= m.n; ++i) {
        push({m.kind, i, 0, -1}, 0.0);
        push({m.kind, i, 0, +1}, 0.0);
      }
      break;
    case ModelKind::Ising:
      push({m.kind, 0, 0, 0}, log_binomial(m.n, m.n / 2));
      for (int i = 2; i <= m.n; i += 2) {
        const double lc = log_binomial(m.n, (m.n - i) / 2);
        push({m.kind, i, 0, -1}, lc);
        push({m.kind, i, 0, +1}, lc);
      }
      break;
    case ModelKind::Beg: {
      const std::size_t count = static_cast<std::size_t>(m.n + 1) * (m.n + 1);
      if (count > kMaxClassCount) throw CapacityError("class_table: N too large for the class list");
      for (auto [s, r] : enumerate_beg_classes(m.n)) {
        const double lc = log_binomial(m.n, r) + log_binomial(r, (r - s) / 2);
        if (s == 0) {
          push({m.kind, 0, r, 0}, lc);
        } else {
          push({m.kind, s, r, -1}, lc);
          push({m.kind, s, r, +1}, lc);
        }
      }
      break;
    }
  }
  return ClassTable(m, std::move(entries));
}

std::vector<double> ising_log_q(const ModelSpec& m) {
  if (m.kind != ModelKind::Ising) throw ValidationError("ising_log_q: Ising model required");
  m.validate();
  std::vector<double> q;
  for (int i = 0; i <= m.n; i += 2) {
    q.push_back(log_binomial(m.n, (m.n - i) / 2) + m.beta * i * i / (2.0 * m.n));
  }
  return q;
}

std::vector<double> beg_row_log_q(const ModelSpec& m) {
  if (m.kind != ModelKind::Beg) throw ValidationError("beg_row_log_q: BEG model required");
  const ClassTable table = class_table(m);
  std::vector<std::vector<double>> rows(m.n + 1);
  for (const auto& e : table.entries()) rows[e.cls.r].push_back(e.log_class_weight);
  std::vector<double> q(m.n + 1);
  for (int r = 0; r <= m.n; ++r) q[r] = log_sum_exp(rows[r]);
  return q;
}

std::vector<double> beg_row_log_q_closed_form(const ModelSpec& m) {
  if (m.kind != ModelKind::Beg) throw ValidationError("beg_row_log_q_closed_form: BEG model required");
  m.validate();
  return beg_row_log_q_profile(m.n, m.beta, m.coupling);
}

std::vector<double> beg_row_log_q_profile(int n, double beta, double coupling) {
  if (n < 1) throw ValidationError("beg_row_log_q_profile: N must be positive");
  if (!(std::isfinite(beta) && beta >= 0.0 && std::isfinite(coupling) && coupling >= 0.0)) {
    throw ValidationError("beg_row_log_q_profile: beta and K must be finite and >= 0");
  }
  const double kb = coupling * beta / n;
  std::vector<double> q(n + 1);
  for (int r = 0; r <= n; ++r) {
    std::vector<double> terms;
    if (r % 2 == 0) terms.push_back(log_binomial(r, r / 2));
    for (int i = 0; 2 * i < r; ++i) {
      terms.push_back(std::log(2.0) + log_binomial(r, i) + kb * (r - 2 * i) * (r - 2 * i));
    }
    q[r] = log_binomial(n, r) - beta * r + log_sum_exp(terms);
  }
  return q;
}

}  // namespace eqmix
