#include "eqmix/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

#include <json.hpp>

#include "eqmix/numeric.hpp"

namespace eqmix {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

// Marks `k` of the `n` slots, uniformly over all C(n, k) choices.
std::vector<char> choose_subset(int n, int k, Rng& rng, std::uint64_t* work) {
  std::vector<char> pick(static_cast<std::size_t>(n), 0);
  int need = k;
  for (int i = 0; i < n && need > 0; ++i) {
    if (rng.below(static_cast<std::uint64_t>(n - i)) < static_cast<std::uint64_t>(need)) {
      pick[i] = 1;
      --need;
    }
    if (work) ++*work;
  }
  return pick;
}

}  // namespace

// ---- Rng -----------------------------------------------------------------

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& v : s_) v = splitmix64(x);
}

Rng Rng::stream(std::uint64_t master, std::uint64_t index) {
  Rng r(master);
  for (std::uint64_t i = 0; i < index; ++i) r.jump();
  return r;
}

Rng::result_type Rng::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ValidationError("Rng::below: empty range");
  // Lemire's multiply-shift with rejection.
  unsigned __int128 m = static_cast<unsigned __int128>(next()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

void Rng::jump() {
  static constexpr std::uint64_t kJump[] = {0x180ec6d33cfd0abaULL, 0xd5a61266f0c9392cULL,
                                            0xa9582618e03fc9aaULL, 0x39abdc4529b1661cULL};
  std::array<std::uint64_t, 4> acc{};
  for (std::uint64_t j : kJump) {
    for (int b = 0; b < 64; ++b) {
      if (j & (std::uint64_t{1} << b)) {
        for (int i = 0; i < 4; ++i) acc[i] ^= s_[i];
      }
      next();
    }
  }
  s_ = acc;
}

// ---- Bose-Einstein -------------------------------------------------------

std::vector<int> bose_einstein_sample(int n, int k, Rng& rng, std::uint64_t* work) {
  if (k < 1) throw ValidationError("bose_einstein_sample: need at least one box");
  if (n < 0) throw ValidationError("bose_einstein_sample: negative ball count");
  std::vector<int> occ(static_cast<std::size_t>(k), 0);
  for (int t = 0; t < n; ++t) {
    // Box j has weight occ[j] + 1 out of t + k.
    std::uint64_t u = rng.below(static_cast<std::uint64_t>(t + k));
    std::size_t j = 0;
    while (true) {
      if (work) ++*work;
      const auto w = static_cast<std::uint64_t>(occ[j] + 1);
      if (u < w) break;
      u -= w;
      ++j;
    }
    ++occ[j];
  }
  return occ;
}

std::map<std::vector<int>, double> be_placement_probabilities(int n, int k) {
  if (k < 1 || n < 0) throw ValidationError("be_placement_probabilities: need n >= 0, k >= 1");
  std::map<std::vector<int>, double> out;
  std::vector<int> occ(static_cast<std::size_t>(k), 0);
  std::function<void(int, double)> rec = [&](int t, double prob) {
    if (t == n) {
      out[occ] += prob;
      return;
    }
    for (int j = 0; j < k; ++j) {
      const double p = static_cast<double>(occ[j] + 1) / (t + k);
      ++occ[j];
      rec(t + 1, prob * p);
      --occ[j];
    }
  };
  rec(0, 1.0);
  return out;
}

SpinConfiguration sample_uniform_class(const ModelSpec& m, const EnergyClass& c, Rng& rng,
                                       OrbitRoute route, std::uint64_t* work) {
  if (c.kind != m.kind) throw ValidationError("sample_uniform_class: class/model mismatch");
  SpinConfiguration x;
  x.kind = m.kind;
  const int sign = c.sign == 0 ? 1 : c.sign;
  if ((c.s == 0) != (c.sign == 0)) throw ValidationError("class sign must be 0 exactly when s = 0");
  switch (m.kind) {
    case ModelKind::Warmup:
      if (c.s > m.n) throw ValidationError("warmup class outside [-N,N]");
      x.values = {sign * c.s};
      if (work) ++*work;
      return x;
    case ModelKind::Ising: {
      if (c.s > m.n || (m.n - c.s) % 2 != 0) throw ValidationError("not an Ising class for this N");
      const int major = (m.n + c.s) / 2;  // spins carrying the sign of S
      const int minor = m.n - major;
      x.values.assign(static_cast<std::size_t>(m.n), sign);
      if (route == OrbitRoute::BoseEinstein) {
        // Occupancies are the runs of majority spins between minority spins.
        const auto occ = bose_einstein_sample(major, minor + 1, rng, work);
        std::size_t pos = 0;
        for (int b = 0; b < minor + 1; ++b) {
          pos += static_cast<std::size_t>(occ[b]);
          if (b < minor) x.values[pos++] = -sign;
        }
      } else {
        const auto pick = choose_subset(m.n, minor, rng, work);
        for (int i = 0; i < m.n; ++i) {
          if (pick[i]) x.values[i] = -sign;
        }
      }
      return x;
    }
    case ModelKind::Beg: {
      if (c.s > c.r || c.r > m.n || (c.r - c.s) % 2 != 0) {
        throw ValidationError("not a BEG class for this N");
      }
      x.values.assign(static_cast<std::size_t>(m.n), 0);
      const auto nonzero = choose_subset(m.n, c.r, rng, work);
      const int minor = (c.r - c.s) / 2;
      const auto flip = choose_subset(c.r, minor, rng, work);
      int k = 0;
      for (int i = 0; i < m.n; ++i) {
        if (!nonzero[i]) continue;
        x.values[i] = flip[k++] ? -sign : sign;
      }
      return x;
    }
  }
  return x;
}

// ---- stepping ------------------------------------------------------------

ChainState make_state(const ModelSpec& m, SpinConfiguration x) {
  check_configuration(m, x);
  ChainState st;
  st.s = magnetization(x);
  st.r = m.kind == ModelKind::Beg ? quadrupole(x) : 0;
  st.x = std::move(x);
  return st;
}

ChainState random_state(const ModelSpec& m, Rng& rng) {
  SpinConfiguration x;
  x.kind = m.kind;
  switch (m.kind) {
    case ModelKind::Warmup:
      x.values = {static_cast<int>(rng.below(2 * static_cast<std::uint64_t>(m.n) + 1)) - m.n};
      break;
    case ModelKind::Ising:
      for (int i = 0; i < m.n; ++i) x.values.push_back(rng.below(2) ? 1 : -1);
      break;
    case ModelKind::Beg:
      for (int i = 0; i < m.n; ++i) x.values.push_back(static_cast<int>(rng.below(3)) - 1);
      break;
  }
  return make_state(m, std::move(x));
}

StepRecord step(const ModelSpec& m, ChainKind kind, ChainState& st, Rng& rng, OrbitRoute route) {
  StepRecord rec;
  const auto n = static_cast<std::uint64_t>(m.n);
  auto metropolis = [&](int s2, int r2) {
    const double d = log_weight_of_stats(m, s2, r2) - log_weight_of_stats(m, st.s, st.r);
    return d >= 0.0 || rng.uniform() < std::exp(d);
  };

  if (kind == ChainKind::SmallWorld && m.kind != ModelKind::Warmup) {
    throw ValidationError("small-world chain is defined for the warmup model only");
  }
  Component comp = Component::Local;
  if (kind != ChainKind::Naive) {
    if (m.kind == ModelKind::Warmup) {
      comp = rng.uniform() < 1.0 - m.epsilon ? Component::Local : Component::GlobalFlip;
    } else {
      const double u = rng.uniform();
      if (u < m.p1) {
        comp = Component::Local;
      } else if (st.s != 0 && u < m.p1 + m.p2) {
        comp = Component::GlobalFlip;
      } else {
        comp = Component::Orbit;
      }
    }
  }
  rec.component = comp;

  switch (comp) {
    case Component::Local: {
      rec.operations = n;
      if (m.kind == ModelKind::Warmup) {
        const int x2 = st.s + (rng.below(2) ? 1 : -1);
        if (std::abs(x2) > m.n) {
          rec.accepted = true;  // holding at the boundary
          break;
        }
        if (metropolis(x2, 0)) {
          st.s = x2;
          st.x.values[0] = x2;
          rec.accepted = true;
        }
      } else if (m.kind == ModelKind::Ising) {
        const auto j = static_cast<std::size_t>(rng.below(n));
        const int s2 = st.s - 2 * st.x.values[j];
        if (metropolis(s2, 0)) {
          st.x.values[j] = -st.x.values[j];
          st.s = s2;
          rec.accepted = true;
        }
      } else {
        const auto j = static_cast<std::size_t>(rng.below(n));
        const int old = st.x.values[j];
        int v = old + (rng.below(2) ? 1 : -1);
        if (v == 2) v = -1;
        if (v == -2) v = 1;
        const int s2 = st.s - old + v;
        const int r2 = st.r - old * old + v * v;
        if (metropolis(s2, r2)) {
          st.x.values[j] = v;
          st.s = s2;
          st.r = r2;
          rec.accepted = true;
        }
      }
      break;
    }
    case Component::GlobalFlip:
      for (int& v : st.x.values) v = -v;
      st.s = -st.s;
      rec.operations = m.kind == ModelKind::Warmup ? 1 : n;
      rec.accepted = true;
      break;
    case Component::Orbit: {
      const int sign = st.s > 0 ? 1 : (st.s < 0 ? -1 : 0);
      const EnergyClass c{m.kind, std::abs(st.s), st.r, sign};
      std::uint64_t work = 0;
      st.x = sample_uniform_class(m, c, rng, route, &work);
      rec.operations = work;
      rec.accepted = true;
      break;
    }
  }
  return rec;
}

// ---- runs ----------------------------------------------------------------

void RunConfig::validate() const {
  if (thinning < 1) throw ValidationError("thinning must be >= 1");
  if (steps <= effective_burn_in()) throw ValidationError("steps must exceed burn-in");
}

double RunStats::acceptance_rate(Component c) const {
  const auto i = static_cast<std::size_t>(c);
  if (cost.proposed[i] == 0) return 0.0;
  return static_cast<double>(cost.accepted[i]) / static_cast<double>(cost.proposed[i]);
}

void check_observable(const ModelSpec& m, const std::string& tag) {
  static const std::vector<std::string> tags = {"S/N", "|S|/N", "R/N", "S", "|S|", "one", "S>0"};
  if (std::find(tags.begin(), tags.end(), tag) == tags.end()) {
    throw ValidationError("unknown observable '" + tag + "'");
  }
  if (tag == "R/N" && m.kind != ModelKind::Beg) {
    throw ValidationError("observable R/N is defined for the BEG model only");
  }
}

double observable_value(const ModelSpec& m, const std::string& tag, const ChainState& x) {
  const double n = m.n;
  if (tag == "S/N") return x.s / n;
  if (tag == "|S|/N") return std::abs(x.s) / n;
  if (tag == "R/N") return x.r / n;
  if (tag == "S") return x.s;
  if (tag == "|S|") return std::abs(x.s);
  if (tag == "one") return 1.0;
  if (tag == "S>0") return x.s > 0 ? 1.0 : 0.0;
  throw ValidationError("unknown observable '" + tag + "'");
}

RunStats run_estimate(const ModelSpec& m, ChainKind kind, const RunConfig& cfg) {
  m.validate();
  cfg.validate();
  check_observable(m, cfg.observable);
  Rng rng = Rng::stream(cfg.seed, cfg.run_index);
  ChainState st = random_state(m, rng);
  RunStats out;
  std::optional<ClassTable> table;
  if (cfg.class_histogram) {
    table.emplace(class_table(m));
    out.class_counts.assign(table->size(), 0);
  }
  const std::uint64_t burn = cfg.effective_burn_in();
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>((cfg.steps - burn) / cfg.thinning + 1));
  for (std::uint64_t t = 0; t < cfg.steps; ++t) {
    const StepRecord rec = step(m, kind, st, rng, cfg.route);
    const auto c = static_cast<std::size_t>(rec.component);
    ++out.cost.proposed[c];
    if (rec.accepted) ++out.cost.accepted[c];
    out.cost.operations += rec.operations;
    ++out.cost.steps;
    if (t < burn || (t - burn) % cfg.thinning != 0) continue;
    const double v = observable_value(m, cfg.observable, st);
    values.push_back(v);
    if (table || cfg.keep_trace) {
      const int sign = st.s > 0 ? 1 : (st.s < 0 ? -1 : 0);
      const EnergyClass cls{m.kind, std::abs(st.s), st.r, sign};
      if (table) ++out.class_counts[table->index_of(cls)];
      if (cfg.keep_trace) out.trace.push_back({t, cls.label(), v});
    }
  }
  out.samples = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  out.estimate = values.empty() ? 0.0 : sum / static_cast<double>(values.size());
  if (values.size() >= 100) {
    const BatchMeans bm = batch_means_avar(values);
    out.avar = bm.avar;
    out.avar_se = bm.se;
    out.batches = bm.batches;
    out.batch_size = bm.batch_size;
  } else {
    out.avar = std::nan("");
    out.avar_se = std::nan("");
  }
  return out;
}

BatchMeans batch_means_avar(const std::vector<double>& trace) {
  if (trace.size() < 100) throw ValidationError("batch_means_avar: trace shorter than 100 samples");
  BatchMeans bm;
  bm.batches = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(trace.size()))));
  bm.batch_size = trace.size() / bm.batches;
  std::vector<double> means(bm.batches, 0.0);
  for (std::size_t b = 0; b < bm.batches; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < bm.batch_size; ++i) s += trace[b * bm.batch_size + i];
    means[b] = s / static_cast<double>(bm.batch_size);
  }
  double grand = 0.0;
  for (double v : means) grand += v;
  grand /= static_cast<double>(bm.batches);
  double var = 0.0;
  for (double v : means) var += (v - grand) * (v - grand);
  var /= static_cast<double>(bm.batches - 1);
  bm.avar = static_cast<double>(bm.batch_size) * var;
  bm.se = bm.avar * std::sqrt(2.0 / static_cast<double>(bm.batches - 1));
  return bm;
}

CostSummary cost_profile(const RunStats& stats, int n) {
  CostSummary c;
  if (stats.cost.steps == 0) return c;
  const double steps = static_cast<double>(stats.cost.steps);
  c.ops_per_step = static_cast<double>(stats.cost.operations) / steps;
  c.ops_per_step_over_n = c.ops_per_step / n;
  for (std::size_t i = 0; i < kComponents; ++i) {
    c.frequency[i] = static_cast<double>(stats.cost.proposed[i]) / steps;
  }
  return c;
}

std::string run_stats_json(const ModelSpec& m, ChainKind kind, const RunConfig& cfg,
                           const RunStats& s) {
  using nlohmann::ordered_json;
  auto num = [](double v) -> ordered_json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  static const char* names[] = {"local", "global_flip", "orbit"};
  ordered_json comps = ordered_json::object();
  for (std::size_t i = 0; i < kComponents; ++i) {
    comps[names[i]] = {{"proposed", s.cost.proposed[i]},
                       {"accepted", s.cost.accepted[i]},
                       {"acceptance_rate", num(s.acceptance_rate(static_cast<Component>(i)))}};
  }
  const CostSummary cs = cost_profile(s, m.n);
  ordered_json j;
  j["schema"] = "eqmix.runstats/1";
  j["model"] = to_string(m.kind);
  j["chain"] = to_string(kind);
  j["n"] = m.n;
  j["beta"] = m.beta;
  j["k"] = m.coupling;
  j["theta"] = m.theta;
  j["p1"] = m.p1;
  j["p2"] = m.p2;
  j["epsilon"] = m.epsilon;
  j["observable"] = cfg.observable;
  j["steps"] = cfg.steps;
  j["burn_in"] = cfg.effective_burn_in();
  j["thinning"] = cfg.thinning;
  j["seed"] = cfg.seed;
  j["run_index"] = cfg.run_index;
  j["orbit_route"] = cfg.route == OrbitRoute::Unranking ? "unranking" : "bose-einstein";
  j["estimate"] = num(s.estimate);
  j["avar"] = num(s.avar);
  j["avar_se"] = num(s.avar_se);
  j["batches"] = s.batches;
  j["batch_size"] = s.batch_size;
  j["samples"] = s.samples;
  j["components"] = comps;
  j["operations"] = s.cost.operations;
  j["ops_per_step"] = num(cs.ops_per_step);
  j["ops_per_step_over_n"] = num(cs.ops_per_step_over_n);
  if (!s.class_counts.empty()) j["class_counts"] = s.class_counts;
  return j.dump(2);
}

void write_trace_csv(std::ostream& os, const RunStats& s) {
  os << "# eqmix.trace/1\nstep,class,value\n";
  for (const auto& p : s.trace) os << p.step << ",\"" << p.label << "\"," << format_real(p.value) << '\n';
}

}  // namespace eqmix
