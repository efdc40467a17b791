#pragma once

// On-the-fly samplers for sizes where kernels cannot be materialised.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eqmix/kernel.hpp"
#include "eqmix/model.hpp"

namespace eqmix {

// xoshiro256** (Blackman & Vigna), seeded through SplitMix64.
class Rng {
 public:
  using result_type = std::uint64_t;
  explicit Rng(std::uint64_t seed = 0);
  // Stream `index` of the master seed: the master state advanced by
  // `index` jumps of 2^128 steps.
  static Rng stream(std::uint64_t master, std::uint64_t index);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next(); }
  result_type next();
  double uniform();                         // [0, 1), 53 bits
  std::uint64_t below(std::uint64_t n);     // uniform on [0, n), unbiased
  void jump();

 private:
  std::array<std::uint64_t, 4> s_{};
};

// Sequential Bose-Einstein placement: each of n balls goes into box j with
// probability (occupancy_j + 1) / (balls placed so far + k). `work`, when
// given, is incremented by the number of box inspections.
std::vector<int> bose_einstein_sample(int n, int k, Rng& rng, std::uint64_t* work = nullptr);
// Exact law of the sequential scheme by enumerating all placement paths.
std::map<std::vector<int>, double> be_placement_probabilities(int n, int k);

enum class OrbitRoute { Unranking, BoseEinstein };

// Uniform element of a signed energy class.
SpinConfiguration sample_uniform_class(const ModelSpec& m, const EnergyClass& c, Rng& rng,
                                       OrbitRoute route = OrbitRoute::Unranking,
                                       std::uint64_t* work = nullptr);

enum class Component { Local = 0, GlobalFlip = 1, Orbit = 2 };
inline constexpr std::size_t kComponents = 3;

struct CostCounters {
  std::array<std::uint64_t, kComponents> proposed{};
  std::array<std::uint64_t, kComponents> accepted{};
  std::uint64_t steps = 0;
  std::uint64_t operations = 0;  // elementary operations, see step()
};

struct ChainState {
  SpinConfiguration x;
  int s = 0;  // magnetisation (Warmup: the coordinate)
  int r = 0;  // quadrupole (BEG)
};

ChainState make_state(const ModelSpec& m, SpinConfiguration x);
ChainState random_state(const ModelSpec& m, Rng& rng);

struct StepRecord {
  Component component = Component::Local;
  bool accepted = false;
  std::uint64_t operations = 0;
};

// One Metropolis transition. Local proposals and global flips are charged N
// operations (the coordinate draw and the energy update); orbit draws are
// charged the work of the sampler used.
StepRecord step(const ModelSpec& m, ChainKind kind, ChainState& state, Rng& rng,
                OrbitRoute route = OrbitRoute::Unranking);

struct RunConfig {
  std::uint64_t steps = 100000;
  std::optional<std::uint64_t> burn_in;  // default: 10% of steps
  std::uint64_t thinning = 1;
  std::uint64_t seed = 1;
  std::uint64_t run_index = 0;
  std::string observable = "S/N";
  OrbitRoute route = OrbitRoute::Unranking;
  bool class_histogram = false;
  bool keep_trace = false;

  std::uint64_t effective_burn_in() const { return burn_in ? *burn_in : steps / 10; }
  void validate() const;
};

struct TracePoint {
  std::uint64_t step = 0;
  std::string label;
  double value = 0.0;
};

struct RunStats {
  double estimate = 0.0;
  double avar = 0.0;
  double avar_se = 0.0;
  std::size_t batches = 0;
  std::size_t batch_size = 0;
  std::size_t samples = 0;
  CostCounters cost;
  std::vector<std::uint64_t> class_counts;  // by class_table index, when requested
  std::vector<TracePoint> trace;

  double acceptance_rate(Component c) const;
};

// Observable tags: "S/N", "|S|/N", "R/N", "S", "|S|", "one", "S>0".
double observable_value(const ModelSpec& m, const std::string& tag, const ChainState& x);
void check_observable(const ModelSpec& m, const std::string& tag);

RunStats run_estimate(const ModelSpec& m, ChainKind kind, const RunConfig& cfg);

struct BatchMeans {
  double avar = 0.0;
  double se = 0.0;
  std::size_t batches = 0;
  std::size_t batch_size = 0;
};
// floor(sqrt(n)) batches of equal size; needs n >= 100.
BatchMeans batch_means_avar(const std::vector<double>& trace);

struct CostSummary {
  double ops_per_step = 0.0;
  double ops_per_step_over_n = 0.0;
  std::array<double, kComponents> frequency{};
};
CostSummary cost_profile(const RunStats& stats, int n);

// JSON record of a run (schema "eqmix.runstats/1").
std::string run_stats_json(const ModelSpec& m, ChainKind kind, const RunConfig& cfg,
                           const RunStats& s);
void write_trace_csv(std::ostream& os, const RunStats& s);

}  // namespace eqmix
