#include "cli.hpp"

#include <omp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/version.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include "eqmix/kernel.hpp"
#include "eqmix/numeric.hpp"
#include "eqmix/spectral.hpp"

#ifndef EQMIX_VERSION
#define EQMIX_VERSION "0.0.0"
#endif

namespace eqmix::cli {

namespace fs = std::filesystem;

const std::vector<Key>& schema() {
  using V = ValueType;
  static const std::vector<Key> keys = {
      {"model", "--model", V::Enum, "", {"", "ising", "beg", "warmup"}, "model: ising, beg or warmup"},
      {"seed", "--seed", V::Int, "1", {}, "master seed"},
      {"threads", "--threads", V::Int, "0", {}, "worker threads (0: OpenMP default, 1: serial)"},
      {"grid.n", "--n", V::IntList, "", {}, "system sizes, e.g. 10..60..2"},
      {"grid.beta", "--beta", V::RealList, "1", {}, "inverse temperatures"},
      {"grid.k", "--k", V::RealList, "1", {}, "BEG couplings K"},
      {"grid.theta", "--theta", V::RealList, "2", {}, "warmup peak ratios"},
      {"grid.p1", "--p1", V::RealList, "0.5", {}, "local-move weights"},
      {"grid.p2", "--p2", V::RealList, "0.25", {}, "global-flip weights"},
      {"grid.epsilon", "--epsilon", V::RealList, "0.3", {}, "warmup reflection weights"},
      {"grid.a", "--a", V::RealList, "", {}, "scaled-parameter values a"},
      {"grid.chain", "--chain", V::ChainList, "equi-energy", {}, "naive, equi-energy, small-world"},
      {"grid.slow_cells", "--slow-cells", V::PairList, "3:5", {}, "beta:K pairs asserted slow"},
      {"grid.full_check_states", "--full-check-states", V::Int, "800", {},
       "largest full space solved for containment checks"},
      {"spectral.precision", "--precision", V::Enum, "auto", {"auto", "double", "multi"},
       "arithmetic for eigensolves"},
      {"spectral.digits", "--digits", V::Enum, "50", {"50", "100", "200", "400"},
       "decimal digits for multi precision"},
      {"spectral.dense_limit", "--dense-limit", V::Int, "6000", {}, "largest dense eigensolve"},
      {"run.steps", "--steps", V::Count, "100000", {}, "chain steps (1e6 accepted)"},
      {"run.burn_in", "--burn-in", V::Count, "", {}, "discarded steps (default 10%)"},
      {"run.thinning", "--thinning", V::Count, "1", {}, "keep every k-th step"},
      {"run.runs", "--runs", V::Count, "1", {}, "independent runs"},
      {"run.observable", "--observable", V::Enum, "S/N", {"S/N", "|S|/N", "R/N", "S", "|S|", "one", "S>0"},
       "estimated observable"},
      {"run.route", "--route", V::Enum, "unranking", {"unranking", "bose-einstein"}, "orbit sampler"},
      {"run.trace", "--trace", V::Bool, "false", {}, "write the trace CSV"},
      {"run.histogram", "--histogram", V::Bool, "false", {}, "record class visit counts"},
      {"kernel.space", "--space", V::Enum, "signed", {"signed", "unsigned", "full"},
       "state space of the exported or analysed kernel"},
  };
  return keys;
}

namespace {

std::string section_of(const std::string& name) {
  const auto dot = name.find('.');
  return dot == std::string::npos ? std::string() : name.substr(0, dot);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

long long parse_int(const std::string& t) {
  long long v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ConfigError("'" + t + "' is not an integer");
  }
  return v;
}

double parse_real(const std::string& t) {
  double v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(v)) {
    throw ConfigError("'" + t + "' is not a finite number");
  }
  return v;
}

bool parse_bool(const std::string& t) {
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("'" + t + "' is not a boolean");
}

std::vector<std::pair<double, double>> parse_pairs(const std::string& text) {
  std::vector<std::pair<double, double>> out;
  if (trim(text).empty()) return out;
  for (const auto& item : split(text, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 2) throw ConfigError("'" + item + "' is not a beta:K pair");
    out.emplace_back(parse_real(parts[0]), parse_real(parts[1]));
  }
  return out;
}

std::vector<ChainKind> parse_chains(const std::string& text) {
  std::vector<ChainKind> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_chain_kind(item));
  if (out.empty()) throw ConfigError("empty chain list");
  return out;
}

}  // namespace

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  if (trim(text).empty()) return out;
  for (const auto& item : split(text, ',')) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(static_cast<int>(parse_int(item)));
      continue;
    }
    const std::string rest = item.substr(dots + 2);
    const auto dots2 = rest.find("..");
    const long long lo = parse_int(item.substr(0, dots));
    const long long hi = parse_int(dots2 == std::string::npos ? rest : rest.substr(0, dots2));
    const long long step = dots2 == std::string::npos ? 1 : parse_int(rest.substr(dots2 + 2));
    if (step <= 0 || hi < lo) throw ConfigError("bad range '" + item + "'");
    if ((hi - lo) / step > 1'000'000) throw ConfigError("range '" + item + "' is too long");
    for (long long v = lo; v <= hi; v += step) out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (const auto& item : split(text, ',')) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_real(item));
      continue;
    }
    const std::string rest = item.substr(dots + 2);
    const auto dots2 = rest.find("..");
    if (dots2 == std::string::npos) throw ConfigError("real range '" + item + "' needs a step");
    const double lo = parse_real(item.substr(0, dots));
    const double hi = parse_real(rest.substr(0, dots2));
    const double step = parse_real(rest.substr(dots2 + 2));
    if (!(step > 0.0) || hi < lo) throw ConfigError("bad range '" + item + "'");
    const long long count = std::llround(std::floor((hi - lo) / step + 1e-9)) + 1;
    if (count > 1'000'000) throw ConfigError("range '" + item + "' is too long");
    for (long long i = 0; i < count; ++i) out.push_back(lo + static_cast<double>(i) * step);
  }
  return out;
}

std::uint64_t parse_count(const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw ConfigError("'" + t + "' is not a count");
  }
  if (!(v >= 0.0 && v <= 9.0e18) || v != std::floor(v)) {
    throw ConfigError("'" + t + "' is not a nonnegative integer count");
  }
  return static_cast<std::uint64_t>(v);
}

void check_value(const Key& key, const std::string& value) {
  try {
    switch (key.type) {
      case ValueType::Text: break;
      case ValueType::Enum:
        if (std::find(key.choices.begin(), key.choices.end(), value) == key.choices.end()) {
          throw ConfigError("'" + value + "' is not one of the allowed values");
        }
        break;
      case ValueType::Int:
        if (parse_int(value) < 0) throw ConfigError("must be nonnegative");
        break;
      case ValueType::Count:
        if (!(value.empty() && key.fallback.empty())) parse_count(value);
        break;
      case ValueType::Real: parse_real(value); break;
      case ValueType::IntList: parse_int_list(value); break;
      case ValueType::RealList: parse_real_list(value); break;
      case ValueType::ChainList: parse_chains(value); break;
      case ValueType::PairList: parse_pairs(value); break;
      case ValueType::Bool: parse_bool(value); break;
    }
  } catch (const ValidationError& e) {
    throw ConfigError("key '" + key.name + "': " + e.what());
  }
}

Settings default_settings() {
  Settings s;
  for (const auto& k : schema()) s[k.name] = k.fallback;
  return s;
}

Settings load_config(const std::string& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config " + path + ", line " + std::to_string(e.line()) + ": " + e.message());
  }
  Settings s;
  auto take = [&](const std::string& name, const std::string& value) {
    const Key* key = nullptr;
    for (const auto& k : schema()) {
      if (k.name == name) key = &k;
    }
    if (!key) throw ConfigError("config " + path + ": unknown key '" + name + "'");
    const std::string v = trim(value);
    check_value(*key, v);
    s[name] = v;
  };
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      take(name, node.data());
      continue;
    }
    for (const auto& [sub, leaf] : node) {
      if (!leaf.empty()) throw ConfigError("config " + path + ": nested section under '" + name + "'");
      take(name + "." + sub, leaf.data());
    }
  }
  return s;
}

namespace {

const std::string& get(const Settings& s, const std::string& key) {
  const auto it = s.find(key);
  if (it == s.end()) throw ConfigError("missing key '" + key + "'");
  return it->second;
}

SpectralOptions spectral_options(const Settings& s) {
  SpectralOptions o;
  const std::string& p = get(s, "spectral.precision");
  o.precision = p == "double" ? Precision::Double : p == "multi" ? Precision::Multi : Precision::Auto;
  o.digits = static_cast<int>(parse_int(get(s, "spectral.digits")));
  o.dense_limit = static_cast<std::size_t>(parse_int(get(s, "spectral.dense_limit")));
  return o;
}

Exec exec_of(const Settings& s) { return parse_int(get(s, "threads")) == 1 ? Exec::Serial : Exec::Parallel; }

template <class T>
T single(const std::vector<T>& v, const std::string& key) {
  if (v.size() != 1) throw ConfigError("key '" + key + "' must hold exactly one value here");
  return v.front();
}

}  // namespace

ScanGrid make_grid(const Settings& s, ModelKind kind) {
  ScanGrid g;
  g.kind = kind;
  g.ns = parse_int_list(get(s, "grid.n"));
  if (g.ns.empty()) throw ConfigError("key 'grid.n' (--n) is required");
  g.betas = parse_real_list(get(s, "grid.beta"));
  g.ks = parse_real_list(get(s, "grid.k"));
  g.thetas = parse_real_list(get(s, "grid.theta"));
  g.p1s = parse_real_list(get(s, "grid.p1"));
  g.p2s = parse_real_list(get(s, "grid.p2"));
  g.epsilons = parse_real_list(get(s, "grid.epsilon"));
  g.as = parse_real_list(get(s, "grid.a"));
  g.chains = parse_chains(get(s, "grid.chain"));
  g.slow_cells = parse_pairs(get(s, "grid.slow_cells"));
  g.full_check_states = static_cast<std::size_t>(parse_int(get(s, "grid.full_check_states")));
  g.spectral = spectral_options(s);
  g.exec = exec_of(s);
  g.spectral.exec = g.exec;
  return g;
}

ModelSpec make_model(const Settings& s) {
  const std::string& name = get(s, "model");
  if (name.empty()) throw ConfigError("key 'model' (--model) is required");
  const ModelKind kind = parse_model_kind(name);
  const int n = single(parse_int_list(get(s, "grid.n")), "grid.n");
  switch (kind) {
    case ModelKind::Warmup:
      return ModelSpec::warmup(n, single(parse_real_list(get(s, "grid.theta")), "grid.theta"),
                               single(parse_real_list(get(s, "grid.epsilon")), "grid.epsilon"));
    case ModelKind::Ising:
      return ModelSpec::ising(n, single(parse_real_list(get(s, "grid.beta")), "grid.beta"),
                              single(parse_real_list(get(s, "grid.p1")), "grid.p1"),
                              single(parse_real_list(get(s, "grid.p2")), "grid.p2"));
    case ModelKind::Beg:
      return ModelSpec::beg(n, single(parse_real_list(get(s, "grid.beta")), "grid.beta"),
                            single(parse_real_list(get(s, "grid.k")), "grid.k"),
                            single(parse_real_list(get(s, "grid.p1")), "grid.p1"),
                            single(parse_real_list(get(s, "grid.p2")), "grid.p2"));
  }
  throw ConfigError("unknown model");
}

RunConfig make_run(const Settings& s) {
  RunConfig c;
  c.steps = parse_count(get(s, "run.steps"));
  const std::string& burn = get(s, "run.burn_in");
  if (!burn.empty()) c.burn_in = parse_count(burn);
  c.thinning = parse_count(get(s, "run.thinning"));
  c.seed = static_cast<std::uint64_t>(parse_int(get(s, "seed")));
  c.observable = get(s, "run.observable");
  c.route = get(s, "run.route") == "bose-einstein" ? OrbitRoute::BoseEinstein : OrbitRoute::Unranking;
  c.class_histogram = parse_bool(get(s, "run.histogram"));
  c.keep_trace = parse_bool(get(s, "run.trace"));
  c.validate();
  return c;
}

namespace {

// Sections each subcommand reads; top-level keys ("") always apply.
const std::map<std::string, std::set<std::string>>& sections() {
  static const std::map<std::string, std::set<std::string>> m = {
      {"gap-scan", {"", "grid", "spectral"}},
      {"verify", {"", "grid", "spectral"}},
      {"unimodality-scan", {"", "grid"}},
      {"simulate", {"", "grid", "run"}},
      {"conductance", {"", "grid", "spectral", "kernel"}},
      {"export-kernel", {"", "grid", "kernel"}},
  };
  return m;
}

class Output {
 public:
  explicit Output(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) throw ConfigError("cannot create output directory " + dir_.string());
  }

  void write(const std::string& name, const std::string& content) {
    const fs::path p = dir_ / name;
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + p.string());
    f << content;
    f.close();
    if (!f) throw ConfigError("write failed for " + p.string());
    files_.push_back(name);
  }

  const std::vector<std::string>& files() const { return files_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

template <class F>
std::string to_text(F&& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

std::string effective_ini(const CliConfig& cfg) {
  const auto& allowed = sections().at(cfg.subcommand);
  std::ostringstream os;
  os << "; effective configuration of eqmix " << cfg.subcommand << (cfg.target.empty() ? "" : " " + cfg.target)
     << '\n';
  std::string current;
  for (const auto& k : schema()) {
    const std::string sec = section_of(k.name);
    if (!allowed.count(sec)) continue;
    if (sec != current) {
      os << "\n[" << sec << "]\n";
      current = sec;
    }
    os << (sec.empty() ? k.name : k.name.substr(sec.size() + 1)) << " = " << cfg.settings.at(k.name) << '\n';
  }
  return os.str();
}

std::string provenance_json(const CliConfig& cfg, const std::vector<std::string>& files) {
  nlohmann::ordered_json j;
  j["schema"] = "eqmix.provenance/1";
  j["version"] = EQMIX_VERSION;
  j["subcommand"] = cfg.subcommand;
  if (!cfg.target.empty()) j["target"] = cfg.target;
  j["master_seed"] = parse_int(cfg.settings.at("seed"));
  nlohmann::ordered_json eff = nlohmann::ordered_json::object();
  const auto& allowed = sections().at(cfg.subcommand);
  for (const auto& k : schema()) {
    if (allowed.count(section_of(k.name))) eff[k.name] = cfg.settings.at(k.name);
  }
  j["config"] = eff;
  j["boost"] = BOOST_LIB_VERSION;
  j["compiler"] = __VERSION__;
  j["files"] = files;
  return j.dump(2) + "\n";
}

std::string plot_template(const BoundReport& r) {
  std::ostringstream os;
  os << "# gnuplot template: one x/y series per file under series/\n";
  os << "set key off\n";
  os << "files = \"";
  for (std::size_t i = 0; i < r.series.size(); ++i) os << (i ? " " : "") << series_file_name(r.series[i]);
  os << "\"\n";
  os << "do for [f in files] {\n";
  os << "  set title f noenhanced\n";
  os << "  plot 'series/'.f using 1:2 with linespoints\n";
  os << "  pause -1\n";
  os << "}\n";
  return os.str();
}

void write_report(Output& o, const BoundReport& r) {
  o.write("cells.csv", to_text([&](std::ostream& os) { write_cells_csv(os, r); }));
  o.write("audits.csv", to_text([&](std::ostream& os) { write_audits_csv(os, r); }));
  o.write("fits.csv", to_text([&](std::ostream& os) { write_fits_csv(os, r); }));
  o.write("report.json", report_json(r) + "\n");
  for (const auto& s : r.series) {
    o.write("series/" + series_file_name(s), to_text([&](std::ostream& os) { write_series(os, s); }));
  }
  if (!r.series.empty()) o.write("plot.gp", plot_template(r));
}

int summarize(std::ostream& out, const Output& o, const BoundReport& r) {
  std::size_t failed = 0;
  for (const auto& a : r.audits) {
    if (a.severity != Severity::Info && !a.pass && a.hypotheses_ok) ++failed;
  }
  out << r.analysis << ": " << r.cells.size() << " cells, " << r.audits.size() << " audits, " << failed
      << " failed" << (r.has_defect() ? " (defect)" : "") << "; outputs in " << o.dir().string() << '\n';
  return r.failed() ? 3 : 0;
}

FiniteKernel kernel_for(const ModelSpec& m, ChainKind chain, const std::string& space, Exec exec) {
  if (space == "full" || m.kind == ModelKind::Warmup) {
    const FiniteKernel full = metropolis_chain(m, chain, exec);
    if (space == "unsigned" && m.kind == ModelKind::Warmup) {
      return lumped_projection(full, class_partition(m, false));
    }
    return full;
  }
  const FiniteKernel lumped = signed_lumped_chain(m, chain);
  if (space == "signed") return lumped;
  return lumped_projection(lumped, sign_merge_partition(class_table(m)));
}

int cmd_gap_scan(const CliConfig& cfg, Output& o, std::ostream& out) {
  const std::string& model = cfg.settings.at("model");
  if (model.empty()) throw ConfigError("key 'model' (--model) is required");
  const BoundReport r = gap_scan(make_grid(cfg.settings, parse_model_kind(model)));
  o.write("cells.csv", to_text([&](std::ostream& os) { write_cells_csv(os, r); }));
  o.write("report.json", report_json(r) + "\n");
  return summarize(out, o, r);
}

int cmd_verify(const CliConfig& cfg, Output& o, std::ostream& out) {
  static const std::map<std::string, std::pair<ModelKind, BoundReport (*)(const ScanGrid&)>> targets = {
      {"ising-fast", {ModelKind::Ising, verify_ising_fast}},
      {"ising-slow", {ModelKind::Ising, verify_ising_slow}},
      {"warmup", {ModelKind::Warmup, verify_warmup}},
      {"beg-slow", {ModelKind::Beg, verify_beg_slow}},
      {"beg-fast", {ModelKind::Beg, verify_beg_fast}},
  };
  const auto& [kind, fn] = targets.at(cfg.target);
  const std::string& model = cfg.settings.at("model");
  if (!model.empty() && parse_model_kind(model) != kind) {
    throw ConfigError("verify " + cfg.target + " requires model " + to_string(kind));
  }
  const BoundReport r = fn(make_grid(cfg.settings, kind));
  write_report(o, r);
  return summarize(out, o, r);
}

int cmd_unimodality(const CliConfig& cfg, Output& o, std::ostream& out) {
  ScanGrid g;
  g.ns = parse_int_list(cfg.settings.at("grid.n"));
  if (g.ns.empty()) throw ConfigError("key 'grid.n' (--n) is required");
  g.betas = parse_real_list(cfg.settings.at("grid.beta"));
  g.ks = parse_real_list(cfg.settings.at("grid.k"));
  const UnimodalityScan u = unimodality_scan(g);
  write_report(o, u.report);
  std::ostringstream n0;
  n0 << "# eqmix.n0/1\nmodel,beta,k,n0\n";
  for (const auto& [bk, v] : u.beg_n0) {
    n0 << "beg," << format_real(bk.first) << ',' << format_real(bk.second) << ','
       << (v ? std::to_string(*v) : std::string()) << '\n';
  }
  for (const auto& [beta, v] : u.ising_n0) {
    n0 << "ising," << format_real(beta) << ",," << (v ? std::to_string(*v) : std::string()) << '\n';
  }
  o.write("n0.csv", n0.str());
  return summarize(out, o, u.report);
}

int cmd_simulate(const CliConfig& cfg, Output& o, std::ostream& out) {
  const ModelSpec m = make_model(cfg.settings);
  const ChainKind chain = single(parse_chains(cfg.settings.at("grid.chain")), "grid.chain");
  const RunConfig base = make_run(cfg.settings);
  check_observable(m, base.observable);
  const std::size_t runs = parse_count(cfg.settings.at("run.runs"));
  if (runs == 0) throw ConfigError("key 'run.runs' must be at least 1");
  std::vector<RunStats> stats(runs);
  std::vector<RunConfig> configs(runs, base);
  for_each_task(exec_of(cfg.settings), runs, [&](std::size_t i) {
    configs[i].run_index = i;
    stats[i] = run_estimate(m, chain, configs[i]);
  });
  for (std::size_t i = 0; i < runs; ++i) {
    const std::string suffix = runs == 1 ? "" : "-" + std::to_string(i);
    o.write("runstats" + suffix + ".json", run_stats_json(m, chain, configs[i], stats[i]) + "\n");
    if (base.keep_trace) {
      o.write("trace" + suffix + ".csv", to_text([&](std::ostream& os) { write_trace_csv(os, stats[i]); }));
    }
  }
  out << "simulate: " << runs << " run(s), estimate " << format_real(stats[0].estimate) << "; outputs in "
      << o.dir().string() << '\n';
  return 0;
}

int cmd_conductance(const CliConfig& cfg, Output& o, std::ostream& out) {
  const ModelSpec m = make_model(cfg.settings);
  const ChainKind chain = single(parse_chains(cfg.settings.at("grid.chain")), "grid.chain");
  const Exec exec = exec_of(cfg.settings);
  const FiniteKernel k = kernel_for(m, chain, cfg.settings.at("kernel.space"), exec);
  if (k.size() > kMaxConductanceStates) {
    throw CapacityError("exact conductance needs at most " + std::to_string(kMaxConductanceStates) +
                        " states, the kernel has " + std::to_string(k.size()));
  }
  SpectralOptions opt = spectral_options(cfg.settings);
  opt.exec = exec;
  const Conductance h = conductance_exact(k, exec);
  const CheegerInterval ci = cheeger_interval(h.h);
  const Spectrum s = spectrum(k, opt);
  const double rel = s.relaxation_gap();
  const bool holds = h.h * h.h / 2.0 <= rel + 1e-10 && rel <= 2.0 * h.h + 1e-10;
  nlohmann::ordered_json j;
  j["schema"] = "eqmix.conductance/1";
  j["model"] = to_string(m.kind);
  j["chain"] = to_string(chain);
  j["space"] = cfg.settings.at("kernel.space");
  j["n"] = m.n;
  j["states"] = k.size();
  j["h"] = h.h;
  std::vector<std::string> labels;
  for (std::size_t i : h.argmin) labels.push_back(k.label(i));
  j["argmin"] = labels;
  j["lambda1_lower"] = ci.lower;
  j["lambda1_upper"] = ci.upper;
  j["lambda1"] = s.lambda1();
  j["relaxation_gap"] = rel;
  j["gap"] = s.gap();
  j["cheeger_holds"] = holds;
  o.write("conductance.json", j.dump(2) + "\n");
  out << "conductance: h = " << format_real(h.h) << ", 1 - lambda_1 = " << format_real(rel)
      << (holds ? "" : " (Cheeger sandwich FAILED)") << "; outputs in " << o.dir().string() << '\n';
  return holds ? 0 : 3;
}

int cmd_export(const CliConfig& cfg, Output& o, std::ostream& out) {
  const ModelSpec m = make_model(cfg.settings);
  const ChainKind chain = single(parse_chains(cfg.settings.at("grid.chain")), "grid.chain");
  const FiniteKernel k = kernel_for(m, chain, cfg.settings.at("kernel.space"), exec_of(cfg.settings));
  k.check(1e-10);
  o.write("kernel.txt", to_text([&](std::ostream& os) { write_kernel_text(os, k); }));
  out << "export-kernel: " << k.size() << " states; outputs in " << o.dir().string() << '\n';
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"eqmix: exact spectral analysis and simulation of equi-energy Metropolis chains"};
  app.require_subcommand(1);
  app.set_version_flag("--version", EQMIX_VERSION);

  CliConfig cfg;
  std::map<std::string, std::string> text_values;
  std::map<std::string, bool> flag_values;
  for (const auto& k : schema()) {
    text_values[k.name];
    flag_values[k.name] = false;
  }
  std::map<std::string, CLI::App*> subs;
  static const std::map<std::string, std::string> blurbs = {
      {"gap-scan", "exact spectral gaps over a parameter grid"},
      {"verify", "confront exact gaps with the mixing-time bounds"},
      {"unimodality-scan", "shape of the weight profiles q over a grid"},
      {"simulate", "run the sampler and estimate an observable"},
      {"conductance", "exact conductance and the Cheeger sandwich of a small kernel"},
      {"export-kernel", "write a kernel in text form"},
  };
  for (const auto& [name, secs] : sections()) {
    CLI::App* sub = app.add_subcommand(name, blurbs.at(name));
    sub->add_option("--config", cfg.config_path, "INI configuration file");
    sub->add_option("--out", cfg.out_dir, "output directory (default: $EQMIX_OUT or ./eqmix-out)");
    for (const auto& k : schema()) {
      if (!secs.count(section_of(k.name))) continue;
      if (k.type == ValueType::Bool) sub->add_flag(k.flag, flag_values[k.name], k.help);
      else sub->add_option(k.flag, text_values[k.name], k.help);
    }
    if (name == "verify") {
      sub->add_option("target", cfg.target, "ising-fast, ising-slow, warmup, beg-slow or beg-fast")
          ->required()
          ->check(CLI::IsMember({"ising-fast", "ising-slow", "warmup", "beg-slow", "beg-fast"}));
    }
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    for (const auto& [name, sub] : subs) {
      if (sub->parsed()) cfg.subcommand = name;
    }
    CLI::App* sub = subs.at(cfg.subcommand);
    cfg.settings = default_settings();
    if (!cfg.config_path.empty()) {
      for (const auto& [k, v] : load_config(cfg.config_path)) cfg.settings[k] = v;
    }
    for (const auto& k : schema()) {
      if (!sections().at(cfg.subcommand).count(section_of(k.name))) continue;
      const CLI::Option* opt = sub->get_option_no_throw(k.flag);
      if (!opt || opt->count() == 0) continue;
      cfg.settings[k.name] = k.type == ValueType::Bool ? (flag_values[k.name] ? "true" : "false")
                                                       : trim(text_values[k.name]);
    }
    for (const auto& k : schema()) check_value(k, cfg.settings[k.name]);

    const int threads = static_cast<int>(parse_int(cfg.settings["threads"]));
    if (threads > 0) omp_set_num_threads(threads);

    if (cfg.out_dir.empty()) {
      const char* env = std::getenv("EQMIX_OUT");
      cfg.out_dir = env && *env ? env : "eqmix-out";
    }
    Output o(cfg.out_dir);
    o.write("config.ini", effective_ini(cfg));
    int code = 0;
    if (cfg.subcommand == "gap-scan") code = cmd_gap_scan(cfg, o, out);
    else if (cfg.subcommand == "verify") code = cmd_verify(cfg, o, out);
    else if (cfg.subcommand == "unimodality-scan") code = cmd_unimodality(cfg, o, out);
    else if (cfg.subcommand == "simulate") code = cmd_simulate(cfg, o, out);
    else if (cfg.subcommand == "conductance") code = cmd_conductance(cfg, o, out);
    else code = cmd_export(cfg, o, out);
    std::vector<std::string> files = o.files();
    files.push_back("provenance.json");
    o.write("provenance.json", provenance_json(cfg, files));
    return code;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const CapacityError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace eqmix::cli
