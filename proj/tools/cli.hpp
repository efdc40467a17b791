#pragma once

// Command-line front end. All settings live in one flat key space
// ("section.key"); a config file and command-line flags fill the same keys,
// flags last.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "eqmix/error.hpp"
#include "eqmix/model.hpp"
#include "eqmix/simulate.hpp"
#include "eqmix/verify.hpp"

namespace eqmix::cli {

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

using Settings = std::map<std::string, std::string>;

enum class ValueType { Text, Enum, Int, Count, Real, IntList, RealList, ChainList, PairList, Bool };

struct Key {
  std::string name;  // "grid.n", top-level keys have no section
  std::string flag;  // "--n"
  ValueType type;
  std::string fallback;
  std::vector<std::string> choices;  // Enum
  std::string help;
};

const std::vector<Key>& schema();
Settings default_settings();

// Throws ConfigError naming the key when the value does not parse.
void check_value(const Key& key, const std::string& value);

// Reads an INI file; unknown sections or keys are rejected.
Settings load_config(const std::string& path);

// "10..60..2,70" style integer lists and "0.5,1..2..0.5" real lists.
std::vector<int> parse_int_list(const std::string& text);
std::vector<double> parse_real_list(const std::string& text);
// "1e6" and "1000000" alike; must be a nonnegative integer.
std::uint64_t parse_count(const std::string& text);

ScanGrid make_grid(const Settings& s, ModelKind kind);
// Single-valued model from the grid keys.
ModelSpec make_model(const Settings& s);
RunConfig make_run(const Settings& s);

struct CliConfig {
  std::string subcommand;
  std::string target;  // verify only
  std::string config_path;
  std::string out_dir;
  Settings settings;
};

// Exit codes: 0 success, 2 validation error, 3 failed audit, 1 other errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace eqmix::cli
