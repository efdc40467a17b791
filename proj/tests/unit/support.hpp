#pragma once

// Helpers shared by the unit tests: a small seeded generator for property
// tests and temporary directories.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace test {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(eng_); }
  // Even size in [lo, hi].
  int even(int lo, int hi) { return lo + 2 * static_cast<int>(below(static_cast<std::uint64_t>((hi - lo) / 2 + 1))); }

 private:
  std::mt19937_64 eng_;
};

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("eqmix-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace test
