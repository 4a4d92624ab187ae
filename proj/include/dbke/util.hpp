#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace dbke {

std::string sha256_hex(std::string_view bytes);

/// Hash of a JSON value's compact, sorted-key serialization.
std::string json_hash(const nlohmann::json& value);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place, so readers
/// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Reads one JSON value per non-blank line. `on_error` receives the 1-based
/// line number and message for malformed lines; without it they throw.
std::vector<nlohmann::json> read_jsonl(
    const std::filesystem::path& path,
    const std::function<void(std::size_t, const std::string&)>& on_error = {});

/// Portable seeded generator. std::mt19937_64's output sequence is fixed by
/// the standard; the distributions are not, so bounded draws go through
/// `uniform_below` instead of std::uniform_int_distribution.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound);

  /// Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Stable 64-bit mix of a seed and a string label (FNV-1a folded through
/// splitmix64), used to derive per-document / per-slot seeds.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads. Results are
/// written by index, so callers observe input order regardless of
/// completion order. The first exception thrown (lowest index) is rethrown.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

std::size_t utf8_codepoint_count(std::string_view s);

/// Largest prefix length <= n that does not split a UTF-8 sequence.
std::size_t utf8_floor(std::string_view s, std::size_t n);

}  // namespace dbke
