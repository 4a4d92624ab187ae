#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dbke/tokenizer.hpp"
#include "dbke/types.hpp"
#include "dbke/util.hpp"

namespace dbke::testing {

inline const Tokenizer& tiny_tokenizer() {
  static const Tokenizer tok = Tokenizer::load(DBKE_TEST_DATA "/tiny_bpe.json");
  return tok;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "dbke") {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline const std::vector<std::string>& english_words() {
  static const std::vector<std::string> words = {
      "the", "patient", "reported", "pain", "in", "left", "leg", "after", "walking", "blood", "pressure",
      "was", "high", "doctor", "asked", "about", "medication", "and", "history", "of", "smoking", "heart",
      "test", "results", "show", "narrowing", "artery", "we", "should", "discuss", "treatment", "options",
      "diabetes", "numbness", "toes", "night", "sleep", "family", "stress", "ultrasound", "scan", "is"};
  return words;
}

inline std::string random_sentence(Rng& rng, std::size_t min_words, std::size_t max_words) {
  const auto& w = english_words();
  std::size_t n = min_words + rng.uniform_below(max_words - min_words + 1);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += w[rng.uniform_below(w.size())];
  }
  return s;
}

/// Alternating user/assistant dialogue with random lengths.
inline Dialogue random_dialogue(Rng& rng, std::size_t min_turns, std::size_t max_turns, std::size_t max_words,
                                const std::string& id = "d") {
  Dialogue d;
  d.id = id;
  d.provenance = Provenance::sharegpt;
  std::size_t n = min_turns + rng.uniform_below(max_turns - min_turns + 1);
  if (rng.uniform_below(4) == 0) d.turns.push_back({Role::system, random_sentence(rng, 3, 12)});
  for (std::size_t i = 0; i < n; ++i) {
    d.turns.push_back({i % 2 == 0 ? Role::user : Role::assistant, random_sentence(rng, 1, max_words)});
  }
  return d;
}

}  // namespace dbke::testing
