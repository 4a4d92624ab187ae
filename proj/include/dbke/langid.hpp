#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dbke {

struct LanguageGuess {
  std::string lang;   // ISO 639-1
  double confidence;  // posterior probability of `lang`, in [0, 1]

  bool operator==(const LanguageGuess&) const = default;
};

namespace detail {
struct LanguageProfileData {
  const char* lang;
  std::vector<std::pair<const char*, double>> trigram_logprob;
};
const std::vector<LanguageProfileData>& builtin_language_profiles();
}  // namespace detail

/// Character-trigram naive Bayes classifier over the bundled language
/// profiles. Text is lowercased, runs of non-letters fold to one space and
/// the result is space-padded before trigram extraction; the posterior uses
/// a uniform prior. Trigrams absent from a profile score `unseen_logprob`.
class LanguageDetector {
 public:
  LanguageDetector();

  /// Throws Error(empty_text) when `text` has no characters at all.
  LanguageGuess detect(std::string_view text) const;

  /// Posterior for one language (0 when unknown to the profile set).
  double probability(std::string_view text, std::string_view lang) const;

  const std::vector<std::string>& languages() const { return langs_; }

  static constexpr double unseen_logprob = -11.5;  // ~1e-5

 private:
  std::vector<double> posterior(std::string_view text) const;

  std::vector<std::string> langs_;
  std::unordered_map<std::string, std::vector<double>> table_;  // trigram -> logprob per language
};

/// Normalized trigram sequence used by the detector (exposed for tests).
std::vector<std::string> text_trigrams(std::string_view text);

/// True when `text` is English with confidence >= threshold.
bool is_english(const LanguageDetector& det, std::string_view text, double threshold = 0.8);

}  // namespace dbke
