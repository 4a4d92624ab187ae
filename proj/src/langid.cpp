#include "dbke/langid.hpp"

#include <algorithm>
#include <cmath>

#include "dbke/error.hpp"

namespace dbke {

namespace {

std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    auto c = static_cast<unsigned char>(s[i]);
    char32_t cp;
    std::size_t n;
    if (c < 0x80) {
      cp = c;
      n = 1;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1F;
      n = 2;
    } else if ((c >> 4) == 0xE) {
      cp = c & 0x0F;
      n = 3;
    } else if ((c >> 3) == 0x1E) {
      cp = c & 0x07;
      n = 4;
    } else {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    if (i + n > s.size()) {
      out.push_back(0xFFFD);
      break;
    }
    for (std::size_t k = 1; k < n; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    out.push_back(cp);
    i += n;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_letter(char32_t cp) {
  if (cp < 0x80) return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  if (cp <= 0xBF || cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2000 && cp <= 0x206F) return false;  // general punctuation
  if (cp == 0xFFFD || (cp >= 0x1F000 && cp <= 0x1FAFF)) return false;  // replacement char, emoji
  return true;
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if ((cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) || (cp >= 0x391 && cp <= 0x3A9) || (cp >= 0x410 && cp <= 0x42F)) {
    return cp + 0x20;
  }
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  return cp;
}

}  // namespace

std::vector<std::string> text_trigrams(std::string_view text) {
  std::vector<char32_t> seq{U' '};
  for (char32_t cp : decode_utf8(text)) {
    if (is_letter(cp)) {
      seq.push_back(to_lower(cp));
    } else if (seq.back() != U' ') {
      seq.push_back(U' ');
    }
  }
  if (seq.back() != U' ') seq.push_back(U' ');
  std::vector<std::string> grams;
  for (std::size_t i = 0; i + 3 <= seq.size(); ++i) {
    std::string g;
    for (std::size_t k = 0; k < 3; ++k) append_utf8(g, seq[i + k]);
    grams.push_back(std::move(g));
  }
  return grams;
}

LanguageDetector::LanguageDetector() {
  const auto& profiles = detail::builtin_language_profiles();
  const std::size_t n = profiles.size();
  for (std::size_t li = 0; li < n; ++li) {
    langs_.emplace_back(profiles[li].lang);
    for (const auto& [gram, lp] : profiles[li].trigram_logprob) {
      auto [it, inserted] = table_.try_emplace(gram, n, unseen_logprob);
      it->second[li] = std::max(lp, unseen_logprob);
    }
  }
}

std::vector<double> LanguageDetector::posterior(std::string_view text) const {
  if (text.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos) {
    throw Error(ErrorCode::empty_text, "language detection needs non-empty text");
  }
  const std::size_t n = langs_.size();
  std::vector<double> score(n, 0.0);
  for (const auto& g : text_trigrams(text)) {
    auto it = table_.find(g);
    if (it == table_.end()) continue;  // equal penalty for every language
    for (std::size_t li = 0; li < n; ++li) score[li] += it->second[li];
  }
  const double top = *std::max_element(score.begin(), score.end());
  double z = 0.0;
  for (double& s : score) z += (s = std::exp(s - top));
  for (double& s : score) s /= z;
  return score;
}

LanguageGuess LanguageDetector::detect(std::string_view text) const {
  const auto post = posterior(text);
  std::size_t best = 0;
  for (std::size_t i = 1; i < post.size(); ++i) {
    if (post[i] > post[best]) best = i;
  }
  return {langs_[best], post[best]};
}

double LanguageDetector::probability(std::string_view text, std::string_view lang) const {
  const auto post = posterior(text);
  for (std::size_t i = 0; i < langs_.size(); ++i) {
    if (langs_[i] == lang) return post[i];
  }
  return 0.0;
}

bool is_english(const LanguageDetector& det, std::string_view text, double threshold) {
  const auto g = det.detect(text);
  return g.lang == "en" && g.confidence >= threshold;
}

}  // namespace dbke
