#include "dbke/langid.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <iostream>
#include <string>

#include "dbke/error.hpp"

namespace dbke {
namespace {

const LanguageDetector& detector() {
  static const LanguageDetector d;
  return d;
}

TEST(LanguageDetector, LabeledCorpusAccuracyAtThreshold) {
  std::ifstream in(DBKE_TEST_DATA "/langid_corpus.tsv");
  ASSERT_TRUE(in);
  std::string line;
  int total = 0, correct = 0, english = 0;
  while (std::getline(in, line)) {
    auto tab = line.find('\t');
    const std::string label = line.substr(0, tab), text = line.substr(tab + 1);
    const bool truth = label == "en";
    english += truth;
    const bool predicted = is_english(detector(), text, 0.8);
    ++total;
    if (predicted == truth) {
      ++correct;
    } else {
      std::cerr << "misclassified (" << label << "): " << text << " -> "
                    << detector().detect(text).lang << " " << detector().detect(text).confidence << "\n";
    }
  }
  ASSERT_EQ(total, 200);
  ASSERT_EQ(english, 100);
  EXPECT_GE(correct, 190);
}

TEST(LanguageDetector, EmptyTextIsAnError) {
  try {
    (void)detector().detect("");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::empty_text);
  }
}

TEST(LanguageDetector, Deterministic) {
  const std::string s = "The nurse checked his temperature and heart rate every hour.";
  EXPECT_EQ(detector().detect(s), detector().detect(s));
}

TEST(LanguageDetector, ConfidenceDoesNotDropWithMoreEvidence) {
  for (const std::string s : {"The patient was admitted to the hospital.", "Der Patient wurde aufgenommen.",
                              "Blood pressure", "Le médecin a demandé"}) {
    const std::string lang = detector().detect(s).lang;
    double prev = 0.0;
    std::string text;
    for (int k = 0; k < 6; ++k) {
      text += (k ? " " : "") + s;
      const auto g = detector().detect(text);
      EXPECT_EQ(g.lang, lang);
      EXPECT_GE(g.confidence, prev) << text;
      prev = g.confidence;
    }
  }
}

TEST(LanguageDetector, UnknownScriptIsNotConfidentEnglish) {
  EXPECT_FALSE(is_english(detector(), "患者は胸の痛みを訴えた。"));
  EXPECT_FALSE(is_english(detector(), "12345 !!! ???"));
}

TEST(LanguageDetector, TrigramsArePaddedAndFolded) {
  auto g = text_trigrams("Hi, Bob!");
  std::vector<std::string> want = {" hi", "hi ", "i b", " bo", "bob", "ob "};
  EXPECT_EQ(g, want);
}

}  // namespace
}  // namespace dbke
