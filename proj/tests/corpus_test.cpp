#include "dbke/corpus.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "dbke/error.hpp"
#include "support/test_support.hpp"

namespace dbke {
namespace {

using testing::TempDir;
using testing::tiny_tokenizer;

void write(const std::filesystem::path& p, const std::string& s) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p) << s;
}

TEST(IngestDocuments, DirectoryOfPlainTextFiles) {
  TempDir dir;
  write(dir / "a.txt", "Title A\nBody of article A.");
  write(dir / "b.txt", "Title B\nBody of article B.");
  write(dir / "sub/c.txt", "\n\nTitle C\nBody C.");
  auto r = ingest_documents({dir.path()}, InputFormat::plain_text);
  ASSERT_EQ(r.documents.size(), 3u);
  EXPECT_TRUE(r.skipped.empty());
  EXPECT_EQ(r.documents[0].id, "a");
  EXPECT_EQ(r.documents[2].id, "sub/c");
  EXPECT_EQ(r.documents[2].title, "Title C");
}

TEST(IngestDocuments, EmptyBodyRecordIsSkippedWithReason) {
  TempDir dir;
  write(dir / "r.jsonl", R"({"id":"x","title":"t","body":"   ","year":2019,"source":"clinical_article"})" "\n");
  auto r = ingest_documents({dir / "r.jsonl"}, InputFormat::structured_record);
  EXPECT_TRUE(r.documents.empty());
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].reason, "empty_body");
}

TEST(IngestDocuments, RecordErrorsAreCountedNotFatal) {
  TempDir dir;
  write(dir / "r.jsonl",
        "{\"id\":\"ok\",\"body\":\"text\",\"year\":2020,\"source\":\"clinical_article\"}\n"
        "{not json}\n"
        "{\"id\":\"late\",\"body\":\"text\",\"year\":2021,\"source\":\"clinical_article\"}\n"
        "{\"id\":\"noyear\",\"body\":\"text\",\"source\":\"clinical_article\"}\n"
        "{\"body\":\"text\"}\n"
        "{\"id\":\"ok\",\"body\":\"dup\"}\n"
        "{\"id\":\"gen\",\"body\":\"generic text\"}\n");
  auto r = ingest_documents({dir / "r.jsonl"}, InputFormat::structured_record);
  ASSERT_EQ(r.documents.size(), 2u);
  std::vector<std::string> reasons;
  for (const auto& s : r.skipped) reasons.push_back(s.reason);
  EXPECT_EQ(reasons, (std::vector<std::string>{"malformed_record", "year_out_of_range", "missing_field",
                                               "missing_field", "duplicate_id"}));
  EXPECT_EQ(r.skipped[0].source, (dir / "r.jsonl").string() + ":2");
}

TEST(IngestDocuments, UnreadablePathIsHardError) {
  try {
    ingest_documents({"/definitely/not/here"}, InputFormat::plain_text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io_error);
  }
}

TEST(IngestDocuments, TwentyThousandArticleCorpus) {
  TempDir dir;
  {
    std::ofstream out(dir / "articles.jsonl");
    for (int i = 0; i < 20000; ++i) {
      out << nlohmann::json{{"id", "pmc" + std::to_string(i)},
                            {"title", "Review " + std::to_string(i)},
                            {"body", "Clinical review body number " + std::to_string(i) + "."},
                            {"year", 1990 + i % 31},
                            {"source", "clinical_article"}}
                 .dump()
          << "\n";
    }
  }
  auto r = ingest_documents({dir / "articles.jsonl"}, InputFormat::structured_record);
  EXPECT_EQ(r.documents.size(), 20000u);
  EXPECT_TRUE(r.skipped.empty());
}

TEST(IngestConversations, ShareGptArrayAndNativeLines) {
  TempDir dir;
  write(dir / "sg.json", R"([{"id":"a","conversations":[{"from":"human","value":"hi"},{"from":"gpt","value":"hello"}]},
                             {"id":"b","conversations":[{"from":"alien","value":"?"}]}])");
  write(dir / "native.jsonl", R"({"id":"c","turns":[{"role":"user","text":"q"},{"role":"assistant","text":"a"}]})" "\n");
  auto r = ingest_conversations({dir / "sg.json", dir / "native.jsonl"});
  ASSERT_EQ(r.dialogues.size(), 2u);
  EXPECT_EQ(r.dialogues[0].turns[1].role, Role::assistant);
  EXPECT_EQ(r.dialogues[0].provenance, Provenance::sharegpt);
  EXPECT_EQ(r.dialogues[1].id, "c");
  ASSERT_EQ(r.skipped.size(), 1u);
  EXPECT_EQ(r.skipped[0].reason, "unknown_role");
}

Dialogue make(std::vector<std::pair<Role, std::string>> turns) {
  Dialogue d;
  d.id = "t";
  for (auto& [r, s] : turns) d.turns.push_back({r, s});
  return d;
}

TEST(IsDegenerate, SingleTurnIsTooFewTurns) {
  auto v = is_degenerate(make({{Role::user, "hello there"}}));
  EXPECT_TRUE(v.degenerate);
  EXPECT_EQ(v.reasons, std::vector<std::string>{"too_few_turns"});
}

TEST(IsDegenerate, WellFormedSixTurnDialogue) {
  auto v = is_degenerate(make({{Role::user, "I have chest pain when I walk."},
                               {Role::assistant, "How long has this been happening?"},
                               {Role::user, "About two months now."},
                               {Role::assistant, "Does it go away when you rest?"},
                               {Role::user, "Yes, after a few minutes."},
                               {Role::assistant, "That pattern is worth discussing with your doctor soon."}}));
  EXPECT_FALSE(v.degenerate);
  EXPECT_TRUE(v.reasons.empty());
}

TEST(IsDegenerate, EmptyAndNonAlternatingTurns) {
  auto v = is_degenerate(make({{Role::assistant, "Hi"}, {Role::user, "  "}, {Role::user, "again"}}));
  EXPECT_EQ(v.reasons, (std::vector<std::string>{"empty_turn", "non_alternating"}));
}

// Brute force: enumerate every word 4-gram, mark every word position any of
// its occurrences covers, and take the best n-gram that occurs twice or more.
double brute_force_coverage(const std::string& text) {
  std::vector<std::string> w;
  std::istringstream in(text);
  for (std::string s; in >> s;) w.push_back(s);
  double best = 0;
  for (std::size_t i = 0; i + 4 <= w.size(); ++i) {
    std::vector<bool> covered(w.size(), false);
    int occurrences = 0;
    for (std::size_t j = 0; j + 4 <= w.size(); ++j) {
      if (std::equal(w.begin() + i, w.begin() + i + 4, w.begin() + j)) {
        ++occurrences;
        for (std::size_t k = j; k < j + 4; ++k) covered[k] = true;
      }
    }
    if (occurrences < 2) continue;
    best = std::max(best, std::count(covered.begin(), covered.end(), true) / double(w.size()));
  }
  return best;
}

TEST(IsDegenerate, RepeatedFourGramMatchesBruteForce) {
  std::string turn;
  for (int i = 0; i < 20; ++i) turn += "I am not sure ";
  const double oracle = brute_force_coverage(turn);
  EXPECT_DOUBLE_EQ(top_ngram_coverage(turn, 4), oracle);
  EXPECT_GT(oracle, 0.5);
  auto v = is_degenerate(make({{Role::user, "What is this?"}, {Role::assistant, turn}}));
  EXPECT_EQ(v.reasons, std::vector<std::string>{"repetition"});
}

TEST(IsDegenerate, CoverageAgreesWithBruteForceOnRandomText) {
  Rng rng(11);
  const std::vector<std::string> small = {"a", "b", "c", "the", "pain"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string s;
    std::size_t n = rng.uniform_below(30);
    for (std::size_t i = 0; i < n; ++i) s += small[rng.uniform_below(small.size())] + " ";
    EXPECT_DOUBLE_EQ(top_ngram_coverage(s, 4), brute_force_coverage(s)) << s;
  }
  EXPECT_EQ(top_ngram_coverage("What about side effects?", 4), 0.0);
}

std::string words_with_tokens(Rng& rng, std::size_t target) {
  std::string s;
  while (count_tokens(s, tiny_tokenizer()) < target) s += (s.empty() ? "" : " ") + testing::random_sentence(rng, 20, 20);
  return s;
}

TEST(SegmentConversation, ShortConversationIsIdentity) {
  Rng rng(1);
  Dialogue d = testing::random_dialogue(rng, 4, 4, 10, "short");
  ASSERT_LT(count_tokens(render_chat(d, ChatFormat::llama2()).text, tiny_tokenizer()), 200u);
  auto segs = segment_conversation(d, 4096, tiny_tokenizer());
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0], d);
}

TEST(SegmentConversation, SplitsAtLastBoundaryThatFits) {
  Rng rng(2);
  Dialogue d;
  d.id = "long";
  // ten turns of roughly 500 tokens each: ~3,900 tokens after seven of them
  for (int i = 0; i < 10; ++i) d.turns.push_back({i % 2 ? Role::assistant : Role::user, words_with_tokens(rng, 545)});
  const auto fmt = ChatFormat::llama2();

  // Oracle: token count of every rendered prefix.
  std::vector<std::size_t> prefix_counts;
  for (std::size_t j = 1; j <= d.turns.size(); ++j) {
    std::vector<Turn> prefix(d.turns.begin(), d.turns.begin() + static_cast<std::ptrdiff_t>(j));
    prefix_counts.push_back(count_tokens(render_turns(prefix, fmt).text, tiny_tokenizer()));
  }
  std::size_t split = 0;
  while (split < prefix_counts.size() && prefix_counts[split] <= 4096) ++split;
  ASSERT_GT(prefix_counts.back(), 4096u);
  ASSERT_GE(prefix_counts[split - 1], 3800u);
  ASSERT_LE(prefix_counts[split - 1], 4000u);

  auto segs = segment_conversation(d, 4096, tiny_tokenizer(), fmt);
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[0].turns.size(), split);
  EXPECT_EQ(segs[0].id, "long#0");
  for (const auto& s : segs) {
    EXPECT_LE(count_tokens(render_chat(s, fmt).text, tiny_tokenizer()), 4096u);
    EXPECT_FALSE(s.has_flag("truncated"));
  }
}

TEST(SegmentConversation, OversizedSingleTurnIsTruncatedAndFlagged) {
  Rng rng(3);
  Dialogue d;
  d.id = "huge";
  d.turns.push_back({Role::user, words_with_tokens(rng, 5000)});
  auto segs = segment_conversation(d, 4096, tiny_tokenizer());
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_TRUE(segs[0].has_flag("truncated"));
  const auto n = count_tokens(render_chat(segs[0], ChatFormat::llama2()).text, tiny_tokenizer());
  EXPECT_LE(n, 4096u);
  EXPECT_GE(n, 4080u);
  EXPECT_TRUE(d.turns[0].text.starts_with(segs[0].turns[0].text));
}

TEST(SegmentConversation, RandomizedSafetyAndLosslessness) {
  Rng rng(4);
  for (int trial = 0; trial < 150; ++trial) {
    Dialogue d = testing::random_dialogue(rng, 2, 12, 60, "r" + std::to_string(trial));
    const std::size_t max_tokens = 40 + rng.uniform_below(300);
    auto segs = segment_conversation(d, max_tokens, tiny_tokenizer());
    bool truncated = false;
    std::vector<Turn> joined;
    for (const auto& s : segs) {
      EXPECT_LE(count_tokens(render_chat(s, ChatFormat::llama2()).text, tiny_tokenizer()), max_tokens);
      truncated |= s.has_flag("truncated");
      joined.insert(joined.end(), s.turns.begin(), s.turns.end());
    }
    if (!truncated) EXPECT_EQ(joined, d.turns);
    ASSERT_EQ(joined.size(), d.turns.size());
  }
}

TEST(SegmentConversation, RejectsTinyBudget) {
  Dialogue d = make({{Role::user, "a"}, {Role::assistant, "b"}});
  EXPECT_THROW(segment_conversation(d, 15, tiny_tokenizer()), Error);
}

TEST(Filters, IdempotentAndDeterministic) {
  Rng rng(5);
  LanguageDetector det;
  std::vector<Dialogue> ds;
  for (int i = 0; i < 40; ++i) ds.push_back(testing::random_dialogue(rng, 1, 6, 12, "c" + std::to_string(i)));
  ds.push_back(make({{Role::user, "¿Dónde está el hospital más cercano?"}, {Role::assistant, "Está a dos calles de aquí."}}));
  auto once = filter_degenerate(filter_non_english(ds, det, 0.8), {});
  auto twice = filter_degenerate(filter_non_english(once, det, 0.8), {});
  EXPECT_EQ(once, twice);
  EXPECT_LT(once.size(), ds.size());
  EXPECT_EQ(once, filter_degenerate(filter_non_english(ds, det, 0.8), {}));
}

}  // namespace
}  // namespace dbke
