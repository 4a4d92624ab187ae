#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dbke/chat_format.hpp"
#include "dbke/langid.hpp"
#include "dbke/tokenizer.hpp"
#include "dbke/types.hpp"

namespace dbke {

enum class InputFormat { plain_text, structured_record };

InputFormat input_format_from_string(std::string_view s);

/// A unit that was read but not turned into a Document/Dialogue.
struct SkipRecord {
  std::string source;  // "path" or "path:line"
  std::string reason;  // e.g. empty_body, missing_field, malformed_record
  std::string detail;
};

struct IngestResult {
  std::vector<Document> documents;
  std::vector<SkipRecord> skipped;
};

/// Reads documents from files or directory trees (walked in sorted path
/// order). plain_text: one Document per file, id = path relative to the
/// given root without extension, title = first non-blank line.
/// structured_record: one JSON object per line with {id, title, body, year,
/// source}. Unreadable paths throw Error(io_error); bad records are skipped
/// and reported.
IngestResult ingest_documents(const std::vector<std::filesystem::path>& paths, InputFormat format);

/// Clinical articles must carry a year no later than this.
inline constexpr int kMaxArticleYear = 2020;

struct ConversationIngestResult {
  std::vector<Dialogue> dialogues;
  std::vector<SkipRecord> skipped;
};

/// Reads raw conversations: a JSON array or JSON lines of ShareGPT-style
/// records {id, conversations:[{from, value}]} or the native dialogue
/// schema {id, turns:[{role, text}]}. Roles human/user map to user,
/// gpt/chatgpt/bard/bing/assistant to assistant.
ConversationIngestResult ingest_conversations(const std::vector<std::filesystem::path>& paths);

struct DegeneracyPolicy {
  std::size_t min_non_system_turns = 2;
  std::size_t ngram = 4;
  double max_repetition_ratio = 0.5;
  bool check_empty_turns = true;
  bool check_alternation = true;
};

struct DegeneracyVerdict {
  bool degenerate = false;
  std::vector<std::string> reasons;  // subset of too_few_turns, empty_turn, repetition, non_alternating
};

DegeneracyVerdict is_degenerate(const Dialogue& d, const DegeneracyPolicy& policy = {});

/// Fraction of whitespace-delimited words covered by occurrences of the most
/// frequent word n-gram, counting only n-grams that occur at least twice.
/// 0 for text shorter than n words.
double top_ngram_coverage(std::string_view text, std::size_t n);

/// Splits a conversation at turn boundaries so that every segment's
/// rendered chat text is at most `max_tokens` tokens. A single turn that
/// cannot fit on its own is cut at the longest prefix that fits and the
/// segment is flagged "truncated". Segment ids are `<id>#<n>` when there is
/// more than one segment.
std::vector<Dialogue> segment_conversation(const Dialogue& d, std::size_t max_tokens, const Tokenizer& tok,
                                           const ChatFormat& format = ChatFormat::llama2());

/// All turn texts of a dialogue joined by newlines (input to detection).
std::string dialogue_text(const Dialogue& d);

/// Keeps items detected as English with confidence >= threshold; the rest
/// are appended to `skipped` with reason non_english. Input order is kept.
std::vector<Document> filter_non_english(const std::vector<Document>& docs, const LanguageDetector& det,
                                         double threshold, std::vector<SkipRecord>* skipped = nullptr);
std::vector<Dialogue> filter_non_english(const std::vector<Dialogue>& dialogues, const LanguageDetector& det,
                                         double threshold, std::vector<SkipRecord>* skipped = nullptr);

std::vector<Dialogue> filter_degenerate(const std::vector<Dialogue>& dialogues, const DegeneracyPolicy& policy,
                                        std::vector<SkipRecord>* skipped = nullptr);

}  // namespace dbke
