#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dbke/dbke.hpp"
#include "dbke/model.hpp"
#include "dbke/tokenizer.hpp"
#include "dbke/types.hpp"

namespace dbke {

struct Bm25Params {
  double k1 = 1.5;
  double b = 0.75;
};

struct ScoredDoc {
  std::string id;
  double score = 0.0;

  bool operator==(const ScoredDoc&) const = default;
};

/// Immutable BM25 index over whole documents (title + body). Safe for
/// concurrent queries.
class Bm25Index {
 public:
  /// Throws Error(empty_corpus) for no documents and Error(invalid_argument)
  /// for duplicate ids.
  static Bm25Index build(const std::vector<Document>& docs, Bm25Params params = {});

  /// Lowercased runs of ASCII letters and digits; bytes >= 0x80 count as
  /// word characters so UTF-8 words stay whole.
  static std::vector<std::string> tokenize(std::string_view text);

  /// Top k documents containing at least one query term, by descending
  /// score then ascending id. Repeated query terms count once.
  std::vector<ScoredDoc> retrieve(std::string_view query, std::size_t k) const;

  /// max(0, ln((N - df + 0.5) / (df + 0.5))); 0 for unknown terms.
  double idf(const std::string& term) const;

  std::size_t n_docs() const { return ids_.size(); }
  double avg_len() const { return avg_len_; }
  const Bm25Params& params() const { return params_; }
  std::optional<std::size_t> doc_length(const std::string& id) const;
  std::size_t document_frequency(const std::string& term) const;
  /// Indexed text of a document; throws for an unknown id.
  const std::string& text(const std::string& id) const;

  /// JSON file {format, version, params, documents, postings}.
  void save(const std::filesystem::path& path) const;
  static Bm25Index load(const std::filesystem::path& path);

 private:
  std::size_t index_of(const std::string& id) const;
  void finish();

  Bm25Params params_;
  std::vector<std::string> ids_;  // ascending
  std::vector<std::string> texts_;
  std::vector<std::uint32_t> lengths_;
  std::unordered_map<std::string, std::vector<std::pair<std::uint32_t, std::uint32_t>>> postings_;  // term -> (doc, tf)
  std::unordered_map<std::string, std::size_t> by_id_;
  double avg_len_ = 0.0;
};

/// n distinct items drawn without replacement; the order is a seeded
/// permutation. Throws Error(pool_too_small) when n exceeds the pool and
/// Error(invalid_argument) when pool ids repeat.
std::vector<BenchmarkItem> sample_items(const std::vector<BenchmarkItem>& pool, std::size_t n, std::uint64_t seed);

/// Cuts text to at most max_tokens tokens (whitespace words when tok is
/// null). 0 means no limit.
std::string truncate_passage(const std::string& text, std::size_t max_tokens, const Tokenizer* tok);

/// Text placed in the template's passage slot: question, lettered options,
/// the correct answer and the numbered reference passages.
std::string qa_passage(const BenchmarkItem& item, const std::vector<std::string>& passages);

struct QaParams {
  double temperature = 0.7;
  int max_output_tokens = 2048;
  int max_attempts = 3;
  std::uint64_t seed = 0;
  std::size_t passages_per_item = 3;
  std::size_t passage_max_tokens = 512;
  const Tokenizer* tokenizer = nullptr;  // for the passage budget; words otherwise
  ValidationPolicy policy = [] {
    ValidationPolicy p;
    p.min_exchanges = 1;
    return p;
  }();
};

struct QaOutcome {
  std::optional<Dialogue> dialogue;
  int attempts = 0;
  std::string last_reason;  // set when rejected
};

/// Asks the teacher for a justification dialogue and accepts it when it
/// parses, validates and its final assistant turn contains "<gold>)".
QaOutcome qa_to_dialogue(const BenchmarkItem& item, const std::vector<std::string>& passages, ChatModel& teacher,
                         const PromptTemplate& t, const QaParams& p);

struct QaRejection {
  std::string item_id;
  int attempts = 0;
  std::string reason;
};

struct QaBatchResult {
  std::vector<Dialogue> dialogues;  // input order
  std::vector<QaRejection> rejected;
};

/// Retrieves passages for each item and runs qa_to_dialogue across up to
/// `workers` threads (0: the teacher's in-flight budget).
QaBatchResult transform_qa_items(const std::vector<BenchmarkItem>& items, const Bm25Index& index, ChatModel& teacher,
                                 const PromptTemplate& t, const QaParams& p, std::size_t workers = 0);

}  // namespace dbke
