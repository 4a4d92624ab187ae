#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbke/model.hpp"
#include "dbke/types.hpp"

namespace dbke {

enum class BenchmarkFormat { mmlu, medqa, medmcqa, pubmedqa, usmle };

std::string_view to_string(BenchmarkFormat f) noexcept;
BenchmarkFormat benchmark_format_from_string(std::string_view s);

/// RFC 4180 records: quoted fields, doubled quotes, embedded newlines and
/// CRLF. Each record carries the 1-based line it starts on.
struct CsvRecord {
  std::size_t line = 0;
  std::vector<std::string> fields;
};
std::vector<CsvRecord> parse_csv(std::string_view text);

struct RowError {
  std::size_t line = 0;
  std::string message;
};

struct LoadResult {
  std::vector<BenchmarkItem> items;
  std::vector<RowError> errors;       // malformed rows, skipped
  std::vector<std::string> warnings;  // e.g. count mismatch
};

/// Reads a benchmark file in its public distribution format:
///   mmlu      headerless CSV: question, A, B, C, D, answer letter. The
///             subject is the file stem without _test/_dev/_val.
///   medqa     JSONL {question, options:{A:..}, answer_idx}
///   usmle     as medqa; `answer` may hold the label or the option text
///   medmcqa   JSONL {id, question, opa..opd, cop} with cop 1-based
///   pubmedqa  JSONL {pubid, question, context, final_decision} or the
///             original object keyed by PMID {QUESTION, CONTEXTS, final_decision}
/// Ids without a source id are "<stem>:<line>". When expected_count is set
/// and differs, a warning is recorded.
LoadResult load_benchmark(BenchmarkFormat format, const std::filesystem::path& path,
                          std::optional<std::size_t> expected_count = std::nullopt);

/// Reference size of the MedQA US training pool.
inline constexpr std::size_t kMedQaTrainPool = 10178;

struct ShotSet {
  std::vector<BenchmarkItem> exemplars;
  std::size_t k = 0;
  std::uint64_t seed = 0;
};

/// k exemplars drawn from `pool` minus any id in `evaluated`, seeded by
/// (benchmark, seed). Throws Error(pool_too_small) when too few remain.
ShotSet build_kshot(const std::vector<BenchmarkItem>& pool, std::size_t k, std::uint64_t seed,
                    const std::string& benchmark, const std::set<std::string>& evaluated = {});

enum class Normalization { raw_sum, per_token };
enum class ContinuationStyle { letter, option_text };

struct EvalConfig {
  std::size_t k = 0;
  Normalization normalization = Normalization::raw_sum;
  std::uint64_t seed = 0;
  ContinuationStyle continuation_style = ContinuationStyle::letter;
  bool allow_item_errors = false;  // record failed items and drop them instead of aborting

  nlohmann::json to_json() const;
  std::string hash() const;
};

struct McPrompt {
  std::string context;
  std::vector<std::string> continuations;  // one per option, in option order
};

McPrompt format_mc_prompt(const BenchmarkItem& item, const ShotSet& shots, const EvalConfig& cfg);

/// Index of the best option; ties go to the lowest index. Throws
/// Error(invalid_argument) for fewer than 2 scores.
std::size_t select_answer(const std::vector<ScoreResult>& scores, Normalization n);

struct EvalReport {
  std::string benchmark;
  std::size_t n_items = 0;
  std::size_t n_correct = 0;
  std::size_t n_errors = 0;
  double accuracy = 0.0;
  std::size_t k = 0;
  std::string config_hash;
  std::string model_id;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  bool operator==(const EvalReport&) const = default;
};

struct EvalOptions {
  std::string benchmark;
  std::string model_id;
  std::size_t workers = 0;  // 0: the scorer's in-flight budget
  std::optional<std::filesystem::path> audit_path;
};

/// Scores every option of every item and reports accuracy. Per-item records
/// {id, chosen, gold, correct, scores} go to audit_path as JSONL in item
/// order. Throws Error(invalid_argument) when an exemplar is also evaluated.
EvalReport evaluate(const std::vector<BenchmarkItem>& items, Scorer& scorer, const ShotSet& shots,
                    const EvalConfig& cfg, const EvalOptions& opts);

/// Published accuracies, one table per shot setting, kept as printed.
struct ReferenceTable {
  std::size_t k = 0;
  std::vector<std::string> columns;
  struct Row {
    std::string dataset;
    std::string benchmark;  // EvalReport::benchmark key
    std::vector<std::string> cells;
  };
  std::vector<Row> rows;
};

const ReferenceTable& zero_shot_reference();
const ReferenceTable& five_shot_reference();

struct RenderedReport {
  std::string markdown;
  std::string csv;
};

/// Both reference tables with one measured column per model id added to the
/// table matching each report's k. Reports with another k, or a benchmark
/// outside the tables, are listed after them.
RenderedReport render_report(const std::vector<EvalReport>& reports);

}  // namespace dbke
