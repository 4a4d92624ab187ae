#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbke/corpus.hpp"
#include "dbke/evalharness.hpp"
#include "dbke/modelclient.hpp"

namespace dbke {

struct CorpusSection {
  std::vector<std::filesystem::path> documents;
  InputFormat format = InputFormat::structured_record;
  std::vector<std::filesystem::path> conversations;
  std::optional<std::filesystem::path> tokenizer;
  std::optional<std::filesystem::path> chat_format;  // built-in llama2 when unset
  std::size_t max_tokens = 4096;
  double language_threshold = 0.8;
};

struct DbkeSection {
  std::optional<std::filesystem::path> template_path;
  int dialogues_per_doc = 5;
  int max_attempts = 3;
  double temperature = 0.7;
  int max_output_tokens = 2048;
  std::size_t min_exchanges = 3;
  std::size_t checkpoint_every = 64;
  std::size_t workers = 0;
  std::optional<std::size_t> max_documents;
};

struct RetrievalSection {
  std::optional<std::filesystem::path> pool;
  BenchmarkFormat pool_format = BenchmarkFormat::medqa;
  std::size_t n_items = 4000;
  std::size_t passages_per_item = 3;
  std::size_t passage_max_tokens = 512;
  std::optional<std::filesystem::path> template_path;
  int max_attempts = 3;
  double temperature = 0.7;
  int max_output_tokens = 2048;
  std::size_t workers = 0;
};

struct EmitSection {
  std::size_t shard_size = 1000;
  std::size_t max_len = 4096;
  std::vector<std::string> variants = {"13B", "70B"};
  std::size_t workers = 0;
};

struct BenchmarkSpec {
  std::string name;  // report key, e.g. medqa or mmlu_anatomy
  BenchmarkFormat format = BenchmarkFormat::medqa;
  std::filesystem::path test;
  std::optional<std::filesystem::path> dev;
  std::optional<std::size_t> expected_count;
};

struct EvalSection {
  std::vector<std::size_t> shots = {0, 5};
  Normalization normalization = Normalization::raw_sum;
  ContinuationStyle continuation_style = ContinuationStyle::letter;
  bool allow_item_errors = false;
  bool require_scoring = true;
  std::size_t workers = 0;
  std::vector<BenchmarkSpec> benchmarks;
};

struct NoteSection {
  std::optional<std::filesystem::path> template_path;
  std::optional<std::filesystem::path> transcript;
  double temperature = 0.0;
  int max_output_tokens = 1024;
};

/// One TOML document with optional [client], [corpus], [dbke], [retrieval],
/// [emit], [eval] and [note] tables plus top-level `seed` and `output_root`.
/// Relative paths resolve against the config file's directory.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_root = "out";
  ClientConfig client;
  CorpusSection corpus;
  DbkeSection dbke;
  RetrievalSection retrieval;
  EmitSection emit;
  EvalSection eval;
  NoteSection note;

  /// Resolved settings as JSON; secrets are left out.
  nlohmann::json to_json() const;
  std::string hash() const;
};

/// Throws Error(config_error) naming the offending key for unknown keys,
/// wrong types and out-of-range values.
RunConfig parse_run_config(const std::string& toml_text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace dbke
