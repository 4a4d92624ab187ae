#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbke/chat_format.hpp"
#include "dbke/model.hpp"
#include "dbke/tokenizer.hpp"
#include "dbke/types.hpp"

namespace dbke {

/// Speaker names the teacher writes in front of each utterance. The first
/// entry of each list is used when writing transcripts.
struct RoleAliases {
  std::vector<std::string> user;
  std::vector<std::string> assistant;

  bool operator==(const RoleAliases&) const = default;
};

enum class TemplateKind { dbke, generation };

/// Text file with a YAML front matter block:
///
///   ---
///   name: ...
///   kind: dbke | generation
///   aliases: {user: [...], assistant: [...]}
///   constraints: [...]
///   ---
///   preamble text with {{constraints}} and exactly one {{passage}}
class PromptTemplate {
 public:
  static PromptTemplate load(const std::filesystem::path& path);
  static PromptTemplate parse(std::string_view text, const std::string& origin = "<template>");

  const std::string& name() const { return name_; }
  TemplateKind kind() const { return kind_; }
  const std::string& preamble() const { return preamble_; }
  const std::vector<std::string>& constraints() const { return constraints_; }
  const RoleAliases& aliases() const { return aliases_; }

  /// Stable digest of everything that affects rendering and parsing.
  std::string fingerprint() const;

 private:
  std::string name_;
  TemplateKind kind_ = TemplateKind::dbke;
  std::string preamble_;
  std::vector<std::string> constraints_;
  RoleAliases aliases_;
};

/// Substitutes the numbered constraint list and the passage. Throws
/// Error(empty_passage) for a blank passage.
std::string render_prompt(const PromptTemplate& t, std::string_view passage);

/// Parses "Alias: utterance" lines. Lines without a speaker marker continue
/// the current turn, and consecutive turns of one speaker are merged (joined
/// by newlines). Text before the first marker is ignored. When no line
/// starts with a marker but several markers appear inline, the text is split
/// at the inline markers instead.
///
/// Throws Error(unparseable) when no speaker marker is found and
/// Error(malformed_roles) when the result is not a user-first dialogue with
/// at least two turns.
Dialogue parse_dialogue(std::string_view raw, const RoleAliases& aliases);

/// Inverse of parse_dialogue for user/assistant dialogues.
std::string render_transcript(const Dialogue& d, const RoleAliases& aliases);

struct ValidationPolicy {
  std::size_t min_exchanges = 3;
  bool require_user_first = true;
  bool require_alternation = true;
  /// Token budget for the rendered chat; checked only when a tokenizer is set.
  std::size_t max_tokens = 4096;
  const Tokenizer* tokenizer = nullptr;
  ChatFormat format = ChatFormat::llama2();
};

/// Violations among: too_short, bot_first, non_alternating, empty_turn,
/// over_budget. Empty when the dialogue passes every enabled check.
std::vector<std::string> validate_dialogue(const Dialogue& d, const ValidationPolicy& policy);

struct GenerationParams {
  double temperature = 0.7;
  int max_output_tokens = 2048;
  int n_dialogues_per_doc = 5;
  int max_attempts = 3;
  std::uint64_t seed = 0;
};

void validate(const GenerationParams& p);

struct SlotFailure {
  int slot = 0;
  int attempts = 0;
  std::string last_reason;
};

struct TransformResult {
  std::vector<Dialogue> dialogues;  // accepted, in slot order
  std::vector<SlotFailure> rejected;
  int retries = 0;  // attempts beyond the first, over all slots
};

/// Seed sent to the teacher for one attempt of one slot of a document.
std::uint64_t attempt_seed(std::uint64_t run_seed, const std::string& doc_id, int slot, int attempt);

/// Generates up to n_dialogues_per_doc dialogues for one document. Each slot
/// is retried on parse or validation failure up to max_attempts times and is
/// abandoned afterwards. Teacher failures (transport, auth, capability,
/// protocol) propagate with the document id in the message.
TransformResult transform_document(const Document& doc, const PromptTemplate& t, ChatModel& teacher,
                                   const GenerationParams& p, const ValidationPolicy& policy = {});

/// Passage handed to the teacher for a document: title and body.
std::string document_passage(const Document& doc);

struct DocumentRecord {
  std::string doc_id;
  int accepted = 0;
  int rejected = 0;
  int retries = 0;
  std::uint64_t offset = 0;  // byte range of this document's lines in dialogues.jsonl
  std::uint64_t length = 0;
  std::string sha256;

  bool operator==(const DocumentRecord&) const = default;
};

struct DatasetManifest {
  std::string run_id;
  std::string config_hash;
  std::size_t documents_in = 0;
  std::size_t cursor = 0;  // documents fully committed
  std::size_t generated = 0;  // slots attempted to completion: accepted + rejected
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t retried = 0;
  std::size_t exchanges = 0;  // sum over accepted dialogues
  bool complete = false;
  std::vector<DocumentRecord> documents;

  double average_exchanges() const { return accepted ? double(exchanges) / double(accepted) : 0.0; }

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

struct PipelineConfig {
  std::filesystem::path output_dir;
  PromptTemplate prompt;
  GenerationParams params;
  ValidationPolicy policy;
  std::string teacher_id;  // part of the config hash
  /// Parallel documents; 0 uses the teacher's in-flight budget.
  std::size_t workers = 0;
  /// Documents between manifest checkpoints.
  std::size_t checkpoint_every = 64;
  /// Discard an existing checkpoint instead of resuming.
  bool restart = false;
  /// Stop after committing this many documents in this invocation.
  std::optional<std::size_t> max_documents;
};

std::string config_hash(const PipelineConfig& cfg);

/// Transforms the corpus into <output_dir>/dialogues.jsonl and keeps
/// <output_dir>/manifest.json as a resumable checkpoint. A run over the
/// same config resumes at the manifest cursor; an unreadable or inconsistent
/// checkpoint throws Error(checkpoint_corrupt) unless restart is set.
DatasetManifest run_pipeline(const std::vector<Document>& corpus, ChatModel& teacher, const PipelineConfig& cfg);

}  // namespace dbke
