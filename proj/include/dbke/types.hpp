#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace dbke {

enum class Role { system, user, assistant };
enum class Provenance { sharegpt, dbke, qa_transform };
enum class DocumentSource { clinical_article, generic };

std::string_view to_string(Role r) noexcept;
std::string_view to_string(Provenance p) noexcept;
std::string_view to_string(DocumentSource s) noexcept;
Role role_from_string(std::string_view s);
Provenance provenance_from_string(std::string_view s);
DocumentSource source_from_string(std::string_view s);

struct Document {
  std::string id;
  DocumentSource source = DocumentSource::generic;
  std::string title;
  std::string body;
  std::optional<int> year;
  std::map<std::string, std::string> meta;

  bool operator==(const Document&) const = default;
};

struct Turn {
  Role role = Role::user;
  std::string text;

  bool operator==(const Turn&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;
  std::optional<std::string> source_doc;
  Provenance provenance = Provenance::dbke;
  int attempts = 0;
  /// Free-form markers such as "truncated"; serialized as the `flags` array.
  std::vector<std::string> flags;

  bool operator==(const Dialogue&) const = default;

  bool has_flag(std::string_view f) const;
};

/// Checks the structural Dialogue invariants: at least two non-system turns,
/// at most one system turn (at position 0), strict user/assistant
/// alternation starting with user, and non-empty user/assistant text.
/// Returns an empty string when valid, otherwise a short reason.
std::string dialogue_invariant_violation(const Dialogue& d);

std::size_t exchange_count(const Dialogue& d);

struct BenchmarkItem {
  std::string id;
  std::string question;
  std::vector<std::pair<std::string, std::string>> options;  // (label, text)
  std::string gold_label;
  std::optional<std::string> context;
  std::optional<std::string> subject;

  bool operator==(const BenchmarkItem&) const = default;

  /// Index of gold_label within options; throws if absent.
  std::size_t gold_index() const;
};

/// Throws Error(invalid_argument) when the item breaks its invariants.
void validate_item(const BenchmarkItem& item);

/// Whitespace-collapsing trim used for "empty after normalization" checks.
std::string normalize_whitespace(std::string_view s);
std::string trim(std::string_view s);

// JSON schema shared by the corpus, dbke and retrieval outputs:
// {id, turns:[{role,text}], provenance, flags, source_doc?, attempts}
nlohmann::json to_json(const Dialogue& d);
Dialogue dialogue_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Document& d);
nlohmann::json to_json(const BenchmarkItem& item);

}  // namespace dbke
