#include "dbke/types.hpp"

#include <algorithm>
#include <cctype>

#include "dbke/error.hpp"

namespace dbke {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::empty_text: return "empty_text";
    case ErrorCode::empty_passage: return "empty_passage";
    case ErrorCode::empty_continuation: return "empty_continuation";
    case ErrorCode::empty_corpus: return "empty_corpus";
    case ErrorCode::unparseable: return "unparseable";
    case ErrorCode::malformed_roles: return "malformed_roles";
    case ErrorCode::no_learnable_tokens: return "no_learnable_tokens";
    case ErrorCode::template_error: return "template_error";
    case ErrorCode::tokenizer_error: return "tokenizer_error";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::checkpoint_corrupt: return "checkpoint_corrupt";
    case ErrorCode::config_error: return "config_error";
    case ErrorCode::transport_error: return "transport_error";
    case ErrorCode::auth_error: return "auth_error";
    case ErrorCode::capability_error: return "capability_error";
    case ErrorCode::protocol_error: return "protocol_error";
    case ErrorCode::unknown_variant: return "unknown_variant";
    case ErrorCode::pool_too_small: return "pool_too_small";
    case ErrorCode::checksum_mismatch: return "checksum_mismatch";
  }
  return "unknown";
}

std::string_view to_string(Role r) noexcept {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "unknown";
}

std::string_view to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::sharegpt: return "sharegpt";
    case Provenance::dbke: return "dbke";
    case Provenance::qa_transform: return "qa_transform";
  }
  return "unknown";
}

std::string_view to_string(DocumentSource s) noexcept {
  return s == DocumentSource::clinical_article ? "clinical_article" : "generic";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw Error(ErrorCode::parse_error, "unknown role '" + std::string(s) + "'");
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "sharegpt") return Provenance::sharegpt;
  if (s == "dbke") return Provenance::dbke;
  if (s == "qa_transform") return Provenance::qa_transform;
  throw Error(ErrorCode::parse_error, "unknown provenance '" + std::string(s) + "'");
}

DocumentSource source_from_string(std::string_view s) {
  if (s == "clinical_article") return DocumentSource::clinical_article;
  if (s == "generic") return DocumentSource::generic;
  throw Error(ErrorCode::parse_error, "unknown document source '" + std::string(s) + "'");
}

bool Dialogue::has_flag(std::string_view f) const {
  return std::find(flags.begin(), flags.end(), f) != flags.end();
}

std::string dialogue_invariant_violation(const Dialogue& d) {
  std::size_t non_system = 0;
  Role expected = Role::user;
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const Turn& t = d.turns[i];
    if (t.role == Role::system) {
      if (i != 0) return "system turn not at position 0";
      continue;
    }
    if (t.role != expected) return "roles do not alternate starting with user";
    if (normalize_whitespace(t.text).empty()) return "empty " + std::string(to_string(t.role)) + " turn";
    expected = expected == Role::user ? Role::assistant : Role::user;
    ++non_system;
  }
  if (non_system < 2) return "fewer than 2 non-system turns";
  return {};
}

std::size_t exchange_count(const Dialogue& d) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < d.turns.size(); ++i) {
    n += d.turns[i - 1].role == Role::user && d.turns[i].role == Role::assistant;
  }
  return n;
}

std::size_t BenchmarkItem::gold_index() const {
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (options[i].first == gold_label) return i;
  }
  throw Error(ErrorCode::invalid_argument, "item " + id + ": gold label '" + gold_label +
                                               "' is not an option label");
}

void validate_item(const BenchmarkItem& item) {
  if (item.options.size() < 2) {
    throw Error(ErrorCode::invalid_argument, "item " + item.id + ": fewer than 2 options");
  }
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    for (std::size_t j = i + 1; j < item.options.size(); ++j) {
      if (item.options[i].first == item.options[j].first) {
        throw Error(ErrorCode::invalid_argument,
                    "item " + item.id + ": duplicate label " + item.options[i].first);
      }
    }
  }
  (void)item.gold_index();
}

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string normalize_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

nlohmann::json to_json(const Dialogue& d) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : d.turns) turns.push_back({{"role", to_string(t.role)}, {"text", t.text}});
  nlohmann::json j = {{"id", d.id},
                      {"turns", std::move(turns)},
                      {"provenance", to_string(d.provenance)},
                      {"flags", d.flags},
                      {"attempts", d.attempts}};
  if (d.source_doc) j["source_doc"] = *d.source_doc;
  return j;
}

Dialogue dialogue_from_json(const nlohmann::json& j) {
  Dialogue d;
  d.id = j.at("id").get<std::string>();
  for (const auto& t : j.at("turns")) {
    d.turns.push_back({role_from_string(t.at("role").get<std::string>()), t.at("text").get<std::string>()});
  }
  d.provenance = provenance_from_string(j.value("provenance", std::string("dbke")));
  d.flags = j.value("flags", std::vector<std::string>{});
  d.attempts = j.value("attempts", 0);
  if (j.contains("source_doc") && !j["source_doc"].is_null()) d.source_doc = j["source_doc"].get<std::string>();
  return d;
}

nlohmann::json to_json(const Document& d) {
  nlohmann::json j = {{"id", d.id}, {"title", d.title}, {"body", d.body}, {"source", to_string(d.source)}};
  j["year"] = d.year ? nlohmann::json(*d.year) : nlohmann::json(nullptr);
  if (!d.meta.empty()) j["meta"] = d.meta;
  return j;
}

nlohmann::json to_json(const BenchmarkItem& item) {
  nlohmann::json options = nlohmann::json::array();
  for (const auto& [label, text] : item.options) options.push_back({label, text});
  nlohmann::json j = {{"id", item.id}, {"question", item.question}, {"options", options},
                      {"gold_label", item.gold_label}};
  if (item.context) j["context"] = *item.context;
  if (item.subject) j["subject"] = *item.subject;
  return j;
}

}  // namespace dbke
