#include "dbke/dbke.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>

#include "dbke/error.hpp"
#include "dbke/util.hpp"

namespace dbke {

namespace {

[[noreturn]] void template_fail(const std::string& origin, const std::string& msg) {
  throw Error(ErrorCode::template_error, origin + ": " + msg);
}

struct Slot {
  std::size_t begin, end;  // of "{{name}}" in the preamble
  std::string name;
};

std::vector<Slot> find_slots(const std::string& text, const std::string& origin) {
  std::vector<Slot> slots;
  for (std::size_t pos = text.find("{{"); pos != std::string::npos; pos = text.find("{{", pos)) {
    const std::size_t close = text.find("}}", pos + 2);
    if (close == std::string::npos) template_fail(origin, "unterminated '{{'");
    std::string name = trim(std::string_view(text).substr(pos + 2, close - pos - 2));
    if (name != "passage" && name != "constraints") template_fail(origin, "unknown slot {{" + name + "}}");
    slots.push_back({pos, close + 2, std::move(name)});
    pos = close + 2;
  }
  return slots;
}

std::vector<std::string> string_list(const YAML::Node& n, const std::string& what, const std::string& origin) {
  if (!n) return {};
  if (!n.IsSequence()) template_fail(origin, what + " must be a list");
  std::vector<std::string> out;
  for (const auto& item : n) {
    if (!item.IsScalar()) template_fail(origin, what + " entries must be strings");
    out.push_back(item.as<std::string>());
  }
  return out;
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : c; }

bool iequals_prefix(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (ascii_lower(s[i]) != ascii_lower(prefix[i])) return false;
  }
  return true;
}

struct Marker {
  Role role;
  std::size_t text_begin;  // first byte after the marker
};

struct AliasEntry {
  std::string alias;
  Role role;
};

std::vector<AliasEntry> alias_table(const RoleAliases& a) {
  if (a.user.empty() || a.assistant.empty()) {
    throw Error(ErrorCode::invalid_argument, "aliases need at least one user and one assistant name");
  }
  std::vector<AliasEntry> t;
  for (const auto& s : a.user) t.push_back({s, Role::user});
  for (const auto& s : a.assistant) t.push_back({s, Role::assistant});
  // longest first so "Bot Assistant" wins over "Bot"
  std::stable_sort(t.begin(), t.end(), [](const auto& x, const auto& y) { return x.alias.size() > y.alias.size(); });
  return t;
}

// Matches `[**]Alias[**] :[**]` at `pos`.
std::optional<Marker> match_marker(std::string_view s, std::size_t pos, const std::vector<AliasEntry>& table) {
  if (s.substr(pos).starts_with("**")) pos += 2;
  for (const auto& e : table) {
    if (!iequals_prefix(s.substr(pos), e.alias)) continue;
    std::size_t i = pos + e.alias.size();
    if (s.substr(i).starts_with("**")) i += 2;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    if (i >= s.size() || s[i] != ':') continue;
    ++i;
    if (s.substr(i).starts_with("**")) i += 2;
    return Marker{e.role, i};
  }
  return std::nullopt;
}

void append_line(std::string& text, std::string_view line) {
  std::string t = trim(line);
  if (t.empty()) return;
  if (!text.empty()) text += '\n';
  text += t;
}

std::vector<std::string_view> split_lines(std::string_view raw) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= raw.size()) {
    std::size_t nl = raw.find('\n', start);
    if (nl == std::string_view::npos) nl = raw.size();
    std::string_view line = raw.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  return lines;
}

std::vector<Turn> parse_lines(const std::vector<std::string_view>& lines, const std::vector<AliasEntry>& table) {
  std::vector<Turn> turns;
  for (auto line : lines) {
    std::size_t lead = 0;
    while (lead < line.size() && (line[lead] == ' ' || line[lead] == '\t')) ++lead;
    if (auto m = match_marker(line, lead, table)) {
      turns.push_back({m->role, {}});
      append_line(turns.back().text, line.substr(m->text_begin));
    } else if (!turns.empty()) {
      append_line(turns.back().text, line);
    }
  }
  return turns;
}

// Markers at the start of the text or after whitespace, anywhere in a line.
std::vector<Turn> parse_inline(std::string_view raw, const std::vector<AliasEntry>& table) {
  struct Hit {
    std::size_t begin;
    Marker m;
  };
  std::vector<Hit> hits;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (i > 0 && raw[i - 1] != ' ' && raw[i - 1] != '\t' && raw[i - 1] != '\n') continue;
    if (auto m = match_marker(raw, i, table)) {
      hits.push_back({i, *m});
      i = m->text_begin - 1;
    }
  }
  std::vector<Turn> turns;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    const std::size_t end = k + 1 < hits.size() ? hits[k + 1].begin : raw.size();
    turns.push_back({hits[k].m.role, {}});
    for (auto line : split_lines(raw.substr(hits[k].m.text_begin, end - hits[k].m.text_begin))) {
      append_line(turns.back().text, line);
    }
  }
  return turns;
}

std::string numbered(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += '\n';
    out += std::to_string(i + 1) + ". " + items[i];
  }
  return out;
}

}  // namespace

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    template_fail(path.string(), e.detail());
  }
  return parse(text, path.string());
}

PromptTemplate PromptTemplate::parse(std::string_view text, const std::string& origin) {
  const auto lines = split_lines(text);
  if (lines.empty() || trim(lines[0]) != "---") template_fail(origin, "missing front matter");
  std::size_t close = 1;
  while (close < lines.size() && trim(lines[close]) != "---") ++close;
  if (close == lines.size()) template_fail(origin, "unterminated front matter");

  std::string header, body;
  for (std::size_t i = 1; i < close; ++i) header.append(lines[i]).push_back('\n');
  for (std::size_t i = close + 1; i < lines.size(); ++i) {
    body.append(lines[i]);
    if (i + 1 < lines.size()) body.push_back('\n');
  }
  while (!body.empty() && (body.back() == '\n' || body.back() == ' ')) body.pop_back();

  PromptTemplate t;
  YAML::Node root;
  try {
    root = YAML::Load(header);
  } catch (const YAML::Exception& e) {
    template_fail(origin, std::string("front matter: ") + e.what());
  }
  if (!root.IsMap()) template_fail(origin, "front matter must be a mapping");
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (key != "name" && key != "kind" && key != "aliases" && key != "constraints") {
      template_fail(origin, "unknown front matter key '" + key + "'");
    }
  }
  if (!root["name"] || !root["name"].IsScalar()) template_fail(origin, "name is required");
  t.name_ = root["name"].as<std::string>();
  const std::string kind = root["kind"] ? root["kind"].as<std::string>() : "dbke";
  if (kind == "dbke") {
    t.kind_ = TemplateKind::dbke;
  } else if (kind == "generation") {
    t.kind_ = TemplateKind::generation;
  } else {
    template_fail(origin, "unknown kind '" + kind + "'");
  }
  const YAML::Node aliases = root["aliases"];
  if (!aliases || !aliases.IsMap()) template_fail(origin, "aliases.user and aliases.assistant are required");
  t.aliases_.user = string_list(aliases["user"], "aliases.user", origin);
  t.aliases_.assistant = string_list(aliases["assistant"], "aliases.assistant", origin);
  if (t.aliases_.user.empty() || t.aliases_.assistant.empty()) {
    template_fail(origin, "aliases.user and aliases.assistant must be non-empty");
  }
  t.constraints_ = string_list(root["constraints"], "constraints", origin);
  if (t.kind_ == TemplateKind::dbke && t.constraints_.empty()) template_fail(origin, "dbke template has no constraints");

  t.preamble_ = std::move(body);
  const auto slots = find_slots(t.preamble_, origin);
  const auto n_passage = std::count_if(slots.begin(), slots.end(), [](const Slot& s) { return s.name == "passage"; });
  const auto n_constraints = static_cast<long>(slots.size()) - n_passage;
  if (n_passage != 1) template_fail(origin, "{{passage}} must appear exactly once, found " + std::to_string(n_passage));
  if (n_constraints > 1) template_fail(origin, "{{constraints}} appears more than once");
  if (n_constraints == 0 && !t.constraints_.empty()) template_fail(origin, "constraints listed but no {{constraints}} slot");
  return t;
}

std::string PromptTemplate::fingerprint() const {
  return json_hash({{"name", name_},
                    {"kind", kind_ == TemplateKind::dbke ? "dbke" : "generation"},
                    {"preamble", preamble_},
                    {"constraints", constraints_},
                    {"aliases", {{"user", aliases_.user}, {"assistant", aliases_.assistant}}}});
}

std::string render_prompt(const PromptTemplate& t, std::string_view passage) {
  if (normalize_whitespace(passage).empty()) throw Error(ErrorCode::empty_passage, "passage is empty");
  const std::string& pre = t.preamble();
  std::string out;
  std::size_t at = 0;
  for (const auto& s : find_slots(pre, t.name())) {
    out.append(pre, at, s.begin - at);
    if (s.name == "passage") {
      out.append(passage);
    } else {
      out += numbered(t.constraints());
    }
    at = s.end;
  }
  out.append(pre, at, std::string::npos);
  return out;
}

Dialogue parse_dialogue(std::string_view raw, const RoleAliases& aliases) {
  const auto table = alias_table(aliases);
  const auto lines = split_lines(raw);
  std::vector<Turn> turns = parse_lines(lines, table);
  if (turns.size() < 2) {
    auto inline_turns = parse_inline(raw, table);
    if (inline_turns.size() >= 2) turns = std::move(inline_turns);
  }
  if (turns.empty()) throw Error(ErrorCode::unparseable, "no speaker marker found");

  std::vector<Turn> merged;
  for (auto& t : turns) {
    if (t.text.empty()) continue;
    if (!merged.empty() && merged.back().role == t.role) {
      merged.back().text += '\n';
      merged.back().text += t.text;
    } else {
      merged.push_back(std::move(t));
    }
  }
  if (merged.size() < 2) {
    throw Error(ErrorCode::malformed_roles, "need at least two speaker turns, found " + std::to_string(merged.size()));
  }
  if (merged.front().role != Role::user) throw Error(ErrorCode::malformed_roles, "dialogue starts with the assistant");

  Dialogue d;
  d.turns = std::move(merged);
  return d;
}

std::string render_transcript(const Dialogue& d, const RoleAliases& aliases) {
  if (aliases.user.empty() || aliases.assistant.empty()) {
    throw Error(ErrorCode::invalid_argument, "aliases need at least one user and one assistant name");
  }
  std::string out;
  for (const auto& t : d.turns) {
    if (t.role == Role::system) throw Error(ErrorCode::invalid_argument, "transcripts have no system turns");
    out += (t.role == Role::user ? aliases.user.front() : aliases.assistant.front()) + ": " + t.text + "\n";
  }
  return out;
}

std::vector<std::string> validate_dialogue(const Dialogue& d, const ValidationPolicy& policy) {
  std::vector<std::string> v;
  if (exchange_count(d) < policy.min_exchanges) v.emplace_back("too_short");

  std::vector<const Turn*> spoken;
  bool system_misplaced = false;
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    if (d.turns[i].role == Role::system) {
      system_misplaced |= i != 0;
    } else {
      spoken.push_back(&d.turns[i]);
    }
  }
  if (policy.require_user_first && !spoken.empty() && spoken.front()->role == Role::assistant) {
    v.emplace_back("bot_first");
  }
  if (policy.require_alternation) {
    bool alternating = !system_misplaced;
    for (std::size_t i = 1; i < spoken.size(); ++i) alternating &= spoken[i]->role != spoken[i - 1]->role;
    if (!alternating) v.emplace_back("non_alternating");
  }
  if (std::any_of(spoken.begin(), spoken.end(), [](const Turn* t) { return normalize_whitespace(t->text).empty(); })) {
    v.emplace_back("empty_turn");
  }
  if (policy.tokenizer && count_tokens(render_chat(d, policy.format).text, *policy.tokenizer) > policy.max_tokens) {
    v.emplace_back("over_budget");
  }
  return v;
}

void validate(const GenerationParams& p) {
  if (!(p.temperature >= 0.0)) throw Error(ErrorCode::invalid_argument, "temperature must be >= 0");
  if (p.max_output_tokens < 1) throw Error(ErrorCode::invalid_argument, "max_output_tokens must be >= 1");
  if (p.n_dialogues_per_doc < 1) throw Error(ErrorCode::invalid_argument, "n_dialogues_per_doc must be >= 1");
  if (p.max_attempts < 1) throw Error(ErrorCode::invalid_argument, "max_attempts must be >= 1");
}

std::uint64_t attempt_seed(std::uint64_t run_seed, const std::string& doc_id, int slot, int attempt) {
  const auto slot_seed = derive_seed(run_seed, doc_id + "#" + std::to_string(slot));
  // kept within int32 range for endpoints that parse seed as a signed integer
  return derive_seed(slot_seed, "attempt" + std::to_string(attempt)) & 0x7fffffffULL;
}

std::string document_passage(const Document& doc) {
  const std::string body = trim(doc.body);
  const std::string title = trim(doc.title);
  if (title.empty() || body.starts_with(title)) return body;
  return title + "\n\n" + body;
}

TransformResult transform_document(const Document& doc, const PromptTemplate& t, ChatModel& teacher,
                                   const GenerationParams& p, const ValidationPolicy& policy) {
  validate(p);
  const std::string prompt = render_prompt(t, document_passage(doc));
  TransformResult out;
  for (int slot = 0; slot < p.n_dialogues_per_doc; ++slot) {
    std::string reason;
    bool accepted = false;
    int attempt = 1;
    for (; attempt <= p.max_attempts; ++attempt) {
      if (attempt > 1) ++out.retries;
      ChatRequest req;
      req.messages = {{Role::user, prompt}};
      req.temperature = p.temperature;
      req.max_output_tokens = p.max_output_tokens;
      req.seed = attempt_seed(p.seed, doc.id, slot, attempt);

      ChatResponse resp;
      try {
        resp = teacher.chat_complete(req);
      } catch (const TransportError& e) {
        throw TransportError(e.code(), "document " + doc.id + ": " + e.detail(), e.http_status());
      } catch (const Error& e) {
        throw Error(e.code(), "document " + doc.id + ": " + e.detail());
      }

      try {
        Dialogue d = parse_dialogue(resp.text, t.aliases());
        auto violations = validate_dialogue(d, policy);
        if (violations.empty()) {
          d.id = doc.id + "-d" + std::to_string(slot);
          d.source_doc = doc.id;
          d.provenance = Provenance::dbke;
          d.attempts = attempt;
          out.dialogues.push_back(std::move(d));
          accepted = true;
          break;
        }
        reason.clear();
        for (const auto& s : violations) reason += (reason.empty() ? "" : ",") + s;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::unparseable && e.code() != ErrorCode::malformed_roles) throw;
        reason = std::string(to_string(e.code()));
      }
    }
    if (!accepted) out.rejected.push_back({slot, p.max_attempts, reason});
  }
  return out;
}

}  // namespace dbke
