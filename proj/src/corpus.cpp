#include "dbke/corpus.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dbke/error.hpp"
#include "dbke/util.hpp"

namespace fs = std::filesystem;

namespace dbke {

InputFormat input_format_from_string(std::string_view s) {
  if (s == "plain_text") return InputFormat::plain_text;
  if (s == "structured_record") return InputFormat::structured_record;
  throw Error(ErrorCode::config_error, "unknown input format '" + std::string(s) + "'");
}

namespace {

// Expands directories into their regular files, sorted; keeps the root each
// file was found under so plain-text ids can be made relative to it.
std::vector<std::pair<fs::path, fs::path>> expand(const std::vector<fs::path>& paths) {
  std::vector<std::pair<fs::path, fs::path>> files;
  for (const auto& p : paths) {
    std::error_code ec;
    auto st = fs::status(p, ec);
    if (ec || !fs::exists(st)) throw Error(ErrorCode::io_error, "cannot read " + p.string());
    if (fs::is_directory(st)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file() && e.path().filename().string().front() != '.') found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      for (auto& f : found) files.emplace_back(p, std::move(f));
    } else {
      files.emplace_back(p.parent_path(), p);
    }
  }
  return files;
}

std::string first_nonblank_line(const std::string& body) {
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (!t.empty()) return t;
  }
  return {};
}

std::string loc(const fs::path& p, std::size_t line) { return p.string() + ":" + std::to_string(line); }

void parse_record(const nlohmann::json& j, const std::string& where, IngestResult& out,
                  std::set<std::string>& seen) {
  auto skip = [&](std::string reason, std::string detail) {
    out.skipped.push_back({where, std::move(reason), std::move(detail)});
  };
  if (!j.is_object()) return skip("malformed_record", "not a JSON object");
  for (const char* field : {"id", "body"}) {
    if (!j.contains(field) || !j[field].is_string()) return skip("missing_field", field);
  }
  Document d;
  d.id = j["id"].get<std::string>();
  if (d.id.empty()) return skip("missing_field", "id");
  d.body = j["body"].get<std::string>();
  if (normalize_whitespace(d.body).empty()) return skip("empty_body", d.id);
  d.title = j.contains("title") && j["title"].is_string() ? j["title"].get<std::string>() : std::string{};
  try {
    d.source = source_from_string(j.value("source", std::string("generic")));
  } catch (const Error&) {
    return skip("invalid_source", d.id);
  }
  if (j.contains("year") && !j["year"].is_null()) {
    if (!j["year"].is_number_integer()) return skip("malformed_record", "year must be an integer");
    d.year = j["year"].get<int>();
  }
  if (d.source == DocumentSource::clinical_article) {
    if (!d.year) return skip("missing_field", "year");
    if (*d.year > kMaxArticleYear) return skip("year_out_of_range", d.id + " (" + std::to_string(*d.year) + ")");
  }
  if (j.contains("meta") && j["meta"].is_object()) {
    for (const auto& [k, v] : j["meta"].items()) d.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  if (!seen.insert(d.id).second) return skip("duplicate_id", d.id);
  out.documents.push_back(std::move(d));
}

}  // namespace

IngestResult ingest_documents(const std::vector<fs::path>& paths, InputFormat format) {
  IngestResult out;
  std::set<std::string> seen;
  for (const auto& [root, file] : expand(paths)) {
    const std::string content = read_file(file);
    if (format == InputFormat::plain_text) {
      if (normalize_whitespace(content).empty()) {
        out.skipped.push_back({file.string(), "empty_body", ""});
        continue;
      }
      Document d;
      auto rel = file.lexically_relative(root);
      d.id = (rel.parent_path() / rel.stem()).generic_string();
      d.title = first_nonblank_line(content);
      d.body = content;
      d.meta["path"] = file.generic_string();
      if (!seen.insert(d.id).second) {
        out.skipped.push_back({file.string(), "duplicate_id", d.id});
        continue;
      }
      out.documents.push_back(std::move(d));
      continue;
    }
    std::istringstream in(content);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        out.skipped.push_back({loc(file, lineno), "malformed_record", e.what()});
        continue;
      }
      parse_record(j, loc(file, lineno), out, seen);
    }
  }
  return out;
}

namespace {

std::optional<Role> sharegpt_role(std::string_view from) {
  if (from == "human" || from == "user") return Role::user;
  if (from == "gpt" || from == "chatgpt" || from == "bard" || from == "bing" || from == "assistant") {
    return Role::assistant;
  }
  if (from == "system") return Role::system;
  return std::nullopt;
}

void parse_conversation(const nlohmann::json& j, const std::string& where, std::size_t ordinal,
                        ConversationIngestResult& out) {
  if (!j.is_object()) {
    out.skipped.push_back({where, "malformed_record", "not a JSON object"});
    return;
  }
  Dialogue d;
  d.provenance = Provenance::sharegpt;
  d.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : "conv-" + std::to_string(ordinal);
  try {
    if (j.contains("conversations")) {
      for (const auto& m : j.at("conversations")) {
        auto role = sharegpt_role(m.at("from").get<std::string>());
        if (!role) {
          out.skipped.push_back({where, "unknown_role", m.at("from").get<std::string>()});
          return;
        }
        d.turns.push_back({*role, m.at("value").get<std::string>()});
      }
    } else if (j.contains("turns")) {
      Dialogue parsed = dialogue_from_json(j);
      d.turns = std::move(parsed.turns);
      d.flags = std::move(parsed.flags);
      d.provenance = parsed.provenance;
    } else {
      out.skipped.push_back({where, "missing_field", "conversations"});
      return;
    }
  } catch (const std::exception& e) {
    out.skipped.push_back({where, "malformed_record", e.what()});
    return;
  }
  out.dialogues.push_back(std::move(d));
}

}  // namespace

ConversationIngestResult ingest_conversations(const std::vector<fs::path>& paths) {
  ConversationIngestResult out;
  std::size_t ordinal = 0;
  for (const auto& [root, file] : expand(paths)) {
    const std::string content = read_file(file);
    auto first = content.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && content[first] == '[') {
      nlohmann::json arr;
      try {
        arr = nlohmann::json::parse(content);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse_error, file.string() + ": " + e.what());
      }
      std::size_t idx = 0;
      for (const auto& j : arr) parse_conversation(j, file.string() + "[" + std::to_string(idx++) + "]", ordinal++, out);
      continue;
    }
    std::istringstream in(content);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      try {
        parse_conversation(nlohmann::json::parse(line), loc(file, lineno), ordinal++, out);
      } catch (const nlohmann::json::exception& e) {
        out.skipped.push_back({loc(file, lineno), "malformed_record", e.what()});
      }
    }
  }
  return out;
}

double top_ngram_coverage(std::string_view text, std::size_t n) {
  std::vector<std::string> words;
  {
    std::istringstream in{std::string(text)};
    std::string w;
    while (in >> w) words.push_back(std::move(w));
  }
  if (n == 0 || words.size() < n) return 0.0;
  std::map<std::vector<std::string_view>, std::vector<std::size_t>> starts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    std::vector<std::string_view> key(words.begin() + static_cast<std::ptrdiff_t>(i),
                                      words.begin() + static_cast<std::ptrdiff_t>(i + n));
    starts[key].push_back(i);
  }
  double best = 0.0;
  for (const auto& [gram, pos] : starts) {
    if (pos.size() < 2) continue;
    // union of [p, p+n) over occurrences; positions are ascending
    std::size_t covered = 0, reach = 0;
    for (std::size_t p : pos) {
      std::size_t b = std::max(p, reach), e = p + n;
      if (e > b) covered += e - b;
      reach = std::max(reach, e);
    }
    best = std::max(best, static_cast<double>(covered) / static_cast<double>(words.size()));
  }
  return best;
}

DegeneracyVerdict is_degenerate(const Dialogue& d, const DegeneracyPolicy& policy) {
  DegeneracyVerdict v;
  auto add = [&](const char* r) {
    if (std::find(v.reasons.begin(), v.reasons.end(), r) == v.reasons.end()) v.reasons.emplace_back(r);
  };
  std::size_t non_system = 0;
  Role expected = Role::user;
  bool alternation_ok = true;
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const Turn& t = d.turns[i];
    if (t.role == Role::system) {
      if (i != 0) alternation_ok = false;
      continue;
    }
    ++non_system;
    if (t.role != expected) alternation_ok = false;
    expected = t.role == Role::user ? Role::assistant : Role::user;
  }
  if (non_system < policy.min_non_system_turns) add("too_few_turns");
  if (policy.check_empty_turns) {
    for (const auto& t : d.turns) {
      if (t.role != Role::system && normalize_whitespace(t.text).empty()) add("empty_turn");
    }
  }
  for (const auto& t : d.turns) {
    if (top_ngram_coverage(t.text, policy.ngram) > policy.max_repetition_ratio) add("repetition");
  }
  if (policy.check_alternation && !alternation_ok) add("non_alternating");
  v.degenerate = !v.reasons.empty();
  return v;
}

std::vector<Dialogue> segment_conversation(const Dialogue& d, std::size_t max_tokens, const Tokenizer& tok,
                                           const ChatFormat& format) {
  if (max_tokens < 16) throw Error(ErrorCode::invalid_argument, "max_tokens must be >= 16");
  auto fits = [&](const std::vector<Turn>& turns) {
    return tok.count(render_turns(turns, format).text) <= max_tokens;
  };

  std::vector<std::pair<std::vector<Turn>, bool>> parts;  // (turns, truncated)
  std::vector<Turn> cur;
  for (const Turn& t : d.turns) {
    if (!cur.empty()) {
      cur.push_back(t);
      if (fits(cur)) continue;
      cur.pop_back();
      parts.emplace_back(std::move(cur), false);
      cur.clear();
    }
    if (fits({t})) {
      cur.push_back(t);
      continue;
    }
    // Longest UTF-8-safe prefix of this turn that fits alone.
    std::vector<std::size_t> bounds;  // codepoint boundaries
    for (std::size_t i = 0; i <= t.text.size(); ++i) {
      if (i == t.text.size() || (static_cast<unsigned char>(t.text[i]) & 0xC0) != 0x80) bounds.push_back(i);
    }
    std::size_t lo = 0, hi = bounds.size() - 1;  // bounds[lo] fits (assumed), bounds[hi] does not
    while (hi - lo > 1) {
      std::size_t mid = lo + (hi - lo) / 2;
      if (fits({Turn{t.role, t.text.substr(0, bounds[mid])}})) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    Turn cut{t.role, t.text.substr(0, bounds[lo])};
    if (!fits({cut})) {
      throw Error(ErrorCode::invalid_argument,
                  "max_tokens " + std::to_string(max_tokens) + " cannot hold the chat scaffolding of one turn");
    }
    parts.push_back({{std::move(cut)}, true});
  }
  if (!cur.empty()) parts.emplace_back(std::move(cur), false);

  std::vector<Dialogue> out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    Dialogue seg;
    seg.id = parts.size() == 1 ? d.id : d.id + "#" + std::to_string(i);
    seg.turns = std::move(parts[i].first);
    seg.source_doc = d.source_doc;
    seg.provenance = d.provenance;
    seg.attempts = d.attempts;
    seg.flags = d.flags;
    if (parts[i].second && !seg.has_flag("truncated")) seg.flags.emplace_back("truncated");
    out.push_back(std::move(seg));
  }
  if (out.empty()) {
    Dialogue seg = d;
    out.push_back(std::move(seg));
  }
  return out;
}

std::string dialogue_text(const Dialogue& d) {
  std::string s;
  for (const auto& t : d.turns) {
    if (!s.empty()) s += '\n';
    s += t.text;
  }
  return s;
}

namespace {

template <typename T, typename TextFn, typename IdFn>
std::vector<T> keep_english(const std::vector<T>& items, const LanguageDetector& det, double threshold,
                            std::vector<SkipRecord>* skipped, TextFn text_of, IdFn id_of) {
  std::vector<T> kept;
  for (const auto& item : items) {
    const std::string text = text_of(item);
    if (normalize_whitespace(text).empty()) {
      if (skipped) skipped->push_back({id_of(item), "non_english", "no text"});
      continue;
    }
    const auto g = det.detect(text);
    if (g.lang == "en" && g.confidence >= threshold) {
      kept.push_back(item);
    } else if (skipped) {
      skipped->push_back({id_of(item), "non_english", g.lang + " " + std::to_string(g.confidence)});
    }
  }
  return kept;
}

}  // namespace

std::vector<Document> filter_non_english(const std::vector<Document>& docs, const LanguageDetector& det,
                                         double threshold, std::vector<SkipRecord>* skipped) {
  return keep_english(
      docs, det, threshold, skipped, [](const Document& d) { return d.title + "\n" + d.body; },
      [](const Document& d) { return d.id; });
}

std::vector<Dialogue> filter_non_english(const std::vector<Dialogue>& dialogues, const LanguageDetector& det,
                                         double threshold, std::vector<SkipRecord>* skipped) {
  return keep_english(dialogues, det, threshold, skipped, dialogue_text, [](const Dialogue& d) { return d.id; });
}

std::vector<Dialogue> filter_degenerate(const std::vector<Dialogue>& dialogues, const DegeneracyPolicy& policy,
                                        std::vector<SkipRecord>* skipped) {
  std::vector<Dialogue> kept;
  for (const auto& d : dialogues) {
    auto v = is_degenerate(d, policy);
    if (!v.degenerate) {
      kept.push_back(d);
      continue;
    }
    if (skipped) {
      std::string reasons;
      for (const auto& r : v.reasons) reasons += (reasons.empty() ? "" : ",") + r;
      skipped->push_back({d.id, "degenerate", reasons});
    }
  }
  return kept;
}

}  // namespace dbke
