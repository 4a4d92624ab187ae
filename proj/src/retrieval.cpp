#include "dbke/retrieval.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <numeric>
#include <set>

#include "dbke/error.hpp"
#include "dbke/util.hpp"

namespace dbke {

namespace {

constexpr const char* kIndexFormat = "dbke-bm25";

std::string indexed_text(const Document& d) {
  const std::string body = trim(d.body);
  const std::string title = trim(d.title);
  if (title.empty() || body.starts_with(title)) return body;
  return title + "\n" + body;
}

}  // namespace

std::vector<std::string> Bm25Index::tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Bm25Index Bm25Index::build(const std::vector<Document>& docs, Bm25Params params) {
  if (docs.empty()) throw Error(ErrorCode::empty_corpus, "cannot index an empty corpus");
  std::vector<const Document*> sorted;
  for (const auto& d : docs) sorted.push_back(&d);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });

  Bm25Index ix;
  ix.params_ = params;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i > 0 && sorted[i]->id == sorted[i - 1]->id) {
      throw Error(ErrorCode::invalid_argument, "duplicate document id in index: " + sorted[i]->id);
    }
    ix.ids_.push_back(sorted[i]->id);
    ix.texts_.push_back(indexed_text(*sorted[i]));
    const auto terms = tokenize(ix.texts_.back());
    ix.lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
    std::unordered_map<std::string, std::uint32_t> tf;
    for (const auto& t : terms) ++tf[t];
    for (auto& [term, n] : tf) ix.postings_[term].emplace_back(static_cast<std::uint32_t>(i), n);
  }
  ix.finish();
  return ix;
}

void Bm25Index::finish() {
  by_id_.clear();
  for (std::size_t i = 0; i < ids_.size(); ++i) by_id_[ids_[i]] = i;
  const double total = std::accumulate(lengths_.begin(), lengths_.end(), 0.0);
  avg_len_ = ids_.empty() ? 0.0 : total / static_cast<double>(ids_.size());
}

double Bm25Index::idf(const std::string& term) const {
  const double df = static_cast<double>(document_frequency(term));
  if (df == 0) return 0.0;
  const double n = static_cast<double>(ids_.size());
  return std::max(0.0, std::log((n - df + 0.5) / (df + 0.5)));
}

std::size_t Bm25Index::document_frequency(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? 0 : it->second.size();
}

std::optional<std::size_t> Bm25Index::doc_length(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return lengths_[it->second];
}

std::size_t Bm25Index::index_of(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw Error(ErrorCode::invalid_argument, "unknown document id: " + id);
  return it->second;
}

const std::string& Bm25Index::text(const std::string& id) const { return texts_[index_of(id)]; }

std::vector<ScoredDoc> Bm25Index::retrieve(std::string_view query, std::size_t k) const {
  if (k == 0) return {};
  std::vector<std::string> terms;
  std::set<std::string> seen;
  for (auto& t : tokenize(query)) {
    if (seen.insert(t).second) terms.push_back(std::move(t));
  }
  std::unordered_map<std::uint32_t, double> acc;
  const double k1 = params_.k1, b = params_.b;
  for (const auto& term : terms) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double w = idf(term);
    for (const auto& [doc, tf] : it->second) {
      const double norm = k1 * (1.0 - b + b * static_cast<double>(lengths_[doc]) / avg_len_);
      acc[doc] += w * (tf * (k1 + 1.0)) / (tf + norm);
    }
  }
  std::vector<std::pair<std::uint32_t, double>> ranked(acc.begin(), acc.end());
  auto better = [](const auto& x, const auto& y) { return x.second != y.second ? x.second > y.second : x.first < y.first; };
  const std::size_t n = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end(), better);
  std::vector<ScoredDoc> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({ids_[ranked[i].first], ranked[i].second});
  return out;
}

void Bm25Index::save(const std::filesystem::path& path) const {
  nlohmann::json docs = nlohmann::json::array();
  for (std::size_t i = 0; i < ids_.size(); ++i) docs.push_back({{"id", ids_[i]}, {"length", lengths_[i]}, {"text", texts_[i]}});
  nlohmann::json postings = nlohmann::json::object();
  for (const auto& [term, list] : postings_) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [doc, tf] : list) arr.push_back({doc, tf});
    postings[term] = std::move(arr);
  }
  nlohmann::json j{{"format", kIndexFormat},
                   {"version", 1},
                   {"params", {{"k1", params_.k1}, {"b", params_.b}}},
                   {"documents", docs},
                   {"postings", postings}};
  write_file_atomic(path, j.dump());
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, path.string() + ": " + e.what());
  }
  auto bad = [&](const std::string& why) { return Error(ErrorCode::parse_error, path.string() + ": " + why); };
  if (j.value("format", "") != kIndexFormat || j.value("version", 0) != 1) throw bad("not a version 1 BM25 index");
  Bm25Index ix;
  try {
    ix.params_ = {j.at("params").at("k1").get<double>(), j.at("params").at("b").get<double>()};
    for (const auto& d : j.at("documents")) {
      ix.ids_.push_back(d.at("id").get<std::string>());
      ix.lengths_.push_back(d.at("length").get<std::uint32_t>());
      ix.texts_.push_back(d.at("text").get<std::string>());
    }
    for (const auto& [term, list] : j.at("postings").items()) {
      auto& dst = ix.postings_[term];
      for (const auto& e : list) {
        const auto doc = e.at(0).get<std::uint32_t>();
        if (doc >= ix.ids_.size()) throw bad("posting for '" + term + "' names a missing document");
        dst.emplace_back(doc, e.at(1).get<std::uint32_t>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw bad(e.what());
  }
  if (ix.ids_.empty()) throw bad("index holds no documents");
  if (!std::is_sorted(ix.ids_.begin(), ix.ids_.end()) ||
      std::adjacent_find(ix.ids_.begin(), ix.ids_.end()) != ix.ids_.end()) {
    throw bad("document ids must be unique and ascending");
  }
  ix.finish();
  return ix;
}

std::vector<BenchmarkItem> sample_items(const std::vector<BenchmarkItem>& pool, std::size_t n, std::uint64_t seed) {
  if (n > pool.size()) {
    throw Error(ErrorCode::pool_too_small,
                "cannot draw " + std::to_string(n) + " items from a pool of " + std::to_string(pool.size()));
  }
  std::set<std::string> ids;
  for (const auto& it : pool) {
    if (!ids.insert(it.id).second) throw Error(ErrorCode::invalid_argument, "duplicate item id in pool: " + it.id);
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<BenchmarkItem> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(pool[order[i]]);
  return out;
}

std::string truncate_passage(const std::string& text, std::size_t max_tokens, const Tokenizer* tok) {
  if (max_tokens == 0) return text;
  if (tok) {
    const auto toks = tok->encode(text);
    if (toks.size() <= max_tokens) return text;
    return text.substr(0, utf8_floor(text, toks[max_tokens].begin));
  }
  std::size_t words = 0;
  bool in_word = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const bool space = std::isspace(static_cast<unsigned char>(text[i])) != 0;
    if (!space && !in_word && ++words > max_tokens) return trim(std::string_view(text).substr(0, i));
    in_word = !space;
  }
  return text;
}

std::string qa_passage(const BenchmarkItem& item, const std::vector<std::string>& passages) {
  std::string s = "Question: " + item.question + "\n";
  for (const auto& [label, text] : item.options) s += "(" + label + ") " + text + "\n";
  s += "Correct answer: (" + item.gold_label + ") " + item.options[item.gold_index()].second + "\n\nReference articles:\n";
  if (passages.empty()) s += "None available.\n";
  for (std::size_t i = 0; i < passages.size(); ++i) s += "[" + std::to_string(i + 1) + "] " + passages[i] + "\n";
  return s;
}

QaOutcome qa_to_dialogue(const BenchmarkItem& item, const std::vector<std::string>& passages, ChatModel& teacher,
                         const PromptTemplate& t, const QaParams& p) {
  validate_item(item);
  if (p.max_attempts < 1) throw Error(ErrorCode::invalid_argument, "max_attempts must be >= 1");
  if (passages.empty()) spdlog::warn("item {}: no reference passages", item.id);
  const std::string prompt = render_prompt(t, qa_passage(item, passages));
  const std::string needle = item.gold_label + ")";

  QaOutcome out;
  for (int attempt = 1; attempt <= p.max_attempts; ++attempt) {
    out.attempts = attempt;
    ChatRequest req;
    req.messages = {{Role::user, prompt}};
    req.temperature = p.temperature;
    req.max_output_tokens = p.max_output_tokens;
    req.seed = attempt_seed(p.seed, "qa:" + item.id, 0, attempt);
    ChatResponse resp;
    try {
      resp = teacher.chat_complete(req);
    } catch (const TransportError& e) {
      throw TransportError(e.code(), "item " + item.id + ": " + e.detail(), e.http_status());
    } catch (const Error& e) {
      throw Error(e.code(), "item " + item.id + ": " + e.detail());
    }
    try {
      Dialogue d = parse_dialogue(resp.text, t.aliases());
      auto violations = validate_dialogue(d, p.policy);
      const Turn* last_bot = nullptr;
      for (const auto& turn : d.turns) {
        if (turn.role == Role::assistant) last_bot = &turn;
      }
      if (violations.empty() && last_bot && last_bot->text.find(needle) != std::string::npos) {
        d.id = "qa-" + item.id;
        d.provenance = Provenance::qa_transform;
        d.attempts = attempt;
        out.dialogue = std::move(d);
        out.last_reason.clear();
        return out;
      }
      out.last_reason = violations.empty() ? "gold_label_missing" : violations.front();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::unparseable && e.code() != ErrorCode::malformed_roles) throw;
      out.last_reason = std::string(to_string(e.code()));
    }
  }
  return out;
}

QaBatchResult transform_qa_items(const std::vector<BenchmarkItem>& items, const Bm25Index& index, ChatModel& teacher,
                                 const PromptTemplate& t, const QaParams& p, std::size_t workers) {
  std::vector<QaOutcome> outcomes(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  parallel_for(items.size(), std::max<std::size_t>(1, workers ? workers : teacher.max_in_flight()), [&](std::size_t i) {
    try {
      const auto& item = items[i];
      std::string query = item.question;
      for (const auto& [label, text] : item.options) query += " " + text;
      std::vector<std::string> passages;
      for (const auto& hit : index.retrieve(query, p.passages_per_item)) {
        passages.push_back(truncate_passage(index.text(hit.id), p.passage_max_tokens, p.tokenizer));
      }
      outcomes[i] = qa_to_dialogue(item, passages, teacher, t, p);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  QaBatchResult out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    if (outcomes[i].dialogue) {
      out.dialogues.push_back(std::move(*outcomes[i].dialogue));
    } else {
      out.rejected.push_back({items[i].id, outcomes[i].attempts, outcomes[i].last_reason});
    }
  }
  return out;
}

}  // namespace dbke
