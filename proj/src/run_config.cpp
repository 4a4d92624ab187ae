#include "dbke/run_config.hpp"

#include <set>

#include <toml.hpp>

#include "dbke/error.hpp"
#include "dbke/util.hpp"

namespace dbke {
namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::config_error, key + ": " + what);
}

// Typed access to one table that remembers which keys were read so the
// rest can be reported as unknown.
class Section {
 public:
  Section(const toml::table* t, std::string prefix, std::filesystem::path base)
      : t_(t), prefix_(std::move(prefix)), base_(std::move(base)) {}

  std::string key(const char* k) const { return prefix_.empty() ? k : prefix_ + "." + k; }

  const toml::node* node(const char* k) {
    seen_.insert(k);
    return t_ ? t_->get(k) : nullptr;
  }

  void str(const char* k, std::string& out) {
    if (auto* n = node(k)) {
      auto v = n->value<std::string>();
      if (!v || !n->is_string()) bad(key(k), "must be a string");
      out = *v;
    }
  }
  template <typename T>
  void integer(const char* k, T& out, std::int64_t min = 0) {
    if (auto* n = node(k)) {
      if (!n->is_integer()) bad(key(k), "must be an integer");
      const auto v = *n->value<std::int64_t>();
      if (v < min) bad(key(k), "must be at least " + std::to_string(min));
      out = static_cast<T>(v);
    }
  }
  template <typename T>
  void integer(const char* k, std::optional<T>& out, std::int64_t min = 0) {
    if (node(k)) {
      T v{};
      integer(k, v, min);
      out = v;
    }
  }
  void real(const char* k, double& out) {
    if (auto* n = node(k)) {
      if (!n->is_number()) bad(key(k), "must be a number");
      out = *n->value<double>();
    }
  }
  void boolean(const char* k, bool& out) {
    if (auto* n = node(k)) {
      if (!n->is_boolean()) bad(key(k), "must be true or false");
      out = *n->value<bool>();
    }
  }
  void path(const char* k, std::optional<std::filesystem::path>& out) {
    std::string s;
    if (!node(k)) return;
    str(k, s);
    out = resolve(s);
  }
  void path(const char* k, std::filesystem::path& out) {
    std::optional<std::filesystem::path> p;
    path(k, p);
    if (p) out = *p;
  }
  void paths(const char* k, std::vector<std::filesystem::path>& out) {
    auto* n = node(k);
    if (!n) return;
    out.clear();
    if (n->is_string()) {
      out.push_back(resolve(*n->value<std::string>()));
      return;
    }
    const auto* arr = n->as_array();
    if (!arr) bad(key(k), "must be a string or an array of strings");
    for (const auto& e : *arr) {
      if (!e.is_string()) bad(key(k), "must be a string or an array of strings");
      out.push_back(resolve(*e.value<std::string>()));
    }
  }
  void strings(const char* k, std::vector<std::string>& out) {
    auto* n = node(k);
    if (!n) return;
    const auto* arr = n->as_array();
    if (!arr) bad(key(k), "must be an array of strings");
    out.clear();
    for (const auto& e : *arr) {
      if (!e.is_string()) bad(key(k), "must be an array of strings");
      out.push_back(*e.value<std::string>());
    }
  }
  void sizes(const char* k, std::vector<std::size_t>& out) {
    auto* n = node(k);
    if (!n) return;
    const auto* arr = n->as_array();
    if (!arr) bad(key(k), "must be an array of integers");
    out.clear();
    for (const auto& e : *arr) {
      if (!e.is_integer() || *e.value<std::int64_t>() < 0) bad(key(k), "must be an array of non-negative integers");
      out.push_back(static_cast<std::size_t>(*e.value<std::int64_t>()));
    }
  }

  /// Throws for any key of this table that was never read.
  void finish(const std::set<std::string>& subtables = {}) const {
    if (!t_) return;
    for (const auto& [k, v] : *t_) {
      const std::string name(k.str());
      if (!seen_.contains(name) && !subtables.contains(name)) bad(key(name.c_str()), "unknown key");
    }
  }

  std::filesystem::path resolve(const std::string& s) const {
    std::filesystem::path p(s);
    return p.is_absolute() ? p : (base_ / p).lexically_normal();
  }

 private:
  const toml::table* t_;
  std::string prefix_;
  std::filesystem::path base_;
  std::set<std::string> seen_;
};

const toml::table* table_at(const toml::table& root, const char* name) {
  const toml::node* n = root.get(name);
  if (!n) return nullptr;
  if (!n->is_table()) bad(name, "must be a table");
  return n->as_table();
}

std::string p2s(const std::optional<std::filesystem::path>& p) { return p ? p->string() : std::string(); }

std::vector<std::string> p2s(const std::vector<std::filesystem::path>& ps) {
  std::vector<std::string> out;
  for (const auto& p : ps) out.push_back(p.string());
  return out;
}

}  // namespace

RunConfig parse_run_config(const std::string& toml_text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw Error(ErrorCode::config_error, "line " + std::to_string(e.source().begin.line) + ": " +
                                             std::string(e.description()));
  }
  RunConfig c;
  Section top(&root, "", base_dir);
  top.integer("seed", c.seed);
  top.path("output_root", c.output_root);
  if (c.output_root.is_relative()) c.output_root = top.resolve(c.output_root.string());
  top.finish({"client", "corpus", "dbke", "retrieval", "emit", "eval", "note"});

  Section client(table_at(root, "client"), "client", base_dir);
  client.str("endpoint", c.client.endpoint);
  client.str("model", c.client.model);
  client.str("api_key_env", c.client.api_key_env);
  client.integer("max_in_flight", c.client.max_in_flight, 1);
  client.integer("requests_per_minute", c.client.requests_per_minute, 1);
  client.integer("max_retries", c.client.max_retries);
  client.real("base_backoff_seconds", c.client.base_backoff_seconds);
  client.real("max_backoff_seconds", c.client.max_backoff_seconds);
  client.real("timeout_seconds", c.client.timeout_seconds);
  client.path("cache_dir", c.client.cache_dir);
  client.finish();

  Section corpus(table_at(root, "corpus"), "corpus", base_dir);
  corpus.paths("documents", c.corpus.documents);
  {
    std::string fmt;
    corpus.str("format", fmt);
    if (!fmt.empty()) {
      try {
        c.corpus.format = input_format_from_string(fmt);
      } catch (const Error&) {
        bad("corpus.format", "must be plain_text or structured_record");
      }
    }
  }
  corpus.paths("conversations", c.corpus.conversations);
  corpus.path("tokenizer", c.corpus.tokenizer);
  corpus.path("chat_format", c.corpus.chat_format);
  corpus.integer("max_tokens", c.corpus.max_tokens, 16);
  corpus.real("language_threshold", c.corpus.language_threshold);
  if (c.corpus.language_threshold < 0 || c.corpus.language_threshold > 1) bad("corpus.language_threshold", "must be in [0, 1]");
  corpus.finish();

  Section dbke(table_at(root, "dbke"), "dbke", base_dir);
  dbke.path("template", c.dbke.template_path);
  dbke.integer("dialogues_per_doc", c.dbke.dialogues_per_doc, 1);
  dbke.integer("max_attempts", c.dbke.max_attempts, 1);
  dbke.real("temperature", c.dbke.temperature);
  dbke.integer("max_output_tokens", c.dbke.max_output_tokens, 1);
  dbke.integer("min_exchanges", c.dbke.min_exchanges, 1);
  dbke.integer("checkpoint_every", c.dbke.checkpoint_every, 1);
  dbke.integer("workers", c.dbke.workers);
  dbke.integer("max_documents", c.dbke.max_documents, 1);
  dbke.finish();

  Section ret(table_at(root, "retrieval"), "retrieval", base_dir);
  ret.path("pool", c.retrieval.pool);
  {
    std::string fmt;
    ret.str("pool_format", fmt);
    if (!fmt.empty()) {
      try {
        c.retrieval.pool_format = benchmark_format_from_string(fmt);
      } catch (const Error&) {
        bad("retrieval.pool_format", "unknown benchmark format " + fmt);
      }
    }
  }
  ret.integer("n_items", c.retrieval.n_items, 1);
  ret.integer("passages_per_item", c.retrieval.passages_per_item);
  ret.integer("passage_max_tokens", c.retrieval.passage_max_tokens);
  ret.path("template", c.retrieval.template_path);
  ret.integer("max_attempts", c.retrieval.max_attempts, 1);
  ret.real("temperature", c.retrieval.temperature);
  ret.integer("max_output_tokens", c.retrieval.max_output_tokens, 1);
  ret.integer("workers", c.retrieval.workers);
  ret.finish();

  Section emit(table_at(root, "emit"), "emit", base_dir);
  emit.integer("shard_size", c.emit.shard_size, 1);
  emit.integer("max_len", c.emit.max_len, 16);
  emit.strings("variants", c.emit.variants);
  for (const auto& v : c.emit.variants) {
    if (v != "13B" && v != "70B") bad("emit.variants", "unknown variant " + v + " (expected 13B or 70B)");
  }
  emit.integer("workers", c.emit.workers);
  emit.finish();

  const toml::table* eval_t = table_at(root, "eval");
  Section eval(eval_t, "eval", base_dir);
  eval.sizes("shots", c.eval.shots);
  {
    std::string s;
    eval.str("normalization", s);
    if (s == "per_token") {
      c.eval.normalization = Normalization::per_token;
    } else if (!s.empty() && s != "raw_sum") {
      bad("eval.normalization", "must be raw_sum or per_token");
    }
    s.clear();
    eval.str("continuation_style", s);
    if (s == "option_text") {
      c.eval.continuation_style = ContinuationStyle::option_text;
    } else if (!s.empty() && s != "letter") {
      bad("eval.continuation_style", "must be letter or option_text");
    }
  }
  eval.boolean("allow_item_errors", c.eval.allow_item_errors);
  eval.boolean("require_scoring", c.eval.require_scoring);
  eval.integer("workers", c.eval.workers);
  if (eval_t) {
    if (const toml::node* n = eval_t->get("benchmarks")) {
      const toml::array* arr = n->as_array();
      if (!arr) bad("eval.benchmarks", "must be an array of tables ([[eval.benchmarks]])");
      std::set<std::string> names;
      for (std::size_t i = 0; i < arr->size(); ++i) {
        const std::string prefix = "eval.benchmarks[" + std::to_string(i) + "]";
        const toml::table* bt = (*arr)[i].as_table();
        if (!bt) bad(prefix, "must be a table");
        Section b(bt, prefix, base_dir);
        BenchmarkSpec spec;
        b.str("name", spec.name);
        std::string fmt;
        b.str("format", fmt);
        b.path("test", spec.test);
        b.path("dev", spec.dev);
        b.integer("expected_count", spec.expected_count);
        b.finish();
        if (spec.name.empty()) bad(prefix + ".name", "is required");
        if (!names.insert(spec.name).second) bad(prefix + ".name", "duplicate benchmark " + spec.name);
        if (spec.test.empty()) bad(prefix + ".test", "is required");
        try {
          spec.format = benchmark_format_from_string(fmt);
        } catch (const Error&) {
          bad(prefix + ".format", "must be one of mmlu, medqa, medmcqa, pubmedqa, usmle");
        }
        c.eval.benchmarks.push_back(std::move(spec));
      }
    }
  }
  eval.finish({"benchmarks"});

  Section note(table_at(root, "note"), "note", base_dir);
  note.path("template", c.note.template_path);
  note.path("transcript", c.note.transcript);
  note.real("temperature", c.note.temperature);
  note.integer("max_output_tokens", c.note.max_output_tokens, 1);
  note.finish();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::config_error, "cannot read config " + path.string());
  }
  try {
    return parse_run_config(text, std::filesystem::absolute(path).parent_path());
  } catch (const Error& e) {
    throw Error(ErrorCode::config_error, path.filename().string() + ": " + e.detail());
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json benchmarks = nlohmann::json::array();
  for (const auto& b : eval.benchmarks) {
    benchmarks.push_back({{"name", b.name},
                          {"format", to_string(b.format)},
                          {"test", b.test.string()},
                          {"dev", p2s(b.dev)},
                          {"expected_count", b.expected_count ? nlohmann::json(*b.expected_count) : nlohmann::json()}});
  }
  return {
      {"seed", seed},
      {"output_root", output_root.string()},
      {"client",
       {{"endpoint", client.endpoint},
        {"model", client.model},
        {"max_in_flight", client.max_in_flight},
        {"requests_per_minute", client.requests_per_minute},
        {"max_retries", client.max_retries},
        {"timeout_seconds", client.timeout_seconds}}},
      {"corpus",
       {{"documents", p2s(corpus.documents)},
        {"format", corpus.format == InputFormat::plain_text ? "plain_text" : "structured_record"},
        {"conversations", p2s(corpus.conversations)},
        {"tokenizer", p2s(corpus.tokenizer)},
        {"chat_format", p2s(corpus.chat_format)},
        {"max_tokens", corpus.max_tokens},
        {"language_threshold", corpus.language_threshold}}},
      {"dbke",
       {{"template", p2s(dbke.template_path)},
        {"dialogues_per_doc", dbke.dialogues_per_doc},
        {"max_attempts", dbke.max_attempts},
        {"temperature", dbke.temperature},
        {"max_output_tokens", dbke.max_output_tokens},
        {"min_exchanges", dbke.min_exchanges}}},
      {"retrieval",
       {{"pool", p2s(retrieval.pool)},
        {"pool_format", to_string(retrieval.pool_format)},
        {"n_items", retrieval.n_items},
        {"passages_per_item", retrieval.passages_per_item},
        {"passage_max_tokens", retrieval.passage_max_tokens},
        {"template", p2s(retrieval.template_path)},
        {"max_attempts", retrieval.max_attempts},
        {"temperature", retrieval.temperature},
        {"max_output_tokens", retrieval.max_output_tokens}}},
      {"emit", {{"shard_size", emit.shard_size}, {"max_len", emit.max_len}, {"variants", emit.variants}}},
      {"eval",
       {{"shots", eval.shots},
        {"normalization", eval.normalization == Normalization::raw_sum ? "raw_sum" : "per_token"},
        {"continuation_style", eval.continuation_style == ContinuationStyle::letter ? "letter" : "option_text"},
        {"allow_item_errors", eval.allow_item_errors},
        {"benchmarks", benchmarks}}},
      {"note",
       {{"template", p2s(note.template_path)},
        {"transcript", p2s(note.transcript)},
        {"temperature", note.temperature},
        {"max_output_tokens", note.max_output_tokens}}},
  };
}

std::string RunConfig::hash() const { return json_hash(to_json()); }

}  // namespace dbke
