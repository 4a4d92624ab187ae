#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "dbke/chat_format.hpp"
#include "dbke/corpus.hpp"
#include "dbke/dbke.hpp"
#include "dbke/emit.hpp"
#include "dbke/error.hpp"
#include "dbke/evalharness.hpp"
#include "dbke/langid.hpp"
#include "dbke/modelclient.hpp"
#include "dbke/note.hpp"
#include "dbke/retrieval.hpp"
#include "dbke/run_config.hpp"
#include "dbke/util.hpp"

namespace dbke::cli {
namespace fs = std::filesystem;
namespace {

struct Options {
  std::string config;
  bool resume = false;
  bool restart = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> endpoint;
  std::optional<std::string> cache_dir;
  bool verbose = false;
  bool quiet = false;
};

struct Context {
  RunConfig cfg;
  std::string config_hash;
  Options opts;

  fs::path stage(const std::string& name) const { return cfg.output_root / name; }
};

Context load(const Options& o) {
  Context c;
  c.opts = o;
  c.cfg = load_run_config(o.config);
  if (o.seed) c.cfg.seed = *o.seed;
  if (o.endpoint) c.cfg.client.endpoint = *o.endpoint;
  if (o.cache_dir) c.cfg.client.cache_dir = fs::absolute(*o.cache_dir);
  c.config_hash = c.cfg.hash();
  return c;
}

template <typename T>
const T& required(const std::optional<T>& v, const std::string& key) {
  if (!v) throw Error(ErrorCode::config_error, key + " is required for this command");
  return *v;
}

std::unique_ptr<ModelClient> make_client(const Context& c, bool require_scoring) {
  ClientConfig cc = c.cfg.client;
  if (cc.endpoint.empty()) throw Error(ErrorCode::config_error, "client.endpoint is required (or pass --endpoint)");
  if (cc.model.empty()) throw Error(ErrorCode::config_error, "client.model is required");
  cc.require_scoring = require_scoring;
  return std::make_unique<ModelClient>(cc);
}

void save_telemetry(const ModelClient& client, const fs::path& dir) {
  write_file_atomic(dir / "telemetry.json", client.telemetry().to_json().dump(2) + "\n");
}

/// sha256 over the bytes of every file under the given paths, sorted.
std::string input_digest(const std::vector<fs::path>& paths) {
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
    } else {
      files.push_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  nlohmann::json j = nlohmann::json::array();
  for (const auto& f : files) j.push_back({f.filename().string(), sha256_hex(read_file(f))});
  return json_hash(j);
}

std::optional<nlohmann::json> read_json(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  try {
    return nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

bool up_to_date(const fs::path& manifest, const std::string& fingerprint) {
  auto j = read_json(manifest);
  return j && j->value("fingerprint", std::string()) == fingerprint && j->value("complete", false);
}

void write_stage_manifest(const Context& c, const fs::path& path, const std::string& stage,
                          const std::string& fingerprint, nlohmann::json body) {
  body["stage"] = stage;
  body["config_hash"] = c.config_hash;
  body["fingerprint"] = fingerprint;
  body["seed"] = c.cfg.seed;
  body["complete"] = true;
  write_file_atomic(path, body.dump(2) + "\n");
}

template <typename Range, typename Fn>
std::string jsonl(const Range& items, Fn to_j) {
  std::string out;
  for (const auto& x : items) out += to_j(x).dump() + "\n";
  return out;
}

std::vector<Dialogue> read_dialogues(const fs::path& p) {
  std::vector<Dialogue> out;
  for (const auto& j : read_jsonl(p)) out.push_back(dialogue_from_json(j));
  return out;
}

fs::path ingested_documents(const Context& c) {
  const fs::path p = c.stage("ingest") / "documents.jsonl";
  if (!fs::exists(p)) throw Error(ErrorCode::io_error, p.string() + " not found; run `dbke ingest` first");
  return p;
}

ChatFormat chat_format(const Context& c) {
  return c.cfg.corpus.chat_format ? ChatFormat::load(*c.cfg.corpus.chat_format) : ChatFormat::llama2();
}

std::optional<Tokenizer> tokenizer(const Context& c) {
  if (!c.cfg.corpus.tokenizer) return std::nullopt;
  return Tokenizer::load(*c.cfg.corpus.tokenizer);
}

nlohmann::json skip_counts(const std::vector<SkipRecord>& skipped) {
  std::map<std::string, std::size_t> n;
  for (const auto& s : skipped) ++n[s.reason];
  return n;
}

int cmd_ingest(const Context& c) {
  const auto& cs = c.cfg.corpus;
  if (cs.documents.empty() && cs.conversations.empty()) {
    throw Error(ErrorCode::config_error, "corpus.documents or corpus.conversations is required");
  }
  const auto tok = tokenizer(c);
  if (!cs.conversations.empty() && !tok) {
    throw Error(ErrorCode::config_error, "corpus.tokenizer is required to segment conversations");
  }
  const fs::path dir = c.stage("ingest");
  std::vector<fs::path> inputs = cs.documents;
  inputs.insert(inputs.end(), cs.conversations.begin(), cs.conversations.end());
  if (tok) inputs.push_back(*cs.tokenizer);
  if (cs.chat_format) inputs.push_back(*cs.chat_format);
  const std::string fp = json_hash({{"stage", "ingest"}, {"corpus", c.cfg.to_json()["corpus"]}, {"inputs", input_digest(inputs)}});
  if (up_to_date(dir / "manifest.json", fp)) {
    spdlog::info("ingest: up to date");
    return kExitOk;
  }

  const LanguageDetector det;
  std::vector<SkipRecord> skipped;
  std::vector<Document> docs;
  if (!cs.documents.empty()) {
    auto r = ingest_documents(cs.documents, cs.format);
    skipped = std::move(r.skipped);
    docs = filter_non_english(r.documents, det, cs.language_threshold, &skipped);
  }
  std::size_t conversations_in = 0, segments_truncated = 0;
  std::vector<Dialogue> segments;
  if (!cs.conversations.empty()) {
    auto r = ingest_conversations(cs.conversations);
    conversations_in = r.dialogues.size();
    skipped.insert(skipped.end(), r.skipped.begin(), r.skipped.end());
    auto kept = filter_non_english(r.dialogues, det, cs.language_threshold, &skipped);
    kept = filter_degenerate(kept, DegeneracyPolicy{}, &skipped);
    const ChatFormat fmt = chat_format(c);
    for (const auto& d : kept) {
      for (auto& s : segment_conversation(d, cs.max_tokens, *tok, fmt)) {
        segments_truncated += s.has_flag("truncated");
        segments.push_back(std::move(s));
      }
    }
  }

  write_file_atomic(dir / "documents.jsonl", jsonl(docs, [](const Document& d) { return to_json(d); }));
  write_file_atomic(dir / "conversations.jsonl", jsonl(segments, [](const Dialogue& d) { return to_json(d); }));
  write_file_atomic(dir / "skipped.jsonl", jsonl(skipped, [](const SkipRecord& s) {
                      return nlohmann::json{{"source", s.source}, {"reason", s.reason}, {"detail", s.detail}};
                    }));
  write_stage_manifest(c, dir / "manifest.json", "ingest", fp,
                       {{"counts",
                         {{"documents", docs.size()},
                          {"conversations_in", conversations_in},
                          {"segments", segments.size()},
                          {"segments_truncated", segments_truncated},
                          {"skipped", skipped.size()},
                          {"skipped_by_reason", skip_counts(skipped)}}}});
  spdlog::info("ingest: {} documents, {} conversation segments, {} skipped", docs.size(), segments.size(),
               skipped.size());
  return kExitOk;
}

int cmd_transform(const Context& c) {
  const auto& ds = c.cfg.dbke;
  const auto docs = ingest_documents({ingested_documents(c)}, InputFormat::structured_record);
  const auto tok = tokenizer(c);

  PipelineConfig pc;
  pc.output_dir = c.stage("dbke");
  pc.prompt = PromptTemplate::load(required(ds.template_path, "dbke.template"));
  pc.params.temperature = ds.temperature;
  pc.params.max_output_tokens = ds.max_output_tokens;
  pc.params.n_dialogues_per_doc = ds.dialogues_per_doc;
  pc.params.max_attempts = ds.max_attempts;
  pc.params.seed = c.cfg.seed;
  pc.policy.min_exchanges = ds.min_exchanges;
  pc.policy.max_tokens = c.cfg.corpus.max_tokens;
  pc.policy.tokenizer = tok ? &*tok : nullptr;
  pc.policy.format = chat_format(c);
  pc.teacher_id = c.cfg.client.endpoint + "|" + c.cfg.client.model;
  pc.workers = ds.workers;
  pc.checkpoint_every = ds.checkpoint_every;
  pc.max_documents = ds.max_documents;
  pc.restart = c.opts.restart;

  if (!c.opts.resume && !c.opts.restart) {
    if (auto m = read_json(pc.output_dir / "manifest.json")) {
      const bool same = m->value("config_hash", std::string()) == config_hash(pc);
      if (!(same && m->value("complete", false))) {
        throw Error(ErrorCode::config_error, pc.output_dir.string() +
                                                 " holds an earlier run; pass --resume to continue it or --restart to "
                                                 "discard it");
      }
    }
  }
  auto client = make_client(c, false);
  const auto m = run_pipeline(docs.documents, *client, pc);
  save_telemetry(*client, pc.output_dir);
  write_file_atomic(pc.output_dir / "run.json", nlohmann::json{{"stage", "transform"},
                                                               {"config_hash", c.config_hash},
                                                               {"pipeline_config_hash", m.config_hash},
                                                               {"complete", m.complete}}
                                                        .dump(2) +
                                                    "\n");
  spdlog::info("transform: {} accepted, {} rejected over {}/{} documents (avg {:.2f} exchanges)", m.accepted,
               m.rejected, m.cursor, m.documents_in, m.average_exchanges());
  return kExitOk;
}

int cmd_qa(const Context& c) {
  const auto& rs = c.cfg.retrieval;
  const fs::path pool_path = required(rs.pool, "retrieval.pool");
  const fs::path tpl = required(rs.template_path, "retrieval.template");
  const fs::path docs_path = ingested_documents(c);
  const fs::path dir = c.stage("qa");
  std::vector<fs::path> inputs = {pool_path, tpl, docs_path};
  if (c.cfg.corpus.tokenizer) inputs.push_back(*c.cfg.corpus.tokenizer);
  const std::string fp = json_hash({{"stage", "qa"},
                                    {"retrieval", c.cfg.to_json()["retrieval"]},
                                    {"seed", c.cfg.seed},
                                    {"teacher", c.cfg.client.endpoint + "|" + c.cfg.client.model},
                                    {"inputs", input_digest(inputs)}});
  if (up_to_date(dir / "manifest.json", fp)) {
    spdlog::info("qa: up to date");
    return kExitOk;
  }

  const auto pool = load_benchmark(rs.pool_format, pool_path);
  const auto items = sample_items(pool.items, rs.n_items, derive_seed(c.cfg.seed, "qa-sample"));
  const auto docs = ingest_documents({docs_path}, InputFormat::structured_record);
  const auto index = Bm25Index::build(docs.documents);
  index.save(dir / "bm25.json");
  const auto tok = tokenizer(c);

  QaParams p;
  p.temperature = rs.temperature;
  p.max_output_tokens = rs.max_output_tokens;
  p.max_attempts = rs.max_attempts;
  p.seed = c.cfg.seed;
  p.passages_per_item = rs.passages_per_item;
  p.passage_max_tokens = rs.passage_max_tokens;
  p.tokenizer = tok ? &*tok : nullptr;
  p.policy.tokenizer = p.tokenizer;
  p.policy.max_tokens = c.cfg.corpus.max_tokens;
  p.policy.format = chat_format(c);

  auto client = make_client(c, false);
  const auto r = transform_qa_items(items, index, *client, PromptTemplate::load(tpl), p, rs.workers);
  save_telemetry(*client, dir);
  write_file_atomic(dir / "dialogues.jsonl", jsonl(r.dialogues, [](const Dialogue& d) { return to_json(d); }));
  write_file_atomic(dir / "rejected.jsonl", jsonl(r.rejected, [](const QaRejection& q) {
                      return nlohmann::json{{"item_id", q.item_id}, {"attempts", q.attempts}, {"reason", q.reason}};
                    }));
  write_stage_manifest(c, dir / "manifest.json", "qa", fp,
                       {{"counts",
                         {{"pool", pool.items.size()},
                          {"pool_malformed", pool.errors.size()},
                          {"sampled", items.size()},
                          {"accepted", r.dialogues.size()},
                          {"rejected", r.rejected.size()}}}});
  spdlog::info("qa: {} of {} sampled items accepted", r.dialogues.size(), items.size());
  return kExitOk;
}

int cmd_emit(const Context& c) {
  const auto& es = c.cfg.emit;
  const fs::path tok_path = required(c.cfg.corpus.tokenizer, "corpus.tokenizer");
  const fs::path dir = c.stage("emit");
  const std::vector<std::pair<std::string, fs::path>> sources = {
      {"sharegpt", c.stage("ingest") / "conversations.jsonl"},
      {"dbke", c.stage("dbke") / "dialogues.jsonl"},
      {"qa_transform", c.stage("qa") / "dialogues.jsonl"},
  };
  std::vector<fs::path> inputs = {tok_path};
  if (c.cfg.corpus.chat_format) inputs.push_back(*c.cfg.corpus.chat_format);
  for (const auto& [name, p] : sources) {
    if (fs::exists(p)) inputs.push_back(p);
  }
  if (inputs.size() == (c.cfg.corpus.chat_format ? 2u : 1u)) {
    throw Error(ErrorCode::io_error, "no dialogues under " + c.cfg.output_root.string() +
                                         "; run ingest, transform or qa first");
  }
  const std::string fp = json_hash({{"stage", "emit"},
                                    {"emit", c.cfg.to_json()["emit"]},
                                    {"seed", c.cfg.seed},
                                    {"inputs", input_digest(inputs)}});
  if (up_to_date(dir / "manifest.json", fp)) {
    spdlog::info("emit: up to date");
    return kExitOk;
  }

  const Tokenizer tok = Tokenizer::load(tok_path);
  const ChatFormat fmt = chat_format(c);
  std::vector<std::vector<TrainingSample>> streams;
  nlohmann::json counts = nlohmann::json::object();
  std::vector<SampleRejection> rejected;
  for (const auto& [name, p] : sources) {
    if (!fs::exists(p)) continue;
    auto batch = tokenize_dialogues(read_dialogues(p), tok, fmt, es.max_len, es.workers);
    counts[name] = {{"samples", batch.samples.size()}, {"rejected", batch.rejected.size()}};
    rejected.insert(rejected.end(), batch.rejected.begin(), batch.rejected.end());
    streams.push_back(std::move(batch.samples));
  }
  const auto mixed = mix_and_shuffle(std::move(streams), derive_seed(c.cfg.seed, "mix"));
  const auto shards = write_shards(mixed, dir / "shards", es.shard_size, c.config_hash, c.cfg.seed);
  for (const auto& v : es.variants) write_train_config(v, dir / ("train_" + v + ".toml"));
  write_file_atomic(dir / "rejected.jsonl", jsonl(rejected, [](const SampleRejection& r) {
                      return nlohmann::json{{"source_ref", r.source_ref}, {"reason", r.reason}};
                    }));
  write_stage_manifest(c, dir / "manifest.json", "emit", fp,
                       {{"counts", counts},
                        {"samples", shards.total()},
                        {"shards", shards.shards.size()},
                        {"tokenizer", tok.fingerprint()},
                        {"chat_format", fmt.to_json()},
                        {"mask_policy", kMaskPolicy},
                        {"train_configs", es.variants}});
  spdlog::info("emit: {} samples in {} shards", shards.total(), shards.shards.size());
  return kExitOk;
}

int cmd_eval(const Context& c) {
  const auto& ev = c.cfg.eval;
  if (ev.benchmarks.empty()) throw Error(ErrorCode::config_error, "eval.benchmarks is empty");
  const fs::path dir = c.stage("eval");
  std::unique_ptr<ModelClient> client;
  EvalConfig ecfg;
  ecfg.normalization = ev.normalization;
  ecfg.continuation_style = ev.continuation_style;
  ecfg.allow_item_errors = ev.allow_item_errors;
  ecfg.seed = c.cfg.seed;

  for (const auto& b : ev.benchmarks) {
    for (std::size_t k : ev.shots) {
      if (k > 0 && !b.dev) {
        throw Error(ErrorCode::config_error, "eval benchmark " + b.name + " needs `dev` for " + std::to_string(k) + "-shot");
      }
      ecfg.k = k;
      const std::string stem = b.name + "_" + std::to_string(k) + "shot";
      std::vector<fs::path> inputs = {b.test};
      if (k > 0) inputs.push_back(*b.dev);
      const std::string fp = json_hash({{"stage", "eval"},
                                        {"benchmark", b.name},
                                        {"format", to_string(b.format)},
                                        {"config", ecfg.to_json()},
                                        {"model", c.cfg.client.endpoint + "|" + c.cfg.client.model},
                                        {"inputs", input_digest(inputs)}});
      if (up_to_date(dir / (stem + ".json"), fp)) {
        spdlog::info("eval {}: up to date", stem);
        continue;
      }
      const auto test = load_benchmark(b.format, b.test, b.expected_count);
      std::set<std::string> ids;
      for (const auto& it : test.items) ids.insert(it.id);
      ShotSet shots;
      if (k > 0) shots = build_kshot(load_benchmark(b.format, *b.dev).items, k, c.cfg.seed, b.name, ids);
      if (!client) client = make_client(c, ev.require_scoring);
      const auto report =
          evaluate(test.items, *client, shots, ecfg, {b.name, c.cfg.client.model, ev.workers, dir / (stem + ".audit.jsonl")});
      auto j = report.to_json();
      j["fingerprint"] = fp;
      j["complete"] = true;
      j["run_config_hash"] = c.config_hash;
      j["malformed_rows"] = test.errors.size();
      j["exemplars"] = nlohmann::json::array();
      for (const auto& e : shots.exemplars) j["exemplars"].push_back(e.id);
      write_file_atomic(dir / (stem + ".json"), j.dump(2) + "\n");
    }
  }
  if (client) save_telemetry(*client, dir);
  return kExitOk;
}

int cmd_report(const Context& c) {
  const fs::path dir = c.stage("eval");
  std::vector<fs::path> files;
  if (fs::exists(dir)) {
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (e.is_regular_file() && name.ends_with("shot.json")) files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<EvalReport> reports;
  for (const auto& f : files) {
    auto j = read_json(f);
    if (!j) throw Error(ErrorCode::parse_error, f.string() + " is not valid JSON");
    reports.push_back(EvalReport::from_json(*j));
  }
  const auto out = render_report(reports);
  const fs::path rdir = c.stage("report");
  write_file_atomic(rdir / "report.md", out.markdown + "Run config: " + c.config_hash + "\n");
  write_file_atomic(rdir / "report.csv", out.csv);
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& f : files) sources.push_back(f.filename().string());
  write_file_atomic(rdir / "manifest.json",
                    nlohmann::json{{"stage", "report"}, {"config_hash", c.config_hash}, {"inputs", sources}}.dump(2) + "\n");
  spdlog::info("report: {} evaluation runs rendered to {}", reports.size(), rdir.string());
  return kExitOk;
}

int cmd_note(const Context& c) {
  const auto& ns = c.cfg.note;
  const auto tpl = PromptTemplate::load(required(ns.template_path, "note.template"));
  const std::string transcript = read_file(required(ns.transcript, "note.transcript"));
  auto client = make_client(c, false);
  const auto note = generate_note(transcript, tpl, *client, ns.temperature, ns.max_output_tokens, c.cfg.seed);
  const fs::path dir = c.stage("note");
  write_file_atomic(dir / "note.md", note.text);
  write_file_atomic(dir / "manifest.json", nlohmann::json{{"stage", "note"},
                                                          {"config_hash", c.config_hash},
                                                          {"template", tpl.fingerprint()},
                                                          {"model_id", note.model_id},
                                                          {"missing_headings", note.missing_headings}}
                                                   .dump(2) +
                                               "\n");
  save_telemetry(*client, dir);
  if (!note.missing_headings.empty()) {
    std::string list;
    for (const auto& h : note.missing_headings) list += (list.empty() ? "" : ", ") + h;
    spdlog::error("note: generated note lacks headings: {}", list);
    return kExitValidation;
  }
  spdlog::info("note: written to {}", (dir / "note.md").string());
  return kExitOk;
}

bool is_transport(ErrorCode code) {
  return code == ErrorCode::transport_error || code == ErrorCode::auth_error ||
         code == ErrorCode::capability_error || code == ErrorCode::protocol_error;
}

std::string hint(ErrorCode code) {
  switch (code) {
    case ErrorCode::config_error: return "fix the named key in the config file";
    case ErrorCode::io_error: return "check the path; each stage reads the previous stage's output under output_root";
    case ErrorCode::checkpoint_corrupt: return "rerun with --restart to discard the checkpoint";
    case ErrorCode::template_error: return "fix the template front matter or slots";
    case ErrorCode::pool_too_small: return "lower retrieval.n_items or the eval shot count, or supply a larger pool";
    case ErrorCode::transport_error: return "check that client.endpoint (or --endpoint) is reachable";
    case ErrorCode::auth_error: return "export the API key in the variable named by client.api_key_env";
    case ErrorCode::capability_error: return "eval needs an endpoint serving /completions with echo and logprobs";
    case ErrorCode::protocol_error: return "check client.endpoint and client.model; the server answered unexpectedly";
    case ErrorCode::tokenizer_error: return "corpus.tokenizer must be a HuggingFace tokenizer.json with a BPE model";
    default: return {};
  }
}

void setup_logging(const Options& o) {
  static std::shared_ptr<spdlog::logger> logger = [] {
    auto l = spdlog::stderr_color_mt("dbke");
    spdlog::set_default_logger(l);
    return l;
  }();
  logger->set_level(o.quiet ? spdlog::level::warn : o.verbose ? spdlog::level::debug : spdlog::level::info);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Dialogue-based knowledge encoding: dataset synthesis and benchmark evaluation", "dbke"};
  app.require_subcommand(1);
  Options o;
  using Cmd = int (*)(const Context&);
  const std::vector<std::tuple<const char*, const char*, Cmd>> commands = {
      {"ingest", "Read, filter and segment documents and conversations", cmd_ingest},
      {"transform", "Turn ingested documents into dialogues through the teacher", cmd_transform},
      {"qa", "Turn sampled benchmark items into justification dialogues", cmd_qa},
      {"emit", "Tokenize dialogues with loss masks, shard them and write training configs", cmd_emit},
      {"eval", "Score benchmarks by option log-likelihood", cmd_eval},
      {"report", "Render evaluation results beside the published tables", cmd_report},
      {"note", "Generate a clinical note from a conversation transcript", cmd_note},
  };
  Cmd chosen = nullptr;
  std::string chosen_name;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", o.config, "Run config (TOML)")->required()->check(CLI::ExistingFile);
    sub->add_flag("--resume", o.resume, "Continue an interrupted run");
    if (std::string(name) == "transform") sub->add_flag("--restart", o.restart, "Discard an existing checkpoint");
    sub->add_option("--seed", o.seed, "Override the config seed");
    sub->add_option("--endpoint", o.endpoint, "Override client.endpoint");
    sub->add_option("--cache-dir", o.cache_dir, "Override client.cache_dir");
    sub->add_flag("-v,--verbose", o.verbose, "Debug logging");
    sub->add_flag("-q,--quiet", o.quiet, "Warnings and errors only");
    sub->callback([&, fn = fn, n = std::string(name)] {
      chosen = fn;
      chosen_name = n;
    });
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  setup_logging(o);
  try {
    return chosen(load(o));
  } catch (const Error& e) {
    spdlog::error("{}: {}", chosen_name, e.what());
    if (auto h = hint(e.code()); !h.empty()) spdlog::error("hint: {}", h);
    return is_transport(e.code()) ? kExitTransport : kExitValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", chosen_name, e.what());
    return kExitValidation;
  }
}

}  // namespace dbke::cli
