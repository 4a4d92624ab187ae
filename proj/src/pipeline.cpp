#include <spdlog/spdlog.h>

#include <exception>
#include <fstream>
#include <limits>

#include "dbke/dbke.hpp"
#include "dbke/error.hpp"
#include "dbke/util.hpp"

namespace dbke {

namespace fs = std::filesystem;

namespace {

constexpr const char* kDialoguesFile = "dialogues.jsonl";
constexpr const char* kManifestFile = "manifest.json";

[[noreturn]] void corrupt(const fs::path& dir, const std::string& why) {
  throw Error(ErrorCode::checkpoint_corrupt,
              dir.string() + ": " + why + " (rerun with restart to discard the checkpoint)");
}

void verify_checkpoint(const DatasetManifest& m, const std::vector<Document>& corpus, const fs::path& dir) {
  if (m.documents.size() != m.cursor) corrupt(dir, "cursor does not match the per-document records");
  if (m.cursor > corpus.size()) corrupt(dir, "checkpoint covers more documents than the corpus holds");

  std::size_t accepted = 0, rejected = 0, retried = 0;
  std::uint64_t end = 0;
  for (std::size_t i = 0; i < m.cursor; ++i) {
    const auto& r = m.documents[i];
    if (r.doc_id != corpus[i].id) corrupt(dir, "document " + std::to_string(i) + " is '" + corpus[i].id + "', checkpoint has '" + r.doc_id + "'");
    if (r.offset != end) corrupt(dir, "non-contiguous byte ranges at document " + r.doc_id);
    end += r.length;
    accepted += static_cast<std::size_t>(r.accepted);
    rejected += static_cast<std::size_t>(r.rejected);
    retried += static_cast<std::size_t>(r.retries);
  }
  if (accepted != m.accepted || rejected != m.rejected || retried != m.retried || m.generated != accepted + rejected) {
    corrupt(dir, "manifest totals disagree with the per-document records");
  }

  const fs::path data = dir / kDialoguesFile;
  std::error_code ec;
  const auto size = fs::file_size(data, ec);
  if (ec || size < end) corrupt(dir, "dialogues.jsonl is missing or shorter than the checkpoint");
  std::ifstream in(data, std::ios::binary);
  std::string buf;
  for (const auto& r : m.documents) {
    buf.resize(r.length);
    in.read(buf.data(), static_cast<std::streamsize>(r.length));
    if (!in || sha256_hex(buf) != r.sha256) corrupt(dir, "checksum mismatch for document " + r.doc_id);
  }
}

}  // namespace

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& r : documents) {
    docs.push_back({{"doc_id", r.doc_id},
                    {"accepted", r.accepted},
                    {"rejected", r.rejected},
                    {"retries", r.retries},
                    {"offset", r.offset},
                    {"length", r.length},
                    {"sha256", r.sha256}});
  }
  return {{"version", 1},
          {"run_id", run_id},
          {"config_hash", config_hash},
          {"counts",
           {{"documents_in", documents_in},
            {"generated", generated},
            {"accepted", accepted},
            {"rejected", rejected},
            {"retried", retried},
            {"exchanges", exchanges},
            {"average_exchanges", average_exchanges()}}},
          {"cursor", cursor},
          {"complete", complete},
          {"documents", docs}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw Error(ErrorCode::parse_error, "unsupported manifest version");
    DatasetManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    const auto& c = j.at("counts");
    m.documents_in = c.at("documents_in").get<std::size_t>();
    m.generated = c.at("generated").get<std::size_t>();
    m.accepted = c.at("accepted").get<std::size_t>();
    m.rejected = c.at("rejected").get<std::size_t>();
    m.retried = c.at("retried").get<std::size_t>();
    m.exchanges = c.at("exchanges").get<std::size_t>();
    m.cursor = j.at("cursor").get<std::size_t>();
    m.complete = j.at("complete").get<bool>();
    for (const auto& r : j.at("documents")) {
      m.documents.push_back({r.at("doc_id").get<std::string>(), r.at("accepted").get<int>(),
                             r.at("rejected").get<int>(), r.at("retries").get<int>(),
                             r.at("offset").get<std::uint64_t>(), r.at("length").get<std::uint64_t>(),
                             r.at("sha256").get<std::string>()});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("manifest: ") + e.what());
  }
}

std::string config_hash(const PipelineConfig& cfg) {
  const auto& p = cfg.params;
  const auto& v = cfg.policy;
  nlohmann::json j{
      {"template", cfg.prompt.fingerprint()},
      {"teacher", cfg.teacher_id},
      {"params",
       {{"temperature", p.temperature},
        {"max_output_tokens", p.max_output_tokens},
        {"n_dialogues_per_doc", p.n_dialogues_per_doc},
        {"max_attempts", p.max_attempts},
        {"seed", p.seed}}},
      {"policy",
       {{"min_exchanges", v.min_exchanges},
        {"require_user_first", v.require_user_first},
        {"require_alternation", v.require_alternation},
        {"max_tokens", v.tokenizer ? nlohmann::json(v.max_tokens) : nlohmann::json()},
        {"tokenizer", v.tokenizer ? nlohmann::json(v.tokenizer->fingerprint()) : nlohmann::json()},
        {"format", v.format.to_json()}}}};
  return json_hash(j);
}

DatasetManifest run_pipeline(const std::vector<Document>& corpus, ChatModel& teacher, const PipelineConfig& cfg) {
  validate(cfg.params);
  const fs::path& dir = cfg.output_dir;
  fs::create_directories(dir);
  const fs::path manifest_path = dir / kManifestFile;
  const fs::path data_path = dir / kDialoguesFile;
  const std::string hash = config_hash(cfg);

  DatasetManifest m;
  if (!cfg.restart && fs::exists(manifest_path)) {
    try {
      m = DatasetManifest::from_json(nlohmann::json::parse(read_file(manifest_path)));
    } catch (const std::exception& e) {
      corrupt(dir, std::string("unreadable manifest: ") + e.what());
    }
    if (m.config_hash != hash) {
      throw Error(ErrorCode::config_error,
                  dir.string() + ": checkpoint was written with a different configuration (rerun with restart)");
    }
    verify_checkpoint(m, corpus, dir);
    if (m.cursor == corpus.size() && m.complete && m.documents_in == corpus.size()) {
      spdlog::info("{}: all {} documents already transformed", dir.string(), m.cursor);
      return m;
    }
    // drop output written after the last checkpoint
    fs::resize_file(data_path, m.documents.empty() ? 0 : m.documents.back().offset + m.documents.back().length);
    spdlog::info("{}: resuming at document {} of {}", dir.string(), m.cursor, corpus.size());
  } else {
    fs::remove(manifest_path);
    fs::remove(data_path);
    m.run_id = hash.substr(0, 12);
    m.config_hash = hash;
  }
  m.documents_in = corpus.size();
  m.complete = false;

  std::ofstream out(data_path, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::io_error, "cannot open " + data_path.string());
  std::uint64_t offset = m.documents.empty() ? 0 : m.documents.back().offset + m.documents.back().length;

  auto checkpoint = [&] {
    out.flush();
    if (!out) throw Error(ErrorCode::io_error, "write failed: " + data_path.string());
    write_file_atomic(manifest_path, m.to_json().dump(1));
  };

  const std::size_t workers = std::max<std::size_t>(1, cfg.workers ? cfg.workers : teacher.max_in_flight());
  const std::size_t budget = cfg.max_documents.value_or(std::numeric_limits<std::size_t>::max());
  const std::size_t every = std::max<std::size_t>(1, cfg.checkpoint_every);
  std::size_t processed = 0, since_checkpoint = 0;

  while (m.cursor < corpus.size() && processed < budget) {
    const std::size_t batch = std::min({workers, corpus.size() - m.cursor, budget - processed});
    std::vector<TransformResult> results(batch);
    std::vector<std::exception_ptr> errors(batch);
    const std::size_t base = m.cursor;
    parallel_for(batch, workers, [&](std::size_t i) {
      try {
        results[i] = transform_document(corpus[base + i], cfg.prompt, teacher, cfg.params, cfg.policy);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });

    // commit in input order up to the first failure
    for (std::size_t i = 0; i < batch; ++i) {
      if (errors[i]) {
        checkpoint();
        std::rethrow_exception(errors[i]);
      }
      const auto& r = results[i];
      std::string lines;
      for (const auto& d : r.dialogues) {
        lines += to_json(d).dump();
        lines += '\n';
        m.exchanges += exchange_count(d);
      }
      out.write(lines.data(), static_cast<std::streamsize>(lines.size()));
      DocumentRecord rec{corpus[base + i].id, static_cast<int>(r.dialogues.size()), static_cast<int>(r.rejected.size()),
                         r.retries, offset, lines.size(), sha256_hex(lines)};
      for (const auto& f : r.rejected) {
        spdlog::debug("{}: slot {} rejected after {} attempts ({})", rec.doc_id, f.slot, f.attempts, f.last_reason);
      }
      offset += lines.size();
      m.accepted += r.dialogues.size();
      m.rejected += r.rejected.size();
      m.retried += static_cast<std::size_t>(r.retries);
      m.generated = m.accepted + m.rejected;
      m.documents.push_back(std::move(rec));
      ++m.cursor;
      ++processed;
      if (++since_checkpoint >= every) {
        checkpoint();
        since_checkpoint = 0;
      }
    }
  }
  m.complete = m.cursor == corpus.size();
  checkpoint();
  return m;
}

}  // namespace dbke
