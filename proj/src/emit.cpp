#include "dbke/emit.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>
#include <thread>

#include <spdlog/spdlog.h>
#include <toml.hpp>

#include "dbke/error.hpp"
#include "dbke/util.hpp"

namespace dbke {

nlohmann::json to_json(const TrainingSample& s) {
  nlohmann::json mask = nlohmann::json::array();
  for (bool b : s.loss_mask) mask.push_back(b ? 1 : 0);
  return {{"tokens", s.tokens}, {"mask", std::move(mask)}, {"source_ref", s.source_ref},
          {"provenance", to_string(s.provenance)}};
}

TrainingSample sample_from_json(const nlohmann::json& j) {
  TrainingSample s;
  try {
    s.tokens = j.at("tokens").get<std::vector<int>>();
    for (const auto& m : j.at("mask")) {
      const int v = m.get<int>();
      if (v != 0 && v != 1) throw Error(ErrorCode::parse_error, "mask entries must be 0 or 1");
      s.loss_mask.push_back(v == 1);
    }
    s.source_ref = j.at("source_ref").get<std::string>();
    s.provenance = provenance_from_string(j.at("provenance").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("training sample: ") + e.what());
  }
  if (s.tokens.size() != s.loss_mask.size()) throw Error(ErrorCode::parse_error, "tokens and mask differ in length");
  return s;
}

TrainingSample tokenize_with_mask(const Dialogue& d, const Tokenizer& tok, const ChatFormat& format,
                                  std::size_t max_len) {
  if (max_len < 16) throw Error(ErrorCode::invalid_argument, "max_len must be at least 16");
  const bool has_assistant = std::any_of(d.turns.begin(), d.turns.end(),
                                         [](const Turn& t) { return t.role == Role::assistant && !t.text.empty(); });
  if (!has_assistant) throw Error(ErrorCode::no_learnable_tokens, d.id + ": no assistant content");
  if (auto why = dialogue_invariant_violation(d); !why.empty()) {
    throw Error(ErrorCode::invalid_argument, d.id + ": " + why);
  }

  const RenderedChat chat = render_chat(d, format);
  std::vector<std::pair<std::size_t, std::size_t>> learnable;
  for (const auto& s : chat.spans) {
    if (s.role == Role::assistant) learnable.emplace_back(s.begin, s.delimiter_end);
  }

  const auto tokens = tok.encode(chat.text);
  const std::size_t n = std::min(tokens.size(), max_len);
  TrainingSample out;
  out.source_ref = d.id;
  out.provenance = d.provenance;
  out.tokens.reserve(n);
  out.loss_mask.reserve(n);
  std::size_t span = 0;
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = tokens[i];
    while (span < learnable.size() && learnable[span].second <= t.begin) ++span;
    const bool on = span < learnable.size() && learnable[span].first < t.end && t.begin < t.end;
    any = any || on;
    out.tokens.push_back(t.id);
    out.loss_mask.push_back(on);
  }
  if (!any) throw Error(ErrorCode::no_learnable_tokens, d.id + ": truncation removed every assistant token");
  return out;
}

TokenizedBatch tokenize_dialogues(const std::vector<Dialogue>& dialogues, const Tokenizer& tok,
                                  const ChatFormat& format, std::size_t max_len, std::size_t workers) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::optional<TrainingSample>> done(dialogues.size());
  std::vector<std::string> why(dialogues.size());
  parallel_for(dialogues.size(), workers, [&](std::size_t i) {
    try {
      done[i] = tokenize_with_mask(dialogues[i], tok, format, max_len);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::no_learnable_tokens && e.code() != ErrorCode::invalid_argument) throw;
      why[i] = std::string(to_string(e.code()));
    }
  });
  TokenizedBatch out;
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    if (done[i]) {
      out.samples.push_back(std::move(*done[i]));
    } else {
      out.rejected.push_back({dialogues[i].id, why[i]});
    }
  }
  return out;
}

std::vector<TrainingSample> mix_and_shuffle(std::vector<std::vector<TrainingSample>> streams, std::uint64_t seed) {
  if (streams.empty()) throw Error(ErrorCode::invalid_argument, "mix_and_shuffle needs at least one stream");
  std::vector<TrainingSample> all;
  for (auto& s : streams) std::move(s.begin(), s.end(), std::back_inserter(all));
  Rng rng(seed);
  rng.shuffle(all);
  return all;
}

std::size_t ShardManifest::total() const {
  std::size_t n = 0;
  for (const auto& s : shards) n += s.count;
  return n;
}

nlohmann::json ShardManifest::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& s : shards) list.push_back({{"file", s.file}, {"count", s.count}, {"checksum", s.checksum}});
  return {{"shards", std::move(list)}, {"config_hash", config_hash}, {"seed", seed}, {"mask_policy", mask_policy}};
}

ShardManifest ShardManifest::from_json(const nlohmann::json& j) {
  ShardManifest m;
  try {
    for (const auto& s : j.at("shards")) {
      m.shards.push_back(
          {s.at("file").get<std::string>(), s.at("count").get<std::size_t>(), s.at("checksum").get<std::string>()});
    }
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.mask_policy = j.value("mask_policy", std::string(kMaskPolicy));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("shard manifest: ") + e.what());
  }
  return m;
}

ShardWriter::ShardWriter(std::filesystem::path dir, std::size_t shard_size, std::string config_hash,
                         std::uint64_t seed)
    : dir_(std::move(dir)), shard_size_(shard_size) {
  if (shard_size_ == 0) throw Error(ErrorCode::invalid_argument, "shard_size must be at least 1");
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::io_error, "cannot create " + dir_.string() + ": " + ec.message());
  manifest_.config_hash = std::move(config_hash);
  manifest_.seed = seed;
}

ShardWriter::~ShardWriter() {
  if (!finished_) abandon();
}

std::string ShardWriter::shard_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "shard-%05zu.jsonl", index);
  return buf;
}

void ShardWriter::abandon() {
  if (out_.is_open()) out_.close();
  std::error_code ec;
  if (!tmp_.empty()) std::filesystem::remove(tmp_, ec);
  for (const auto& p : pending_) std::filesystem::remove(p, ec);
  tmp_.clear();
  pending_.clear();
  in_shard_ = 0;
}

void ShardWriter::add(const TrainingSample& s) {
  if (finished_) throw Error(ErrorCode::invalid_argument, "ShardWriter already finished");
  if (!out_.is_open()) {
    tmp_ = dir_ / (shard_name(manifest_.shards.size()) + ".tmp");
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) {
      const auto name = tmp_.string();
      abandon();
      throw Error(ErrorCode::io_error, "cannot write " + name);
    }
  }
  const std::string line = to_json(s).dump() + "\n";
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  if (!out_) {
    const auto name = tmp_.string();
    abandon();
    throw Error(ErrorCode::io_error, "write failed for " + name);
  }
  if (++in_shard_ == shard_size_) close_shard();
}

void ShardWriter::close_shard() {
  out_.flush();
  const bool ok = static_cast<bool>(out_);
  out_.close();
  if (!ok || out_.fail()) {
    const auto name = tmp_.string();
    abandon();
    throw Error(ErrorCode::io_error, "write failed for " + name);
  }
  manifest_.shards.push_back({shard_name(manifest_.shards.size()), in_shard_, sha256_hex(read_file(tmp_))});
  pending_.push_back(tmp_);
  tmp_.clear();
  in_shard_ = 0;
}

ShardManifest ShardWriter::finish() {
  if (finished_) throw Error(ErrorCode::invalid_argument, "ShardWriter already finished");
  if (in_shard_ > 0) close_shard();
  for (std::size_t i = 0; i < pending_.size(); ++i) {
    std::error_code ec;
    std::filesystem::rename(pending_[i], dir_ / manifest_.shards[i].file, ec);
    if (ec) {
      abandon();
      throw Error(ErrorCode::io_error, "cannot rename shard " + manifest_.shards[i].file + ": " + ec.message());
    }
  }
  pending_.clear();
  write_file_atomic(dir_ / "manifest.json", manifest_.to_json().dump(2) + "\n");
  finished_ = true;
  spdlog::info("wrote {} samples in {} shards to {}", manifest_.total(), manifest_.shards.size(), dir_.string());
  return manifest_;
}

ShardManifest write_shards(const std::vector<TrainingSample>& samples, const std::filesystem::path& dir,
                           std::size_t shard_size, const std::string& config_hash, std::uint64_t seed) {
  ShardWriter w(dir, shard_size, config_hash, seed);
  for (const auto& s : samples) w.add(s);
  return w.finish();
}

std::vector<TrainingSample> read_shards(const std::filesystem::path& dir) {
  nlohmann::json mj;
  try {
    mj = nlohmann::json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, "shard manifest: " + std::string(e.what()));
  }
  const auto manifest = ShardManifest::from_json(mj);
  std::vector<TrainingSample> out;
  for (const auto& shard : manifest.shards) {
    const std::string bytes = read_file(dir / shard.file);
    if (sha256_hex(bytes) != shard.checksum) {
      throw Error(ErrorCode::checksum_mismatch, shard.file + " does not match its manifest checksum");
    }
    std::size_t count = 0;
    for (const auto& j : read_jsonl(dir / shard.file)) {
      out.push_back(sample_from_json(j));
      ++count;
    }
    if (count != shard.count) {
      throw Error(ErrorCode::checksum_mismatch,
                  shard.file + " holds " + std::to_string(count) + " samples, manifest says " +
                      std::to_string(shard.count));
    }
  }
  return out;
}

TrainConfig train_config(const std::string& variant) {
  TrainConfig c;
  c.variant = variant;
  c.sequence_length = 4096;
  c.lora_r = 64;
  c.lora_alpha = 16;
  c.lora_dropout = 0.0;
  c.lora_target_modules = "All linear layers";
  c.mini_batch_size = 1;
  c.epochs = 1;
  c.optimizer = "paged_adamw_32bit";
  c.lr_scheduler = "Cosine";
  if (variant == "13B") {
    c.gradient_accumulation_steps = 16;
    c.learning_rate = 0.0002;
  } else if (variant == "70B") {
    c.gradient_accumulation_steps = 32;
    c.learning_rate = 0.0001;
  } else {
    throw Error(ErrorCode::unknown_variant, "unknown model variant '" + variant + "' (expected 13B or 70B)");
  }
  return c;
}

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

constexpr const char* kConfigKeys[] = {"variant",       "sequence_length",
                                       "lora_r",        "lora_alpha",
                                       "lora_dropout",  "lora_target_modules",
                                       "gradient_accumulation_steps", "mini_batch_size",
                                       "epochs",        "optimizer",
                                       "lr_scheduler",  "learning_rate"};

}  // namespace

std::string to_toml(const TrainConfig& c) {
  std::string s;
  auto line = [&](const char* key, const std::string& value) { s += std::string(key) + " = " + value + "\n"; };
  line("variant", quoted(c.variant));
  line("sequence_length", std::to_string(c.sequence_length));
  line("lora_r", std::to_string(c.lora_r));
  line("lora_alpha", std::to_string(c.lora_alpha));
  line("lora_dropout", fixed(c.lora_dropout, 2));
  line("lora_target_modules", quoted(c.lora_target_modules));
  line("gradient_accumulation_steps", std::to_string(c.gradient_accumulation_steps));
  line("mini_batch_size", std::to_string(c.mini_batch_size));
  line("epochs", std::to_string(c.epochs));
  line("optimizer", quoted(c.optimizer));
  line("lr_scheduler", quoted(c.lr_scheduler));
  line("learning_rate", fixed(c.learning_rate, 4));
  return s;
}

TrainConfig parse_train_config(const std::string& toml_text) {
  toml::table t;
  try {
    t = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw Error(ErrorCode::config_error, "train config: " + std::string(e.description()));
  }
  for (const auto& [key, node] : t) {
    if (std::find(std::begin(kConfigKeys), std::end(kConfigKeys), key.str()) == std::end(kConfigKeys)) {
      throw Error(ErrorCode::config_error, "train config: unknown key " + std::string(key.str()));
    }
  }
  auto str = [&](const char* key) {
    auto v = t[key].value<std::string>();
    if (!v) throw Error(ErrorCode::config_error, std::string("train config: ") + key + " must be a string");
    return *v;
  };
  auto integer = [&](const char* key) {
    auto v = t[key].value<int64_t>();
    if (!v || !t[key].is_integer()) throw Error(ErrorCode::config_error, std::string("train config: ") + key + " must be an integer");
    return static_cast<int>(*v);
  };
  auto real = [&](const char* key) {
    auto v = t[key].value<double>();
    if (!v) throw Error(ErrorCode::config_error, std::string("train config: ") + key + " must be a number");
    return *v;
  };
  TrainConfig c;
  c.variant = str("variant");
  c.sequence_length = integer("sequence_length");
  c.lora_r = integer("lora_r");
  c.lora_alpha = integer("lora_alpha");
  c.lora_dropout = real("lora_dropout");
  c.lora_target_modules = str("lora_target_modules");
  c.gradient_accumulation_steps = integer("gradient_accumulation_steps");
  c.mini_batch_size = integer("mini_batch_size");
  c.epochs = integer("epochs");
  c.optimizer = str("optimizer");
  c.lr_scheduler = str("lr_scheduler");
  c.learning_rate = real("learning_rate");
  return c;
}

void write_train_config(const std::string& variant, const std::filesystem::path& path) {
  write_file_atomic(path, to_toml(train_config(variant)));
}

}  // namespace dbke
