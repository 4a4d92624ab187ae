#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbke/chat_format.hpp"
#include "dbke/tokenizer.hpp"
#include "dbke/types.hpp"

namespace dbke {

inline constexpr std::size_t kMaxSequenceLength = 4096;

/// Written into shard manifests so consumers know what the mask covers.
inline constexpr const char* kMaskPolicy = "assistant_content_and_end_delimiter";

struct TrainingSample {
  std::vector<int> tokens;
  std::vector<bool> loss_mask;  // true: the token contributes to the loss
  std::string source_ref;
  Provenance provenance = Provenance::dbke;

  bool operator==(const TrainingSample&) const = default;
};

/// {tokens, mask:[0|1], source_ref, provenance}
nlohmann::json to_json(const TrainingSample& s);
TrainingSample sample_from_json(const nlohmann::json& j);

/// Renders `d` with `format`, tokenizes the whole text and unmasks each token
/// whose byte range intersects an assistant turn's content or its end
/// delimiter. Samples longer than max_len are cut on the right.
///
/// Throws Error(invalid_argument) for max_len < 16 or an invalid dialogue and
/// Error(no_learnable_tokens) when no unmasked token survives.
TrainingSample tokenize_with_mask(const Dialogue& d, const Tokenizer& tok, const ChatFormat& format,
                                  std::size_t max_len = kMaxSequenceLength);

struct SampleRejection {
  std::string source_ref;
  std::string reason;
};

struct TokenizedBatch {
  std::vector<TrainingSample> samples;  // input order
  std::vector<SampleRejection> rejected;
};

/// tokenize_with_mask over many dialogues on up to `workers` threads.
/// no_learnable_tokens and invalid dialogues are collected, not thrown.
TokenizedBatch tokenize_dialogues(const std::vector<Dialogue>& dialogues, const Tokenizer& tok,
                                  const ChatFormat& format, std::size_t max_len = kMaxSequenceLength,
                                  std::size_t workers = 0);

/// Concatenation of all streams under a seeded permutation. Throws
/// Error(invalid_argument) for an empty list.
std::vector<TrainingSample> mix_and_shuffle(std::vector<std::vector<TrainingSample>> streams, std::uint64_t seed);

struct ShardInfo {
  std::string file;  // relative to the shard directory
  std::size_t count = 0;
  std::string checksum;  // sha256 of the file bytes

  bool operator==(const ShardInfo&) const = default;
};

struct ShardManifest {
  std::vector<ShardInfo> shards;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string mask_policy = kMaskPolicy;
  std::size_t total() const;

  nlohmann::json to_json() const;
  static ShardManifest from_json(const nlohmann::json& j);

  bool operator==(const ShardManifest&) const = default;
};

/// Streams samples into `shard-NNNNN.jsonl` files of at most shard_size
/// lines. Shards stay under temporary names until finish() renames them and
/// then writes manifest.json, so an existing dataset in `dir` is untouched
/// until the new one is complete. On a write failure, or destruction without
/// finish(), every shard of this run is removed; write failures throw
/// Error(io_error).
class ShardWriter {
 public:
  ShardWriter(std::filesystem::path dir, std::size_t shard_size, std::string config_hash, std::uint64_t seed);
  ~ShardWriter();
  ShardWriter(const ShardWriter&) = delete;
  ShardWriter& operator=(const ShardWriter&) = delete;

  void add(const TrainingSample& s);
  ShardManifest finish();

  static std::string shard_name(std::size_t index);

 private:
  void close_shard();
  void abandon();

  std::filesystem::path dir_;
  std::size_t shard_size_;
  ShardManifest manifest_;
  std::ofstream out_;
  std::filesystem::path tmp_;
  std::vector<std::filesystem::path> pending_;  // closed shards awaiting finish()
  std::size_t in_shard_ = 0;
  bool finished_ = false;
};

ShardManifest write_shards(const std::vector<TrainingSample>& samples, const std::filesystem::path& dir,
                           std::size_t shard_size, const std::string& config_hash = {}, std::uint64_t seed = 0);

/// Reads manifest.json and every shard it lists, verifying counts and
/// checksums. Throws Error(checksum_mismatch) on any disagreement.
std::vector<TrainingSample> read_shards(const std::filesystem::path& dir);

struct TrainConfig {
  std::string variant;
  int sequence_length = 0;
  int lora_r = 0;
  int lora_alpha = 0;
  double lora_dropout = 0.0;
  std::string lora_target_modules;
  int gradient_accumulation_steps = 0;
  int mini_batch_size = 0;
  int epochs = 0;
  std::string optimizer;
  std::string lr_scheduler;
  double learning_rate = 0.0;

  bool operator==(const TrainConfig&) const = default;
};

/// Fine-tuning hyperparameters for the "13B" or "70B" student. Throws
/// Error(unknown_variant) otherwise.
TrainConfig train_config(const std::string& variant);

/// Flat TOML, one `key = value` per line in field order. lora_dropout is
/// written with two decimals and learning_rate with four.
std::string to_toml(const TrainConfig& c);
TrainConfig parse_train_config(const std::string& toml_text);
void write_train_config(const std::string& variant, const std::filesystem::path& path);

}  // namespace dbke
