#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbke/types.hpp"

namespace dbke {

struct ChatRequest {
  std::vector<Turn> messages;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::optional<std::uint64_t> seed;

  bool operator==(const ChatRequest&) const = default;
};

/// Throws Error(invalid_argument) unless messages is non-empty, ends with a
/// user message, temperature >= 0 and max_output_tokens >= 1.
void validate(const ChatRequest& req);
nlohmann::json to_json(const ChatRequest& req);

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  Usage usage;
  std::string model_id;
};

struct ScoreRequest {
  std::string context;
  std::string continuation;
};

struct ScoreResult {
  double total_logprob = 0.0;
  std::vector<double> token_logprobs;
  std::size_t token_count = 0;
};

/// Chat-completion endpoint. Implementations must be safe to call from
/// several threads at once.
class ChatModel {
 public:
  virtual ~ChatModel() = default;
  virtual ChatResponse chat_complete(const ChatRequest& req) = 0;
  /// Concurrency the caller may use against this model.
  virtual std::size_t max_in_flight() const { return 1; }
};

/// Log-likelihood of a continuation given a context. Thread-safe.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual ScoreResult score(const ScoreRequest& req) = 0;
  virtual std::size_t max_in_flight() const { return 1; }
};

}  // namespace dbke
