#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "dbke/model.hpp"

namespace dbke {

struct HttpResponse {
  int status = 0;  // 0: no response (timeout, refused connection)
  std::string body;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string error;                           // transport-level failure text when status == 0
};

/// Sends one JSON POST. Implementations are called concurrently.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& url, const std::string& body,
                            const std::map<std::string, std::string>& headers, std::chrono::milliseconds timeout) = 0;
};

/// cpp-httplib backed transport; https needs OpenSSL at build time.
class HttpTransport : public Transport {
 public:
  HttpResponse post(const std::string& url, const std::string& body, const std::map<std::string, std::string>& headers,
                    std::chrono::milliseconds timeout) override;
};

class Clock {
 public:
  using duration = std::chrono::steady_clock::duration;
  using time_point = std::chrono::steady_clock::time_point;
  virtual ~Clock() = default;
  virtual time_point now() const = 0;
  virtual void sleep_for(duration d) = 0;
};

class SteadyClock : public Clock {
 public:
  time_point now() const override { return std::chrono::steady_clock::now(); }
  void sleep_for(duration d) override;
};

/// Admits at most `per_minute` acquisitions in any 60-second window.
class RateLimiter {
 public:
  RateLimiter(std::size_t per_minute, Clock& clock);
  /// Blocks until a slot is free; returns the time spent waiting.
  Clock::duration acquire();

 private:
  std::size_t per_minute_;
  Clock& clock_;
  std::mutex mu_;
  std::deque<Clock::time_point> stamps_;
};

/// Content-addressed response store: one file per key under `dir`, holding
/// a checksum header line followed by the exact response bytes.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);

  /// sha256 over the sorted-key JSON of {endpoint, op, request}.
  static std::string key(const std::string& endpoint, const std::string& op, const nlohmann::json& request);

  /// A corrupt entry is reported as a miss, logged and counted.
  std::optional<std::string> get(const std::string& key);
  void put(const std::string& key, std::string_view bytes);

  std::size_t corrupt_entries() const { return corrupt_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;
  std::filesystem::path dir_;
  std::atomic<std::size_t> corrupt_{0};
};

struct ClientConfig {
  std::string endpoint;  // base URL, e.g. http://localhost:8000/v1
  std::string model;
  std::string api_key;                      // used when non-empty
  std::string api_key_env = "DBKE_API_KEY";  // read when api_key is empty
  std::size_t max_in_flight = 4;
  std::size_t requests_per_minute = 60;
  int max_retries = 2;
  double base_backoff_seconds = 1.0;
  double max_backoff_seconds = 60.0;
  double timeout_seconds = 120.0;
  std::optional<std::filesystem::path> cache_dir;
  /// Probe the scoring endpoint at construction.
  bool require_scoring = false;
};

/// Throws Error(config_error) on out-of-range settings.
void validate(const ClientConfig& c);

struct ClientTelemetry {
  std::size_t requests = 0;     // logical chat/score calls
  std::size_t http_calls = 0;   // attempts sent to the transport
  std::size_t retries = 0;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  std::size_t cache_corrupt = 0;
  std::size_t failures = 0;
  std::size_t max_in_flight_observed = 0;
  double rate_limit_wait_seconds = 0.0;
  double backoff_seconds = 0.0;

  nlohmann::json to_json() const;
};

/// Chat-completions and completions-with-logprobs client with rate limiting,
/// bounded concurrency, retries and an optional response cache.
///
/// Transient failures (429, 5xx, no response) are retried max_retries times
/// with exponential backoff, honouring Retry-After. 401/403 raise auth_error
/// immediately; other 4xx raise protocol_error.
class ModelClient : public ChatModel, public Scorer {
 public:
  explicit ModelClient(ClientConfig config, std::shared_ptr<Transport> transport = nullptr,
                       std::shared_ptr<Clock> clock = nullptr);
  ~ModelClient() override;

  ChatResponse chat_complete(const ChatRequest& req) override;
  ScoreResult score(const ScoreRequest& req) override;
  std::size_t max_in_flight() const override { return config_.max_in_flight; }

  /// Runs one scoring request and throws Error(capability_error) unless the
  /// endpoint echoes per-token log-probabilities.
  void probe_scoring();

  ClientTelemetry telemetry() const;
  const ClientConfig& config() const { return config_; }

  /// Body sent for a chat request / score request.
  nlohmann::json chat_body(const ChatRequest& req) const;
  nlohmann::json score_body(const ScoreRequest& req) const;

  /// Decoders for response bodies; throw Error(protocol_error) on bad shapes.
  static ChatResponse parse_chat(const std::string& body);
  static ScoreResult parse_score(const std::string& body, const ScoreRequest& req);

 private:
  std::string send(const std::string& op, const std::string& path, const nlohmann::json& body);
  std::string send_uncached(const std::string& path, const nlohmann::json& body);

  ClientConfig config_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<Clock> clock_;
  std::unique_ptr<RateLimiter> limiter_;
  std::unique_ptr<ResponseCache> cache_;
  std::string auth_header_;

  mutable std::mutex mu_;
  std::condition_variable slot_free_;
  std::size_t in_flight_ = 0;
  ClientTelemetry tel_;
};

}  // namespace dbke
