#include "dbke/modelclient.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <thread>

#include "dbke/error.hpp"
#include "dbke/util.hpp"

namespace dbke {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

constexpr std::string_view kCacheMagic = "dbke-cache-v1";

Clock::duration seconds(double s) {
  return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(s));
}

double to_seconds(Clock::duration d) { return std::chrono::duration<double>(d).count(); }

std::string excerpt(const std::string& body) { return body.size() > 200 ? body.substr(0, 200) + "..." : body; }

std::optional<double> retry_after(const HttpResponse& r) {
  auto it = r.headers.find("retry-after");
  if (it == r.headers.end()) return std::nullopt;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used == it->second.size() && v >= 0) return v;
  } catch (const std::exception&) {
  }
  return std::nullopt;  // HTTP-date form is not supported
}

[[noreturn]] void protocol(const std::string& what) { throw Error(ErrorCode::protocol_error, what); }

}  // namespace

void SteadyClock::sleep_for(duration d) { std::this_thread::sleep_for(d); }

RateLimiter::RateLimiter(std::size_t per_minute, Clock& clock) : per_minute_(per_minute), clock_(clock) {
  if (per_minute_ == 0) throw Error(ErrorCode::config_error, "requests_per_minute must be >= 1");
}

Clock::duration RateLimiter::acquire() {
  Clock::duration waited{0};
  for (;;) {
    Clock::duration wait;
    {
      std::lock_guard lock(mu_);
      const auto now = clock_.now();
      while (!stamps_.empty() && stamps_.front() <= now - 60s) stamps_.pop_front();
      if (stamps_.size() < per_minute_) {
        stamps_.push_back(now);
        return waited;
      }
      wait = stamps_.front() + 60s - now;
    }
    clock_.sleep_for(wait);
    waited += wait;
  }
}

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

std::string ResponseCache::key(const std::string& endpoint, const std::string& op, const nlohmann::json& request) {
  return json_hash({{"endpoint", endpoint}, {"op", op}, {"request", request}});
}

fs::path ResponseCache::path_for(const std::string& key) const { return dir_ / key.substr(0, 2) / (key + ".bin"); }

std::optional<std::string> ResponseCache::get(const std::string& key) {
  const fs::path p = path_for(key);
  std::error_code ec;
  if (!fs::exists(p, ec)) return std::nullopt;
  std::string raw;
  try {
    raw = read_file(p);
  } catch (const Error&) {
    return std::nullopt;
  }
  // "<magic> <sha256> <length>\n<payload>"
  const auto nl = raw.find('\n');
  std::istringstream header(raw.substr(0, nl == std::string::npos ? 0 : nl));
  std::string magic, sum;
  std::size_t len = 0;
  header >> magic >> sum >> len;
  if (nl != std::string::npos && magic == kCacheMagic && raw.size() - nl - 1 == len) {
    std::string payload = raw.substr(nl + 1);
    if (sha256_hex(payload) == sum) return payload;
  }
  ++corrupt_;
  spdlog::warn("cache entry {} is corrupt; treating as a miss", p.string());
  return std::nullopt;
}

void ResponseCache::put(const std::string& key, std::string_view bytes) {
  std::string raw = std::string(kCacheMagic) + " " + sha256_hex(bytes) + " " + std::to_string(bytes.size()) + "\n";
  raw.append(bytes);
  write_file_atomic(path_for(key), raw);
}

void validate(const ClientConfig& c) {
  if (c.endpoint.empty()) throw Error(ErrorCode::config_error, "client endpoint is required");
  if (!c.endpoint.starts_with("http://") && !c.endpoint.starts_with("https://")) {
    throw Error(ErrorCode::config_error, "endpoint must be an http(s) URL: " + c.endpoint);
  }
  if (c.max_in_flight < 1) throw Error(ErrorCode::config_error, "max_in_flight must be >= 1");
  if (c.requests_per_minute < 1) throw Error(ErrorCode::config_error, "requests_per_minute must be >= 1");
  if (c.max_retries < 0) throw Error(ErrorCode::config_error, "max_retries must be >= 0");
  if (!(c.base_backoff_seconds >= 0) || !(c.max_backoff_seconds >= 0)) {
    throw Error(ErrorCode::config_error, "backoff must be >= 0");
  }
  if (!(c.timeout_seconds > 0)) throw Error(ErrorCode::config_error, "timeout_seconds must be > 0");
}

nlohmann::json ClientTelemetry::to_json() const {
  return {{"requests", requests},
          {"http_calls", http_calls},
          {"retries", retries},
          {"cache_hits", cache_hits},
          {"cache_misses", cache_misses},
          {"cache_corrupt", cache_corrupt},
          {"failures", failures},
          {"max_in_flight_observed", max_in_flight_observed},
          {"rate_limit_wait_seconds", rate_limit_wait_seconds},
          {"backoff_seconds", backoff_seconds}};
}

ModelClient::ModelClient(ClientConfig config, std::shared_ptr<Transport> transport, std::shared_ptr<Clock> clock)
    : config_(std::move(config)),
      transport_(transport ? std::move(transport) : std::make_shared<HttpTransport>()),
      clock_(clock ? std::move(clock) : std::make_shared<SteadyClock>()) {
  validate(config_);
  while (config_.endpoint.ends_with('/')) config_.endpoint.pop_back();
  limiter_ = std::make_unique<RateLimiter>(config_.requests_per_minute, *clock_);
  if (config_.cache_dir) cache_ = std::make_unique<ResponseCache>(*config_.cache_dir);
  std::string key = config_.api_key;
  if (key.empty() && !config_.api_key_env.empty()) {
    if (const char* v = std::getenv(config_.api_key_env.c_str())) key = v;
  }
  if (!key.empty()) auth_header_ = "Bearer " + key;
  if (config_.require_scoring) probe_scoring();
}

ModelClient::~ModelClient() = default;

ClientTelemetry ModelClient::telemetry() const {
  std::lock_guard lock(mu_);
  ClientTelemetry t = tel_;
  if (cache_) t.cache_corrupt = cache_->corrupt_entries();
  return t;
}

nlohmann::json ModelClient::chat_body(const ChatRequest& req) const {
  nlohmann::json j = to_json(req);
  j["model"] = config_.model;
  return j;
}

nlohmann::json ModelClient::score_body(const ScoreRequest& req) const {
  return {{"model", config_.model},
          {"prompt", req.context + req.continuation},
          {"max_tokens", 1},
          {"temperature", 0},
          {"echo", true},
          {"logprobs", 1}};
}

ChatResponse ModelClient::parse_chat(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    protocol("chat response is not JSON: " + excerpt(body));
  }
  try {
    ChatResponse r;
    const auto& msg = j.at("choices").at(0).at("message");
    r.text = msg.at("content").is_null() ? "" : msg.at("content").get<std::string>();
    r.model_id = j.value("model", "");
    if (j.contains("usage") && j["usage"].is_object()) {
      r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    if (r.text.empty()) protocol("chat response has empty content");
    return r;
  } catch (const nlohmann::json::exception& e) {
    protocol(std::string("unexpected chat response shape: ") + e.what());
  }
}

ScoreResult ModelClient::parse_score(const std::string& body, const ScoreRequest& req) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    protocol("score response is not JSON: " + excerpt(body));
  }
  try {
    const auto& lp = j.at("choices").at(0).at("logprobs");
    if (lp.is_null()) protocol("response carries no logprobs");
    const auto& lps = lp.at("token_logprobs");
    const auto& offsets = lp.at("text_offset");
    if (lps.size() != offsets.size() || lps.empty()) protocol("logprob and offset arrays disagree");

    // Offsets count code points of the echoed prompt. A token belongs to the
    // continuation when it ends past the context; tokens starting at or past
    // the end of the prompt were generated and are ignored.
    const auto ctx_end = static_cast<long long>(utf8_codepoint_count(req.context));
    const auto prompt_end = static_cast<long long>(utf8_codepoint_count(req.context + req.continuation));
    ScoreResult r;
    for (std::size_t i = 0; i < lps.size(); ++i) {
      const long long begin = offsets[i].get<long long>();
      const long long end = i + 1 < offsets.size() ? offsets[i + 1].get<long long>() : prompt_end;
      if (begin >= prompt_end || end <= ctx_end) continue;
      if (lps[i].is_null()) protocol("null logprob inside the continuation");
      r.token_logprobs.push_back(lps[i].get<double>());
    }
    if (r.token_logprobs.empty()) protocol("no continuation tokens in the echoed prompt");
    r.token_count = r.token_logprobs.size();
    for (double v : r.token_logprobs) r.total_logprob += v;
    return r;
  } catch (const nlohmann::json::exception& e) {
    protocol(std::string("unexpected score response shape: ") + e.what());
  }
}

ChatResponse ModelClient::chat_complete(const ChatRequest& req) {
  validate(req);
  const std::string body = send("chat", "/chat/completions", chat_body(req));
  return parse_chat(body);
}

ScoreResult ModelClient::score(const ScoreRequest& req) {
  if (req.continuation.empty()) throw Error(ErrorCode::empty_continuation, "continuation is empty");
  const std::string body = send("score", "/completions", score_body(req));
  return parse_score(body, req);
}

void ModelClient::probe_scoring() {
  const ScoreRequest probe{"The capital of France is", " Paris"};
  try {
    parse_score(send_uncached("/completions", score_body(probe)), probe);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::auth_error || e.code() == ErrorCode::transport_error) throw;
    throw Error(ErrorCode::capability_error,
                config_.endpoint + " does not return prompt log-probabilities: " + e.detail());
  }
}

std::string ModelClient::send(const std::string& op, const std::string& path, const nlohmann::json& body) {
  {
    std::lock_guard lock(mu_);
    ++tel_.requests;
  }
  if (!cache_) return send_uncached(path, body);
  const std::string key = ResponseCache::key(config_.endpoint, op, body);
  if (auto hit = cache_->get(key)) {
    std::lock_guard lock(mu_);
    ++tel_.cache_hits;
    return *hit;
  }
  {
    std::lock_guard lock(mu_);
    ++tel_.cache_misses;
  }
  std::string out = send_uncached(path, body);
  cache_->put(key, out);
  return out;
}

std::string ModelClient::send_uncached(const std::string& path, const nlohmann::json& body) {
  const std::string url = config_.endpoint + path;
  const std::string payload = body.dump();
  std::map<std::string, std::string> headers{{"Content-Type", "application/json"}};
  if (!auth_header_.empty()) headers["Authorization"] = auth_header_;
  const auto timeout = std::chrono::duration_cast<std::chrono::milliseconds>(seconds(config_.timeout_seconds));

  auto fail = [&](ErrorCode code, const std::string& msg, int status) -> TransportError {
    std::lock_guard lock(mu_);
    ++tel_.failures;
    return TransportError(code, msg, status);
  };

  for (int attempt = 0;; ++attempt) {
    HttpResponse resp;
    {
      std::unique_lock lock(mu_);
      slot_free_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
      ++in_flight_;
      tel_.max_in_flight_observed = std::max(tel_.max_in_flight_observed, in_flight_);
    }
    try {
      const auto waited = limiter_->acquire();
      resp = transport_->post(url, payload, headers, timeout);
      std::lock_guard lock(mu_);
      tel_.rate_limit_wait_seconds += to_seconds(waited);
      ++tel_.http_calls;
    } catch (...) {
      std::lock_guard lock(mu_);
      --in_flight_;
      slot_free_.notify_one();
      throw;
    }
    {
      std::lock_guard lock(mu_);
      --in_flight_;
    }
    slot_free_.notify_one();

    if (resp.status >= 200 && resp.status < 300) return resp.body;
    const std::string what = resp.status ? "HTTP " + std::to_string(resp.status) + " from " + url + ": " + excerpt(resp.body)
                                         : "no response from " + url + (resp.error.empty() ? "" : " (" + resp.error + ")");
    if (resp.status == 401 || resp.status == 403) throw fail(ErrorCode::auth_error, what, resp.status);
    const bool transient = resp.status == 0 || resp.status == 408 || resp.status == 429 || resp.status >= 500;
    if (!transient) throw fail(ErrorCode::protocol_error, what, resp.status);
    if (attempt >= config_.max_retries) {
      throw fail(ErrorCode::transport_error, what + " after " + std::to_string(attempt + 1) + " attempts", resp.status);
    }
    double delay = std::min(config_.max_backoff_seconds, config_.base_backoff_seconds * std::pow(2.0, attempt));
    if (auto ra = retry_after(resp)) delay = std::min(config_.max_backoff_seconds, *ra);
    spdlog::debug("{}; retrying in {:.2f}s", what, delay);
    {
      std::lock_guard lock(mu_);
      ++tel_.retries;
      tel_.backoff_seconds += delay;
    }
    clock_->sleep_for(seconds(delay));
  }
}

}  // namespace dbke
