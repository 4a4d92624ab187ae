#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dbke {

/// Machine-readable failure categories. The string form (see `to_string`) is
/// what appears in skip reasons, manifests and CLI diagnostics.
enum class ErrorCode {
  invalid_argument,
  empty_text,
  empty_passage,
  empty_continuation,
  empty_corpus,
  unparseable,
  malformed_roles,
  no_learnable_tokens,
  template_error,
  tokenizer_error,
  io_error,
  parse_error,
  checkpoint_corrupt,
  config_error,
  transport_error,
  auth_error,
  capability_error,
  protocol_error,
  unknown_variant,
  pool_too_small,
  checksum_mismatch,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

/// Raised by the model client once retries are exhausted or on a
/// non-retryable HTTP failure. http_status is 0 for connection failures and
/// timeouts.
class TransportError : public Error {
 public:
  TransportError(ErrorCode code, const std::string& message, int http_status = 0)
      : Error(code, message), http_status_(http_status) {}

  int http_status() const noexcept { return http_status_; }

 private:
  int http_status_;
};

}  // namespace dbke
