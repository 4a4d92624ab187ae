#pragma once

#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "dbke/model.hpp"

namespace dbke::testing {

/// ChatModel whose reply is computed by a function of the request and the
/// 0-based call index for that exact prompt. Records every request.
class ScriptedTeacher : public ChatModel {
 public:
  using Script = std::function<std::string(const ChatRequest&, int call)>;

  explicit ScriptedTeacher(Script script, std::size_t in_flight = 1) : script_(std::move(script)), in_flight_(in_flight) {}

  ChatResponse chat_complete(const ChatRequest& req) override {
    validate(req);
    int call;
    {
      std::lock_guard lock(mu_);
      requests_.push_back(req);
      call = 0;
      for (const auto& r : requests_) call += r.messages == req.messages;
      --call;
    }
    ++calls_;
    return {script_(req, call), {}, "stub"};
  }

  std::size_t max_in_flight() const override { return in_flight_; }

  int calls() const { return calls_; }
  std::vector<ChatRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

 private:
  Script script_;
  std::size_t in_flight_;
  mutable std::mutex mu_;
  std::vector<ChatRequest> requests_;
  std::atomic<int> calls_{0};
};

/// A well-formed Patient/Bot transcript with `exchanges` exchanges whose
/// wording depends on `tag`.
inline std::string valid_transcript(const std::string& tag, int exchanges = 5) {
  std::string s;
  for (int i = 0; i < exchanges; ++i) {
    s += "Patient: Question " + std::to_string(i + 1) + " about " + tag + "?\n";
    s += "Bot: Answer " + std::to_string(i + 1) + " about " + tag + ".\n";
  }
  return s;
}

}  // namespace dbke::testing
