#pragma once

#include <httplib.h>

#include <atomic>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "dbke/note.hpp"

namespace dbke::testing {

/// Local OpenAI-style server. Chat replies are built from the prompt: QA
/// prompts get a tutoring dialogue naming the stated correct label, note
/// prompts get a note with every heading, anything else a patient dialogue.
/// /completions echoes the prompt split at spaces and newlines with a
/// deterministic log-probability per token.
class StubServer {
 public:
  bool scoring = true;
  bool note_complete = true;

  StubServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++chat_requests;
      const auto body = nlohmann::json::parse(req.body);
      const std::string prompt = body["messages"].back()["content"].get<std::string>();
      const std::string seed = body.contains("seed") ? body["seed"].dump() : "0";
      const nlohmann::json reply{{"model", "stub-model"},
                                 {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", answer(prompt, seed)}}}}}},
                                 {"usage", {{"prompt_tokens", 10}, {"completion_tokens", 20}}}};
      res.set_content(reply.dump(), "application/json");
    });
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++score_requests;
      if (!scoring) {
        res.status = 404;
        res.set_content(R"({"error":{"message":"not found"}})", "application/json");
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      res.set_content(echo(body["prompt"].get<std::string>()).dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::jthread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() { server_.stop(); }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  std::atomic<int> chat_requests{0};
  std::atomic<int> score_requests{0};

 private:
  std::string answer(const std::string& prompt, const std::string& seed) const {
    if (const auto at = prompt.find("Correct answer: ("); at != std::string::npos) {
      const std::string label = prompt.substr(at + 17, 1);
      return "Student: Which option is correct?\nTutor: Let us reason through it.\nStudent: What rules out the "
             "others?\nTutor: Each of them conflicts with the findings.\nStudent: So what is the answer?\nTutor: The "
             "answer is (" +
             label + ").\n";
    }
    if (prompt.find("clinical note") != std::string::npos) {
      std::string note;
      for (const auto& h : note_headings()) {
        if (!note_complete && h == "ALLERGIES") continue;
        note += h + ": Not mentioned\n";
      }
      return note;
    }
    return "Patient: I read about this condition, reply " + seed +
           ".\nBot: I can explain it.\nPatient: What should I watch for?\nBot: Chest pain or shortness of "
           "breath.\nPatient: Should I see someone?\nBot: Yes, please talk to your doctor.\n";
  }

  static nlohmann::json echo(const std::string& prompt) {
    nlohmann::json texts = nlohmann::json::array(), lps = nlohmann::json::array(), offs = nlohmann::json::array();
    std::size_t start = 0;
    long long codepoints = 0, at = 0;
    auto flush = [&](std::size_t end) {
      if (end == start) return;
      const std::string tok = prompt.substr(start, end - start);
      std::uint32_t h = 2166136261u;
      for (unsigned char c : tok) h = (h ^ c) * 16777619u;
      texts.push_back(tok);
      lps.push_back(texts.size() == 1 ? nlohmann::json() : nlohmann::json(-0.5 - (h % 97) / 20.0));
      offs.push_back(at);
      at = codepoints;
      start = end;
    };
    for (std::size_t i = 0; i < prompt.size(); ++i) {
      if (i > 0 && (prompt[i] == ' ' || prompt[i] == '\n')) flush(i);
      codepoints += (static_cast<unsigned char>(prompt[i]) & 0xC0) != 0x80;
    }
    flush(prompt.size());
    return {{"model", "stub-model"},
            {"choices", {{{"text", ""}, {"logprobs", {{"tokens", texts}, {"token_logprobs", lps}, {"text_offset", offs}}}}}}};
  }

  httplib::Server server_;
  int port_ = 0;
  std::jthread thread_;
};

}  // namespace dbke::testing
