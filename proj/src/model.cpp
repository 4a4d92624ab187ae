#include "dbke/model.hpp"

#include "dbke/error.hpp"

namespace dbke {

void validate(const ChatRequest& req) {
  if (req.messages.empty()) throw Error(ErrorCode::invalid_argument, "chat request has no messages");
  if (req.messages.back().role != Role::user) {
    throw Error(ErrorCode::invalid_argument, "last chat message must come from the user");
  }
  if (!(req.temperature >= 0.0)) throw Error(ErrorCode::invalid_argument, "temperature must be >= 0");
  if (req.max_output_tokens < 1) throw Error(ErrorCode::invalid_argument, "max_output_tokens must be >= 1");
}

nlohmann::json to_json(const ChatRequest& req) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& t : req.messages) msgs.push_back({{"role", to_string(t.role)}, {"content", t.text}});
  nlohmann::json j{{"messages", msgs}, {"temperature", req.temperature}, {"max_tokens", req.max_output_tokens}};
  if (req.seed) j["seed"] = *req.seed;
  return j;
}

}  // namespace dbke
