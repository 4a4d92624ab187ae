#include "dbke/chat_format.hpp"

#include <toml.hpp>

#include "dbke/error.hpp"

namespace dbke {

ChatFormat ChatFormat::llama2() {
  ChatFormat f;
  f.name = "llama2";
  f.version = 1;
  f.system_prefix = "<s>[INST] <<SYS>>\n";
  f.system_suffix = "\n<</SYS>>\n\n";
  f.user_prefix = "<s>[INST] ";
  f.user_prefix_after_system = "";
  f.user_suffix = " [/INST]";
  f.assistant_prefix = " ";
  f.assistant_suffix = " </s>";
  return f;
}

ChatFormat ChatFormat::load(const std::filesystem::path& path) {
  toml::table root;
  try {
    root = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    throw Error(ErrorCode::config_error, path.string() + ": " + std::string(e.description()));
  }
  const toml::table* t = root["chat_format"].as_table();
  if (!t) throw Error(ErrorCode::config_error, path.string() + ": missing [chat_format] table");

  ChatFormat f;
  std::pair<const char*, std::string*> fields[] = {
      {"name", &f.name},
      {"system_prefix", &f.system_prefix},
      {"system_suffix", &f.system_suffix},
      {"user_prefix", &f.user_prefix},
      {"user_prefix_after_system", &f.user_prefix_after_system},
      {"user_suffix", &f.user_suffix},
      {"assistant_prefix", &f.assistant_prefix},
      {"assistant_suffix", &f.assistant_suffix},
  };
  for (const auto& [key, node] : *t) {
    if (key.str() == "version") {
      auto v = node.value<int64_t>();
      if (!v || *v != 1) throw Error(ErrorCode::config_error, "unsupported chat_format version");
      f.version = 1;
      continue;
    }
    bool known = false;
    for (auto& [name, dst] : fields) {
      if (key.str() == name) {
        auto v = node.value<std::string>();
        if (!v) throw Error(ErrorCode::config_error, std::string("chat_format.") + name + " must be a string");
        *dst = *v;
        known = true;
      }
    }
    if (!known) throw Error(ErrorCode::config_error, "unknown key chat_format." + std::string(key.str()));
  }
  if (f.name.empty()) throw Error(ErrorCode::config_error, "chat_format.name is required");
  return f;
}

nlohmann::json ChatFormat::to_json() const {
  return {{"name", name},
          {"version", version},
          {"system_prefix", system_prefix},
          {"system_suffix", system_suffix},
          {"user_prefix", user_prefix},
          {"user_prefix_after_system", user_prefix_after_system},
          {"user_suffix", user_suffix},
          {"assistant_prefix", assistant_prefix},
          {"assistant_suffix", assistant_suffix}};
}

RenderedChat render_turns(const std::vector<Turn>& turns, const ChatFormat& f) {
  RenderedChat out;
  std::size_t reserve = 0;
  for (const auto& t : turns) reserve += t.text.size() + 32;
  out.text.reserve(reserve);
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const Turn& t = turns[i];
    const std::string* prefix = nullptr;
    const std::string* suffix = nullptr;
    switch (t.role) {
      case Role::system:
        prefix = &f.system_prefix;
        suffix = &f.system_suffix;
        break;
      case Role::user:
        prefix = (i > 0 && turns[i - 1].role == Role::system) ? &f.user_prefix_after_system : &f.user_prefix;
        suffix = &f.user_suffix;
        break;
      case Role::assistant:
        prefix = &f.assistant_prefix;
        suffix = &f.assistant_suffix;
        break;
    }
    out.text += *prefix;
    const std::size_t begin = out.text.size();
    out.text += t.text;
    const std::size_t end = out.text.size();
    out.text += *suffix;
    out.spans.push_back({i, t.role, begin, end, out.text.size()});
  }
  return out;
}

RenderedChat render_chat(const Dialogue& d, const ChatFormat& f) { return render_turns(d.turns, f); }

}  // namespace dbke
