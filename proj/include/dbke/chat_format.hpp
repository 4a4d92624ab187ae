#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbke/types.hpp"

namespace dbke {

/// Role-header + end-of-turn delimiter serialization. Each turn renders as
/// `prefix + text + suffix`; `assistant_suffix` is the assistant end-of-turn
/// delimiter and is trained on together with the assistant text.
struct ChatFormat {
  std::string name;
  int version = 1;
  std::string system_prefix;
  std::string system_suffix;
  std::string user_prefix;
  std::string user_prefix_after_system;  // replaces user_prefix right after a system turn
  std::string user_suffix;
  std::string assistant_prefix;
  std::string assistant_suffix;

  /// Llama-2 chat convention:
  /// `<s>[INST] <<SYS>>\n{sys}\n<</SYS>>\n\n{user} [/INST] {assistant} </s>`
  static ChatFormat llama2();

  /// Loads a `[chat_format]` TOML table. Unknown keys and unsupported
  /// versions are rejected.
  static ChatFormat load(const std::filesystem::path& path);

  nlohmann::json to_json() const;

  bool operator==(const ChatFormat&) const = default;
};

struct ContentSpan {
  std::size_t turn;
  Role role;
  std::size_t begin;          // content bytes [begin, end)
  std::size_t end;
  std::size_t delimiter_end;  // end + suffix length: [end, delimiter_end) is the turn's end delimiter

  bool operator==(const ContentSpan&) const = default;
};

struct RenderedChat {
  std::string text;
  std::vector<ContentSpan> spans;  // one per turn, in order
};

RenderedChat render_chat(const Dialogue& d, const ChatFormat& format);

/// render_chat over a turn list without building a Dialogue.
RenderedChat render_turns(const std::vector<Turn>& turns, const ChatFormat& format);

}  // namespace dbke
