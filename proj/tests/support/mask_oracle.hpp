#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbke/chat_format.hpp"
#include "dbke/types.hpp"

namespace dbke::testing {

/// Loss mask computed without the tokenizer's offsets: token surfaces come
/// straight from the vocabulary, are aligned greedily against the rendered
/// chat, and assistant regions are found by string search.
class MaskOracle {
 public:
  explicit MaskOracle(const std::string& vocab_json) {
    std::ifstream in(vocab_json);
    auto j = nlohmann::json::parse(in);
    for (auto& [k, v] : j["model"]["vocab"].items()) surface_[v.get<int>()] = k;
    for (const auto& a : j["added_tokens"]) surface_[a["id"].get<int>()] = a["content"].get<std::string>();
  }

  std::string piece(int id) const {
    std::string t = surface_.at(id);
    if (t.size() == 6 && t.rfind("<0x", 0) == 0) return std::string(1, static_cast<char>(std::stoi(t.substr(3, 2), nullptr, 16)));
    std::string out;
    for (std::size_t p = 0; p < t.size();) {
      if (t.compare(p, 3, "\xE2\x96\x81") == 0) {
        out += ' ';
        p += 3;
      } else {
        out += t[p++];
      }
    }
    return out;
  }

  std::vector<bool> mask(const Dialogue& d, const std::vector<int>& ids, const ChatFormat& f) const {
    std::string text;
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      const auto& t = d.turns[i];
      if (t.role == Role::system) text += f.system_prefix + t.text + f.system_suffix;
      if (t.role == Role::user) {
        text += (i > 0 && d.turns[i - 1].role == Role::system ? f.user_prefix_after_system : f.user_prefix);
        text += t.text + f.user_suffix;
      }
      if (t.role == Role::assistant) text += f.assistant_prefix + t.text + f.assistant_suffix;
    }

    std::vector<std::pair<std::size_t, std::size_t>> regions;
    std::size_t cursor = 0;
    for (const auto& t : d.turns) {
      const std::size_t at = text.find(t.text, cursor);
      if (at == std::string::npos) throw std::logic_error("turn text not found in rendered chat");
      cursor = at + t.text.size();
      if (t.role == Role::assistant) {
        if (text.compare(cursor, f.assistant_suffix.size(), f.assistant_suffix) != 0) throw std::logic_error("assistant suffix missing");
        regions.emplace_back(at, cursor + f.assistant_suffix.size());
      }
    }

    std::vector<bool> out;
    std::size_t pos = 0;
    for (int id : ids) {
      std::string s = piece(id);
      if (text.compare(pos, s.size(), s) != 0) {
        // a metaspace the normalizer prepended to a segment
        if (s.empty() || s[0] != ' ') throw std::logic_error("alignment lost at byte " + std::to_string(pos));
        s.erase(0, 1);
        if (text.compare(pos, s.size(), s) != 0) throw std::logic_error("alignment lost at byte " + std::to_string(pos));
      }
      const std::size_t b = pos, e = pos + s.size();
      pos = e;
      bool on = false;
      for (const auto& [rb, re] : regions) on = on || (b < re && rb < e && b < e);
      out.push_back(on);
    }
    return out;
  }

 private:
  std::unordered_map<int, std::string> surface_;
};

}  // namespace dbke::testing
