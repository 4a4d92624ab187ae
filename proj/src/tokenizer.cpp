#include "dbke/tokenizer.hpp"

#include <algorithm>
#include <cstdio>
#include <queue>
#include <unordered_map>
#include <variant>

#include <nlohmann/json.hpp>

#include "dbke/error.hpp"
#include "dbke/util.hpp"

namespace dbke {

namespace {

struct PrependStep {
  std::string text;
};
struct ReplaceStep {
  std::string pattern;
  std::string content;
};
using NormalizerStep = std::variant<PrependStep, ReplaceStep>;

// A normalized byte and the original byte range of the character it came from.
struct NormByte {
  char byte;
  std::size_t orig_begin;
  std::size_t orig_end;
};

std::size_t utf8_len(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

std::uint64_t pair_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorCode::tokenizer_error, msg); }

}  // namespace

struct Tokenizer::Impl {
  std::unordered_map<std::string, int> vocab;
  std::vector<std::string> id_to_token;
  std::unordered_map<std::uint64_t, std::pair<int, int>> merges;  // pair -> (rank, merged id)
  std::vector<std::pair<std::string, int>> added;                 // longest first
  std::vector<NormalizerStep> normalizer;
  std::vector<int> byte_ids;  // 256 entries when byte_fallback, else empty
  int unk_id = -1;
  bool ignore_merges = false;
  std::string fingerprint;

  std::vector<NormByte> normalize(std::string_view piece, std::size_t base) const;
  void encode_piece(std::string_view piece, std::size_t base, std::vector<Token>& out) const;
};

std::vector<NormByte> Tokenizer::Impl::normalize(std::string_view piece, std::size_t base) const {
  std::vector<NormByte> cur;
  cur.reserve(piece.size() + 8);
  for (std::size_t i = 0; i < piece.size();) {
    std::size_t n = std::min(utf8_len(static_cast<unsigned char>(piece[i])), piece.size() - i);
    for (std::size_t k = 0; k < n; ++k) cur.push_back({piece[i + k], base + i, base + i + n});
    i += n;
  }
  for (const auto& step : normalizer) {
    if (const auto* p = std::get_if<PrependStep>(&step)) {
      if (cur.empty()) continue;
      std::vector<NormByte> next;
      next.reserve(cur.size() + p->text.size());
      for (char c : p->text) next.push_back({c, cur.front().orig_begin, cur.front().orig_end});
      next.insert(next.end(), cur.begin(), cur.end());
      cur = std::move(next);
    } else {
      const auto& r = std::get<ReplaceStep>(step);
      std::vector<NormByte> next;
      next.reserve(cur.size());
      const std::size_t m = r.pattern.size();
      for (std::size_t i = 0; i < cur.size();) {
        bool match = m > 0 && i + m <= cur.size();
        for (std::size_t k = 0; match && k < m; ++k) match = cur[i + k].byte == r.pattern[k];
        if (match) {
          std::size_t ob = cur[i].orig_begin, oe = cur[i].orig_end;
          for (std::size_t k = 1; k < m; ++k) {
            ob = std::min(ob, cur[i + k].orig_begin);
            oe = std::max(oe, cur[i + k].orig_end);
          }
          for (char c : r.content) next.push_back({c, ob, oe});
          i += m;
        } else {
          next.push_back(cur[i++]);
        }
      }
      cur = std::move(next);
    }
  }
  return cur;
}

void Tokenizer::Impl::encode_piece(std::string_view piece, std::size_t base, std::vector<Token>& out) const {
  const std::vector<NormByte> norm = normalize(piece, base);
  if (norm.empty()) return;

  std::string text;
  text.reserve(norm.size());
  for (const auto& nb : norm) text.push_back(nb.byte);

  struct Symbol {
    int id;
    std::size_t nbegin, nend;  // range in the normalized text
    int prev, next;
    bool alive;
  };
  std::vector<Symbol> syms;
  syms.reserve(text.size());

  auto push = [&](int id, std::size_t b, std::size_t e) {
    int idx = static_cast<int>(syms.size());
    syms.push_back({id, b, e, idx - 1, idx + 1, true});
  };

  if (ignore_merges) {
    if (auto it = vocab.find(text); it != vocab.end()) {
      out.push_back({it->second, norm.front().orig_begin, norm.back().orig_end});
      return;
    }
  }

  for (std::size_t i = 0; i < text.size();) {
    std::size_t n = std::min(utf8_len(static_cast<unsigned char>(text[i])), text.size() - i);
    if (auto it = vocab.find(text.substr(i, n)); it != vocab.end()) {
      push(it->second, i, i + n);
    } else if (!byte_ids.empty()) {
      for (std::size_t k = 0; k < n; ++k) push(byte_ids[static_cast<unsigned char>(text[i + k])], i + k, i + k + 1);
    } else {
      if (unk_id < 0) fail("character outside vocabulary and no unk_token configured");
      push(unk_id, i, i + n);
    }
    i += n;
  }
  if (!syms.empty()) syms.back().next = -1;

  // Lowest rank first; equal ranks resolve to the leftmost pair.
  struct Candidate {
    int rank;
    int left;
    int merged;
    int left_id, right_id;
    bool operator>(const Candidate& o) const { return rank != o.rank ? rank > o.rank : left > o.left; }
  };
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap;
  auto consider = [&](int left) {
    if (left < 0) return;
    int right = syms[left].next;
    if (right < 0) return;
    auto it = merges.find(pair_key(syms[left].id, syms[right].id));
    if (it != merges.end()) heap.push({it->second.first, left, it->second.second, syms[left].id, syms[right].id});
  };
  for (int i = 0; i + 1 < static_cast<int>(syms.size()); ++i) consider(i);

  while (!heap.empty()) {
    Candidate c = heap.top();
    heap.pop();
    Symbol& l = syms[c.left];
    if (!l.alive || l.id != c.left_id || l.next < 0) continue;
    Symbol& r = syms[l.next];
    if (!r.alive || r.id != c.right_id) continue;
    l.id = c.merged;
    l.nend = r.nend;
    r.alive = false;
    l.next = r.next;
    if (r.next >= 0) syms[r.next].prev = c.left;
    consider(l.prev);
    consider(c.left);
  }

  for (int i = 0; i >= 0 && i < static_cast<int>(syms.size()); i = syms[i].next) {
    const Symbol& s = syms[i];
    std::size_t ob = norm[s.nbegin].orig_begin, oe = norm[s.nbegin].orig_end;
    for (std::size_t k = s.nbegin + 1; k < s.nend; ++k) {
      ob = std::min(ob, norm[k].orig_begin);
      oe = std::max(oe, norm[k].orig_end);
    }
    out.push_back({s.id, ob, oe});
  }
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    fail("vocabulary file missing: " + path.string());
  }
  return from_json(text);
}

Tokenizer Tokenizer::from_json(std::string_view json_text) {
  nlohmann::json spec;
  try {
    spec = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("corrupt tokenizer file: ") + e.what());
  }
  auto impl = std::make_shared<Impl>();
  impl->fingerprint = sha256_hex(json_text);
  try {
    const auto& model = spec.at("model");
    if (model.value("type", std::string("BPE")) != "BPE") fail("only BPE models are supported");
    for (const char* key : {"continuing_subword_prefix", "end_of_word_suffix"}) {
      if (model.contains(key) && !model[key].is_null() && !model[key].get<std::string>().empty()) {
        fail(std::string(key) + " is not supported");
      }
    }
    if (model.contains("dropout") && !model["dropout"].is_null()) fail("BPE dropout is not supported");
    if (spec.contains("pre_tokenizer") && !spec["pre_tokenizer"].is_null()) fail("pre_tokenizer is not supported");

    int max_id = -1;
    for (const auto& [tok, id] : model.at("vocab").items()) {
      impl->vocab.emplace(tok, id.get<int>());
      max_id = std::max(max_id, id.get<int>());
    }
    for (const auto& a : spec.value("added_tokens", nlohmann::json::array())) {
      int id = a.at("id").get<int>();
      std::string content = a.at("content").get<std::string>();
      impl->vocab.emplace(content, id);
      impl->added.emplace_back(content, id);
      max_id = std::max(max_id, id);
    }
    std::sort(impl->added.begin(), impl->added.end(),
              [](const auto& x, const auto& y) { return x.first.size() > y.first.size(); });
    impl->id_to_token.assign(static_cast<std::size_t>(max_id + 1), {});
    for (const auto& [tok, id] : impl->vocab) impl->id_to_token[static_cast<std::size_t>(id)] = tok;

    int rank = 0;
    for (const auto& m : model.at("merges")) {
      std::string a, b;
      if (m.is_string()) {
        const std::string s = m.get<std::string>();
        auto sp = s.find(' ');
        if (sp == std::string::npos) fail("malformed merge '" + s + "'");
        a = s.substr(0, sp);
        b = s.substr(sp + 1);
      } else {
        a = m.at(0).get<std::string>();
        b = m.at(1).get<std::string>();
      }
      auto ia = impl->vocab.find(a), ib = impl->vocab.find(b), im = impl->vocab.find(a + b);
      if (ia == impl->vocab.end() || ib == impl->vocab.end() || im == impl->vocab.end()) {
        fail("merge references unknown token: " + a + " " + b);
      }
      impl->merges.emplace(pair_key(ia->second, ib->second), std::make_pair(rank++, im->second));
    }

    if (model.contains("unk_token") && !model["unk_token"].is_null()) {
      auto it = impl->vocab.find(model["unk_token"].get<std::string>());
      if (it == impl->vocab.end()) fail("unk_token not in vocabulary");
      impl->unk_id = it->second;
    }
    impl->ignore_merges = model.value("ignore_merges", false);
    if (model.value("byte_fallback", false)) {
      impl->byte_ids.resize(256);
      for (int b = 0; b < 256; ++b) {
        char name[8];
        std::snprintf(name, sizeof name, "<0x%02X>", b);
        auto it = impl->vocab.find(name);
        if (it == impl->vocab.end()) fail(std::string("byte_fallback requires token ") + name);
        impl->byte_ids[static_cast<std::size_t>(b)] = it->second;
      }
    }

    if (spec.contains("normalizer") && !spec["normalizer"].is_null()) {
      const auto& n = spec["normalizer"];
      std::vector<nlohmann::json> steps;
      if (n.at("type") == "Sequence") {
        for (const auto& s : n.at("normalizers")) steps.push_back(s);
      } else {
        steps.push_back(n);
      }
      for (const auto& s : steps) {
        const std::string type = s.at("type").get<std::string>();
        if (type == "Prepend") {
          impl->normalizer.emplace_back(PrependStep{s.at("prepend").get<std::string>()});
        } else if (type == "Replace") {
          const auto& pat = s.at("pattern");
          if (!pat.contains("String")) fail("only literal Replace patterns are supported");
          impl->normalizer.emplace_back(
              ReplaceStep{pat["String"].get<std::string>(), s.at("content").get<std::string>()});
        } else {
          fail("unsupported normalizer " + type);
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("corrupt tokenizer file: ") + e.what());
  }
  return Tokenizer(std::move(impl));
}

std::vector<Tokenizer::Token> Tokenizer::encode(std::string_view text) const {
  std::vector<Token> out;
  const auto& added = impl_->added;
  std::size_t piece_start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::pair<std::string, int>* hit = nullptr;
    for (const auto& a : added) {
      if (!a.first.empty() && text.compare(i, a.first.size(), a.first) == 0) {
        hit = &a;
        break;
      }
    }
    if (!hit) {
      ++i;
      continue;
    }
    impl_->encode_piece(text.substr(piece_start, i - piece_start), piece_start, out);
    out.push_back({hit->second, i, i + hit->first.size()});
    i += hit->first.size();
    piece_start = i;
  }
  impl_->encode_piece(text.substr(piece_start), piece_start, out);
  return out;
}

std::vector<int> Tokenizer::encode_ids(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& t : encode(text)) ids.push_back(t.id);
  return ids;
}

std::size_t Tokenizer::count(std::string_view text) const { return text.empty() ? 0 : encode(text).size(); }

std::string Tokenizer::decode(std::span<const int> ids) const {
  static const std::string kMetaspace = "\xE2\x96\x81";
  std::string out;
  for (int id : ids) {
    std::string_view t = token_text(id);
    if (t.size() == 6 && t.starts_with("<0x") && t.back() == '>') {
      out.push_back(static_cast<char>(std::stoi(std::string(t.substr(3, 2)), nullptr, 16)));
      continue;
    }
    for (std::size_t p = 0; p < t.size();) {
      if (t.compare(p, kMetaspace.size(), kMetaspace) == 0) {
        out.push_back(' ');
        p += kMetaspace.size();
      } else {
        out.push_back(t[p++]);
      }
    }
  }
  return out;
}

std::string_view Tokenizer::token_text(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= impl_->id_to_token.size()) {
    throw Error(ErrorCode::invalid_argument, "token id out of range: " + std::to_string(id));
  }
  return impl_->id_to_token[static_cast<std::size_t>(id)];
}

std::size_t Tokenizer::vocab_size() const { return impl_->vocab.size(); }

const std::string& Tokenizer::fingerprint() const { return impl_->fingerprint; }

std::size_t count_tokens(std::string_view text, const Tokenizer& tok) { return tok.count(text); }

}  // namespace dbke
