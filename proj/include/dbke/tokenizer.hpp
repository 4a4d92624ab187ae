#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dbke {

/// Byte-fallback BPE tokenizer loaded from a HuggingFace `tokenizer.json`.
///
/// Supported subset: a `BPE` model (vocab, merges, optional byte_fallback and
/// unk_token), no pre-tokenizer, and a normalizer that is absent or a
/// sequence of `Prepend` / literal-string `Replace` steps. That covers the
/// SentencePiece-derived Llama tokenizers. Added tokens are matched
/// literally before normalization, as the reference implementation does for
/// special tokens. Anything else is rejected at load time rather than
/// silently tokenized differently.
///
/// Instances are immutable and cheap to copy; share them across threads.
class Tokenizer {
 public:
  struct Token {
    int id;
    std::size_t begin;  // byte offsets into the encoded text
    std::size_t end;
  };

  static Tokenizer load(const std::filesystem::path& path);
  static Tokenizer from_json(std::string_view json_text);

  std::vector<Token> encode(std::string_view text) const;
  std::vector<int> encode_ids(std::string_view text) const;
  std::size_t count(std::string_view text) const;

  /// Concatenates token surfaces, mapping byte tokens back to bytes and the
  /// metaspace marker back to ASCII space.
  std::string decode(std::span<const int> ids) const;

  std::string_view token_text(int id) const;
  std::size_t vocab_size() const;

  /// sha256 of the file/JSON the tokenizer was built from.
  const std::string& fingerprint() const;

 private:
  struct Impl;
  explicit Tokenizer(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

/// Number of tokens `tok` produces for `text`; 0 for the empty string.
std::size_t count_tokens(std::string_view text, const Tokenizer& tok);

}  // namespace dbke
