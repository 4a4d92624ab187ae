#!/usr/bin/env python3
"""Regenerate src/langid_profiles.cpp from langdetect n-gram profiles.

Usage: gen_langid_profiles.py <langdetect/profiles dir> > src/langid_profiles.cpp

Keeps the most frequent character trigrams per language after lowercasing
and folding non-letters to a single space, the same normalization the C++
classifier applies to input text.
"""
import json
import math
import os
import sys

LANGS = ["en", "de", "fr", "es", "it", "pt", "nl", "sv", "da", "no", "fi",
         "pl", "cs", "sk", "sl", "hr", "ro", "hu", "tr", "id", "tl", "sw",
         "af", "ca", "et", "lt", "lv", "vi", "ru", "el"]
TOP_N = 1000


def is_letter(ch):
    cp = ord(ch)
    if ch.isascii():
        return ch.isalpha()
    if 0x80 <= cp <= 0xBF or cp in (0xD7, 0xF7) or 0x2000 <= cp <= 0x206F:
        return False
    return True


def lower(ch):
    cp = ord(ch)
    if ch.isascii():
        return ch.lower()
    if (0xC0 <= cp <= 0xDE and cp != 0xD7) or 0x391 <= cp <= 0x3A9 or 0x410 <= cp <= 0x42F:
        return chr(cp + 0x20)
    if 0x400 <= cp <= 0x40F:
        return chr(cp + 0x50)
    return ch


def cpp_escape(s):
    out = []
    for b in s.encode("utf-8"):
        if 0x20 <= b < 0x7F and chr(b) not in '"\\':
            out.append(chr(b))
        else:
            out.append("\\x%02x" % b)
    # keep hex escapes from swallowing following hex digits
    return '""'.join(_split_hex(out))


def _split_hex(parts):
    res, cur = [], ""
    prev_hex = False
    for p in parts:
        if prev_hex and len(p) == 1 and p in "0123456789abcdefABCDEF":
            res.append(cur)
            cur = ""
        cur += p
        prev_hex = p.startswith("\\x")
    res.append(cur)
    return res


def main():
    root = sys.argv[1]
    print("// Generated by scripts/gen_langid_profiles.py. Do not edit.")
    print("// Trigram statistics derived from the langdetect profiles (Apache-2.0).")
    print()
    print('#include "dbke/langid.hpp"')
    print()
    print("namespace dbke::detail {")
    print()
    print("const std::vector<LanguageProfileData>& builtin_language_profiles() {")
    print("  static const std::vector<LanguageProfileData> profiles = {")
    for lang in LANGS:
        with open(os.path.join(root, lang), encoding="utf-8") as f:
            prof = json.load(f)
        total = prof["n_words"][2]
        merged = {}
        for gram, freq in prof["freq"].items():
            if len(gram) != 3:
                continue
            norm = "".join(lower(c) if is_letter(c) else " " for c in gram)
            if norm.strip() == "" or "  " in norm:
                continue
            merged[norm] = merged.get(norm, 0) + freq
        top = sorted(merged.items(), key=lambda kv: (-kv[1], kv[0]))[:TOP_N]
        print('      {"%s", {' % lang)
        for gram, freq in top:
            print('        {"%s", %.6f},' % (cpp_escape(gram), math.log(freq / total)))
        print("      }},")
    print("  };")
    print("  return profiles;")
    print("}")
    print()
    print("}  // namespace dbke::detail")


if __name__ == "__main__":
    main()
