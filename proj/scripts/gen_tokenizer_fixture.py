#!/usr/bin/env python3
"""Build tests/data/tiny_bpe.json and the frozen reference outputs in
tests/data/tokenizer_oracle.json using the HuggingFace `tokenizers` package.

The C++ tokenizer is checked against these outputs; the reference package
is only needed to regenerate them.
"""
import json
import random

from tokenizers import Tokenizer, models, normalizers, trainers

DATA = "tests/data"


def training_text():
    lines = []
    with open(f"{DATA}/langid_corpus.tsv", encoding="utf-8") as f:
        for row in f:
            lang, text = row.rstrip("\n").split("\t", 1)
            if lang == "en":
                lines.append(text)
    with open(f"{DATA}/doctor_patient_dialogue.txt", encoding="utf-8") as f:
        lines.extend(l.strip() for l in f if l.strip())
    for name in ("dbke_patient_bot", "qa_justification", "clinical_note"):
        with open(f"templates/{name}.txt", encoding="utf-8") as f:
            lines.extend(l.strip() for l in f if l.strip())
    return lines


def build():
    tok = Tokenizer(models.BPE(unk_token="<unk>", byte_fallback=True))
    tok.normalizer = normalizers.Sequence(
        [normalizers.Prepend("▁"), normalizers.Replace(" ", "▁")])
    trainer = trainers.BpeTrainer(
        vocab_size=800, min_frequency=2,
        special_tokens=["<unk>", "<s>", "</s>"]
        + ["<0x%02X>" % b for b in range(256)],
        show_progress=False)
    tok.train_from_iterator(training_text(), trainer)
    # the trainer leaves byte tokens as ordinary vocab entries; only the
    # BOS/EOS/UNK markers are matched literally
    spec = json.loads(tok.to_str())
    spec["added_tokens"] = [t for t in spec["added_tokens"]
                            if not t["content"].startswith("<0x")]
    tok = Tokenizer.from_str(json.dumps(spec))
    tok.save(f"{DATA}/tiny_bpe.json")
    return tok


def byte_offsets(text, offsets):
    starts = [0]
    for ch in text:
        starts.append(starts[-1] + len(ch.encode("utf-8")))
    return [[starts[a], starts[b]] for a, b in offsets]


def random_string(rng, words):
    parts = []
    for _ in range(rng.randint(0, 6)):
        r = rng.random()
        if r < 0.6:
            parts.append(rng.choice(words))
        elif r < 0.75:
            parts.append(rng.choice(["é", "ü", "ß", "Ω", "中", "🙂", "ñ"]))
        elif r < 0.85:
            parts.append(rng.choice(["<s>", "</s>", "[INST]", "\n", "  "]))
        else:
            parts.append("".join(rng.choice("abcdefghijklmnopqrstuvwxyz,.")
                                 for _ in range(rng.randint(1, 5))))
    sep = rng.choice(["", " ", ""])
    return sep.join(parts)


def main():
    tok = build()
    words = [w for line in training_text() for w in line.split()]
    rng = random.Random(20230713)
    cases = ["", "the", "▁the", "Hello world", "The patient presented with chest pain.",
             "<s>[INST] Hi there [/INST] Hello! </s>", "naïve café — 中文 🙂",
             "  leading and trailing  ", "line one\nline two\n", "</s></s>x",
             "Bot: Of course, I'll do my best to help."]
    cases += [random_string(rng, words) for _ in range(200)]
    out_cases = []
    for text in cases:
        enc = tok.encode(text, add_special_tokens=False)
        out_cases.append({"text": text, "ids": enc.ids,
                          "offsets": byte_offsets(text, enc.offsets)})
    pairs = []
    violations = 0
    for _ in range(1000):
        a, b = random_string(rng, words), random_string(rng, words)
        ca = len(tok.encode(a, add_special_tokens=False).ids)
        cb = len(tok.encode(b, add_special_tokens=False).ids)
        cab = len(tok.encode(a + b, add_special_tokens=False).ids)
        violations += ca + cb < cab
        pairs.append({"a": a, "b": b, "count_a": ca, "count_b": cb, "count_ab": cab})
    with open(f"{DATA}/tokenizer_oracle.json", "w", encoding="utf-8") as f:
        json.dump({"cases": out_cases, "pairs": pairs}, f, ensure_ascii=False, indent=0)
    print("vocab", tok.get_vocab_size(), "subadditivity violations", violations)


if __name__ == "__main__":
    main()
