#include "dbke/emit.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <unordered_map>

#include "dbke/error.hpp"
#include "support/mask_oracle.hpp"
#include "support/test_support.hpp"

namespace dbke {
namespace {

const ChatFormat& llama2() {
  static const ChatFormat f = ChatFormat::load(DBKE_CHAT_FORMATS "/llama2.toml");
  return f;
}

Dialogue two_turns() {
  Dialogue d;
  d.id = "pair";
  d.turns = {{Role::user, "what causes leg pain after walking"}, {Role::assistant, "narrowing of the artery"}};
  return d;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::invalid_argument;
}

TEST(TokenizeWithMask, UserThenAssistantIsFalsePrefixTrueSuffix) {
  auto s = tokenize_with_mask(two_turns(), testing::tiny_tokenizer(), llama2());
  ASSERT_EQ(s.tokens.size(), s.loss_mask.size());
  auto first_on = std::find(s.loss_mask.begin(), s.loss_mask.end(), true);
  ASSERT_NE(first_on, s.loss_mask.end());
  EXPECT_NE(first_on, s.loss_mask.begin());
  EXPECT_TRUE(std::all_of(first_on, s.loss_mask.end(), [](bool b) { return b; }));
  EXPECT_EQ(s.tokens.back(), 2);  // </s> is learned
  EXPECT_EQ(s.source_ref, "pair");
}

TEST(TokenizeWithMask, NoAssistantContent) {
  Dialogue d;
  d.id = "users";
  d.turns = {{Role::user, "hello"}, {Role::user, "anyone there"}};
  EXPECT_EQ(code_of([&] { tokenize_with_mask(d, testing::tiny_tokenizer(), llama2()); }),
            ErrorCode::no_learnable_tokens);
}

TEST(TokenizeWithMask, TruncationThatDropsAllAssistantTokensIsRejected) {
  Dialogue d = two_turns();
  Rng rng(1);
  d.turns[0].text = testing::random_sentence(rng, 60, 60);
  EXPECT_EQ(code_of([&] { tokenize_with_mask(d, testing::tiny_tokenizer(), llama2(), 16); }),
            ErrorCode::no_learnable_tokens);
  EXPECT_EQ(code_of([&] { tokenize_with_mask(d, testing::tiny_tokenizer(), llama2(), 15); }),
            ErrorCode::invalid_argument);
}

TEST(TokenizeWithMask, RightTruncationKeepsThePrefix) {
  Rng rng(2);
  auto d = testing::random_dialogue(rng, 8, 8, 30);
  const auto& tok = testing::tiny_tokenizer();
  auto full = tokenize_with_mask(d, tok, llama2(), 100000);
  auto cut = tokenize_with_mask(d, tok, llama2(), 64);
  ASSERT_GT(full.tokens.size(), 64u);
  ASSERT_EQ(cut.tokens.size(), 64u);
  EXPECT_TRUE(std::equal(cut.tokens.begin(), cut.tokens.end(), full.tokens.begin()));
  EXPECT_TRUE(std::equal(cut.loss_mask.begin(), cut.loss_mask.end(), full.loss_mask.begin()));
}

// Independent oracle: token surfaces come straight from the vocabulary file
// and are aligned against the rendered text; assistant regions are found by
// searching for each turn's text in order.
TEST(TokenizeWithMask, FiftyRandomDialoguesMatchOracle) {
  const testing::MaskOracle oracle(DBKE_TEST_DATA "/tiny_bpe.json");
  const auto& tok = testing::tiny_tokenizer();
  Rng rng(20240);
  std::size_t positions = 0, unmasked = 0;
  for (int i = 0; i < 50; ++i) {
    auto d = testing::random_dialogue(rng, 2, 12, 40, "r" + std::to_string(i));
    if (i % 5 == 0) d.turns.back().text += " café naïve";
    auto s = tokenize_with_mask(d, tok, llama2(), 100000);
    auto expect = oracle.mask(d, s.tokens, llama2());
    ASSERT_EQ(s.loss_mask, expect) << d.id;
    positions += expect.size();
    unmasked += std::count(expect.begin(), expect.end(), true);
  }
  EXPECT_GT(unmasked, 0u);
  EXPECT_LT(unmasked, positions);
}

TEST(TokenizeWithMask, UnmaskedTextComesOnlyFromAssistantTurns) {
  const auto& tok = testing::tiny_tokenizer();
  Rng rng(77);
  for (int i = 0; i < 30; ++i) {
    auto d = testing::random_dialogue(rng, 2, 8, 20);
    for (auto& t : d.turns) {
      if (t.role == Role::user) t.text = "USERONLY " + t.text;
    }
    auto s = tokenize_with_mask(d, tok, llama2());
    std::vector<int> run;
    auto check = [&] {
      if (run.empty()) return;
      const std::string piece = tok.decode(run);
      EXPECT_EQ(piece.find("USERONLY"), std::string::npos);
      EXPECT_EQ(piece.find("[INST]"), std::string::npos);
      run.clear();
    };
    for (std::size_t k = 0; k < s.tokens.size(); ++k) {
      if (s.loss_mask[k]) {
        run.push_back(s.tokens[k]);
      } else {
        check();
      }
    }
    check();
  }
}

TEST(TokenizeDialogues, ParallelMapKeepsOrderAndCollectsRejections) {
  Rng rng(9);
  std::vector<Dialogue> ds;
  for (int i = 0; i < 40; ++i) ds.push_back(testing::random_dialogue(rng, 2, 6, 15, "t" + std::to_string(i)));
  ds[13].turns = {{Role::user, "only me"}};
  auto batch = tokenize_dialogues(ds, testing::tiny_tokenizer(), llama2(), kMaxSequenceLength, 4);
  ASSERT_EQ(batch.samples.size(), 39u);
  ASSERT_EQ(batch.rejected.size(), 1u);
  EXPECT_EQ(batch.rejected[0].source_ref, "t13");
  EXPECT_EQ(batch.rejected[0].reason, "no_learnable_tokens");
  EXPECT_EQ(batch.samples[13].source_ref, "t14");
  EXPECT_EQ(batch.samples[0], tokenize_with_mask(ds[0], testing::tiny_tokenizer(), llama2()));
}

std::vector<TrainingSample> samples(std::size_t n, Provenance p, const std::string& tag) {
  std::vector<TrainingSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    TrainingSample s;
    s.tokens = {1, static_cast<int>(i) + 3, 2};
    s.loss_mask = {false, true, i % 2 == 0};
    s.source_ref = tag + std::to_string(i);
    s.provenance = p;
    out.push_back(s);
  }
  return out;
}

TEST(MixAndShuffle, OneStreamIsAPermutation) {
  auto in = samples(20, Provenance::dbke, "a");
  auto out = mix_and_shuffle({in}, 5);
  ASSERT_EQ(out.size(), in.size());
  EXPECT_NE(out, in);
  auto key = [](const TrainingSample& s) { return s.source_ref; };
  std::vector<std::string> a, b;
  std::transform(in.begin(), in.end(), std::back_inserter(a), key);
  std::transform(out.begin(), out.end(), std::back_inserter(b), key);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
  EXPECT_EQ(mix_and_shuffle({in}, 5), out);
  EXPECT_THROW(mix_and_shuffle({}, 5), Error);
}

TEST(MixAndShuffle, ProvenanceCountsSurvive) {
  auto out = mix_and_shuffle({samples(7, Provenance::sharegpt, "s"), samples(5, Provenance::dbke, "d"),
                              samples(3, Provenance::qa_transform, "q")},
                             11);
  ASSERT_EQ(out.size(), 15u);
  std::map<Provenance, int> counts;
  for (const auto& s : out) ++counts[s.provenance];
  EXPECT_EQ(counts[Provenance::sharegpt], 7);
  EXPECT_EQ(counts[Provenance::dbke], 5);
  EXPECT_EQ(counts[Provenance::qa_transform], 3);
}

TEST(Shards, HundredSamplesInShardsOfThirtyTwo) {
  testing::TempDir dir;
  auto in = samples(100, Provenance::dbke, "x");
  auto m = write_shards(in, dir.path(), 32, "cfg", 42);
  ASSERT_EQ(m.shards.size(), 4u);
  EXPECT_EQ(m.shards[0].count, 32u);
  EXPECT_EQ(m.shards[1].count, 32u);
  EXPECT_EQ(m.shards[2].count, 32u);
  EXPECT_EQ(m.shards[3].count, 4u);
  EXPECT_EQ(m.shards[3].file, "shard-00003.jsonl");
  EXPECT_EQ(read_shards(dir.path()), in);

  auto j = nlohmann::json::parse(read_file(dir / "manifest.json"));
  EXPECT_EQ(j["config_hash"], "cfg");
  EXPECT_EQ(j["seed"], 42);
  EXPECT_EQ(j["mask_policy"], kMaskPolicy);
  EXPECT_EQ(ShardManifest::from_json(j), m);

  auto line = nlohmann::json::parse(read_jsonl(dir / "shard-00000.jsonl")[0].dump());
  EXPECT_EQ(line["mask"], nlohmann::json::array({0, 1, 1}));
  EXPECT_EQ(line["provenance"], "dbke");
}

TEST(Shards, FlippedByteFailsVerification) {
  testing::TempDir dir;
  write_shards(samples(10, Provenance::sharegpt, "y"), dir.path(), 4);
  auto path = dir / "shard-00001.jsonl";
  std::string bytes = read_file(path);
  bytes[bytes.size() / 2] ^= 0x01;
  std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
  EXPECT_EQ(code_of([&] { read_shards(dir.path()); }), ErrorCode::checksum_mismatch);
}

TEST(Shards, FailedWriteRemovesPartialShardAndKeepsOldManifest) {
  testing::TempDir dir;
  write_shards(samples(3, Provenance::dbke, "old"), dir.path(), 8);
  const std::string before = read_file(dir / "manifest.json");
  std::filesystem::create_symlink("/dev/full", dir / "shard-00001.jsonl.tmp");
  ShardWriter w(dir.path(), 8, "", 0);
  auto in = samples(20, Provenance::dbke, "new");
  EXPECT_EQ(code_of([&] {
              for (const auto& s : in) w.add(s);
            }),
            ErrorCode::io_error);
  EXPECT_FALSE(std::filesystem::exists(std::filesystem::symlink_status(dir / "shard-00001.jsonl.tmp")));
  EXPECT_EQ(read_file(dir / "manifest.json"), before);
  EXPECT_EQ(read_shards(dir.path()).size(), 3u);
  EXPECT_THROW(ShardWriter(dir.path(), 0, "", 0), Error);
}

std::string golden(const std::string& variant) { return read_file(DBKE_TEST_DATA "/train_config/" + variant + ".toml"); }

TEST(TrainConfig, ThirteenBMatchesGolden) {
  EXPECT_EQ(to_toml(train_config("13B")), golden("13B"));
  auto c = train_config("13B");
  EXPECT_EQ(c.learning_rate, 0.0002);
  EXPECT_EQ(c.gradient_accumulation_steps, 16);
}

TEST(TrainConfig, SeventyBMatchesGolden) {
  EXPECT_EQ(to_toml(train_config("70B")), golden("70B"));
  auto c = train_config("70B");
  EXPECT_EQ(c.learning_rate, 0.0001);
  EXPECT_EQ(c.gradient_accumulation_steps, 32);
}

TEST(TrainConfig, SharedValues) {
  for (const char* v : {"13B", "70B"}) {
    auto c = train_config(v);
    EXPECT_EQ(c.sequence_length, 4096);
    EXPECT_EQ(c.lora_r, 64);
    EXPECT_EQ(c.lora_alpha, 16);
    EXPECT_EQ(c.lora_dropout, 0.0);
    EXPECT_EQ(c.lora_target_modules, "All linear layers");
    EXPECT_EQ(c.mini_batch_size, 1);
    EXPECT_EQ(c.epochs, 1);
    EXPECT_EQ(c.optimizer, "paged_adamw_32bit");
    EXPECT_EQ(c.lr_scheduler, "Cosine");
  }
  EXPECT_EQ(code_of([] { train_config("7B"); }), ErrorCode::unknown_variant);
}

TEST(TrainConfig, FileRoundTripAndStrictParse) {
  testing::TempDir dir;
  write_train_config("70B", dir / "train.toml");
  EXPECT_EQ(read_file(dir / "train.toml"), golden("70B"));
  EXPECT_EQ(parse_train_config(golden("70B")), train_config("70B"));
  EXPECT_EQ(code_of([] { parse_train_config(golden("13B") + "warmup_steps = 10\n"); }), ErrorCode::config_error);
  std::string bad = golden("13B");
  bad.replace(bad.find("lora_r = 64"), 11, "lora_r = \"64\"");
  EXPECT_EQ(code_of([&] { parse_train_config(bad); }), ErrorCode::config_error);
}

}  // namespace
}  // namespace dbke
