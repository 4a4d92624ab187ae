#include "dbke/dbke.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <set>

#include "dbke/corpus.hpp"
#include "dbke/error.hpp"
#include "support/stub_teacher.hpp"
#include "support/test_support.hpp"

namespace dbke {
namespace {

using testing::ScriptedTeacher;
using testing::TempDir;
using testing::valid_transcript;

const RoleAliases kPatientBot{{"Patient"}, {"Bot"}};

PromptTemplate patient_bot() { return PromptTemplate::load(DBKE_TEMPLATES "/dbke_patient_bot.txt"); }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no dbke::Error thrown";
  return ErrorCode::invalid_argument;
}

std::string front(const std::string& extra, const std::string& body) {
  return "---\nname: t\nkind: dbke\naliases:\n  user: [Patient]\n  assistant: [Bot]\nconstraints:\n  - rule one\n" + extra +
         "---\n" + body;
}

TEST(PromptTemplate, ShippedTemplatesLoad) {
  for (auto name : {"dbke_patient_bot", "qa_justification", "clinical_note"}) {
    auto t = PromptTemplate::load(std::string(DBKE_TEMPLATES "/") + name + ".txt");
    EXPECT_EQ(t.name(), name);
    EXPECT_FALSE(t.constraints().empty());
  }
}

TEST(PromptTemplate, RenderedPromptCarriesFollowUpRuleAndPassage) {
  auto t = patient_bot();
  ASSERT_EQ(t.constraints().size(), 10u);
  const std::string passage = "Statins lower blood cholesterol.";
  const std::string out = render_prompt(t, passage);
  EXPECT_NE(out.find("Bot asks follow-up questions for better understanding"), std::string::npos);
  EXPECT_NE(out.find("4. Bot asks follow-up questions for better understanding."), std::string::npos);
  EXPECT_TRUE(out.starts_with("Create a realistic chat dialogue between a patient and a medical chat bot"));
  std::size_t last = 0;
  for (std::size_t i = 0; i < t.constraints().size(); ++i) {
    auto at = out.find(std::to_string(i + 1) + ". " + t.constraints()[i]);
    ASSERT_NE(at, std::string::npos) << i;
    EXPECT_GT(at, last);
    last = at;
  }
  auto p = out.find(passage);
  EXPECT_GT(p, last);
  EXPECT_EQ(out.find(passage, p + 1), std::string::npos);
}

TEST(PromptTemplate, PassageWithSlotTextIsNotReexpanded) {
  auto out = render_prompt(patient_bot(), "literal {{constraints}} here");
  EXPECT_NE(out.find("literal {{constraints}} here"), std::string::npos);
}

TEST(PromptTemplate, EmptyPassageIsRejected) {
  EXPECT_EQ(code_of([] { render_prompt(patient_bot(), " \n\t"); }), ErrorCode::empty_passage);
}

TEST(PromptTemplate, LoadTimeErrors) {
  const std::vector<std::string> bad = {
      front("", "no slot here {{constraints}}"),
      front("", "{{passage}} twice {{passage}} {{constraints}}"),
      front("", "{{passage}} {{constraints}} {{constraints}}"),
      front("", "{{passage}} without the constraint slot"),
      front("", "{{passage}} {{constraints}} {{other}}"),
      front("colour: red\n", "{{passage}} {{constraints}}"),
      "---\nname: t\naliases: {user: [P], assistant: [B]}\n---\n{{passage}}",  // dbke kind, no constraints
      "---\nname: t\nkind: dbke\nconstraints: [x]\n---\n{{passage}} {{constraints}}",  // no aliases
      "no front matter {{passage}}",
  };
  for (const auto& text : bad) EXPECT_EQ(code_of([&] { PromptTemplate::parse(text); }), ErrorCode::template_error) << text;
  EXPECT_NO_THROW(PromptTemplate::parse(front("", "{{constraints}}\n\n{{ passage }}")));
}

struct Fixture {
  std::string name, raw;
  RoleAliases aliases;
  nlohmann::json golden;
};

std::vector<Fixture> transcript_fixtures() {
  std::vector<Fixture> out;
  for (int i = 1; i <= 20; ++i) {
    char stem[8];
    std::snprintf(stem, sizeof stem, "%02d", i);
    const std::string base = std::string(DBKE_TEST_DATA "/transcripts/") + stem;
    Fixture f;
    f.name = stem;
    f.raw = read_file(base + ".txt");
    f.golden = nlohmann::json::parse(read_file(base + ".golden.json"));
    f.aliases.user = f.golden["aliases"]["user"].get<std::vector<std::string>>();
    f.aliases.assistant = f.golden["aliases"]["assistant"].get<std::vector<std::string>>();
    out.push_back(std::move(f));
  }
  return out;
}

TEST(ParseDialogue, TwentyFixturesMatchHandSegmentation) {
  for (const auto& f : transcript_fixtures()) {
    SCOPED_TRACE("fixture " + f.name);
    if (f.golden.contains("error")) {
      const auto expected = f.golden["error"].get<std::string>();
      EXPECT_EQ(std::string(to_string(code_of([&] { parse_dialogue(f.raw, f.aliases); }))), expected);
      continue;
    }
    Dialogue d = parse_dialogue(f.raw, f.aliases);
    ASSERT_EQ(d.turns.size(), f.golden["turns"].size());
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      EXPECT_EQ(to_string(d.turns[i].role), f.golden["turns"][i]["role"].get<std::string>()) << i;
      EXPECT_EQ(d.turns[i].text, f.golden["turns"][i]["text"].get<std::string>()) << i;
    }
  }
}

TEST(ParseDialogue, TwoTurnExample) {
  auto d = parse_dialogue("Patient: Hi, I just read an article.\nBot: Of course, ask away.", kPatientBot);
  ASSERT_EQ(d.turns.size(), 2u);
  EXPECT_EQ(d.turns[0], (Turn{Role::user, "Hi, I just read an article."}));
  EXPECT_EQ(d.turns[1], (Turn{Role::assistant, "Of course, ask away."}));
}

TEST(ParseDialogue, RenderParseFixedPoint) {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    Dialogue d = testing::random_dialogue(rng, 2, 12, 15);
    if (!d.turns.empty() && d.turns.front().role == Role::system) d.turns.erase(d.turns.begin());
    if (d.turns.size() < 2) continue;
    // multi-line utterances survive too
    if (rng.uniform_below(3) == 0) d.turns[1].text += "\nsecond line";
    Dialogue back = parse_dialogue(render_transcript(d, kPatientBot), kPatientBot);
    EXPECT_EQ(back.turns, d.turns);
  }
  for (const auto& f : transcript_fixtures()) {
    if (f.golden.contains("error")) continue;
    Dialogue once = parse_dialogue(f.raw, f.aliases);
    EXPECT_EQ(parse_dialogue(render_transcript(once, f.aliases), f.aliases).turns, once.turns) << f.name;
  }
}

Dialogue alternating(int exchanges, bool user_first = true) {
  Dialogue d;
  d.id = "v";
  for (int i = 0; i < 2 * exchanges; ++i) {
    bool user = (i % 2 == 0) == user_first;
    d.turns.push_back({user ? Role::user : Role::assistant, "utterance " + std::to_string(i)});
  }
  return d;
}

TEST(ValidateDialogue, Examples) {
  EXPECT_TRUE(validate_dialogue(alternating(5), {}).empty());
  EXPECT_EQ(validate_dialogue(alternating(1), {}), std::vector<std::string>{"too_short"});
  // assistant-first, five assistant->user pairs still hold four user->assistant exchanges
  EXPECT_EQ(validate_dialogue(alternating(5, false), {}), std::vector<std::string>{"bot_first"});
  Dialogue d = alternating(4);
  d.turns.insert(d.turns.begin() + 2, Turn{Role::user, "again"});
  EXPECT_EQ(validate_dialogue(d, {}), std::vector<std::string>{"non_alternating"});
}

TEST(ValidateDialogue, TokenBudget) {
  ValidationPolicy p;
  p.tokenizer = &testing::tiny_tokenizer();
  p.max_tokens = 40;
  EXPECT_EQ(validate_dialogue(alternating(5), p), std::vector<std::string>{"over_budget"});
  p.max_tokens = 4096;
  EXPECT_TRUE(validate_dialogue(alternating(5), p).empty());
}

Document doc(const std::string& id, const std::string& body = "Aspirin reduces clot formation.") {
  Document d;
  d.id = id;
  d.source = DocumentSource::clinical_article;
  d.title = "Aspirin";
  d.body = body;
  d.year = 2019;
  return d;
}

TEST(TransformDocument, ValidStubGivesFullSlotsFirstTry) {
  ScriptedTeacher teacher([](const ChatRequest&, int) { return valid_transcript("aspirin"); });
  GenerationParams p;
  auto r = transform_document(doc("a1"), patient_bot(), teacher, p);
  ASSERT_EQ(r.dialogues.size(), 5u);
  EXPECT_TRUE(r.rejected.empty());
  EXPECT_EQ(r.retries, 0);
  for (int i = 0; i < 5; ++i) {
    const auto& d = r.dialogues[static_cast<std::size_t>(i)];
    EXPECT_EQ(d.id, "a1-d" + std::to_string(i));
    EXPECT_EQ(d.attempts, 1);
    EXPECT_EQ(d.source_doc, "a1");
    EXPECT_EQ(d.provenance, Provenance::dbke);
    EXPECT_EQ(dialogue_invariant_violation(d), "");
  }
  // one distinct seed per slot, same prompt
  std::set<std::uint64_t> seeds;
  for (const auto& req : teacher.requests()) {
    seeds.insert(*req.seed);
    EXPECT_NE(req.messages.back().text.find("Aspirin reduces clot formation."), std::string::npos);
  }
  EXPECT_EQ(seeds.size(), 5u);
}

TEST(TransformDocument, RetriesUntilParseable) {
  std::atomic<int> n{0};
  ScriptedTeacher teacher([&](const ChatRequest&, int) {
    return n++ < 2 ? std::string("I cannot write that dialogue.") : valid_transcript("x");
  });
  GenerationParams p;
  p.n_dialogues_per_doc = 1;
  auto r = transform_document(doc("a2"), patient_bot(), teacher, p);
  ASSERT_EQ(r.dialogues.size(), 1u);
  EXPECT_EQ(r.dialogues[0].attempts, 3);
  EXPECT_EQ(r.retries, 2);
}

TEST(TransformDocument, SlotAbandonedAfterMaxAttempts) {
  ScriptedTeacher teacher([](const ChatRequest&, int) { return valid_transcript("short", 1); });
  GenerationParams p;
  p.n_dialogues_per_doc = 2;
  auto r = transform_document(doc("a3"), patient_bot(), teacher, p);
  EXPECT_TRUE(r.dialogues.empty());
  ASSERT_EQ(r.rejected.size(), 2u);
  EXPECT_EQ(r.rejected[0].attempts, 3);
  EXPECT_EQ(r.rejected[0].last_reason, "too_short");
  EXPECT_EQ(teacher.calls(), 6);
}

TEST(TransformDocument, TeacherFailurePropagatesWithDocumentId) {
  ScriptedTeacher teacher([](const ChatRequest&, int) -> std::string {
    throw TransportError(ErrorCode::transport_error, "retries exhausted", 503);
  });
  try {
    transform_document(doc("doc-77"), patient_bot(), teacher, {});
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.code(), ErrorCode::transport_error);
    EXPECT_EQ(e.http_status(), 503);
    EXPECT_NE(std::string(e.what()).find("doc-77"), std::string::npos);
  }
}

TEST(TransformDocument, EmptyBodyIsEmptyPassage) {
  ScriptedTeacher teacher([](const ChatRequest&, int) { return valid_transcript("x"); });
  Document d = doc("e", "   ");
  d.title.clear();
  EXPECT_EQ(code_of([&] { transform_document(d, patient_bot(), teacher, {}); }), ErrorCode::empty_passage);
}

std::vector<Document> articles() {
  auto r = ingest_documents({DBKE_TEST_DATA "/articles.jsonl"}, InputFormat::structured_record);
  EXPECT_EQ(r.documents.size(), 20u);
  return r.documents;
}

// Reply depends only on the request seed, so it is deterministic per
// (document, slot, attempt).
ScriptedTeacher::Script seeded_script() {
  return [](const ChatRequest& req, int) { return valid_transcript("seed " + std::to_string(*req.seed)); };
}

PipelineConfig pipeline_config(const std::filesystem::path& dir) {
  PipelineConfig c;
  c.output_dir = dir;
  c.prompt = patient_bot();
  c.teacher_id = "stub";
  c.checkpoint_every = 3;
  return c;
}

TEST(RunPipeline, TwentyDocumentsFiveEach) {
  TempDir dir;
  ScriptedTeacher teacher(seeded_script(), 4);
  auto m = run_pipeline(articles(), teacher, pipeline_config(dir.path()));
  EXPECT_EQ(m.documents_in, 20u);
  EXPECT_EQ(m.accepted, 100u);
  EXPECT_EQ(m.rejected, 0u);
  EXPECT_EQ(m.generated, 100u);
  EXPECT_TRUE(m.complete);
  EXPECT_DOUBLE_EQ(m.average_exchanges(), 5.0);
  auto lines = read_jsonl(dir / "dialogues.jsonl");
  ASSERT_EQ(lines.size(), 100u);
  EXPECT_EQ(dialogue_from_json(lines[0]).id, "art00-d0");
  EXPECT_EQ(dialogue_from_json(lines[99]).id, "art19-d4");
  for (const auto& j : lines) EXPECT_TRUE(validate_dialogue(dialogue_from_json(j), {}).empty());
}

TEST(RunPipeline, SecondRunIsNoOp) {
  TempDir dir;
  ScriptedTeacher teacher(seeded_script());
  auto first = run_pipeline(articles(), teacher, pipeline_config(dir.path()));
  const auto bytes = read_file(dir / "dialogues.jsonl");
  const auto manifest = read_file(dir / "manifest.json");
  const int calls = teacher.calls();
  auto second = run_pipeline(articles(), teacher, pipeline_config(dir.path()));
  EXPECT_EQ(teacher.calls(), calls);
  EXPECT_EQ(read_file(dir / "dialogues.jsonl"), bytes);
  EXPECT_EQ(read_file(dir / "manifest.json"), manifest);
  EXPECT_EQ(second.to_json(), first.to_json());
}

TEST(RunPipeline, InterruptedRunResumesToSameOutput) {
  TempDir whole, split;
  ScriptedTeacher t1(seeded_script()), t2(seeded_script(), 3);
  auto full = run_pipeline(articles(), t1, pipeline_config(whole.path()));

  auto cfg = pipeline_config(split.path());
  cfg.max_documents = 10;
  auto partial = run_pipeline(articles(), t2, cfg);
  EXPECT_EQ(partial.cursor, 10u);
  EXPECT_FALSE(partial.complete);
  // garbage after the last checkpoint is discarded on resume
  std::ofstream(split / "dialogues.jsonl", std::ios::app) << "{\"partial\":";
  cfg.max_documents.reset();
  auto resumed = run_pipeline(articles(), t2, cfg);
  EXPECT_EQ(resumed.accepted, full.accepted);
  EXPECT_EQ(resumed.to_json(), full.to_json());
  EXPECT_EQ(read_file(split / "dialogues.jsonl"), read_file(whole / "dialogues.jsonl"));
}

TEST(RunPipeline, TeacherCrashMidRunLeavesResumableCheckpoint) {
  TempDir dir;
  std::atomic<bool> broken{true};
  ScriptedTeacher flaky([&](const ChatRequest& req, int) -> std::string {
    if (broken && req.messages.back().text.find("atrial fibrillation") != std::string::npos) {
      throw TransportError(ErrorCode::transport_error, "connection reset");
    }
    return valid_transcript("seed " + std::to_string(*req.seed));
  });
  auto cfg = pipeline_config(dir.path());
  EXPECT_THROW(run_pipeline(articles(), flaky, cfg), TransportError);
  auto m = DatasetManifest::from_json(nlohmann::json::parse(read_file(dir / "manifest.json")));
  EXPECT_EQ(m.cursor, 4u);
  broken = false;
  auto done = run_pipeline(articles(), flaky, cfg);
  EXPECT_EQ(done.accepted, 100u);
}

TEST(RunPipeline, RejectedSlotsMatchPerDocumentRecount) {
  TempDir dir;
  ScriptedTeacher teacher([](const ChatRequest& req, int) {
    const auto& prompt = req.messages.back().text;
    if (prompt.find("Review of gout") != std::string::npos) return std::string("no dialogue today");
    // every other seed yields a one-exchange dialogue
    return valid_transcript("s", *req.seed % 2 ? 5 : 1);
  });
  auto m = run_pipeline(articles(), teacher, pipeline_config(dir.path()));
  std::size_t acc = 0, rej = 0;
  for (const auto& r : m.documents) {
    acc += static_cast<std::size_t>(r.accepted);
    rej += static_cast<std::size_t>(r.rejected);
    EXPECT_EQ(r.accepted + r.rejected, 5);
    if (r.doc_id == "art14") EXPECT_EQ(r.rejected, 5);
  }
  EXPECT_EQ(acc, m.accepted);
  EXPECT_EQ(rej, m.rejected);
  EXPECT_GT(m.rejected, 5u);
  EXPECT_EQ(read_jsonl(dir / "dialogues.jsonl").size(), m.accepted);
  for (const auto& j : read_jsonl(dir / "dialogues.jsonl")) EXPECT_LE(j["attempts"].get<int>(), 3);
}

TEST(RunPipeline, CorruptCheckpointRequiresRestart) {
  TempDir dir;
  ScriptedTeacher teacher(seeded_script());
  auto cfg = pipeline_config(dir.path());
  cfg.max_documents = 5;
  run_pipeline(articles(), teacher, cfg);
  cfg.max_documents.reset();

  const auto manifest = read_file(dir / "manifest.json");
  std::ofstream(dir / "manifest.json") << manifest.substr(0, manifest.size() / 2);
  EXPECT_EQ(code_of([&] { run_pipeline(articles(), teacher, cfg); }), ErrorCode::checkpoint_corrupt);

  std::ofstream(dir / "manifest.json") << manifest;
  auto data = read_file(dir / "dialogues.jsonl");
  data[10] = data[10] == 'x' ? 'y' : 'x';
  std::ofstream(dir / "dialogues.jsonl", std::ios::binary) << data;
  EXPECT_EQ(code_of([&] { run_pipeline(articles(), teacher, cfg); }), ErrorCode::checkpoint_corrupt);

  cfg.restart = true;
  EXPECT_EQ(run_pipeline(articles(), teacher, cfg).accepted, 100u);
}

TEST(RunPipeline, ChangedConfigIsNotResumed) {
  TempDir dir;
  ScriptedTeacher teacher(seeded_script());
  auto cfg = pipeline_config(dir.path());
  cfg.max_documents = 5;
  run_pipeline(articles(), teacher, cfg);
  cfg.params.seed = 99;
  EXPECT_EQ(code_of([&] { run_pipeline(articles(), teacher, cfg); }), ErrorCode::config_error);
}

TEST(RunPipeline, DeterministicAcrossWorkerCounts) {
  TempDir a, b;
  ScriptedTeacher serial(seeded_script(), 1), wide(seeded_script(), 8);
  auto ma = run_pipeline(articles(), serial, pipeline_config(a.path()));
  auto mb = run_pipeline(articles(), wide, pipeline_config(b.path()));
  EXPECT_EQ(ma.to_json(), mb.to_json());
  EXPECT_EQ(read_file(a / "dialogues.jsonl"), read_file(b / "dialogues.jsonl"));
}

}  // namespace
}  // namespace dbke
