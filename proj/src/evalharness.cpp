#include "dbke/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <map>

#include <spdlog/spdlog.h>

#include "dbke/error.hpp"
#include "dbke/retrieval.hpp"
#include "dbke/util.hpp"

namespace dbke {

std::string_view to_string(BenchmarkFormat f) noexcept {
  switch (f) {
    case BenchmarkFormat::mmlu: return "mmlu";
    case BenchmarkFormat::medqa: return "medqa";
    case BenchmarkFormat::medmcqa: return "medmcqa";
    case BenchmarkFormat::pubmedqa: return "pubmedqa";
    case BenchmarkFormat::usmle: return "usmle";
  }
  return "unknown";
}

BenchmarkFormat benchmark_format_from_string(std::string_view s) {
  for (auto f : {BenchmarkFormat::mmlu, BenchmarkFormat::medqa, BenchmarkFormat::medmcqa, BenchmarkFormat::pubmedqa,
                 BenchmarkFormat::usmle}) {
    if (s == to_string(f)) return f;
  }
  throw Error(ErrorCode::invalid_argument, "unknown benchmark format '" + std::string(s) + "'");
}

std::vector<CsvRecord> parse_csv(std::string_view text) {
  std::vector<CsvRecord> out;
  CsvRecord rec;
  std::string field;
  std::size_t line = 1;
  bool quoted = false, in_record = false, field_was_quoted = false;
  auto end_field = [&] {
    rec.fields.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = rec.fields.size() == 1 && rec.fields[0].empty();
    if (!blank) out.push_back(std::move(rec));
    rec = CsvRecord{};
    in_record = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (!in_record) {
      rec.line = line;
      in_record = true;
    }
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field.empty() && !field_was_quoted) {
          quoted = true;
          field_was_quoted = true;
        } else {
          field += c;
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        field += c;
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field += c;
    }
  }
  if (quoted) throw Error(ErrorCode::parse_error, "unterminated quoted field starting on line " + std::to_string(rec.line));
  if (in_record) end_record();
  return out;
}

namespace {

std::string subject_of(const std::filesystem::path& path) {
  std::string stem = path.stem().string();
  for (std::string_view suffix : {"_test", "_dev", "_val"}) {
    if (stem.size() > suffix.size() && stem.ends_with(suffix)) return stem.substr(0, stem.size() - suffix.size());
  }
  return stem;
}

std::string letter(std::size_t i) { return std::string(1, static_cast<char>('A' + i)); }

void check_item(const BenchmarkItem& it) {
  if (trim(it.question).empty()) throw Error(ErrorCode::invalid_argument, "empty question");
  for (const auto& [label, text] : it.options) {
    if (trim(text).empty()) throw Error(ErrorCode::invalid_argument, "option " + label + " is empty");
  }
  validate_item(it);
}

BenchmarkItem mmlu_row(const CsvRecord& r, const std::string& subject, const std::string& stem) {
  if (r.fields.size() != 6) {
    throw Error(ErrorCode::parse_error, "expected 6 fields, found " + std::to_string(r.fields.size()));
  }
  BenchmarkItem it;
  it.id = stem + ":" + std::to_string(r.line);
  it.question = trim(r.fields[0]);
  for (std::size_t i = 0; i < 4; ++i) it.options.emplace_back(letter(i), trim(r.fields[i + 1]));
  it.gold_label = trim(r.fields[5]);
  it.subject = subject;
  return it;
}

// Options as {"A": text, ...} or as an array of texts labelled A, B, ...
void read_options(const nlohmann::json& j, BenchmarkItem& it) {
  if (j.is_object()) {
    for (const auto& [label, text] : j.items()) it.options.emplace_back(label, text.get<std::string>());
    std::sort(it.options.begin(), it.options.end());
  } else if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) it.options.emplace_back(letter(i), j[i].get<std::string>());
  } else {
    throw Error(ErrorCode::parse_error, "options must be an object or an array");
  }
}

std::string optional_id(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return {};
  const auto& v = j[key];
  return v.is_string() ? v.get<std::string>() : v.dump();
}

BenchmarkItem medqa_row(const nlohmann::json& j, const std::string& fallback_id) {
  BenchmarkItem it;
  it.id = optional_id(j, "id");
  if (it.id.empty()) it.id = fallback_id;
  it.question = trim(j.at("question").get<std::string>());
  read_options(j.at("options"), it);
  if (j.contains("answer_idx")) {
    it.gold_label = j["answer_idx"].get<std::string>();
  } else {
    const std::string answer = trim(j.at("answer").get<std::string>());
    it.gold_label = answer;
    for (const auto& [label, text] : it.options) {
      if (trim(text) == answer) it.gold_label = label;
    }
  }
  return it;
}

BenchmarkItem medmcqa_row(const nlohmann::json& j, const std::string& fallback_id) {
  BenchmarkItem it;
  it.id = optional_id(j, "id");
  if (it.id.empty()) it.id = fallback_id;
  it.question = trim(j.at("question").get<std::string>());
  const char* keys[] = {"opa", "opb", "opc", "opd"};
  for (std::size_t i = 0; i < 4; ++i) it.options.emplace_back(letter(i), trim(j.at(keys[i]).get<std::string>()));
  const auto cop = j.at("cop").get<int>();
  if (cop < 1 || cop > 4) throw Error(ErrorCode::parse_error, "cop must be 1..4, got " + std::to_string(cop));
  it.gold_label = letter(static_cast<std::size_t>(cop - 1));
  return it;
}

BenchmarkItem pubmedqa_item(const std::string& id, const std::string& question, const std::string& context,
                            const std::string& decision) {
  BenchmarkItem it;
  it.id = id;
  it.question = trim(question);
  it.context = context;
  it.options = {{"A", "yes"}, {"B", "no"}, {"C", "maybe"}};
  for (const auto& [label, text] : it.options) {
    if (text == decision) it.gold_label = label;
  }
  if (it.gold_label.empty()) throw Error(ErrorCode::parse_error, "final_decision must be yes, no or maybe");
  return it;
}

std::string join_contexts(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>();
  const nlohmann::json& list = j.is_object() ? j.at("contexts") : j;
  std::string out;
  for (const auto& c : list) {
    if (!out.empty()) out += "\n";
    out += c.get<std::string>();
  }
  return out;
}

BenchmarkItem pubmedqa_row(const nlohmann::json& j, const std::string& fallback_id) {
  std::string id = optional_id(j, "pubid");
  if (id.empty()) id = optional_id(j, "id");
  if (id.empty()) id = fallback_id;
  return pubmedqa_item(id, j.at("question").get<std::string>(), join_contexts(j.at("context")),
                       j.at("final_decision").get<std::string>());
}

}  // namespace

LoadResult load_benchmark(BenchmarkFormat format, const std::filesystem::path& path,
                          std::optional<std::size_t> expected_count) {
  LoadResult out;
  const std::string stem = path.stem().string();
  const std::string text = read_file(path);
  auto keep = [&](std::size_t line, const std::function<BenchmarkItem()>& make) {
    try {
      auto it = make();
      check_item(it);
      out.items.push_back(std::move(it));
    } catch (const Error& e) {
      out.errors.push_back({line, e.detail()});
    } catch (const nlohmann::json::exception& e) {
      out.errors.push_back({line, e.what()});
    }
  };

  if (format == BenchmarkFormat::mmlu) {
    const std::string subject = subject_of(path);
    for (const auto& r : parse_csv(text)) keep(r.line, [&] { return mmlu_row(r, subject, stem); });
  } else if (format == BenchmarkFormat::pubmedqa && trim(text).starts_with("{") && [&] {
               try {
                 auto j = nlohmann::json::parse(text);
                 return j.is_object() && !j.contains("question");
               } catch (const nlohmann::json::exception&) {
                 return false;
               }
             }()) {
    const auto all = nlohmann::json::parse(text);
    std::size_t n = 0;
    for (const auto& [pmid, j] : all.items()) {
      ++n;
      keep(n, [&] {
        return pubmedqa_item(pmid, j.at("QUESTION").get<std::string>(), join_contexts(j.at("CONTEXTS")),
                             j.at("final_decision").get<std::string>());
      });
    }
  } else {
    std::size_t line = 0, start = 0;
    while (start <= text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      ++line;
      const std::string raw = trim(std::string_view(text).substr(start, end - start));
      start = end + 1;
      if (raw.empty()) continue;
      const std::string fallback = stem + ":" + std::to_string(line);
      keep(line, [&] {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(raw);
        } catch (const nlohmann::json::exception& e) {
          throw Error(ErrorCode::parse_error, std::string("malformed JSON: ") + e.what());
        }
        switch (format) {
          case BenchmarkFormat::medmcqa: return medmcqa_row(j, fallback);
          case BenchmarkFormat::pubmedqa: return pubmedqa_row(j, fallback);
          default: return medqa_row(j, fallback);
        }
      });
    }
  }

  std::set<std::string> seen;
  for (const auto& it : out.items) {
    if (!seen.insert(it.id).second) out.warnings.push_back("duplicate item id " + it.id);
  }
  for (const auto& e : out.errors) spdlog::warn("{}:{}: {}", path.string(), e.line, e.message);
  if (expected_count && *expected_count != out.items.size()) {
    out.warnings.push_back(path.filename().string() + ": loaded " + std::to_string(out.items.size()) +
                           " items, expected " + std::to_string(*expected_count));
  }
  for (const auto& w : out.warnings) spdlog::warn("{}", w);
  return out;
}

ShotSet build_kshot(const std::vector<BenchmarkItem>& pool, std::size_t k, std::uint64_t seed,
                    const std::string& benchmark, const std::set<std::string>& evaluated) {
  ShotSet s;
  s.k = k;
  s.seed = seed;
  if (k == 0) return s;
  std::vector<BenchmarkItem> eligible;
  for (const auto& it : pool) {
    if (!evaluated.contains(it.id)) eligible.push_back(it);
  }
  if (eligible.size() < k) {
    throw Error(ErrorCode::pool_too_small, benchmark + ": " + std::to_string(k) + "-shot needs " + std::to_string(k) +
                                               " exemplars, only " + std::to_string(eligible.size()) + " available");
  }
  s.exemplars = sample_items(eligible, k, derive_seed(seed, "kshot:" + benchmark));
  return s;
}

nlohmann::json EvalConfig::to_json() const {
  return {{"k", k},
          {"normalization", normalization == Normalization::raw_sum ? "raw_sum" : "per_token"},
          {"seed", seed},
          {"continuation_style", continuation_style == ContinuationStyle::letter ? "letter" : "option_text"},
          {"allow_item_errors", allow_item_errors}};
}

std::string EvalConfig::hash() const { return json_hash(to_json()); }

namespace {

void render_question(std::string& out, const BenchmarkItem& it) {
  if (it.context) out += "Context: " + trim(*it.context) + "\n";
  out += "Question: " + it.question + "\n";
  for (const auto& [label, text] : it.options) out += label + ". " + text + "\n";
  out += "Answer:";
}

std::string answer_text(const BenchmarkItem& it, std::size_t i, ContinuationStyle style) {
  return " " + (style == ContinuationStyle::letter ? it.options[i].first : it.options[i].second);
}

}  // namespace

McPrompt format_mc_prompt(const BenchmarkItem& item, const ShotSet& shots, const EvalConfig& cfg) {
  McPrompt p;
  if (item.subject) {
    std::string subject = *item.subject;
    std::replace(subject.begin(), subject.end(), '_', ' ');
    p.context += "The following are multiple choice questions (with answers) about " + subject + ".\n\n";
  }
  for (const auto& ex : shots.exemplars) {
    render_question(p.context, ex);
    p.context += answer_text(ex, ex.gold_index(), cfg.continuation_style) + "\n\n";
  }
  render_question(p.context, item);
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    p.continuations.push_back(answer_text(item, i, cfg.continuation_style));
  }
  return p;
}

std::size_t select_answer(const std::vector<ScoreResult>& scores, Normalization n) {
  if (scores.size() < 2) throw Error(ErrorCode::invalid_argument, "select_answer needs at least 2 scores");
  auto value = [&](const ScoreResult& s) {
    if (n == Normalization::raw_sum) return s.total_logprob;
    if (s.token_count == 0) throw Error(ErrorCode::invalid_argument, "per_token normalization of an empty continuation");
    return s.total_logprob / static_cast<double>(s.token_count);
  };
  std::size_t best = 0;
  double best_value = value(scores[0]);
  for (std::size_t i = 1; i < scores.size(); ++i) {
    const double v = value(scores[i]);
    if (v > best_value) {
      best = i;
      best_value = v;
    }
  }
  return best;
}

nlohmann::json EvalReport::to_json() const {
  return {{"benchmark", benchmark}, {"n_items", n_items},   {"n_correct", n_correct},
          {"n_errors", n_errors},   {"accuracy", accuracy}, {"k", k},
          {"config_hash", config_hash}, {"model_id", model_id}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.benchmark = j.at("benchmark").get<std::string>();
    r.n_items = j.at("n_items").get<std::size_t>();
    r.n_correct = j.at("n_correct").get<std::size_t>();
    r.n_errors = j.value("n_errors", std::size_t{0});
    r.accuracy = j.at("accuracy").get<double>();
    r.k = j.at("k").get<std::size_t>();
    r.config_hash = j.value("config_hash", std::string());
    r.model_id = j.value("model_id", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("eval report: ") + e.what());
  }
  if (r.n_correct > r.n_items) throw Error(ErrorCode::parse_error, "eval report: n_correct exceeds n_items");
  return r;
}

EvalReport evaluate(const std::vector<BenchmarkItem>& items, Scorer& scorer, const ShotSet& shots,
                    const EvalConfig& cfg, const EvalOptions& opts) {
  std::set<std::string> ids;
  for (const auto& it : items) ids.insert(it.id);
  for (const auto& ex : shots.exemplars) {
    if (ids.contains(ex.id)) throw Error(ErrorCode::invalid_argument, "exemplar " + ex.id + " is also evaluated");
  }

  std::vector<McPrompt> prompts;
  std::vector<std::size_t> first;  // index of each item's first option in the flat job list
  std::size_t jobs = 0;
  for (const auto& it : items) {
    prompts.push_back(format_mc_prompt(it, shots, cfg));
    first.push_back(jobs);
    jobs += it.options.size();
  }
  std::vector<std::pair<std::size_t, std::size_t>> job_of(jobs);
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t o = 0; o < items[i].options.size(); ++o) job_of[first[i] + o] = {i, o};
  }

  std::vector<ScoreResult> results(jobs);
  std::vector<std::exception_ptr> failures(jobs);
  const std::size_t workers = opts.workers ? opts.workers : std::max<std::size_t>(1, scorer.max_in_flight());
  parallel_for(jobs, workers, [&](std::size_t j) {
    const auto [i, o] = job_of[j];
    try {
      results[j] = scorer.score({prompts[i].context, prompts[i].continuations[o]});
    } catch (...) {
      failures[j] = std::current_exception();
    }
  });

  EvalReport report;
  report.benchmark = opts.benchmark;
  report.k = shots.exemplars.size();
  report.config_hash = cfg.hash();
  report.model_id = opts.model_id;
  std::string audit;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    nlohmann::json rec = {{"id", it.id}, {"gold", it.gold_label}};
    std::exception_ptr failure;
    for (std::size_t o = 0; o < it.options.size() && !failure; ++o) failure = failures[first[i] + o];
    if (failure) {
      if (!cfg.allow_item_errors) std::rethrow_exception(failure);
      try {
        std::rethrow_exception(failure);
      } catch (const std::exception& e) {
        rec["error"] = e.what();
      }
      ++report.n_errors;
      spdlog::warn("{}: item {} excluded: {}", opts.benchmark, it.id, rec["error"].get<std::string>());
    } else {
      std::vector<ScoreResult> scores(results.begin() + static_cast<std::ptrdiff_t>(first[i]),
                                      results.begin() + static_cast<std::ptrdiff_t>(first[i] + it.options.size()));
      const std::size_t chosen = select_answer(scores, cfg.normalization);
      const bool correct = chosen == it.gold_index();
      ++report.n_items;
      report.n_correct += correct;
      nlohmann::json js = nlohmann::json::array();
      for (const auto& s : scores) js.push_back({{"total_logprob", s.total_logprob}, {"token_count", s.token_count}});
      rec["chosen"] = it.options[chosen].first;
      rec["correct"] = correct;
      rec["scores"] = std::move(js);
    }
    audit += rec.dump() + "\n";
  }
  report.accuracy = report.n_items ? static_cast<double>(report.n_correct) / static_cast<double>(report.n_items) : 0.0;
  if (opts.audit_path) write_file_atomic(*opts.audit_path, audit);
  spdlog::info("{}: {}/{} correct ({} excluded)", opts.benchmark, report.n_correct, report.n_items, report.n_errors);
  return report;
}

namespace {

std::vector<ReferenceTable::Row> rows(const std::vector<std::vector<std::string>>& cells) {
  static const std::pair<const char*, const char*> names[] = {
      {"MMLU Anatomy", "mmlu_anatomy"},
      {"MMLU Clinical Knowledge", "mmlu_clinical_knowledge"},
      {"MMLU College Biology", "mmlu_college_biology"},
      {"MMLU College Medicine", "mmlu_college_medicine"},
      {"MMLU Medical Genetics", "mmlu_medical_genetics"},
      {"MMLU Professional Medicine", "mmlu_professional_medicine"},
      {"MedMCQA", "medmcqa"},
      {"MedQA (USMLE)", "medqa"},
      {"PubMedQA", "pubmedqa"},
      {"USMLE Sample Exam", "usmle_sample_exam"},
  };
  std::vector<ReferenceTable::Row> out;
  for (std::size_t i = 0; i < cells.size(); ++i) out.push_back({names[i].first, names[i].second, cells[i]});
  return out;
}

std::string percent(double accuracy) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", accuracy * 100.0);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

std::string md_cell(std::string s) {
  for (std::size_t p = 0; (p = s.find('|', p)) != std::string::npos; p += 2) s.replace(p, 1, "\\|");
  return s;
}

}  // namespace

const ReferenceTable& zero_shot_reference() {
  static const ReferenceTable t{0,
                                {"C13 (0-shot)", "C70 (0-shot)", "GPT3.5 (0-shot)", "GPT4 (0-shot)"},
                                rows({{"50.4", "62.2", "56.3", "80.0"},
                                      {"54.0", "69.8", "69.8", "86.0"},
                                      {"54.9", "79.2", "72.2", "95.1"},
                                      {"48.0", "67.0", "61.3", "76.9"},
                                      {"59.0", "69.0", "70.0", "91.0"},
                                      {"51.8", "71.3", "70.2", "93.0"},
                                      {"39.1", "47.0", "50.1", "69.5"},
                                      {"34.4", "53.4", "50.8", "78.9"},
                                      {"72.9", "74.3", "71.6", "75.2"},
                                      {"26.9", "54.3", "49.2", "83.2"}})};
  return t;
}

const ReferenceTable& five_shot_reference() {
  static const ReferenceTable t{
      5,
      {"C13 (5-shot)", "C70 (5-shot)", "GPT3.5 (5-shot)", "GPT4 (5-shot)", "Med-PaLM 2 (5-shot)"},
      rows({{"48.2", "65.2", "60.7", "80.0", "77.8"},
            {"60.4", "72.8", "68.7", "86.4", "88.3"},
            {"59.0", "81.2", "72.9", "93.8", "94.4"},
            {"52.6", "68.2", "63.6", "76.3", "80.9"},
            {"59.0", "69.0", "68.0", "92.0", "90.0"},
            {"53.3", "75.0", "69.8", "93.8", "95.2"},
            {"44.8", "54.2", "51.0", "72.4", "71.3"},
            {"45.2", "60.7", "53.6", "81.4", "79.7"},
            {"74.8", "77.9", "60.2", "74.4", "79.2"},
            {"39.5", "64.3", "58.5", "86.6", "-"}})};
  return t;
}

RenderedReport render_report(const std::vector<EvalReport>& reports) {
  RenderedReport out;
  out.markdown = "# Evaluation report\n\n";
  out.csv = "setting,dataset,column,source,value,n_correct,n_items\n";

  std::vector<const EvalReport*> leftover;
  for (const auto& r : reports) {
    bool placed = false;
    for (const ReferenceTable* t : {&zero_shot_reference(), &five_shot_reference()}) {
      if (r.k != t->k) continue;
      for (const auto& row : t->rows) placed = placed || row.benchmark == r.benchmark;
    }
    if (!placed) leftover.push_back(&r);
  }

  for (const ReferenceTable* t : {&zero_shot_reference(), &five_shot_reference()}) {
    const std::string setting = std::to_string(t->k) + "-shot";
    // measured columns in first-seen model order; a later duplicate replaces an earlier one
    std::vector<std::string> models;
    std::map<std::pair<std::string, std::string>, const EvalReport*> measured;
    for (const auto& r : reports) {
      if (r.k != t->k) continue;
      if (std::find(models.begin(), models.end(), r.model_id) == models.end()) models.push_back(r.model_id);
      measured[{r.model_id, r.benchmark}] = &r;
    }

    out.markdown += "## " + std::string(t->k == 0 ? "Zero-shot" : "Five-shot") + " accuracy (%)\n\n| Dataset |";
    std::string rule = "|---|";
    for (const auto& c : t->columns) {
      out.markdown += " " + c + " |";
      rule += "---|";
    }
    for (const auto& m : models) {
      out.markdown += " " + md_cell(m.empty() ? "model" : m) + " (" + setting + ", measured) |";
      rule += "---|";
    }
    out.markdown += "\n" + rule + "\n";

    for (const auto& row : t->rows) {
      out.markdown += "| " + row.dataset + " |";
      for (std::size_t c = 0; c < t->columns.size(); ++c) {
        out.markdown += " " + row.cells[c] + " |";
        out.csv += setting + "," + csv_field(row.dataset) + "," + csv_field(t->columns[c]) + ",reference," +
                   row.cells[c] + ",,\n";
      }
      for (const auto& m : models) {
        auto it = measured.find({m, row.benchmark});
        if (it == measured.end()) {
          out.markdown += " - |";
          continue;
        }
        const EvalReport& r = *it->second;
        out.markdown += " " + percent(r.accuracy) + " |";
        out.csv += setting + "," + csv_field(row.dataset) + "," + csv_field(m) + ",measured," + percent(r.accuracy) +
                   "," + std::to_string(r.n_correct) + "," + std::to_string(r.n_items) + "\n";
      }
      out.markdown += "\n";
    }
    out.markdown += "\nReference columns are as published; how they were scored is not stated and may differ from the option "
                    "log-likelihood scoring behind measured columns.\n\n";
  }

  if (!leftover.empty()) {
    out.markdown += "## Other runs\n\n| Benchmark | Model | k | Correct | Items | Accuracy (%) |\n|---|---|---|---|---|---|\n";
    for (const EvalReport* r : leftover) {
      out.markdown += "| " + md_cell(r->benchmark) + " | " + md_cell(r->model_id) + " | " + std::to_string(r->k) +
                      " | " + std::to_string(r->n_correct) + " | " + std::to_string(r->n_items) + " | " +
                      percent(r->accuracy) + " |\n";
      out.csv += std::to_string(r->k) + "-shot," + csv_field(r->benchmark) + "," + csv_field(r->model_id) +
                 ",measured," + percent(r->accuracy) + "," + std::to_string(r->n_correct) + "," +
                 std::to_string(r->n_items) + "\n";
    }
    out.markdown += "\n";
  }
  return out;
}

}  // namespace dbke
