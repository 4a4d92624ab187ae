#include "dbke/note.hpp"

#include "dbke/error.hpp"

namespace dbke {

const std::vector<std::string>& note_headings() {
  static const std::vector<std::string> h = {
      "ID",           "REASON FOR VISIT", "PAST MEDICAL HISTORY",        "HOME MEDICATIONS",
      "ALLERGIES",    "FAMILY HISTORY",   "SOCIAL HISTORY",              "HISTORY OF PRESENT ILLNESS",
      "PHYSICAL EXAM", "RESULTS",         "ASSESSMENT AND PLAN"};
  return h;
}

namespace {

// Position of `heading` as a line heading at or after `from`, or npos.
std::size_t find_heading(const std::string& note, const std::string& heading, std::size_t from) {
  for (std::size_t line = from; line < note.size();) {
    std::size_t end = note.find('\n', line);
    if (end == std::string::npos) end = note.size();
    std::string_view l(note.data() + line, end - line);
    while (!l.empty() && (l.front() == '#' || l.front() == '*' || l.front() == ' ')) l.remove_prefix(1);
    if (l.starts_with(heading)) {
      std::string_view rest = l.substr(heading.size());
      while (!rest.empty() && (rest.front() == '*' || rest.front() == ' ')) rest.remove_prefix(1);
      if (rest.empty() || rest.front() == ':' || rest == "\r") return line;
    }
    line = end + 1;
  }
  return std::string::npos;
}

}  // namespace

std::vector<std::string> missing_note_headings(const std::string& note) {
  std::vector<std::string> missing;
  std::size_t at = 0;
  for (const auto& h : note_headings()) {
    const std::size_t p = find_heading(note, h, at);
    if (p == std::string::npos) {
      missing.push_back(h);
    } else {
      at = p;
    }
  }
  return missing;
}

NoteResult generate_note(const std::string& transcript, const PromptTemplate& t, ChatModel& model,
                         double temperature, int max_output_tokens, std::uint64_t seed) {
  if (t.kind() != TemplateKind::generation) {
    throw Error(ErrorCode::template_error, t.name() + " is not a generation template");
  }
  ChatRequest req;
  req.messages = {{Role::user, render_prompt(t, transcript)}};
  req.temperature = temperature;
  req.max_output_tokens = max_output_tokens;
  req.seed = seed;
  auto resp = model.chat_complete(req);
  NoteResult out;
  out.text = resp.text;
  out.model_id = resp.model_id;
  out.missing_headings = missing_note_headings(resp.text);
  return out;
}

}  // namespace dbke
