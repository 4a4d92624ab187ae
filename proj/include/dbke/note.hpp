#pragma once

#include <string>
#include <vector>

#include "dbke/dbke.hpp"
#include "dbke/model.hpp"

namespace dbke {

/// Section headings a generated clinical note must contain, in order.
const std::vector<std::string>& note_headings();

struct NoteResult {
  std::string text;
  std::vector<std::string> missing_headings;  // empty when every heading is present in order
  std::string model_id;
};

/// Sends a conversation transcript through a generation template and checks
/// the reply for each heading at the start of a line (optionally wrapped in
/// ** or prefixed with #), followed by a colon or a line break.
NoteResult generate_note(const std::string& transcript, const PromptTemplate& t, ChatModel& model,
                         double temperature = 0.0, int max_output_tokens = 1024, std::uint64_t seed = 0);

std::vector<std::string> missing_note_headings(const std::string& note);

}  // namespace dbke
