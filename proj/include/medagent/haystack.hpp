#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "medagent/llm.hpp"
#include "medagent/records.hpp"

namespace medagent {

enum class MentionCategory { explicit_confirmation, strong_indication, relevant_mention };

std::optional<MentionCategory> mention_category_from_string(std::string_view s);
std::string to_string(MentionCategory c);

struct MentionHit {
  std::string note_id;
  std::string quote;  // verbatim span from the named note
  std::optional<MentionCategory> category;
};

struct HaystackVerdict {
  std::string bundle_id;
  bool present = false;
  std::vector<MentionHit> hits;
  std::string rationale;
};

struct HaystackConfig {
  // 0 = unlimited. When the serialized bundle exceeds this, step 1 runs per
  // chunk of whole notes and the hits are unioned.
  std::size_t context_char_limit = 0;
  std::string one_shot_demo;  // empty -> built-in synthetic demo
  double temperature = 0.0;
  int max_tokens = 2048;
};

// Notes rendered with explicit "[NOTE <note_id>]" headers so quoted note ids
// are groundable.
std::string serialize_notes(std::span<const EhrNote> notes);

// Whitespace-normalized verbatim containment.
bool quote_occurs(const std::string& note_text, const std::string& quote);

const std::string& default_one_shot_demo();

std::string build_retrieval_prompt(const EhrBundle& bundle, std::span<const EhrNote> notes,
                                   const HaystackConfig& cfg);
std::string build_adjudication_prompt(const EhrBundle& bundle, std::span<const MentionHit> hits);

// Mention lines of the form [<note_id>] "<quote>"; "no mentions found" on its
// own yields an empty list.
std::vector<MentionHit> parse_mention_lines(std::string_view completion);

struct MentionRetrieval {
  std::vector<MentionHit> hits;     // verified against the notes
  std::vector<MentionHit> dropped;  // quoted text absent from the named note
};

// Step 1: retrieve every mention of the bundle's target entity with verbatim
// evidence. Hits failing verbatim verification are dropped (and reported).
MentionRetrieval retrieve_mentions(const EhrBundle& bundle, TextBackend& llm,
                                   const HaystackConfig& cfg);

// Step 2: adjudicate existence from the retrieved mentions only. Empty hits
// short-circuit to absent without a backend call.
HaystackVerdict adjudicate(const EhrBundle& bundle, const std::vector<MentionHit>& hits,
                           TextBackend& llm, const HaystackConfig& cfg);

struct HaystackEval {
  int tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool flagged = false;  // zero denominator encountered
};

// Confusion of verdicts against bundle labels. Throws DataError listing the
// bundle ids that lack a verdict.
HaystackEval evaluate_run(std::span<const HaystackVerdict> verdicts,
                          std::span<const EhrBundle> bundles);

nlohmann::json to_json(const HaystackVerdict&);
HaystackVerdict verdict_from_json(const nlohmann::json&);
std::vector<HaystackVerdict> load_verdict_file(const std::filesystem::path& path);

}  // namespace medagent
