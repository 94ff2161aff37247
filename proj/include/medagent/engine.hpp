#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "medagent/llm.hpp"
#include "medagent/records.hpp"
#include "medagent/search.hpp"

namespace medagent {

enum class ExtractionMethod { final_line, fallback_scan, none };

struct ReasoningPath {
  int sample_index = 0;
  std::string text;
  std::optional<int> extracted;
  ExtractionMethod method = ExtractionMethod::none;
};

// Empirical distribution over extracted answer choices. Paths without an
// extractable answer are excluded from the counts (but stay in the record).
// With no extracted answers at all, entropy is the +inf "maximally uncertain"
// sentinel.
struct AnswerDistribution {
  std::map<int, int> counts;
  int total = 0;
  std::map<int, double> probs;
  double entropy_nats = 0.0;
};

struct LoopConfig {
  int num_paths = 5;
  double entropy_threshold_nats = 0.3;
  int max_iterations = 4;
  int queries_per_round = 3;
  double temperature = 0.7;
  int max_tokens = 1024;
  std::size_t context_char_budget = 12000;
  int top_k_per_query = 3;

  nlohmann::json to_json() const;
  static LoopConfig from_json(const nlohmann::json& j);
};

// Shannon entropy in nats of the distribution induced by the counts;
// +inf when total is zero.
double entropy_nats_of_counts(const std::map<int, int>& counts);

struct ExtractionResult {
  std::optional<int> index;
  ExtractionMethod method = ExtractionMethod::none;
};

// Primary rule: the last line of the form "Answer: (X)" with X naming an
// option in range. Fallback: the last standalone "(X)" token within the final
// 200 characters. Absence is a value, not an error.
ExtractionResult extract_choice_detailed(std::string_view path_text, int num_options);
std::optional<int> extract_choice(std::string_view path_text, int num_options);

AnswerDistribution answer_distribution(std::span<const ReasoningPath> paths);

// True iff entropy strictly exceeds the threshold and another iteration
// remains. iteration is 1-based.
bool should_search(const AnswerDistribution& dist, const LoopConfig& cfg, int iteration);

// Argmax of the counts; ties go to the lowest option index. Throws
// EngineError when no path produced an answer.
int majority_answer(const AnswerDistribution& dist);

// Items parsed from a numbered-list completion ("1. ...", "2) ...").
std::vector<std::string> parse_numbered_list(std::string_view text);

// Prompt builders mirroring the instruction/question/search-results layout.
std::string build_mcq_prompt(const McqItem& item, const std::string& context_block);
std::string build_case_prompt(const CaseItem& item, const std::string& context_block);
std::string build_conflict_query_prompt(const std::string& question_render,
                                        std::span<const ReasoningPath> representatives,
                                        int num_queries);
std::string render_mcq_question(const McqItem& item);

// Samples cfg.num_paths completions (sample_index 0..n-1). Failed generations
// become paths with method none; only an all-failure round is an error.
std::vector<ReasoningPath> generate_paths(const McqItem& item, const std::string& context_block,
                                          const LoopConfig& cfg, TextBackend& backend);

// Generates exactly cfg.queries_per_round search queries conditioned on the
// conflicting paths (one representative per distinct answer). Retries once on
// a short parse, then throws EngineError.
std::vector<std::string> generate_conflict_queries(const McqItem& item,
                                                   std::span<const ReasoningPath> paths,
                                                   const LoopConfig& cfg, TextBackend& backend);

// The full iterate-sample-gate-search loop for one multiple-choice item.
RunRecord run_item(const McqItem& item, const LoopConfig& cfg, TextBackend& llm,
                   SearchBackend& search);

struct CaseResult {
  std::vector<std::string> differential;  // exactly 10 entries, possibly padded
  RunRecord record;
  bool flagged = false;  // fewer than 10 diagnoses parsed even after retry
};

// Open-ended variant: the gate uses disagreement of the normalized top-1
// diagnosis across paths in place of option counts.
CaseResult run_case_open_ended(const CaseItem& item, const LoopConfig& cfg, TextBackend& llm,
                               SearchBackend& search);

// Free-text answer extraction for open QA: text after the last "Answer:"
// line, else the last non-empty line.
std::string extract_final_answer_text(std::string_view completion);

struct OpenQaResult {
  std::string answer;  // verbatim majority answer (first path agreeing with it)
  RunRecord record;
};

// Open QA with short answers (gene names, locations, ...). The gate uses the
// distribution of normalized answer strings across paths.
OpenQaResult run_open_qa(const std::string& item_id, const std::string& question,
                         const LoopConfig& cfg, TextBackend& llm, SearchBackend& search);

inline const std::vector<std::string> kDefaultAbstentionLexicon{
    "i cannot answer",   "i can't answer",     "cannot be determined",
    "i do not know",     "i don't know",       "unable to determine",
    "as an ai",          "i am not able to",   "insufficient information",
    "beyond my ability", "cannot provide",     "not possible to answer",
};

bool is_abstention(std::string_view answer, std::span<const std::string> lexicon);

}  // namespace medagent
