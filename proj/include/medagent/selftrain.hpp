#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "medagent/engine.hpp"
#include "medagent/llm.hpp"
#include "medagent/records.hpp"
#include "medagent/search.hpp"

namespace medagent {

enum class DemoKind { no_search, with_search };

std::string to_string(DemoKind kind);

struct SeedDemo {
  DemoKind kind = DemoKind::no_search;
  std::string demo_text;  // full worked example: instruction + question [+ results] + target
};

// Plain-text demo files, one demo per file, kind encoded in the filename
// ("*no_search*" / "*with_search*"). with_search demos must quote retrieved
// text (contain a "Source:" line).
std::vector<SeedDemo> load_seed_demos(const std::filesystem::path& dir);

struct CotGenConfig {
  int queries_per_question = 3;
  int top_k_per_query = 3;
  std::size_t context_char_budget = 12000;
  double temperature = 0.7;
  int max_tokens = 1024;
  int round = 0;
};

// Prompt asking for search queries that would help answer the question
// (no conflicting responses exist yet at data-generation time).
std::string build_help_query_prompt(const McqItem& item, int num_queries);

// One CoT for one question: assembles seed demonstrations of the requested
// kind, optionally runs query generation + retrieval first, generates the
// reasoning target, and grades it against the dataset label.
CotRecord generate_cot(const McqItem& item, DemoKind kind, std::span<const SeedDemo> seeds,
                       TextBackend& llm, SearchBackend* search, const CotGenConfig& cfg);

// kept = records with correct=true, dropped = the rest; order preserved.
std::pair<std::vector<CotRecord>, std::vector<CotRecord>> filter_cots(std::vector<CotRecord> records);

struct RoundManifest {
  int round = 0;
  std::string backend_id;
  int generated = 0;
  int kept = 0;
  int dropped = 0;
  std::optional<int> parent_round;

  nlohmann::json to_json() const;
  static RoundManifest from_json(const nlohmann::json& j);
};

// Writes round_dir/cot.jsonl (ordered by question_id, then no_search before
// with_search) plus round_dir/manifest. kept must be non-empty.
RoundManifest export_round(std::span<const CotRecord> kept, int dropped_count, int round,
                           std::optional<int> parent_round, const std::string& backend_id,
                           const std::filesystem::path& round_dir);

RoundManifest load_manifest(const std::filesystem::path& round_dir);

}  // namespace medagent
