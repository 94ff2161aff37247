#include "medagent/selftrain.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "medagent/textutil.hpp"

namespace medagent {

using nlohmann::json;

std::string to_string(DemoKind kind) {
  return kind == DemoKind::no_search ? "no_search" : "with_search";
}

std::vector<SeedDemo> load_seed_demos(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("seed demo directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<SeedDemo> demos;
  for (const auto& f : files) {
    std::string name = f.filename().string();
    SeedDemo demo;
    if (name.find("with_search") != std::string::npos) {
      demo.kind = DemoKind::with_search;
    } else if (name.find("no_search") != std::string::npos) {
      demo.kind = DemoKind::no_search;
    } else {
      continue;  // unrelated file
    }
    std::ifstream in(f);
    std::ostringstream ss;
    ss << in.rdbuf();
    demo.demo_text = ss.str();
    if (trim(demo.demo_text).empty()) throw DataError("empty seed demo: " + f.string());
    if (demo.kind == DemoKind::with_search &&
        demo.demo_text.find("Source:") == std::string::npos) {
      throw DataError("with_search demo must quote retrieved results (no \"Source:\" line): " +
                      f.string());
    }
    demos.push_back(std::move(demo));
  }
  return demos;
}

std::string build_help_query_prompt(const McqItem& item, int num_queries) {
  return "Generate exactly " + std::to_string(num_queries) +
         " web search queries whose results would help answer the medical question below. "
         "Reply with a numbered list of queries only.\n\nQuestion\n" +
         render_mcq_question(item) + "\n";
}

namespace {

constexpr const char* kCotInstructionNoSearch =
    "You are a medical expert answering a multiple choice question about medical knowledge.";
constexpr const char* kCotInstructionWithSearch =
    "You are a medical expert answering a multiple choice question about medical knowledge.\n"
    "To help you answer the question, you are given access to search results.";

std::string assemble_cot_prompt(const McqItem& item, DemoKind kind,
                                std::span<const SeedDemo> seeds, const std::string& context_block) {
  std::string prompt;
  for (const auto& demo : seeds) {
    if (demo.kind != kind) continue;
    prompt += demo.demo_text;
    prompt += "\n\n";
  }
  prompt += "Now answer the following question in the same style.\n\nInstruction\n";
  prompt += kind == DemoKind::with_search ? kCotInstructionWithSearch : kCotInstructionNoSearch;
  prompt += "\n\nQuestion\n";
  prompt += render_mcq_question(item);
  prompt += '\n';
  if (!context_block.empty()) {
    prompt += '\n';
    prompt += context_block;
  }
  prompt += "\nTarget\n";
  return prompt;
}

}  // namespace

CotRecord generate_cot(const McqItem& item, DemoKind kind, std::span<const SeedDemo> seeds,
                       TextBackend& llm, SearchBackend* search, const CotGenConfig& cfg) {
  bool has_kind = std::any_of(seeds.begin(), seeds.end(),
                              [&](const SeedDemo& d) { return d.kind == kind; });
  if (!has_kind) {
    throw DataError("no seed demonstration of kind " + to_string(kind));
  }

  std::vector<RetrievedDoc> docs;
  std::string context_block;
  if (kind == DemoKind::with_search) {
    if (!search) throw DataError("with_search generation requires a search backend");
    GenRequest qreq;
    qreq.prompt = build_help_query_prompt(item, cfg.queries_per_question);
    qreq.temperature = cfg.temperature;
    qreq.max_tokens = cfg.max_tokens;
    std::vector<std::string> queries = parse_numbered_list(llm.generate(qreq).text);
    if (queries.empty()) {
      throw EngineError("no search queries parsed for question " + item.id);
    }
    if (static_cast<int>(queries.size()) > cfg.queries_per_question) {
      queries.resize(cfg.queries_per_question);
    }
    for (const auto& q : queries) {
      for (auto& d : search->search(q, cfg.top_k_per_query)) {
        bool dup = std::any_of(docs.begin(), docs.end(), [&](const RetrievedDoc& seen) {
          return seen.source_url == d.source_url;
        });
        if (!dup) docs.push_back(std::move(d));
      }
    }
    for (size_t i = 0; i < docs.size(); ++i) docs[i].rank = static_cast<int>(i + 1);
    context_block = format_context(docs, cfg.context_char_budget).text;
  }

  std::string prompt = assemble_cot_prompt(item, kind, seeds, context_block);
  GenRequest req;
  req.prompt = prompt;
  req.temperature = cfg.temperature;
  req.max_tokens = cfg.max_tokens;
  std::string target = llm.generate(req).text;

  CotRecord record;
  record.question_id = item.id;
  record.instruction =
      kind == DemoKind::with_search ? kCotInstructionWithSearch : kCotInstructionNoSearch;
  record.question = render_mcq_question(item);
  if (kind == DemoKind::with_search) record.search_context = docs;
  record.target_cot = target;
  record.predicted_index = extract_choice(target, static_cast<int>(item.options.size()));
  record.correct = record.predicted_index && *record.predicted_index == item.answer_index;
  record.round = cfg.round;
  return record;
}

std::pair<std::vector<CotRecord>, std::vector<CotRecord>> filter_cots(
    std::vector<CotRecord> records) {
  std::vector<CotRecord> kept;
  std::vector<CotRecord> dropped;
  for (auto& r : records) {
    (r.correct ? kept : dropped).push_back(std::move(r));
  }
  return {std::move(kept), std::move(dropped)};
}

nlohmann::json RoundManifest::to_json() const {
  json j{{"schema", kSchemaVersion},
         {"round", round},
         {"backend_id", backend_id},
         {"counts", json{{"generated", generated}, {"kept", kept}, {"dropped", dropped}}}};
  if (parent_round) j["parent_round"] = *parent_round;
  return j;
}

RoundManifest RoundManifest::from_json(const nlohmann::json& j) {
  RoundManifest m;
  m.round = j.at("round").get<int>();
  m.backend_id = j.at("backend_id").get<std::string>();
  m.generated = j.at("counts").at("generated").get<int>();
  m.kept = j.at("counts").at("kept").get<int>();
  m.dropped = j.at("counts").at("dropped").get<int>();
  if (j.contains("parent_round")) m.parent_round = j["parent_round"].get<int>();
  if (m.kept + m.dropped != m.generated) throw DataError("manifest counts do not add up");
  return m;
}

RoundManifest export_round(std::span<const CotRecord> kept, int dropped_count, int round,
                           std::optional<int> parent_round, const std::string& backend_id,
                           const std::filesystem::path& round_dir) {
  if (kept.empty()) throw DataError("export_round requires at least one kept record");

  std::vector<CotRecord> ordered(kept.begin(), kept.end());
  std::stable_sort(ordered.begin(), ordered.end(), [](const CotRecord& a, const CotRecord& b) {
    if (a.question_id != b.question_id) return a.question_id < b.question_id;
    return a.search_context.has_value() < b.search_context.has_value();
  });

  std::filesystem::create_directories(round_dir);
  write_jsonl(round_dir / "cot.jsonl", ordered);

  RoundManifest manifest;
  manifest.round = round;
  manifest.backend_id = backend_id;
  manifest.kept = static_cast<int>(kept.size());
  manifest.dropped = dropped_count;
  manifest.generated = manifest.kept + manifest.dropped;
  manifest.parent_round = parent_round;

  std::ofstream out(round_dir / "manifest");
  if (!out) throw DataError("cannot write manifest in " + round_dir.string());
  out << manifest.to_json().dump() << '\n';
  return manifest;
}

RoundManifest load_manifest(const std::filesystem::path& round_dir) {
  std::ifstream in(round_dir / "manifest");
  if (!in) throw DataError("manifest not found in " + round_dir.string());
  json j = json::parse(in);
  return RoundManifest::from_json(j);
}

}  // namespace medagent
