#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "medagent/errors.hpp"

namespace medagent {

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Benchmark record kinds
// ---------------------------------------------------------------------------

struct McqItem {
  std::string id;
  std::string question;
  std::vector<std::string> options;  // 4 or 5 option texts
  int answer_index = 0;
  std::map<std::string, std::string> meta;
};

struct CaseItem {
  std::string id;
  std::string case_text;
  std::string ground_truth_diagnosis;
  std::optional<std::string> specialty;
};

struct EhrNote {
  std::string note_id;
  std::string text;
};

struct EhrBundle {
  std::string id;
  std::vector<EhrNote> notes;
  std::string target_entity;  // condition/symptom/procedure being sought
  bool label = false;         // ground truth: entity present
};

struct TimeSpan {
  double start_s = 0.0;
  double end_s = 0.0;
};

struct SubtitleCue {
  TimeSpan span;
  std::string text;
};

struct SpanItem {
  std::string id;
  std::string question;
  double video_duration_s = 0.0;
  TimeSpan gt_span;
  std::optional<std::vector<SubtitleCue>> subtitles;
};

// One search result, kept with the query that produced it so prompt blocks
// and training records stay auditable.
struct RetrievedDoc {
  std::string title;
  std::string content;
  std::string source_url;
  int rank = 1;
  std::string query;
};

// One synthetic training example produced by the CoT factory.
struct CotRecord {
  std::string question_id;
  std::string instruction;
  std::string question;
  std::optional<std::vector<RetrievedDoc>> search_context;
  std::string target_cot;
  std::optional<int> predicted_index;
  bool correct = false;
  int round = 0;
};

// Per-iteration audit entry of the uncertainty-guided loop.
// entropy is +inf when no path yielded an extractable answer; that sentinel
// is stored as JSON null on the wire.
struct IterationLog {
  double entropy = 0.0;
  std::map<int, int> counts;
  bool searched = false;
  std::vector<std::string> queries;
};

struct RunRecord {
  std::string item_id;
  std::variant<int, std::string> final_answer;
  std::vector<IterationLog> per_iteration;
  std::string backend_id;
  std::string config_hash;
};

enum class DatasetKind { mcq, cases, ehr, span, cot, run };

DatasetKind dataset_kind_from_string(const std::string& s);
std::string to_string(DatasetKind kind);

// ---------------------------------------------------------------------------
// Canonical JSON (field names fixed, keys sorted, schema stamped)
// ---------------------------------------------------------------------------

nlohmann::json to_json(const McqItem&);
nlohmann::json to_json(const CaseItem&);
nlohmann::json to_json(const EhrBundle&);
nlohmann::json to_json(const SpanItem&);
nlohmann::json to_json(const RetrievedDoc&);
nlohmann::json to_json(const CotRecord&);
nlohmann::json to_json(const RunRecord&);

McqItem mcq_from_json(const nlohmann::json&);
CaseItem case_from_json(const nlohmann::json&);
EhrBundle ehr_from_json(const nlohmann::json&);
SpanItem span_from_json(const nlohmann::json&);
RetrievedDoc retrieved_doc_from_json(const nlohmann::json&);
CotRecord cot_from_json(const nlohmann::json&);
RunRecord run_from_json(const nlohmann::json&);

// One canonical line (no trailing newline). write(parse(x)) == x holds
// byte-for-byte for canonical input.
template <typename Record>
std::string canonical_line(const Record& r) {
  return to_json(r).dump();
}

// ---------------------------------------------------------------------------
// Validation: returns every violated invariant ("field: problem [id=...]"),
// not just the first. Violations are data, not errors.
// ---------------------------------------------------------------------------

std::vector<std::string> validate_record(const McqItem&);
std::vector<std::string> validate_record(const CaseItem&);
std::vector<std::string> validate_record(const EhrBundle&);
std::vector<std::string> validate_record(const SpanItem&);
std::vector<std::string> validate_record(const CotRecord&);
std::vector<std::string> validate_record(const RunRecord&);

// ---------------------------------------------------------------------------
// Line-delimited files (UTF-8, one record per line, schema: 1 on every line)
// ---------------------------------------------------------------------------

// Throws DataError carrying the 1-based line number on malformed lines and a
// violation summary (field + id) on invariant failures. Ordering preserved.
std::vector<McqItem> load_mcq_file(const std::filesystem::path&);
std::vector<CaseItem> load_case_file(const std::filesystem::path&);
std::vector<EhrBundle> load_ehr_file(const std::filesystem::path&);
std::vector<SpanItem> load_span_file(const std::filesystem::path&);
std::vector<CotRecord> load_cot_file(const std::filesystem::path&);
std::vector<RunRecord> load_run_file(const std::filesystem::path&);

using Dataset = std::variant<std::vector<McqItem>, std::vector<CaseItem>, std::vector<EhrBundle>,
                             std::vector<SpanItem>, std::vector<CotRecord>,
                             std::vector<RunRecord>>;

Dataset load_dataset(const std::filesystem::path& path, DatasetKind kind);

template <typename Record>
void write_jsonl(const std::filesystem::path& path, const std::vector<Record>& records) {
  std::string buf;
  for (const auto& r : records) {
    buf += canonical_line(r);
    buf += '\n';
  }
  std::filesystem::path parent = path.parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw DataError("cannot open for write: " + path.string());
  std::fwrite(buf.data(), 1, buf.size(), f);
  std::fclose(f);
}

}  // namespace medagent
