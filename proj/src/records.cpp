#include "medagent/records.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace medagent {

namespace {

using nlohmann::json;

void require_schema(const json& j) {
  if (!j.contains("schema") || !j["schema"].is_number_integer() ||
      j["schema"].get<int>() != kSchemaVersion) {
    throw DataError("missing or unsupported schema version (expected schema: 1)");
  }
}

json get_field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw DataError(std::string("missing field: ") + name);
  return *it;
}

std::string record_id_for_message(const json& j) {
  for (const char* key : {"id", "question_id", "item_id"}) {
    if (j.contains(key)) return j[key].is_string() ? j[key].get<std::string>() : j[key].dump();
  }
  return "<unknown>";
}

json span_to_json(const TimeSpan& s) {
  return json{{"start_s", s.start_s}, {"end_s", s.end_s}};
}

TimeSpan span_from_json_obj(const json& j) {
  TimeSpan s;
  s.start_s = get_field(j, "start_s").get<double>();
  s.end_s = get_field(j, "end_s").get<double>();
  return s;
}

template <typename Record>
std::vector<Record> load_jsonl(const std::filesystem::path& path,
                               Record (*parse)(const json&)) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());
  std::vector<Record> out;
  std::set<std::string> seen_ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    Record rec;
    try {
      require_schema(j);
      rec = parse(j);
    } catch (const std::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    auto violations = validate_record(rec);
    if (!violations.empty()) {
      std::string msg = "line " + std::to_string(line_no) + " [id=" + record_id_for_message(j) + "]:";
      for (const auto& v : violations) msg += " " + v + ";";
      throw DataError(msg);
    }
    if constexpr (requires { rec.id; }) {
      if (!seen_ids.insert(rec.id).second) {
        throw DataError("line " + std::to_string(line_no) + ": id: duplicate id within dataset [id=" +
                        rec.id + "]");
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "mcq") return DatasetKind::mcq;
  if (s == "case" || s == "cases") return DatasetKind::cases;
  if (s == "ehr") return DatasetKind::ehr;
  if (s == "span") return DatasetKind::span;
  if (s == "cot") return DatasetKind::cot;
  if (s == "run") return DatasetKind::run;
  throw DataError("unknown dataset kind: " + s);
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::mcq: return "mcq";
    case DatasetKind::cases: return "case";
    case DatasetKind::ehr: return "ehr";
    case DatasetKind::span: return "span";
    case DatasetKind::cot: return "cot";
    case DatasetKind::run: return "run";
  }
  return "?";
}

// --- serialization ---------------------------------------------------------

nlohmann::json to_json(const McqItem& r) {
  json j{{"schema", kSchemaVersion},
         {"id", r.id},
         {"question", r.question},
         {"options", r.options},
         {"answer_index", r.answer_index}};
  if (!r.meta.empty()) j["meta"] = r.meta;
  return j;
}

McqItem mcq_from_json(const nlohmann::json& j) {
  McqItem r;
  r.id = get_field(j, "id").get<std::string>();
  r.question = get_field(j, "question").get<std::string>();
  r.options = get_field(j, "options").get<std::vector<std::string>>();
  r.answer_index = get_field(j, "answer_index").get<int>();
  if (j.contains("meta")) r.meta = j["meta"].get<std::map<std::string, std::string>>();
  return r;
}

nlohmann::json to_json(const CaseItem& r) {
  json j{{"schema", kSchemaVersion},
         {"id", r.id},
         {"case_text", r.case_text},
         {"ground_truth_diagnosis", r.ground_truth_diagnosis}};
  if (r.specialty) j["specialty"] = *r.specialty;
  return j;
}

CaseItem case_from_json(const nlohmann::json& j) {
  CaseItem r;
  r.id = get_field(j, "id").get<std::string>();
  r.case_text = get_field(j, "case_text").get<std::string>();
  r.ground_truth_diagnosis = get_field(j, "ground_truth_diagnosis").get<std::string>();
  if (j.contains("specialty")) r.specialty = j["specialty"].get<std::string>();
  return r;
}

nlohmann::json to_json(const EhrBundle& r) {
  json notes = json::array();
  for (const auto& n : r.notes) notes.push_back(json{{"note_id", n.note_id}, {"text", n.text}});
  return json{{"schema", kSchemaVersion},
              {"id", r.id},
              {"notes", notes},
              {"target_entity", r.target_entity},
              {"label", r.label}};
}

EhrBundle ehr_from_json(const nlohmann::json& j) {
  EhrBundle r;
  r.id = get_field(j, "id").get<std::string>();
  for (const auto& n : get_field(j, "notes")) {
    r.notes.push_back({get_field(n, "note_id").get<std::string>(),
                       get_field(n, "text").get<std::string>()});
  }
  r.target_entity = get_field(j, "target_entity").get<std::string>();
  r.label = get_field(j, "label").get<bool>();
  return r;
}

nlohmann::json to_json(const SpanItem& r) {
  json j{{"schema", kSchemaVersion},
         {"id", r.id},
         {"question", r.question},
         {"video_duration_s", r.video_duration_s},
         {"gt_span", span_to_json(r.gt_span)}};
  if (r.subtitles) {
    json subs = json::array();
    for (const auto& cue : *r.subtitles) {
      subs.push_back(json{{"span", span_to_json(cue.span)}, {"text", cue.text}});
    }
    j["subtitles"] = subs;
  }
  return j;
}

SpanItem span_from_json(const nlohmann::json& j) {
  SpanItem r;
  r.id = get_field(j, "id").get<std::string>();
  r.question = get_field(j, "question").get<std::string>();
  r.video_duration_s = get_field(j, "video_duration_s").get<double>();
  r.gt_span = span_from_json_obj(get_field(j, "gt_span"));
  if (j.contains("subtitles")) {
    std::vector<SubtitleCue> subs;
    for (const auto& cue : j["subtitles"]) {
      subs.push_back({span_from_json_obj(get_field(cue, "span")),
                      get_field(cue, "text").get<std::string>()});
    }
    r.subtitles = std::move(subs);
  }
  return r;
}

nlohmann::json to_json(const RetrievedDoc& r) {
  return json{{"title", r.title},
              {"content", r.content},
              {"source_url", r.source_url},
              {"rank", r.rank},
              {"query", r.query}};
}

RetrievedDoc retrieved_doc_from_json(const nlohmann::json& j) {
  RetrievedDoc r;
  r.title = get_field(j, "title").get<std::string>();
  r.content = get_field(j, "content").get<std::string>();
  r.source_url = get_field(j, "source_url").get<std::string>();
  r.rank = get_field(j, "rank").get<int>();
  r.query = get_field(j, "query").get<std::string>();
  return r;
}

nlohmann::json to_json(const CotRecord& r) {
  json j{{"schema", kSchemaVersion},
         {"question_id", r.question_id},
         {"instruction", r.instruction},
         {"question", r.question},
         {"target_cot", r.target_cot},
         {"correct", r.correct},
         {"round", r.round}};
  if (r.search_context) {
    json docs = json::array();
    for (const auto& d : *r.search_context) docs.push_back(to_json(d));
    j["search_context"] = docs;
  }
  if (r.predicted_index) j["predicted_index"] = *r.predicted_index;
  return j;
}

CotRecord cot_from_json(const nlohmann::json& j) {
  CotRecord r;
  r.question_id = get_field(j, "question_id").get<std::string>();
  r.instruction = get_field(j, "instruction").get<std::string>();
  r.question = get_field(j, "question").get<std::string>();
  r.target_cot = get_field(j, "target_cot").get<std::string>();
  r.correct = get_field(j, "correct").get<bool>();
  r.round = get_field(j, "round").get<int>();
  if (j.contains("search_context")) {
    std::vector<RetrievedDoc> docs;
    for (const auto& d : j["search_context"]) docs.push_back(retrieved_doc_from_json(d));
    r.search_context = std::move(docs);
  }
  if (j.contains("predicted_index")) r.predicted_index = j["predicted_index"].get<int>();
  return r;
}

nlohmann::json to_json(const RunRecord& r) {
  json iters = json::array();
  for (const auto& it : r.per_iteration) {
    json counts = json::object();
    for (const auto& [opt, n] : it.counts) counts[std::to_string(opt)] = n;
    json entry{{"counts", counts}, {"searched", it.searched}, {"queries", it.queries}};
    // +inf sentinel (no extractable answers) has no JSON number; stored as null
    if (std::isinf(it.entropy)) {
      entry["entropy"] = nullptr;
    } else {
      entry["entropy"] = it.entropy;
    }
    iters.push_back(entry);
  }
  json j{{"schema", kSchemaVersion},
         {"item_id", r.item_id},
         {"per_iteration", iters},
         {"backend_id", r.backend_id},
         {"config_hash", r.config_hash}};
  if (std::holds_alternative<int>(r.final_answer)) {
    j["final_answer"] = std::get<int>(r.final_answer);
  } else {
    j["final_answer"] = std::get<std::string>(r.final_answer);
  }
  return j;
}

RunRecord run_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.item_id = get_field(j, "item_id").get<std::string>();
  json fa = get_field(j, "final_answer");
  if (fa.is_number_integer()) {
    r.final_answer = fa.get<int>();
  } else {
    r.final_answer = fa.get<std::string>();
  }
  for (const auto& entry : get_field(j, "per_iteration")) {
    IterationLog it;
    json ent = get_field(entry, "entropy");
    it.entropy = ent.is_null() ? std::numeric_limits<double>::infinity() : ent.get<double>();
    json counts = get_field(entry, "counts");
    for (const auto& [key, val] : counts.items()) {
      it.counts[std::stoi(key)] = val.get<int>();
    }
    it.searched = get_field(entry, "searched").get<bool>();
    it.queries = get_field(entry, "queries").get<std::vector<std::string>>();
    r.per_iteration.push_back(std::move(it));
  }
  r.backend_id = get_field(j, "backend_id").get<std::string>();
  r.config_hash = get_field(j, "config_hash").get<std::string>();
  return r;
}

// --- validation -------------------------------------------------------------

std::vector<std::string> validate_record(const McqItem& r) {
  std::vector<std::string> v;
  if (r.id.empty()) v.push_back("id: empty");
  if (r.options.size() != 4 && r.options.size() != 5) {
    v.push_back("options: expected 4 or 5 options, got " + std::to_string(r.options.size()));
  }
  for (size_t i = 0; i < r.options.size(); ++i) {
    if (r.options[i].empty()) v.push_back("options[" + std::to_string(i) + "]: empty option text");
  }
  if (r.answer_index < 0 || static_cast<size_t>(r.answer_index) >= r.options.size()) {
    v.push_back("answer_index: " + std::to_string(r.answer_index) + " out of range for " +
                std::to_string(r.options.size()) + " options");
  }
  return v;
}

std::vector<std::string> validate_record(const CaseItem& r) {
  std::vector<std::string> v;
  if (r.id.empty()) v.push_back("id: empty");
  if (r.ground_truth_diagnosis.empty()) v.push_back("ground_truth_diagnosis: empty");
  return v;
}

std::vector<std::string> validate_record(const EhrBundle& r) {
  std::vector<std::string> v;
  if (r.id.empty()) v.push_back("id: empty");
  if (r.notes.empty()) v.push_back("notes: empty note list");
  std::set<std::string> ids;
  for (const auto& n : r.notes) {
    if (!ids.insert(n.note_id).second) v.push_back("notes: duplicate note_id " + n.note_id);
  }
  if (r.target_entity.empty()) v.push_back("target_entity: empty");
  return v;
}

std::vector<std::string> validate_record(const SpanItem& r) {
  std::vector<std::string> v;
  if (r.id.empty()) v.push_back("id: empty");
  if (r.video_duration_s < 0) v.push_back("video_duration_s: negative");
  if (r.gt_span.start_s < 0 || r.gt_span.start_s > r.gt_span.end_s) {
    v.push_back("gt_span: requires 0 <= start_s <= end_s");
  }
  if (r.gt_span.end_s > r.video_duration_s) {
    v.push_back("gt_span: end_s exceeds video_duration_s");
  }
  return v;
}

std::vector<std::string> validate_record(const CotRecord& r) {
  std::vector<std::string> v;
  if (r.question_id.empty()) v.push_back("question_id: empty");
  if (r.round < 0) v.push_back("round: negative");
  if (r.search_context) {
    for (const auto& d : *r.search_context) {
      if (d.content.empty()) v.push_back("search_context: doc with empty content");
      if (d.rank < 1) v.push_back("search_context: rank must be >= 1");
    }
  }
  return v;
}

std::vector<std::string> validate_record(const RunRecord& r) {
  std::vector<std::string> v;
  if (r.item_id.empty()) v.push_back("item_id: empty");
  if (r.per_iteration.empty()) v.push_back("per_iteration: empty");
  for (size_t i = 0; i < r.per_iteration.size(); ++i) {
    const auto& it = r.per_iteration[i];
    if (!(it.entropy >= 0.0)) v.push_back("per_iteration[" + std::to_string(i) + "].entropy: negative");
    for (const auto& [opt, n] : it.counts) {
      if (opt < 0 || n < 0) v.push_back("per_iteration[" + std::to_string(i) + "].counts: negative entry");
    }
  }
  // search never fires on the terminating iteration
  if (!r.per_iteration.empty() && r.per_iteration.back().searched) {
    v.push_back("per_iteration: searched=true on final iteration");
  }
  return v;
}

// --- file loaders -----------------------------------------------------------

std::vector<McqItem> load_mcq_file(const std::filesystem::path& p) {
  return load_jsonl<McqItem>(p, &mcq_from_json);
}
std::vector<CaseItem> load_case_file(const std::filesystem::path& p) {
  return load_jsonl<CaseItem>(p, &case_from_json);
}
std::vector<EhrBundle> load_ehr_file(const std::filesystem::path& p) {
  return load_jsonl<EhrBundle>(p, &ehr_from_json);
}
std::vector<SpanItem> load_span_file(const std::filesystem::path& p) {
  return load_jsonl<SpanItem>(p, &span_from_json);
}
std::vector<CotRecord> load_cot_file(const std::filesystem::path& p) {
  return load_jsonl<CotRecord>(p, &cot_from_json);
}
std::vector<RunRecord> load_run_file(const std::filesystem::path& p) {
  return load_jsonl<RunRecord>(p, &run_from_json);
}

Dataset load_dataset(const std::filesystem::path& path, DatasetKind kind) {
  switch (kind) {
    case DatasetKind::mcq: return load_mcq_file(path);
    case DatasetKind::cases: return load_case_file(path);
    case DatasetKind::ehr: return load_ehr_file(path);
    case DatasetKind::span: return load_span_file(path);
    case DatasetKind::cot: return load_cot_file(path);
    case DatasetKind::run: return load_run_file(path);
  }
  throw DataError("unhandled dataset kind");
}

}  // namespace medagent
