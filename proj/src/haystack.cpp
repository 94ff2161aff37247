#include "medagent/haystack.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "medagent/metrics.hpp"
#include "medagent/textutil.hpp"

namespace medagent {

std::optional<MentionCategory> mention_category_from_string(std::string_view s) {
  std::string n = normalize_for_match(s);
  if (n == "explicit confirmation") return MentionCategory::explicit_confirmation;
  if (n == "strong indication") return MentionCategory::strong_indication;
  if (n == "relevant mention") return MentionCategory::relevant_mention;
  return std::nullopt;
}

std::string to_string(MentionCategory c) {
  switch (c) {
    case MentionCategory::explicit_confirmation: return "explicit confirmation";
    case MentionCategory::strong_indication: return "strong indication";
    case MentionCategory::relevant_mention: return "relevant mention";
  }
  return "?";
}

std::string serialize_notes(std::span<const EhrNote> notes) {
  std::string out;
  for (const auto& n : notes) {
    out += "[NOTE ";
    out += n.note_id;
    out += "]\n";
    out += n.text;
    out += "\n\n";
  }
  return out;
}

bool quote_occurs(const std::string& note_text, const std::string& quote) {
  std::string haystack = normalize_whitespace(note_text);
  std::string needle = normalize_whitespace(quote);
  if (needle.empty()) return false;
  return haystack.find(needle) != std::string::npos;
}

const std::string& default_one_shot_demo() {
  // synthetic worked example teaching the [note_id] "quote" line format
  static const std::string demo =
      "Example\n"
      "Problem entity: atrial fibrillation\n"
      "[NOTE ex-note-2]\n"
      "Admitted overnight. Telemetry showed episodes of irregular rhythm; EKG confirmed "
      "atrial fibrillation with rapid ventricular response. Started on diltiazem drip.\n\n"
      "Mentions:\n"
      "[ex-note-2] \"EKG confirmed atrial fibrillation with rapid ventricular response\"\n";
  return demo;
}

std::string build_retrieval_prompt(const EhrBundle& bundle, std::span<const EhrNote> notes,
                                   const HaystackConfig& cfg) {
  std::string prompt =
      "You are reviewing a patient's electronic health record. Retrieve every mention "
      "(snippet of evidence) related to the given problem entity. For each mention reply "
      "with one line of the form [<note_id>] \"<verbatim quote from that note>\". If there "
      "are no mentions, reply exactly: no mentions found.\n\n";
  prompt += cfg.one_shot_demo.empty() ? default_one_shot_demo() : cfg.one_shot_demo;
  prompt += "\nProblem entity: ";
  prompt += bundle.target_entity;
  prompt += "\n\nRecords\n";
  prompt += serialize_notes(notes);
  prompt += "Mentions:\n";
  return prompt;
}

std::vector<MentionHit> parse_mention_lines(std::string_view completion) {
  std::vector<MentionHit> hits;
  for (const auto& raw : split_lines(completion)) {
    std::string line = trim(raw);
    if (line.empty() || line.front() != '[') continue;
    size_t close = line.find(']');
    if (close == std::string::npos) continue;
    std::string note_id = trim(line.substr(1, close - 1));
    size_t q1 = line.find('"', close);
    if (q1 == std::string::npos) continue;
    size_t q2 = line.rfind('"');
    if (q2 <= q1) continue;
    std::string quote = line.substr(q1 + 1, q2 - q1 - 1);
    if (note_id.empty() || trim(quote).empty()) continue;
    hits.push_back({note_id, quote, std::nullopt});
  }
  return hits;
}

namespace {

// whole-note chunks, each under the char limit when possible (an oversized
// single note still forms its own chunk; notes are never split)
std::vector<std::vector<EhrNote>> chunk_notes(const std::vector<EhrNote>& notes,
                                              std::size_t char_limit) {
  std::vector<std::vector<EhrNote>> chunks;
  std::vector<EhrNote> current;
  std::size_t current_size = 0;
  for (const auto& n : notes) {
    std::size_t note_size = n.note_id.size() + n.text.size() + 16;
    if (!current.empty() && current_size + note_size > char_limit) {
      chunks.push_back(std::move(current));
      current =
          {};
      current_size = 0;
    }
    current.push_back(n);
    current_size += note_size;
  }
  if (!current.empty()) chunks.push_back(std::move(current));
  return chunks;
}

std::vector<MentionHit> retrieve_for_notes(const EhrBundle& bundle,
                                           std::span<const EhrNote> notes, TextBackend& llm,
                                           const HaystackConfig& cfg) {
  std::string prompt = build_retrieval_prompt(bundle, notes, cfg);
  for (int attempt = 0; attempt < 2; ++attempt) {
    GenRequest req;
    req.prompt = prompt;
    req.temperature = cfg.temperature;
    req.max_tokens = cfg.max_tokens;
    req.sample_index = attempt;
    std::string completion = llm.generate(req).text;
    std::vector<MentionHit> hits = parse_mention_lines(completion);
    if (!hits.empty()) return hits;
    if (contains_ci(completion, "no mentions found")) return {};
  }
  throw EngineError("mention retrieval unparseable after retry for bundle " + bundle.id);
}

}  // namespace

MentionRetrieval retrieve_mentions(const EhrBundle& bundle, TextBackend& llm,
                                   const HaystackConfig& cfg) {
  std::vector<std::vector<EhrNote>> chunks;
  std::size_t total = serialize_notes(bundle.notes).size();
  if (cfg.context_char_limit > 0 && total > cfg.context_char_limit) {
    chunks = chunk_notes(bundle.notes, cfg.context_char_limit);
  } else {
    chunks.push_back(bundle.notes);
  }

  std::map<std::string, const EhrNote*> note_by_id;
  for (const auto& n : bundle.notes) note_by_id[n.note_id] = &n;

  MentionRetrieval result;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& chunk : chunks) {
    for (auto& hit : retrieve_for_notes(bundle, chunk, llm, cfg)) {
      if (!seen.insert({hit.note_id, hit.quote}).second) continue;
      auto it = note_by_id.find(hit.note_id);
      // evidence must be verbatim (after whitespace normalization) in the
      // named note, or the hit is discarded
      if (it != note_by_id.end() && quote_occurs(it->second->text, hit.quote)) {
        result.hits.push_back(std::move(hit));
      } else {
        result.dropped.push_back(std::move(hit));
      }
    }
  }
  return result;
}

std::string build_adjudication_prompt(const EhrBundle& bundle, std::span<const MentionHit> hits) {
  std::string prompt =
      "A prior retrieval step found the following mentions of the problem entity \"" +
      bundle.target_entity +
      "\" in a patient's records. Evaluate the relevance of each mention, categorizing it "
      "as explicit confirmation, strong indication, or relevant mention, one line per "
      "mention of the form [<note_id>] <category>. Then state whether the patient has a "
      "history of the entity on a final line of the form \"Conclusion: present\" or "
      "\"Conclusion: absent\", followed by a brief rationale.\n\nMentions\n";
  for (const auto& h : hits) {
    prompt += "[";
    prompt += h.note_id;
    prompt += "] \"";
    prompt += h.quote;
    prompt += "\"\n";
  }
  return prompt;
}

HaystackVerdict adjudicate(const EhrBundle& bundle, const std::vector<MentionHit>& hits,
                           TextBackend& llm, const HaystackConfig& cfg) {
  HaystackVerdict verdict;
  verdict.bundle_id = bundle.id;
  if (hits.empty()) {
    verdict.present = false;
    verdict.rationale = "no mentions retrieved";
    return verdict;
  }

  std::string prompt = build_adjudication_prompt(bundle, hits);
  for (int attempt = 0; attempt < 2; ++attempt) {
    GenRequest req;
    req.prompt = prompt;
    req.temperature = cfg.temperature;
    req.max_tokens = cfg.max_tokens;
    req.sample_index = attempt;
    std::string completion = llm.generate(req).text;

    std::optional<bool> present;
    std::string rationale;
    std::map<std::string, MentionCategory> categories;
    for (const auto& raw : split_lines(completion)) {
      std::string line = trim(raw);
      std::string lowered = to_lower(line);
      if (lowered.rfind("conclusion:", 0) == 0) {
        std::string rest = trim(line.substr(11));
        std::string rest_lower = to_lower(rest);
        if (rest_lower.rfind("present", 0) == 0) {
          present = true;
          rationale = trim(rest.substr(7));
        } else if (rest_lower.rfind("absent", 0) == 0) {
          present = false;
          rationale = trim(rest.substr(6));
        }
        continue;
      }
      if (present && !line.empty()) {
        if (!rationale.empty()) rationale += ' ';
        rationale += line;
        continue;
      }
      if (!line.empty() && line.front() == '[') {
        size_t close = line.find(']');
        if (close == std::string::npos) continue;
        std::string note_id = trim(line.substr(1, close - 1));
        if (auto cat = mention_category_from_string(trim(line.substr(close + 1)))) {
          categories.emplace(note_id, *cat);
        }
      }
    }

    if (present) {
      verdict.present = *present;
      verdict.hits = hits;
      for (auto& h : verdict.hits) {
        auto it = categories.find(h.note_id);
        if (it != categories.end()) h.category = it->second;
      }
      verdict.rationale = rationale.empty() ? "verdict without stated rationale" : rationale;
      return verdict;
    }
  }
  throw EngineError("adjudication lacked a present/absent conclusion for bundle " + bundle.id);
}

nlohmann::json to_json(const HaystackVerdict& v) {
  nlohmann::json hits = nlohmann::json::array();
  for (const auto& h : v.hits) {
    nlohmann::json hj{{"note_id", h.note_id}, {"quote", h.quote}};
    if (h.category) hj["category"] = to_string(*h.category);
    hits.push_back(hj);
  }
  return nlohmann::json{{"schema", kSchemaVersion},
                        {"bundle_id", v.bundle_id},
                        {"present", v.present},
                        {"hits", hits},
                        {"rationale", v.rationale}};
}

HaystackVerdict verdict_from_json(const nlohmann::json& j) {
  HaystackVerdict v;
  v.bundle_id = j.at("bundle_id").get<std::string>();
  v.present = j.at("present").get<bool>();
  for (const auto& hj : j.at("hits")) {
    MentionHit h;
    h.note_id = hj.at("note_id").get<std::string>();
    h.quote = hj.at("quote").get<std::string>();
    if (hj.contains("category")) {
      h.category = mention_category_from_string(hj["category"].get<std::string>());
    }
    v.hits.push_back(std::move(h));
  }
  v.rationale = j.value("rationale", std::string{});
  return v;
}

std::vector<HaystackVerdict> load_verdict_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open verdict file: " + path.string());
  std::vector<HaystackVerdict> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(verdict_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("verdict line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

HaystackEval evaluate_run(std::span<const HaystackVerdict> verdicts,
                          std::span<const EhrBundle> bundles) {
  std::map<std::string, bool> verdict_by_id;
  for (const auto& v : verdicts) verdict_by_id[v.bundle_id] = v.present;

  std::vector<std::string> missing;
  HaystackEval eval;
  for (const auto& b : bundles) {
    auto it = verdict_by_id.find(b.id);
    if (it == verdict_by_id.end()) {
      missing.push_back(b.id);
      continue;
    }
    bool predicted = it->second;
    if (predicted && b.label) ++eval.tp;
    if (predicted && !b.label) ++eval.fp;
    if (!predicted && b.label) ++eval.fn;
    if (!predicted && !b.label) ++eval.tn;
  }
  if (!missing.empty()) {
    std::string msg = "missing verdicts for bundles:";
    for (const auto& id : missing) msg += " " + id;
    throw DataError(msg);
  }

  Prf1Result prf = prf1(eval.tp, eval.fp, eval.fn, eval.tn);
  eval.precision = prf.precision;
  eval.recall = prf.recall;
  eval.f1 = prf.f1;
  eval.flagged = prf.flagged;
  return eval;
}

}  // namespace medagent
