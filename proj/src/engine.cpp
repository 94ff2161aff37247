#include "medagent/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "medagent/textutil.hpp"

namespace medagent {

using nlohmann::json;

namespace {

constexpr const char* kMcqInstruction =
    "You are a medical expert answering a multiple choice question about medical knowledge.";
constexpr const char* kSearchInstructionSuffix =
    "To help you answer the question, you are given access to search results.";
constexpr const char* kAnswerFormatHint =
    "Think step by step and end your response with a line of the form \"Answer: (X)\" "
    "naming the single best option.";

std::optional<int> letter_to_index(char c, int num_options) {
  if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  if (c < 'A' || c > 'Z') return std::nullopt;
  int idx = c - 'A';
  if (idx >= num_options) return std::nullopt;
  return idx;
}

// "Answer: (X)" with optional leading whitespace and trailing text.
std::optional<int> match_answer_line(std::string_view line, int num_options) {
  std::string t = trim(line);
  static const std::string prefix = "answer:";
  if (t.size() < prefix.size() || to_lower(t.substr(0, prefix.size())) != prefix) {
    return std::nullopt;
  }
  size_t i = prefix.size();
  while (i < t.size() && t[i] == ' ') ++i;
  if (i + 2 >= t.size()) return std::nullopt;
  if (t[i] != '(' || t[i + 2] != ')') return std::nullopt;
  return letter_to_index(t[i + 1], num_options);
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

double entropy_nats_of_counts(const std::map<int, int>& counts) {
  long total = 0;
  for (const auto& [_, n] : counts) total += n;
  if (total == 0) return std::numeric_limits<double>::infinity();
  double h = 0.0;
  for (const auto& [_, n] : counts) {
    if (n == 0) continue;
    double p = static_cast<double>(n) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h < 0.0 ? 0.0 : h;
}

ExtractionResult extract_choice_detailed(std::string_view path_text, int num_options) {
  ExtractionResult result;
  if (num_options < 2 || num_options > 26) return result;

  std::vector<std::string> lines = split_lines(path_text);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    if (auto idx = match_answer_line(*it, num_options)) {
      result.index = idx;
      result.method = ExtractionMethod::final_line;
      return result;
    }
  }

  // fallback: last standalone "(X)" token within the final 200 characters
  std::string_view tail = path_text.size() > 200 ? path_text.substr(path_text.size() - 200) : path_text;
  std::optional<int> last;
  for (size_t i = 0; i + 2 < tail.size(); ++i) {
    if (tail[i] != '(' || tail[i + 2] != ')') continue;
    auto idx = letter_to_index(tail[i + 1], num_options);
    if (!idx) continue;
    bool left_ok = i == 0 || !is_word_char(tail[i - 1]);
    bool right_ok = i + 3 >= tail.size() || !is_word_char(tail[i + 3]);
    if (left_ok && right_ok) last = idx;
  }
  if (last) {
    result.index = last;
    result.method = ExtractionMethod::fallback_scan;
  }
  return result;
}

std::optional<int> extract_choice(std::string_view path_text, int num_options) {
  return extract_choice_detailed(path_text, num_options).index;
}

AnswerDistribution answer_distribution(std::span<const ReasoningPath> paths) {
  AnswerDistribution dist;
  for (const auto& p : paths) {
    if (p.extracted) {
      ++dist.counts[*p.extracted];
      ++dist.total;
    }
  }
  if (dist.total > 0) {
    for (const auto& [opt, n] : dist.counts) {
      dist.probs[opt] = static_cast<double>(n) / static_cast<double>(dist.total);
    }
  }
  dist.entropy_nats = entropy_nats_of_counts(dist.counts);
  return dist;
}

bool should_search(const AnswerDistribution& dist, const LoopConfig& cfg, int iteration) {
  return dist.entropy_nats > cfg.entropy_threshold_nats && iteration < cfg.max_iterations;
}

int majority_answer(const AnswerDistribution& dist) {
  if (dist.total < 1) throw EngineError("no extracted answers to vote over");
  int best_option = -1;
  int best_count = -1;
  for (const auto& [opt, n] : dist.counts) {  // map iterates options ascending
    if (n > best_count) {
      best_count = n;
      best_option = opt;
    }
  }
  return best_option;
}

std::vector<std::string> parse_numbered_list(std::string_view text) {
  std::vector<std::string> items;
  for (const auto& raw : split_lines(text)) {
    std::string line = trim(raw);
    size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i == 0 || i >= line.size()) continue;
    if (line[i] != '.' && line[i] != ')') continue;
    std::string item = trim(line.substr(i + 1));
    if (!item.empty()) items.push_back(std::move(item));
  }
  return items;
}

std::string render_mcq_question(const McqItem& item) {
  std::string q = item.question;
  for (size_t i = 0; i < item.options.size(); ++i) {
    q += " (";
    q += static_cast<char>('A' + i);
    q += ") ";
    q += item.options[i];
  }
  return q;
}

std::string build_mcq_prompt(const McqItem& item, const std::string& context_block) {
  std::string prompt = "Instruction\n";
  prompt += kMcqInstruction;
  if (!context_block.empty()) {
    prompt += '\n';
    prompt += kSearchInstructionSuffix;
  }
  prompt += '\n';
  prompt += kAnswerFormatHint;
  prompt += "\n\nQuestion\n";
  prompt += render_mcq_question(item);
  prompt += '\n';
  if (!context_block.empty()) {
    prompt += '\n';
    prompt += context_block;
  }
  return prompt;
}

std::string build_case_prompt(const CaseItem& item, const std::string& context_block) {
  std::string prompt = "Instruction\n";
  prompt +=
      "You are a medical expert reviewing a diagnostic case challenge. Provide a "
      "differential diagnosis list comprising the 10 most likely diagnoses, ordered "
      "from most to least likely, as a numbered list with one diagnosis per line.";
  if (!context_block.empty()) {
    prompt += '\n';
    prompt += kSearchInstructionSuffix;
  }
  prompt += "\n\nCase\n";
  prompt += item.case_text;
  prompt += '\n';
  if (!context_block.empty()) {
    prompt += '\n';
    prompt += context_block;
  }
  return prompt;
}

std::string build_conflict_query_prompt(const std::string& question_render,
                                        std::span<const ReasoningPath> representatives,
                                        int num_queries) {
  std::string prompt =
      "The question below received conflicting answers from independent reasoning "
      "attempts. Generate exactly " +
      std::to_string(num_queries) +
      " web search queries whose results would help resolve the conflict. Reply with a "
      "numbered list of queries only.\n\nQuestion\n" +
      question_render + "\n";
  int idx = 1;
  for (const auto& p : representatives) {
    prompt += "\nConflicting response " + std::to_string(idx++) + "\n";
    prompt += p.text;
    prompt += '\n';
  }
  return prompt;
}

std::vector<ReasoningPath> generate_paths(const McqItem& item, const std::string& context_block,
                                          const LoopConfig& cfg, TextBackend& backend) {
  std::string prompt = build_mcq_prompt(item, context_block);
  std::vector<ReasoningPath> paths;
  int failures = 0;
  for (int s = 0; s < cfg.num_paths; ++s) {
    ReasoningPath path;
    path.sample_index = s;
    GenRequest req;
    req.prompt = prompt;
    req.temperature = cfg.temperature;
    req.max_tokens = cfg.max_tokens;
    req.sample_index = s;
    try {
      path.text = backend.generate(req).text;
      ExtractionResult ex = extract_choice_detailed(path.text, static_cast<int>(item.options.size()));
      path.extracted = ex.index;
      path.method = ex.method;
    } catch (const BackendError& e) {
      if (e.kind() == BackendErrorKind::auth) throw;  // systemic, not per-path
      ++failures;  // kept as a path with method none
    }
    paths.push_back(std::move(path));
  }
  if (failures == cfg.num_paths) {
    throw EngineError("all " + std::to_string(cfg.num_paths) + " generations failed for item " +
                      item.id);
  }
  return paths;
}

std::vector<std::string> generate_conflict_queries(const McqItem& item,
                                                   std::span<const ReasoningPath> paths,
                                                   const LoopConfig& cfg, TextBackend& backend) {
  // one representative path per distinct extracted answer, lowest sample first
  std::map<int, const ReasoningPath*> by_answer;
  for (const auto& p : paths) {
    if (p.extracted && !by_answer.count(*p.extracted)) by_answer[*p.extracted] = &p;
  }
  if (by_answer.size() < 2) {
    throw EngineError("conflict queries require at least two distinct answers for item " + item.id);
  }
  std::vector<ReasoningPath> representatives;
  for (const auto& [_, p] : by_answer) representatives.push_back(*p);

  std::string prompt =
      build_conflict_query_prompt(render_mcq_question(item), representatives, cfg.queries_per_round);

  for (int attempt = 0; attempt < 2; ++attempt) {
    GenRequest req;
    req.prompt = prompt;
    req.temperature = cfg.temperature;
    req.max_tokens = cfg.max_tokens;
    req.sample_index = attempt;  // a retry re-samples rather than replays
    std::vector<std::string> queries = parse_numbered_list(backend.generate(req).text);
    if (static_cast<int>(queries.size()) >= cfg.queries_per_round) {
      queries.resize(cfg.queries_per_round);
      return queries;
    }
  }
  throw EngineError("query generation produced fewer than " +
                    std::to_string(cfg.queries_per_round) + " queries for item " + item.id);
}

namespace {

// Accumulated context across rounds: append new docs after the prior rounds',
// dropping repeats of a source_url already present, then re-rank 1..n.
void accumulate_docs(std::vector<RetrievedDoc>& accumulated, std::vector<RetrievedDoc> fresh) {
  std::set<std::string> seen;
  for (const auto& d : accumulated) seen.insert(d.source_url);
  for (auto& d : fresh) {
    if (seen.insert(d.source_url).second) accumulated.push_back(std::move(d));
  }
  for (size_t i = 0; i < accumulated.size(); ++i) accumulated[i].rank = static_cast<int>(i + 1);
}

std::vector<RetrievedDoc> run_queries(std::span<const std::string> queries, int top_k,
                                      SearchBackend& search) {
  std::vector<RetrievedDoc> docs;
  for (const auto& q : queries) {
    std::vector<RetrievedDoc> result = search.search(q, top_k);
    docs.insert(docs.end(), std::make_move_iterator(result.begin()),
                std::make_move_iterator(result.end()));
  }
  return docs;
}

}  // namespace

RunRecord run_item(const McqItem& item, const LoopConfig& cfg, TextBackend& llm,
                   SearchBackend& search) {
  RunRecord record;
  record.item_id = item.id;
  record.backend_id = llm.id();
  record.config_hash = canonical_digest(cfg.to_json());

  std::vector<RetrievedDoc> accumulated;
  AnswerDistribution final_dist;

  for (int iteration = 1; iteration <= cfg.max_iterations; ++iteration) {
    std::string context =
        accumulated.empty() ? std::string{} : format_context(accumulated, cfg.context_char_budget).text;
    std::vector<ReasoningPath> paths = generate_paths(item, context, cfg, llm);
    AnswerDistribution dist = answer_distribution(paths);
    final_dist = dist;

    IterationLog log;
    log.entropy = dist.entropy_nats;
    log.counts = dist.counts;
    log.searched = false;

    // The gate can also fire on the +inf sentinel (no extractable answers);
    // without two distinct answers there is no conflict to condition search
    // on, so the loop re-samples instead.
    if (should_search(dist, cfg, iteration) && dist.counts.size() >= 2) {
      std::vector<std::string> queries = generate_conflict_queries(item, paths, cfg, llm);
      std::vector<RetrievedDoc> docs = run_queries(queries, cfg.top_k_per_query, search);
      accumulate_docs(accumulated, std::move(docs));
      log.searched = true;
      log.queries = std::move(queries);
      record.per_iteration.push_back(std::move(log));
      continue;
    }

    record.per_iteration.push_back(std::move(log));
    if (!should_search(dist, cfg, iteration)) break;
    // sentinel case: proceed to the next iteration without search
  }

  try {
    record.final_answer = majority_answer(final_dist);
  } catch (const EngineError&) {
    throw EngineError("item " + item.id + ": no extracted answers at the final vote");
  }
  return record;
}

// --- open-ended mode ----------------------------------------------------------

std::string extract_final_answer_text(std::string_view completion) {
  std::vector<std::string> lines = split_lines(completion);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    std::string t = trim(*it);
    std::string lowered = to_lower(t);
    if (lowered.rfind("answer:", 0) == 0) return trim(t.substr(7));
  }
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    std::string t = trim(*it);
    if (!t.empty()) return t;
  }
  return {};
}

bool is_abstention(std::string_view answer, std::span<const std::string> lexicon) {
  for (const auto& marker : lexicon) {
    if (contains_ci(answer, marker)) return true;
  }
  return false;
}

namespace {

struct CasePaths {
  std::vector<ReasoningPath> paths;           // extracted/method unused here
  std::vector<std::vector<std::string>> differentials;
  std::vector<std::string> top1_normalized;   // "" when nothing parsed
};

CasePaths generate_case_paths(const CaseItem& item, const std::string& context,
                              const LoopConfig& cfg, TextBackend& backend) {
  CasePaths out;
  std::string prompt = build_case_prompt(item, context);
  int failures = 0;
  for (int s = 0; s < cfg.num_paths; ++s) {
    ReasoningPath path;
    path.sample_index = s;
    GenRequest req;
    req.prompt = prompt;
    req.temperature = cfg.temperature;
    req.max_tokens = cfg.max_tokens;
    req.sample_index = s;
    std::vector<std::string> parsed;
    try {
      path.text = backend.generate(req).text;
      parsed = parse_numbered_list(path.text);
    } catch (const BackendError& e) {
      if (e.kind() == BackendErrorKind::auth) throw;
      ++failures;
    }
    out.top1_normalized.push_back(
        parsed.empty() ? std::string{} : normalize_for_match(parsed.front(), true));
    out.differentials.push_back(std::move(parsed));
    out.paths.push_back(std::move(path));
  }
  if (failures == cfg.num_paths) {
    throw EngineError("all generations failed for case " + item.id);
  }
  return out;
}

// Distribution over distinct normalized top-1 strings; indices follow
// lexicographic order so the logged counts are deterministic.
AnswerDistribution top1_distribution(const std::vector<std::string>& top1) {
  std::map<std::string, int> counts;
  for (const auto& t : top1) {
    if (!t.empty()) ++counts[t];
  }
  AnswerDistribution dist;
  int idx = 0;
  for (const auto& [_, n] : counts) {
    dist.counts[idx++] = n;
    dist.total += n;
  }
  if (dist.total > 0) {
    for (const auto& [opt, n] : dist.counts) {
      dist.probs[opt] = static_cast<double>(n) / static_cast<double>(dist.total);
    }
  }
  dist.entropy_nats = entropy_nats_of_counts(dist.counts);
  return dist;
}

std::string majority_top1(const std::vector<std::string>& top1) {
  std::map<std::string, int> counts;
  for (const auto& t : top1) {
    if (!t.empty()) ++counts[t];
  }
  std::string best;
  int best_count = -1;
  for (const auto& [value, n] : counts) {  // lexicographic tie-break
    if (n > best_count) {
      best_count = n;
      best = value;
    }
  }
  return best;
}

}  // namespace

CaseResult run_case_open_ended(const CaseItem& item, const LoopConfig& cfg, TextBackend& llm,
                               SearchBackend& search) {
  CaseResult result;
  result.record.item_id = item.id;
  result.record.backend_id = llm.id();
  result.record.config_hash = canonical_digest(cfg.to_json());

  std::vector<RetrievedDoc> accumulated;
  CasePaths last;

  for (int iteration = 1; iteration <= cfg.max_iterations; ++iteration) {
    std::string context =
        accumulated.empty() ? std::string{} : format_context(accumulated, cfg.context_char_budget).text;
    last = generate_case_paths(item, context, cfg, llm);
    AnswerDistribution dist = top1_distribution(last.top1_normalized);

    IterationLog log;
    log.entropy = dist.entropy_nats;
    log.counts = dist.counts;
    log.searched = false;

    if (should_search(dist, cfg, iteration) && dist.counts.size() >= 2) {
      // queries condition on one representative differential per distinct top-1
      std::map<std::string, const ReasoningPath*> by_top1;
      for (size_t i = 0; i < last.paths.size(); ++i) {
        const std::string& key = last.top1_normalized[i];
        if (!key.empty() && !by_top1.count(key)) by_top1[key] = &last.paths[i];
      }
      std::vector<ReasoningPath> representatives;
      for (const auto& [_, p] : by_top1) representatives.push_back(*p);
      std::string prompt =
          build_conflict_query_prompt(item.case_text, representatives, cfg.queries_per_round);

      std::vector<std::string> queries;
      for (int attempt = 0; attempt < 2 && static_cast<int>(queries.size()) < cfg.queries_per_round;
           ++attempt) {
        GenRequest req;
        req.prompt = prompt;
        req.temperature = cfg.temperature;
        req.max_tokens = cfg.max_tokens;
        req.sample_index = attempt;
        queries = parse_numbered_list(llm.generate(req).text);
      }
      if (static_cast<int>(queries.size()) < cfg.queries_per_round) {
        throw EngineError("query generation failed for case " + item.id);
      }
      queries.resize(cfg.queries_per_round);
      std::vector<RetrievedDoc> docs = run_queries(queries, cfg.top_k_per_query, search);
      accumulate_docs(accumulated, std::move(docs));
      log.searched = true;
      log.queries = std::move(queries);
      result.record.per_iteration.push_back(std::move(log));
      continue;
    }

    result.record.per_iteration.push_back(std::move(log));
    if (!should_search(dist, cfg, iteration)) break;
  }

  // final differential: the first path agreeing with the majority top-1
  std::string winner = majority_top1(last.top1_normalized);
  if (winner.empty()) throw EngineError("no parseable differential for case " + item.id);
  std::vector<std::string> differential;
  for (size_t i = 0; i < last.top1_normalized.size(); ++i) {
    if (last.top1_normalized[i] == winner) {
      differential = last.differentials[i];
      break;
    }
  }

  if (differential.size() < 10) {
    // one retry with a fresh sample before padding
    std::string context =
        accumulated.empty() ? std::string{} : format_context(accumulated, cfg.context_char_budget).text;
    GenRequest req;
    req.prompt = build_case_prompt(item, context);
    req.temperature = cfg.temperature;
    req.max_tokens = cfg.max_tokens;
    req.sample_index = cfg.num_paths;  // unused index = fresh sample
    try {
      std::vector<std::string> retry = parse_numbered_list(llm.generate(req).text);
      if (retry.size() > differential.size()) differential = std::move(retry);
    } catch (const BackendError& e) {
      if (e.kind() == BackendErrorKind::auth) throw;
      // otherwise keep what we have
    }
  }
  if (differential.size() < 10) result.flagged = true;
  differential.resize(10);

  result.record.final_answer = differential.empty() ? std::string{} : differential.front();
  result.differential = std::move(differential);
  return result;
}

// --- open QA (short answers) ----------------------------------------------------

namespace {

std::string build_open_qa_prompt(const std::string& question, const std::string& context_block) {
  std::string prompt = "Instruction\n";
  prompt +=
      "You are a medical expert answering a question. Answer concisely and end your "
      "response with a line of the form \"Answer: <your answer>\".";
  if (!context_block.empty()) {
    prompt += '\n';
    prompt += kSearchInstructionSuffix;
  }
  prompt += "\n\nQuestion\n";
  prompt += question;
  prompt += '\n';
  if (!context_block.empty()) {
    prompt += '\n';
    prompt += context_block;
  }
  return prompt;
}

}  // namespace

OpenQaResult run_open_qa(const std::string& item_id, const std::string& question,
                         const LoopConfig& cfg, TextBackend& llm, SearchBackend& search) {
  OpenQaResult result;
  result.record.item_id = item_id;
  result.record.backend_id = llm.id();
  result.record.config_hash = canonical_digest(cfg.to_json());

  std::vector<RetrievedDoc> accumulated;
  std::vector<ReasoningPath> last_paths;
  std::vector<std::string> last_answers;       // verbatim
  std::vector<std::string> last_normalized;

  for (int iteration = 1; iteration <= cfg.max_iterations; ++iteration) {
    std::string context =
        accumulated.empty() ? std::string{} : format_context(accumulated, cfg.context_char_budget).text;
    std::string prompt = build_open_qa_prompt(question, context);

    last_paths.clear();
    last_answers.clear();
    last_normalized.clear();
    int failures = 0;
    for (int s = 0; s < cfg.num_paths; ++s) {
      ReasoningPath path;
      path.sample_index = s;
      GenRequest req;
      req.prompt = prompt;
      req.temperature = cfg.temperature;
      req.max_tokens = cfg.max_tokens;
      req.sample_index = s;
      std::string answer;
      try {
        path.text = llm.generate(req).text;
        answer = extract_final_answer_text(path.text);
      } catch (const BackendError& e) {
        if (e.kind() == BackendErrorKind::auth) throw;
        ++failures;
      }
      last_answers.push_back(answer);
      last_normalized.push_back(normalize_for_match(answer, true));
      last_paths.push_back(std::move(path));
    }
    if (failures == cfg.num_paths) throw EngineError("all generations failed for item " + item_id);

    AnswerDistribution dist = top1_distribution(last_normalized);
    IterationLog log;
    log.entropy = dist.entropy_nats;
    log.counts = dist.counts;
    log.searched = false;

    if (should_search(dist, cfg, iteration) && dist.counts.size() >= 2) {
      std::map<std::string, const ReasoningPath*> by_answer;
      for (size_t i = 0; i < last_paths.size(); ++i) {
        const std::string& key = last_normalized[i];
        if (!key.empty() && !by_answer.count(key)) by_answer[key] = &last_paths[i];
      }
      std::vector<ReasoningPath> representatives;
      for (const auto& [_, p] : by_answer) representatives.push_back(*p);
      std::string qprompt =
          build_conflict_query_prompt(question, representatives, cfg.queries_per_round);

      std::vector<std::string> queries;
      for (int attempt = 0; attempt < 2 && static_cast<int>(queries.size()) < cfg.queries_per_round;
           ++attempt) {
        GenRequest req;
        req.prompt = qprompt;
        req.temperature = cfg.temperature;
        req.max_tokens = cfg.max_tokens;
        req.sample_index = attempt;
        queries = parse_numbered_list(llm.generate(req).text);
      }
      if (static_cast<int>(queries.size()) < cfg.queries_per_round) {
        throw EngineError("query generation failed for item " + item_id);
      }
      queries.resize(cfg.queries_per_round);
      std::vector<RetrievedDoc> docs = run_queries(queries, cfg.top_k_per_query, search);
      accumulate_docs(accumulated, std::move(docs));
      log.searched = true;
      log.queries = std::move(queries);
      result.record.per_iteration.push_back(std::move(log));
      continue;
    }

    result.record.per_iteration.push_back(std::move(log));
    if (!should_search(dist, cfg, iteration)) break;
  }

  std::string winner = majority_top1(last_normalized);
  if (winner.empty()) throw EngineError("item " + item_id + ": no extracted answers at the final vote");
  for (size_t i = 0; i < last_normalized.size(); ++i) {
    if (last_normalized[i] == winner) {
      result.answer = last_answers[i];
      break;
    }
  }
  result.record.final_answer = result.answer;
  return result;
}

// --- LoopConfig serialization ---------------------------------------------------

nlohmann::json LoopConfig::to_json() const {
  return json{{"num_paths", num_paths},
              {"entropy_threshold_nats", entropy_threshold_nats},
              {"max_iterations", max_iterations},
              {"queries_per_round", queries_per_round},
              {"temperature", temperature},
              {"max_tokens", max_tokens},
              {"context_char_budget", context_char_budget},
              {"top_k_per_query", top_k_per_query}};
}

LoopConfig LoopConfig::from_json(const nlohmann::json& j) {
  LoopConfig cfg;
  cfg.num_paths = j.value("num_paths", cfg.num_paths);
  cfg.entropy_threshold_nats = j.value("entropy_threshold_nats", cfg.entropy_threshold_nats);
  cfg.max_iterations = j.value("max_iterations", cfg.max_iterations);
  cfg.queries_per_round = j.value("queries_per_round", cfg.queries_per_round);
  cfg.temperature = j.value("temperature", cfg.temperature);
  cfg.max_tokens = j.value("max_tokens", cfg.max_tokens);
  cfg.context_char_budget = j.value("context_char_budget", cfg.context_char_budget);
  cfg.top_k_per_query = j.value("top_k_per_query", cfg.top_k_per_query);
  if (cfg.num_paths < 1 || cfg.max_iterations < 1 || cfg.queries_per_round < 1) {
    throw DataError("loop config requires num_paths, max_iterations, queries_per_round >= 1");
  }
  return cfg;
}

}  // namespace medagent
