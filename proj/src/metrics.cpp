#include "medagent/metrics.hpp"

#include <algorithm>

#include "medagent/errors.hpp"
#include "medagent/llm.hpp"
#include "medagent/textutil.hpp"

namespace medagent {

using nlohmann::json;

nlohmann::json ScoreReport::to_json() const {
  json per = json::array();
  for (const auto& [id, v] : per_item) per.push_back(json{{"item_id", id}, {"value", v}});
  json j{{"schema", kSchemaVersion},
         {"metric", metric},
         {"value", value},
         {"n", n},
         {"per_item", per},
         {"flagged", flagged}};
  if (!extra.empty()) j["extra"] = extra;
  if (!note.empty()) j["note"] = note;
  return j;
}

double accuracy(std::span<const int> preds, std::span<const int> golds) {
  if (preds.size() != golds.size()) {
    throw DataError("accuracy: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(golds.size()) + " golds");
  }
  if (preds.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == golds[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

bool diagnosis_match(std::string_view pred, std::string_view gold, TextBackend* judge) {
  std::string np = normalize_for_match(pred, /*drop_articles=*/true);
  std::string ng = normalize_for_match(gold, /*drop_articles=*/true);
  if (np == ng) return !np.empty();
  if (!judge) return false;

  GenRequest req;
  req.prompt =
      "Do the following two phrases name the same diagnosis?\n"
      "Phrase 1: " +
      std::string(pred) + "\nPhrase 2: " + std::string(gold) +
      "\nAnswer with a single word, yes or no.";
  req.temperature = 0.0;
  req.max_tokens = 8;
  std::string verdict = to_lower(trim(judge->generate(req).text));
  return verdict.rfind("yes", 0) == 0;
}

double top_k_accuracy(const std::vector<std::vector<std::string>>& ranked_lists,
                      std::span<const std::string> golds, int k, TextBackend* judge) {
  if (ranked_lists.size() != golds.size()) {
    throw DataError("top_k_accuracy: ranked list count does not match gold count");
  }
  if (ranked_lists.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked_lists.size(); ++i) {
    const auto& list = ranked_lists[i];
    std::size_t limit = std::min<std::size_t>(list.size(), static_cast<std::size_t>(k));
    for (std::size_t j = 0; j < limit; ++j) {
      if (diagnosis_match(list[j], golds[i], judge)) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(ranked_lists.size());
}

double token_f1(std::string_view pred, std::string_view gold) {
  std::vector<std::string> p = tokenize(pred);
  std::vector<std::string> g = tokenize(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;

  std::map<std::string, int> gold_counts;
  for (const auto& t : g) ++gold_counts[t];
  std::size_t overlap = 0;
  for (const auto& t : p) {
    auto it = gold_counts.find(t);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
  double recall = static_cast<double>(overlap) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

double span_iou(const TimeSpan& pred, const TimeSpan& gold) {
  double overlap = std::min(pred.end_s, gold.end_s) - std::max(pred.start_s, gold.start_s);
  if (overlap < 0.0) overlap = 0.0;
  double union_len = (pred.end_s - pred.start_s) + (gold.end_s - gold.start_s) - overlap;
  if (union_len <= 0.0) {
    // both zero-length: identical points count as perfect agreement
    return (pred.start_s == gold.start_s && pred.end_s == gold.end_s) ? 1.0 : 0.0;
  }
  return overlap / union_len;
}

IouSuiteResult iou_suite(std::span<const TimeSpan> preds, std::span<const TimeSpan> golds,
                         std::span<const double> thresholds) {
  if (preds.size() != golds.size()) {
    throw DataError("iou_suite: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(golds.size()) + " golds");
  }
  IouSuiteResult result;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    result.per_item.push_back(span_iou(preds[i], golds[i]));
  }
  double sum = 0.0;
  for (double v : result.per_item) sum += v;
  result.mean_iou = result.per_item.empty() ? 0.0 : sum / static_cast<double>(result.per_item.size());
  for (double t : thresholds) {
    std::size_t hit = 0;
    for (double v : result.per_item) {
      if (v >= t) ++hit;
    }
    result.at_threshold[t] =
        result.per_item.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(result.per_item.size());
  }
  return result;
}

Prf1Result prf1(long tp, long fp, long fn, long tn) {
  if (tp < 0 || fp < 0 || fn < 0 || tn < 0) throw DataError("prf1: negative confusion count");
  Prf1Result r;
  if (tp + fp == 0) {
    r.precision = 0.0;
    r.flagged = true;
  } else {
    r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  if (tp + fn == 0) {
    r.recall = 0.0;
    r.flagged = true;
  } else {
    r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  if (r.precision + r.recall == 0.0) {
    r.f1 = 0.0;
    r.flagged = true;
  } else {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  }
  return r;
}

}  // namespace medagent
