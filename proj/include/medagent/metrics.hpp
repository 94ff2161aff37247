#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "medagent/records.hpp"

namespace medagent {

class TextBackend;

struct ScoreReport {
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;
  std::vector<std::pair<std::string, double>> per_item;
  std::map<std::string, double> extra;  // secondary values (IoU@t, precision, ...)
  bool flagged = false;                 // degenerate denominators encountered
  std::string note;

  nlohmann::json to_json() const;
};

// Fraction of exact index matches. Throws DataError on length mismatch.
double accuracy(std::span<const int> preds, std::span<const int> golds);

// Normalized exact string equality (lowercase, punctuation and articles
// stripped, whitespace collapsed). With a judge backend, non-exact pairs are
// additionally adjudicated by a yes/no equivalence prompt.
bool diagnosis_match(std::string_view pred, std::string_view gold, TextBackend* judge = nullptr);

// Hit iff any of the first k candidates matches the gold diagnosis.
double top_k_accuracy(const std::vector<std::vector<std::string>>& ranked_lists,
                      std::span<const std::string> golds, int k, TextBackend* judge = nullptr);

// Token-multiset F1 after normalization (articles kept). Both empty -> 1,
// exactly one empty -> 0.
double token_f1(std::string_view pred, std::string_view gold);

// Overlap length over union length. Two identical zero-length spans -> 1.
double span_iou(const TimeSpan& pred, const TimeSpan& gold);

struct IouSuiteResult {
  std::map<double, double> at_threshold;  // IoU@t = fraction with IoU >= t
  double mean_iou = 0.0;
  std::vector<double> per_item;
};

IouSuiteResult iou_suite(std::span<const TimeSpan> preds, std::span<const TimeSpan> golds,
                         std::span<const double> thresholds);

inline const std::vector<double> kDefaultIouThresholds{0.3, 0.5, 0.7};

struct Prf1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool flagged = false;  // some denominator was zero
};

Prf1Result prf1(long tp, long fp, long fn, long tn);

}  // namespace medagent
