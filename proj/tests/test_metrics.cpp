#include <doctest.h>

#include <map>
#include <random>

#include "medagent/engine.hpp"
#include "medagent/llm.hpp"
#include "medagent/metrics.hpp"
#include "medagent/textutil.hpp"

using namespace medagent;

namespace {

// Brute-force token F1: explicit mark-used intersection over token lists,
// computed straight from the definition.
double brute_force_token_f1(const std::string& pred, const std::string& gold) {
  std::vector<std::string> p = tokenize(pred);
  std::vector<std::string> g = tokenize(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::vector<bool> used(g.size(), false);
  int inter = 0;
  for (const auto& tok : p) {
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!used[j] && g[j] == tok) {
        used[j] = true;
        ++inter;
        break;
      }
    }
  }
  if (inter == 0) return 0.0;
  double precision = double(inter) / double(p.size());
  double recall = double(inter) / double(g.size());
  return 2 * precision * recall / (precision + recall);
}

// Interval enumeration oracle: spans live on a 0.25 s grid in [0, 10];
// IoU is counted cell by cell.
double enumerated_iou(const TimeSpan& a, const TimeSpan& b) {
  const double step = 0.25;
  int cells = static_cast<int>(10.0 / step);
  int overlap = 0, uni = 0;
  for (int c = 0; c < cells; ++c) {
    double lo = c * step, hi = (c + 1) * step;
    bool in_a = lo >= a.start_s && hi <= a.end_s;
    bool in_b = lo >= b.start_s && hi <= b.end_s;
    if (in_a && in_b) ++overlap;
    if (in_a || in_b) ++uni;
  }
  if (uni == 0) return (a.start_s == b.start_s && a.end_s == b.end_s) ? 1.0 : 0.0;
  return double(overlap) / double(uni);
}

}  // namespace

TEST_CASE("accuracy basics") {
  std::vector<int> golds{0, 1, 2, 3};
  CHECK(accuracy(std::vector<int>{0, 1, 2, 0}, golds) == doctest::Approx(0.75));
  CHECK(accuracy(golds, golds) == 1.0);
  CHECK_THROWS_AS(accuracy(std::vector<int>{1}, golds), DataError);
}

TEST_CASE("token_f1 worked examples") {
  CHECK(token_f1("identical strings", "identical strings") == 1.0);
  // multiset count by hand: intersection {lung}, P = R = 1/2
  CHECK(token_f1("left lung", "right lung") == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(token_f1("", "pneumonia") == 0.0);
  CHECK(token_f1("pneumonia", "") == 0.0);
  CHECK(token_f1("", "") == 1.0);
}

TEST_CASE("token_f1 is symmetric and bounded") {
  std::mt19937 rng(11);
  std::vector<std::string> vocab{"a", "bb", "ccc", "lung", "left", "right"};
  for (int i = 0; i < 300; ++i) {
    auto sample = [&] {
      std::string s;
      std::size_t len = rng() % 7;
      for (std::size_t w = 0; w < len; ++w) s += vocab[rng() % vocab.size()] + " ";
      return s;
    };
    std::string x = sample(), y = sample();
    double xy = token_f1(x, y);
    CHECK(xy == doctest::Approx(token_f1(y, x)).epsilon(1e-15));
    CHECK(xy >= 0.0);
    CHECK(xy <= 1.0);
  }
}

TEST_CASE("token_f1 matches the brute-force oracle on 1000 random instances") {
  std::mt19937 rng(2024);
  std::vector<std::string> vocab{"x", "y", "zz", "lung", "mass", "left"};
  for (int i = 0; i < 1000; ++i) {
    auto sample = [&] {
      std::string s;
      std::size_t len = rng() % 7;  // <= 6 tokens
      for (std::size_t w = 0; w < len; ++w) s += vocab[rng() % vocab.size()] + " ";
      return s;
    };
    std::string p = sample(), g = sample();
    CHECK(token_f1(p, g) == doctest::Approx(brute_force_token_f1(p, g)).epsilon(1e-12));
  }
}

TEST_CASE("span_iou worked examples") {
  CHECK(span_iou({1, 2}, {1, 2}) == 1.0);
  CHECK(span_iou({0, 1}, {2, 3}) == 0.0);
  // spans 142-178 vs 142-180: overlap 36, union 38
  CHECK(span_iou({142, 178}, {142, 180}) ==
        doctest::Approx(0.9473684210526315).epsilon(1e-12));
  // zero length
  CHECK(span_iou({5, 5}, {5, 5}) == 1.0);
  CHECK(span_iou({5, 5}, {6, 6}) == 0.0);
}

TEST_CASE("span_iou matches the interval-enumeration oracle on 1000 grid spans") {
  std::mt19937 rng(31337);
  auto sample_span = [&] {
    int a = static_cast<int>(rng() % 41);
    int b = static_cast<int>(rng() % 41);
    if (a > b) std::swap(a, b);
    return TimeSpan{a * 0.25, b * 0.25};
  };
  for (int i = 0; i < 1000; ++i) {
    TimeSpan p = sample_span(), g = sample_span();
    CHECK(span_iou(p, g) == doctest::Approx(enumerated_iou(p, g)).epsilon(1e-12));
    CHECK(span_iou(p, g) == doctest::Approx(span_iou(g, p)).epsilon(1e-15));
  }
}

TEST_CASE("iou_suite thresholds and mean") {
  std::vector<TimeSpan> preds{{142, 178}, {0, 1}};
  std::vector<TimeSpan> golds{{142, 180}, {0, 5}};  // IoUs: 36/38 and 0.2
  IouSuiteResult suite = iou_suite(preds, golds, kDefaultIouThresholds);
  CHECK(suite.per_item[0] == doctest::Approx(0.9473684210526315).epsilon(1e-12));
  CHECK(suite.per_item[1] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(suite.at_threshold.at(0.5) == doctest::Approx(0.5));
  CHECK(suite.at_threshold.at(0.3) == doctest::Approx(0.5));
  CHECK(suite.at_threshold.at(0.7) == doctest::Approx(0.5));
  CHECK(suite.mean_iou == doctest::Approx(0.5736842105263158).epsilon(1e-12));
}

TEST_CASE("iou_suite is monotone non-increasing in the threshold") {
  std::mt19937 rng(5);
  std::vector<TimeSpan> preds, golds;
  for (int i = 0; i < 40; ++i) {
    auto mk = [&] {
      double a = (rng() % 100) / 10.0, b = (rng() % 100) / 10.0;
      if (a > b) std::swap(a, b);
      return TimeSpan{a, b};
    };
    preds.push_back(mk());
    golds.push_back(mk());
  }
  std::vector<double> thresholds{0.1, 0.3, 0.5, 0.7, 0.9};
  IouSuiteResult suite = iou_suite(preds, golds, thresholds);
  double prev = 1.0;
  for (double t : thresholds) {
    CHECK(suite.at_threshold.at(t) <= prev + 1e-15);
    prev = suite.at_threshold.at(t);
  }
  CHECK(iou_suite(preds, preds, thresholds).mean_iou == 1.0);
}

TEST_CASE("prf1 worked examples") {
  Prf1Result all_good = prf1(1, 0, 0, 0);
  CHECK(all_good.precision == 1.0);
  CHECK(all_good.recall == 1.0);
  CHECK(all_good.f1 == 1.0);
  CHECK_FALSE(all_good.flagged);

  Prf1Result no_preds = prf1(0, 0, 5, 0);
  CHECK(no_preds.recall == 0.0);
  CHECK(no_preds.flagged);

  Prf1Result mixed = prf1(3, 1, 2, 0);
  CHECK(mixed.precision == doctest::Approx(0.75));
  CHECK(mixed.recall == doctest::Approx(0.6));
  CHECK(mixed.f1 == doctest::Approx(2.0 * 0.75 * 0.6 / 1.35).epsilon(1e-12));
}

TEST_CASE("top_k_accuracy normalized exact match") {
  std::vector<std::vector<std::string>> lists{
      {"lupus", "sarcoidosis", "The Hodgkin lymphoma", "x", "y", "z", "a", "b", "c", "d"}};
  std::vector<std::string> golds{"hodgkin lymphoma"};
  CHECK(top_k_accuracy(lists, golds, 10) == 1.0);  // rank 3, article stripped
  CHECK(top_k_accuracy(lists, golds, 1) == 0.0);
  CHECK(top_k_accuracy(lists, golds, 3) == 1.0);
}

TEST_CASE("top_k judge hook adjudicates non-exact pairs") {
  MockBackend judge({{"Phrase 1: MI", 0, "yes"}, {"", 0, "no"}});
  std::vector<std::vector<std::string>> lists{{"MI"}};
  std::vector<std::string> golds{"myocardial infarction"};
  CHECK(top_k_accuracy(lists, golds, 1) == 0.0);          // exact match misses
  CHECK(top_k_accuracy(lists, golds, 1, &judge) == 1.0);  // judge accepts
}

TEST_CASE("score report serialization carries per-item values") {
  ScoreReport report;
  report.metric = "accuracy";
  report.value = 0.5;
  report.n = 2;
  report.per_item = {{"a", 1.0}, {"b", 0.0}};
  auto j = report.to_json();
  CHECK(j["metric"] == "accuracy");
  CHECK(j["per_item"].size() == 2);
}
