#include "medagent/rater.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "medagent/records.hpp"

namespace medagent {

using nlohmann::json;

namespace {

json selections_to_json(const std::set<int>& s) { return json(std::vector<int>(s.begin(), s.end())); }

std::set<int> selections_from_json(const json& j) {
  std::set<int> out;
  for (const auto& v : j) out.insert(v.get<int>());
  return out;
}

}  // namespace

nlohmann::json to_json(const RaterRecord& r) {
  json pre{{"any_appropriate", r.pre_reveal.any_appropriate},
           {"selections", selections_to_json(r.pre_reveal.selections)},
           {"missing_info", r.pre_reveal.missing_info}};
  if (r.pre_reveal.would_change) pre["would_change"] = *r.pre_reveal.would_change;
  json post{{"changed", r.post_reveal.changed},
            {"selections", selections_to_json(r.post_reveal.selections)}};
  return json{{"schema", kSchemaVersion},
              {"question_id", r.question_id},
              {"rater_id", r.rater_id},
              {"pre_reveal", pre},
              {"post_reveal", post}};
}

RaterRecord rater_from_json(const nlohmann::json& j) {
  RaterRecord r;
  r.question_id = j.at("question_id").get<std::string>();
  r.rater_id = j.at("rater_id").get<std::string>();
  const json& pre = j.at("pre_reveal");
  r.pre_reveal.any_appropriate = pre.at("any_appropriate").get<bool>();
  r.pre_reveal.selections = selections_from_json(pre.at("selections"));
  r.pre_reveal.missing_info = pre.at("missing_info").get<bool>();
  if (pre.contains("would_change")) r.pre_reveal.would_change = pre["would_change"].get<bool>();
  const json& post = j.at("post_reveal");
  r.post_reveal.changed = post.at("changed").get<bool>();
  r.post_reveal.selections = selections_from_json(post.at("selections"));
  return r;
}

std::vector<std::string> validate_record(const RaterRecord& r) {
  std::vector<std::string> v;
  if (r.question_id.empty()) v.push_back("question_id: empty");
  if (r.rater_id.empty()) v.push_back("rater_id: empty");
  if (r.pre_reveal.any_appropriate && r.pre_reveal.selections.empty()) {
    v.push_back("pre_reveal.selections: empty despite any_appropriate=true");
  }
  if (!r.post_reveal.changed && r.post_reveal.selections != r.pre_reveal.selections) {
    v.push_back("post_reveal.selections: differ from pre_reveal despite changed=false");
  }
  return v;
}

std::vector<RaterRecord> load_rater_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ratings file: " + path.string());
  std::vector<RaterRecord> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      RaterRecord r = rater_from_json(j);
      auto violations = validate_record(r);
      if (!violations.empty()) {
        std::string msg = "line " + std::to_string(line_no) + ":";
        for (const auto& s : violations) msg += " " + s + ";";
        throw DataError(msg);
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

VoteRule vote_rule_from_string(const std::string& s) {
  if (s == "majority") return VoteRule::majority;
  if (s == "unanimous") return VoteRule::unanimous;
  throw DataError("unknown vote rule: " + s);
}

std::string to_string(VoteRule rule) {
  return rule == VoteRule::majority ? "majority" : "unanimous";
}

PerRaterFlags rater_flags(const RaterRecord& r, int gold) {
  PerRaterFlags f;
  // missing info only counts when the rater judged it consequential
  f.missing_info = r.pre_reveal.missing_info && r.pre_reveal.would_change.value_or(false);
  f.label_error = r.post_reveal.selections.count(gold) == 0;
  f.ambiguous = r.post_reveal.selections.size() > 1;
  return f;
}

CommitteeVerdict flag_from_committee(std::span<const RaterRecord> records, int gold,
                                     VoteRule rule) {
  if (records.size() != 3) {
    throw DataError("committee requires exactly 3 records, got " + std::to_string(records.size()));
  }
  int missing = 0, label = 0, ambiguous = 0;
  for (const auto& r : records) {
    PerRaterFlags f = rater_flags(r, gold);
    missing += f.missing_info ? 1 : 0;
    label += f.label_error ? 1 : 0;
    ambiguous += f.ambiguous ? 1 : 0;
  }
  int needed = rule == VoteRule::majority ? 2 : 3;
  CommitteeVerdict verdict;
  verdict.question_id = records[0].question_id;
  verdict.vote_rule = rule;
  verdict.flags.missing_info = missing >= needed;
  verdict.flags.label_error = label >= needed;
  verdict.flags.ambiguous = ambiguous >= needed;
  return verdict;
}

namespace {

std::map<std::string, std::vector<const RaterRecord*>> group_by_question(
    std::span<const RaterRecord> ratings) {
  std::map<std::string, std::vector<const RaterRecord*>> grouped;
  for (const auto& r : ratings) grouped[r.question_id].push_back(&r);
  return grouped;
}

}  // namespace

BootstrapResult bootstrap_filtered_accuracy(std::span<const RaterRecord> all_ratings,
                                            const std::map<std::string, int>& model_preds,
                                            const std::map<std::string, int>& golds,
                                            VoteRule rule, int replicates, FlagSet flag_set,
                                            std::uint64_t seed,
                                            const ReplicateObserver& observer) {
  auto grouped = group_by_question(all_ratings);

  std::string short_ids;
  for (const auto& [qid, records] : grouped) {
    if (records.size() < 3) short_ids += " " + qid;
  }
  if (!short_ids.empty()) {
    throw DataError("questions with fewer than 3 ratings:" + short_ids);
  }
  for (const auto& [qid, _] : grouped) {
    if (!golds.count(qid)) throw DataError("no gold answer for question " + qid);
    if (!model_preds.count(qid)) throw DataError("no model prediction for question " + qid);
  }
  if (grouped.empty()) throw DataError("no ratings supplied");

  std::vector<double> accuracies;
  std::vector<double> remaining_fractions;
  accuracies.reserve(replicates);
  remaining_fractions.reserve(replicates);

  for (int b = 0; b < replicates; ++b) {
    // per-replicate stream: reproducible regardless of scheduling
    std::seed_seq seq{static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(b)};
    std::mt19937_64 rng(seq);

    std::set<std::string> flagged;
    int kept = 0;
    int correct = 0;
    for (const auto& [qid, records] : grouped) {  // map order: stable across runs
      std::uniform_int_distribution<std::size_t> pick(0, records.size() - 1);
      std::vector<RaterRecord> committee;
      for (int i = 0; i < 3; ++i) committee.push_back(*records[pick(rng)]);
      CommitteeVerdict verdict = flag_from_committee(committee, golds.at(qid), rule);
      bool drop = (flag_set.missing_info && verdict.flags.missing_info) ||
                  (flag_set.label_error && verdict.flags.label_error) ||
                  (flag_set.ambiguous && verdict.flags.ambiguous);
      if (drop) {
        flagged.insert(qid);
        continue;
      }
      ++kept;
      if (model_preds.at(qid) == golds.at(qid)) ++correct;
    }
    double acc = kept == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(kept);
    accuracies.push_back(acc);
    remaining_fractions.push_back(static_cast<double>(kept) / static_cast<double>(grouped.size()));
    if (observer) observer(b, flagged);
  }

  auto mean_of = [](const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
  };
  auto std_of = [&](const std::vector<double>& xs, double mean) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(xs.size()));
  };

  BootstrapResult result;
  result.replicates = replicates;
  result.mean_accuracy = mean_of(accuracies);
  result.std_accuracy = std_of(accuracies, result.mean_accuracy);
  result.mean_remaining = mean_of(remaining_fractions);
  result.std_remaining = std_of(remaining_fractions, result.mean_remaining);
  return result;
}

JaccardAgreement jaccard_agreement(const std::set<int>& a, const std::set<int>& b,
                                   const std::set<int>& c) {
  std::set<int> uni = a;
  uni.insert(b.begin(), b.end());
  uni.insert(c.begin(), c.end());

  JaccardAgreement out;
  if (uni.empty()) {
    out.j_unanimous = 1.0;
    out.j_majority = 1.0;
    out.all_empty = true;
    return out;
  }
  std::size_t inter3 = 0;
  std::size_t inter2plus = 0;
  for (int v : uni) {
    int hits = (a.count(v) ? 1 : 0) + (b.count(v) ? 1 : 0) + (c.count(v) ? 1 : 0);
    if (hits == 3) ++inter3;
    if (hits >= 2) ++inter2plus;
  }
  out.j_unanimous = static_cast<double>(inter3) / static_cast<double>(uni.size());
  out.j_majority = static_cast<double>(inter2plus) / static_cast<double>(uni.size());
  return out;
}

double krippendorff_alpha(const std::vector<std::vector<std::optional<int>>>& ratings) {
  // coincidence matrix over ordered value pairs within each unit
  std::map<std::pair<int, int>, double> coincidence;
  std::map<int, double> marginals;
  double n_total = 0.0;

  for (const auto& unit : ratings) {
    std::vector<int> values;
    for (const auto& cell : unit) {
      if (cell) values.push_back(*cell);
    }
    std::size_t m = values.size();
    if (m < 2) continue;  // unpairable units carry no information
    double weight = 1.0 / static_cast<double>(m - 1);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (i == j) continue;
        coincidence[{values[i], values[j]}] += weight;
      }
    }
  }
  for (const auto& [pair, mass] : coincidence) {
    marginals[pair.first] += mass;
    n_total += mass;
  }
  if (n_total <= 0.0) throw DataError("krippendorff_alpha: no pairable ratings");

  double observed_agreement_mass = 0.0;
  for (const auto& [pair, mass] : coincidence) {
    if (pair.first == pair.second) observed_agreement_mass += mass;
  }
  double d_observed = 1.0 - observed_agreement_mass / n_total;

  double expected_agreement_mass = 0.0;
  for (const auto& [value, mass] : marginals) {
    expected_agreement_mass += mass * (mass - 1.0);
  }
  double d_expected = 1.0 - expected_agreement_mass / (n_total * (n_total - 1.0));

  if (d_expected == 0.0) {
    // a single category everywhere: perfect agreement by construction
    return d_observed == 0.0 ? 1.0 : 0.0;
  }
  return 1.0 - d_observed / d_expected;
}

AgreementReport rater_vs_vote_agreement(std::span<const RaterRecord> all_ratings,
                                        const std::map<std::string, int>& golds, VoteRule rule) {
  auto grouped = group_by_question(all_ratings);

  long votes_checked = 0;
  long missing_match = 0, label_match = 0, ambiguous_match = 0;
  double overlap_pre_sum = 0.0, overlap_post_sum = 0.0;
  long overlap_questions = 0;

  for (const auto& [qid, records] : grouped) {
    auto gold_it = golds.find(qid);
    if (gold_it == golds.end()) throw DataError("no gold answer for question " + qid);
    int gold = gold_it->second;

    std::size_t n = records.size();
    int missing = 0, label = 0, ambiguous = 0;
    for (const auto* r : records) {
      PerRaterFlags f = rater_flags(*r, gold);
      missing += f.missing_info ? 1 : 0;
      label += f.label_error ? 1 : 0;
      ambiguous += f.ambiguous ? 1 : 0;
    }
    auto vote = [&](int count) {
      return rule == VoteRule::majority ? 2 * count > static_cast<int>(n)
                                        : count == static_cast<int>(n);
    };
    bool vote_missing = vote(missing);
    bool vote_label = vote(label);
    bool vote_ambiguous = vote(ambiguous);

    for (const auto* r : records) {
      PerRaterFlags f = rater_flags(*r, gold);
      ++votes_checked;
      if (f.missing_info == vote_missing) ++missing_match;
      if (f.label_error == vote_label) ++label_match;
      if (f.ambiguous == vote_ambiguous) ++ambiguous_match;
    }

    // mean Jaccard over rater pairs; two empty selections count as agreement
    auto pair_overlap = [](const std::set<int>& x, const std::set<int>& y) {
      if (x.empty() && y.empty()) return 1.0;
      std::set<int> uni = x;
      uni.insert(y.begin(), y.end());
      std::size_t inter = 0;
      for (int v : x) {
        if (y.count(v)) ++inter;
      }
      return static_cast<double>(inter) / static_cast<double>(uni.size());
    };
    if (n >= 2) {
      double pre = 0.0, post = 0.0;
      long pairs = 0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          pre += pair_overlap(records[i]->pre_reveal.selections, records[j]->pre_reveal.selections);
          post +=
              pair_overlap(records[i]->post_reveal.selections, records[j]->post_reveal.selections);
          ++pairs;
        }
      }
      overlap_pre_sum += pre / static_cast<double>(pairs);
      overlap_post_sum += post / static_cast<double>(pairs);
      ++overlap_questions;
    }
  }

  AgreementReport report;
  if (votes_checked > 0) {
    report.missing_info = static_cast<double>(missing_match) / static_cast<double>(votes_checked);
    report.label_error = static_cast<double>(label_match) / static_cast<double>(votes_checked);
    report.ambiguous = static_cast<double>(ambiguous_match) / static_cast<double>(votes_checked);
  }
  if (overlap_questions > 0) {
    report.overlap_pre = overlap_pre_sum / static_cast<double>(overlap_questions);
    report.overlap_post = overlap_post_sum / static_cast<double>(overlap_questions);
  }
  return report;
}

// --- Welch t-test --------------------------------------------------------------

namespace {

// regularized incomplete beta I_x(a, b) via the standard continued fraction
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 200;
  constexpr double kEps = 3.0e-14;
  constexpr double kFpMin = 1.0e-300;

  double qab = a + b;
  double qap = a + 1.0;
  double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                    a * std::log(x) + b * std::log(1.0 - x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double mean_of_span(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_var(std::span<const double> xs, double mean) {
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return s / static_cast<double>(xs.size() - 1);
}

}  // namespace

TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw DataError("welch_t_test requires at least 2 samples per group");
  }
  double ma = mean_of_span(a);
  double mb = mean_of_span(b);
  double va = sample_var(a, ma);
  double vb = sample_var(b, mb);
  double na = static_cast<double>(a.size());
  double nb = static_cast<double>(b.size());

  double se2 = va / na + vb / nb;
  TTestResult result;
  if (se2 == 0.0) {
    result.t = ma == mb ? 0.0 : std::numeric_limits<double>::infinity();
    result.df = na + nb - 2.0;
    result.p_two_sided = ma == mb ? 1.0 : 0.0;
    return result;
  }
  result.t = (ma - mb) / std::sqrt(se2);
  result.df = se2 * se2 /
              ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
  // two-sided p from the t CDF: p = I_{df/(df+t^2)}(df/2, 1/2)
  double x = result.df / (result.df + result.t * result.t);
  result.p_two_sided = reg_inc_beta(result.df / 2.0, 0.5, x);
  return result;
}

}  // namespace medagent
