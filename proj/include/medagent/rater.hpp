#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "medagent/errors.hpp"

namespace medagent {

// One physician rating of one question, following the two-step protocol:
// answer first, then re-answer with the answer key revealed.
struct PreReveal {
  bool any_appropriate = true;
  std::set<int> selections;  // multi-select answer options
  bool missing_info = false;
  std::optional<bool> would_change;  // asked only when missing_info
};

struct PostReveal {
  bool changed = false;
  std::set<int> selections;  // effective final selections (copy of pre when unchanged)
};

struct RaterRecord {
  std::string question_id;
  std::string rater_id;
  PreReveal pre_reveal;
  PostReveal post_reveal;
};

nlohmann::json to_json(const RaterRecord&);
RaterRecord rater_from_json(const nlohmann::json&);
std::vector<RaterRecord> load_rater_file(const std::filesystem::path& path);
std::vector<std::string> validate_record(const RaterRecord&);

enum class VoteRule { majority, unanimous };
VoteRule vote_rule_from_string(const std::string& s);
std::string to_string(VoteRule rule);

struct FlagSet {
  bool missing_info = false;
  bool label_error = false;
  bool ambiguous = false;

  bool any() const { return missing_info || label_error || ambiguous; }
};

struct CommitteeVerdict {
  std::string question_id;
  FlagSet flags;
  VoteRule vote_rule = VoteRule::majority;
};

// Per-rater flags aggregated over a committee of exactly three records:
//   missing_info: flagged pre-reveal as missing AND consequential
//   label_error:  post-reveal selections exclude the gold option
//   ambiguous:    post-reveal selections keep more than one option
// majority needs >= 2 of 3, unanimous all 3.
CommitteeVerdict flag_from_committee(std::span<const RaterRecord> records, int gold,
                                     VoteRule rule);

struct PerRaterFlags {
  bool missing_info = false;
  bool label_error = false;
  bool ambiguous = false;
};

PerRaterFlags rater_flags(const RaterRecord& r, int gold);

struct BootstrapResult {
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double mean_remaining = 0.0;
  double std_remaining = 0.0;
  int replicates = 0;
};

// Called once per replicate with the flagged-and-dropped question ids.
using ReplicateObserver = std::function<void(int replicate, const std::set<std::string>& flagged)>;

// Samples a committee of three ratings per question with replacement, flags,
// drops flagged questions whose flag kind is in flag_set, and scores the model
// on the remainder; B replicates. Committee draws depend only on
// (seed, replicate, question order), never on the vote rule, so runs with
// different rules over one seed see identical committees.
BootstrapResult bootstrap_filtered_accuracy(std::span<const RaterRecord> all_ratings,
                                            const std::map<std::string, int>& model_preds,
                                            const std::map<std::string, int>& golds,
                                            VoteRule rule, int replicates, FlagSet flag_set,
                                            std::uint64_t seed,
                                            const ReplicateObserver& observer = nullptr);

struct JaccardAgreement {
  double j_unanimous = 0.0;  // |A n B n C| / |A u B u C|
  double j_majority = 0.0;   // |(A n B) u (A n C) u (B n C)| / |A u B u C|
  bool all_empty = false;    // convention: both 1.0, flagged
};

JaccardAgreement jaccard_agreement(const std::set<int>& a, const std::set<int>& b,
                                   const std::set<int>& c);

// Nominal-metric Krippendorff alpha over a question x rater matrix with
// missing cells. Throws DataError when no question has two ratings.
double krippendorff_alpha(const std::vector<std::vector<std::optional<int>>>& ratings);

struct AgreementReport {
  // fraction of individual ratings matching the committee vote, per flag task
  double missing_info = 0.0;
  double label_error = 0.0;
  double ambiguous = 0.0;
  // mean pairwise Jaccard of answer selections
  double overlap_pre = 0.0;
  double overlap_post = 0.0;
};

AgreementReport rater_vs_vote_agreement(std::span<const RaterRecord> all_ratings,
                                        const std::map<std::string, int>& golds, VoteRule rule);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
};

// Welch's two-sample t-test (unequal variances).
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace medagent
