#pragma once

#include <string_view>
#include <vector>

namespace medagent {

// Published reference results for the benchmarks this harness targets. They
// come from proprietary frontier models and are not reproducible with the
// deterministic backends shipped here; reports display them as context only.
struct ReferenceResult {
  std::string_view benchmark;
  std::string_view metric;
  double value;
};

inline const std::vector<ReferenceResult> kReferenceResults{
    {"MedQA (USMLE)", "accuracy", 0.911},
    {"MedQA (USMLE), errors+missing filtered (unanimous)", "accuracy", 0.918},
    {"NEJM CPC", "top-1 accuracy", 0.307},
    {"NEJM CPC", "top-10 accuracy", 0.723},
    {"GeneTuring", "average accuracy", 0.533},
    {"EHR needle-in-a-haystack", "precision", 0.77},
    {"EHR needle-in-a-haystack", "recall", 0.76},
    {"EHR needle-in-a-haystack", "f1", 0.77},
    {"MedVidQA video-only", "mIoU", 0.434},
    {"MedVidQA video+subtitle", "mIoU", 0.658},
    {"EHR rater agreement", "jaccard unanimous", 0.83},
    {"EHR rater agreement", "jaccard majority", 0.915},
    {"EHR rater agreement", "krippendorff alpha", 0.77},
};

// Dataset scale constants used for sanity checks in loaders and reports.
inline constexpr int kMedqaTestSize = 1273;
inline constexpr int kMedqaTrainSize = 10177;
inline constexpr int kCotDatasetSize = 20354;  // two reasoning paths per train question
inline constexpr int kEhrHaystackSize = 200;   // 121 positive / 79 negative

}  // namespace medagent
