#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "leaflet/fusion.hpp"

namespace leaflet::eval {

using Truth = std::map<std::string, int>;  ///< image_id -> class_id

struct ConfusionEntry {
    int true_class = 0;
    int predicted_class = 0;
    std::size_t count = 0;

    bool operator==(const ConfusionEntry&) const = default;
};

struct EvaluationReport {
    std::size_t n = 0;
    double accuracy = 0.0;
    std::optional<double> top3;  ///< absent when some top_k list is shorter than 3
    std::optional<double> top5;
    std::optional<double> accuracy_high_conf;  ///< absent when the subset is empty
    std::optional<double> accuracy_low_conf;
    std::size_t n_high = 0;
    std::size_t n_low = 0;
    double image_accuracy = 0.0;  ///< from each record's image argmax
    double text_accuracy = 0.0;
    double oracle_union = 0.0;
    std::vector<ConfusionEntry> confusion_pairs;
};

inline constexpr std::size_t kNoLimit = std::numeric_limits<std::size_t>::max();

/// Throws NotFound when a prediction has no truth entry.
EvaluationReport evaluate(std::span<const fusion::PredictionRecord> predictions, const Truth& truth,
                          std::size_t confusion_limit = kNoLimit);

/// Fraction of images where either branch's argmax is the true class.
/// Throws PreconditionError when the id sets differ.
double oracle_union(const std::map<std::string, int>& image_predictions,
                    const std::map<std::string, int>& text_predictions, const Truth& truth);

/// Misclassifications grouped by (true, predicted), most frequent first.
std::vector<ConfusionEntry> confusion_report(std::span<const fusion::PredictionRecord> predictions,
                                             const Truth& truth, std::size_t limit = kNoLimit);

enum class Branch { image, text, combined };

struct BranchReport {
    double accuracy = 0.0;
    double top3 = 0.0;
    double top5 = 0.0;
};

/// Metrics of one branch using that branch's own probability ranking.
/// Requires records with probabilities.
BranchReport evaluate_branch(std::span<const fusion::PredictionRecord> predictions, const Truth& truth,
                             Branch branch);

struct WeightScore {
    double weight = 0.0;
    double accuracy = 0.0;
};

struct WeightSweep {
    std::vector<WeightScore> scores;  ///< in grid order
    double best_weight = 0.0;         ///< first weight reaching the maximum accuracy
};

/// Re-fuses each record's branch probabilities for every weight and scores accuracy.
WeightSweep sweep_text_weight(std::span<const fusion::PredictionRecord> predictions, const Truth& truth,
                              std::span<const double> weights);

nlohmann::json to_json(const EvaluationReport& report, const std::vector<std::string>& class_names);
std::string render_text(const EvaluationReport& report, const std::vector<std::string>& class_names);
std::string confusion_csv(std::span<const ConfusionEntry> pairs, const std::vector<std::string>& class_names);

}  // namespace leaflet::eval
