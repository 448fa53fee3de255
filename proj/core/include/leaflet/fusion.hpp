#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace leaflet::fusion {

inline constexpr double kDefaultTextWeight = 2.0;
inline constexpr std::size_t kDefaultTopK = 3;

enum class Confidence { high, low };

std::string_view to_string(Confidence c);
Confidence confidence_from_string(std::string_view text);

struct RankedClass {
    int class_id = 0;
    double probability = 0.0;

    bool operator==(const RankedClass&) const = default;
};

/// Numerically stable softmax. Throws PreconditionError on empty or non-finite input.
std::vector<double> softmax(std::span<const double> scores);

/// (p_image + w_text * p_text) / (1 + w_text).
std::vector<double> fuse(std::span<const double> p_image, std::span<const double> p_text, double w_text);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> p);

/// high when both branches put their maximum on the same class.
Confidence label_confidence(std::span<const double> p_image, std::span<const double> p_text);

/// The k most probable classes, descending; ties by ascending class id.
std::vector<RankedClass> top_k(std::span<const double> p, std::size_t k);

struct PredictionRecord {
    std::string image_id;
    std::vector<double> p_image;  ///< empty when probabilities were elided
    std::vector<double> p_text;
    std::vector<double> p_combined;
    int predicted_class = 0;
    int image_argmax = 0;
    int text_argmax = 0;
    Confidence confidence = Confidence::high;
    std::vector<RankedClass> top_k;
    double text_weight = kDefaultTextWeight;

    bool has_probabilities() const noexcept { return !p_combined.empty(); }
    bool operator==(const PredictionRecord&) const = default;
};

/// Softmaxes each branch's emitted scores, stacks them with `w_text`, labels
/// confidence and ranks the top `k` classes.
PredictionRecord combine(std::string image_id, std::span<const double> image_scores,
                         std::span<const double> text_scores, double w_text, std::size_t k = kDefaultTopK);

}  // namespace leaflet::fusion
