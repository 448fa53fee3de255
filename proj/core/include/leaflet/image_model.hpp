#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

namespace leaflet::image {

inline constexpr int kThumbnailSide = 32;
inline constexpr int kHistogramBins = 16;
inline constexpr std::size_t kThumbnailLength = kThumbnailSide * kThumbnailSide * 3;  // 3072
inline constexpr std::size_t kFeatureLength = kThumbnailLength + 3 * kHistogramBins;  // 3120

/// 32x32 bilinear RGB thumbnail (interleaved R, G, B, row-major) in [0, 1],
/// followed by normalized 16-bin histograms of the R, G and B channels.
struct ImageFeatureVector {
    std::vector<double> values;

    bool operator==(const ImageFeatureVector&) const = default;
};

/// Accepts 8-bit gray, BGR or BGRA images; gray is expanded to three equal channels.
ImageFeatureVector image_features(const cv::Mat& image);

struct SaturationRange {
    double lo = 0.5;
    double hi = 1.5;

    bool operator==(const SaturationRange&) const = default;
};

/// RGB -> HSV, S *= factor (clamped to [0, 1]), HSV -> RGB.
cv::Mat scale_saturation(const cv::Mat& image, double factor);

/// scale_saturation with a factor drawn uniformly from `range`.
cv::Mat jitter_saturation(const cv::Mat& image, SaturationRange range, std::mt19937_64& rng);

struct ImageHyperparams {
    double learning_rate = 0.001;
    double momentum = 0.95;
    int batch_size = 16;
    int epochs = 30;
    std::uint64_t seed = 7;
    bool saturation_jitter = false;
    SaturationRange saturation{};
    int jitter_copies = 1;  ///< extra jittered samples per training image

    bool operator==(const ImageHyperparams&) const = default;
};

/// Multinomial logistic regression over standardized image features.
struct ImageModel {
    std::vector<int> classes;
    std::vector<double> weights;  ///< row-major [classes.size() x kFeatureLength]
    std::vector<double> bias;
    std::vector<double> feature_mean;
    std::vector<double> feature_scale;
    ImageHyperparams hyperparams;

    std::size_t n_classes() const noexcept { return classes.size(); }
};

/// Mini-batch SGD with momentum on softmax cross-entropy. Deterministic per seed.
ImageModel train_image_model(std::span<const ImageFeatureVector> features, std::span<const int> labels,
                             std::vector<int> classes, const ImageHyperparams& hp = {});

/// Same, starting from images; adds saturation-jittered copies when enabled.
ImageModel train_image_model_on_images(std::span<const cv::Mat> images, std::span<const int> labels,
                                       std::vector<int> classes, const ImageHyperparams& hp = {});

std::vector<double> image_logits(const ImageModel& model, const ImageFeatureVector& features);

/// Softmax of the linear logits.
std::vector<double> predict_image_scores(const ImageModel& model, const cv::Mat& image);

void save_image_model(const ImageModel& model, const std::filesystem::path& path);
ImageModel load_image_model(const std::filesystem::path& path);

/// Per-image raw class scores produced outside this library (e.g. a fine-tuned CNN).
struct ExternalScores {
    std::vector<std::string> classes;
    std::string source;
    std::map<std::string, std::vector<double>> scores;  ///< image_id -> raw scores
};

/// Parses an external scores file and checks its class table against `expected_classes`
/// (names and order). Throws ClassTableMismatch or ParseError.
ExternalScores load_external_scores(const std::filesystem::path& path,
                                    const std::vector<std::string>& expected_classes);
void save_external_scores(const ExternalScores& scores, const std::filesystem::path& path);

/// Source of raw image-branch scores, one entry per class in class-table order.
class ImageScoreProvider {
public:
    virtual ~ImageScoreProvider() = default;
    virtual std::vector<double> raw_scores(const std::string& image_id, const std::filesystem::path& image_path) const = 0;
};

/// Emits the native model's probabilities; fusion softmaxes them again, as it does the text branch.
class NativeScoreProvider final : public ImageScoreProvider {
public:
    explicit NativeScoreProvider(const ImageModel& model) : model_(model) {}
    std::vector<double> raw_scores(const std::string& image_id, const std::filesystem::path& image_path) const override;

private:
    const ImageModel& model_;
};

class ExternalScoreProvider final : public ImageScoreProvider {
public:
    explicit ExternalScoreProvider(const ExternalScores& scores) : scores_(scores) {}
    /// Throws NotFound for images absent from the file.
    std::vector<double> raw_scores(const std::string& image_id, const std::filesystem::path& image_path) const override;

private:
    const ExternalScores& scores_;
};

}  // namespace leaflet::image
