#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace leaflet::text {

/// Sparse row with strictly increasing indices.
struct SparseVector {
    std::vector<std::uint32_t> indices;
    std::vector<double> values;

    bool empty() const noexcept { return indices.empty(); }
    double dot(std::span<const double> dense) const;
    bool operator==(const SparseVector&) const = default;
};

/// Lowercases and splits into maximal alphanumeric runs of at least two characters.
/// Bytes of multi-byte UTF-8 sequences count as alphanumeric, so umlauts stay inside tokens.
std::vector<std::string> tokenize(std::string_view document);

/// TF-IDF vocabulary with smoothed idf: ln((1 + N) / (1 + df)) + 1.
struct TfidfVocabulary {
    std::vector<std::string> tokens;  ///< sorted; position == column index
    std::vector<double> idf;
    std::size_t document_count = 0;

    std::size_t size() const noexcept { return tokens.size(); }
    /// Column of `token`, or -1 when unknown.
    std::int64_t index_of(std::string_view token) const;

    /// Rebuilds the token lookup after `tokens` has been assigned directly.
    void reindex();

private:
    std::unordered_map<std::string, std::uint32_t> lookup_;
};

/// Throws PreconditionError for an empty corpus and Error("empty vocabulary")
/// when no document yields a token.
TfidfVocabulary fit_vectorizer(std::span<const std::string> documents);

/// Raw counts times idf, L2-normalized. Unknown tokens are ignored.
SparseVector vectorize(std::string_view document, const TfidfVocabulary& vocabulary);

struct LossAndGradient {
    double loss = 0.0;
    double gradient = 0.0;  ///< d loss / d margin
};

/// Modified Huber loss of a margin z = y * f(x):
/// 0 for z >= 1, (1 - z)^2 for -1 <= z < 1, -4z below -1.
LossAndGradient modified_huber(double margin) noexcept;

struct SgdHyperparams {
    double eta0 = 0.1;
    double tolerance = 1e-3;   ///< minimum improvement of the best mean epoch loss
    int patience = 5;          ///< epochs without improvement before eta is divided
    double eta_divisor = 5.0;
    double min_eta = 1e-6;
    int max_epochs = 1000;
    double l2 = 0.0;
    std::uint64_t seed = 42;

    bool operator==(const SgdHyperparams&) const = default;
};

struct TextModel {
    TfidfVocabulary vocabulary;
    std::vector<int> classes;     ///< class ids; row r of `weights` scores classes[r]
    std::vector<double> weights;  ///< row-major [classes.size() x vocabulary.size()]
    std::vector<double> bias;
    SgdHyperparams hyperparams;

    std::size_t n_classes() const noexcept { return classes.size(); }
    std::size_t n_features() const noexcept { return vocabulary.size(); }
    std::span<const double> row(std::size_t r) const {
        return {weights.data() + r * n_features(), n_features()};
    }
};

/// Per-class record of the adaptive schedule, for diagnostics.
struct ClassTrace {
    std::vector<double> epoch_loss;  ///< mean modified-huber loss per epoch
    std::vector<double> best_loss;   ///< best-so-far epoch loss
    std::vector<double> eta;         ///< learning rate used in each epoch
};

/// One-vs-rest SGD with the modified Huber loss and an adaptive learning rate.
/// Deterministic for a given seed; each class uses its own seeded shuffle.
TextModel train_text_model(std::span<const SparseVector> features, std::span<const int> labels,
                           std::vector<int> classes, TfidfVocabulary vocabulary, const SgdHyperparams& hp = {},
                           std::vector<ClassTrace>* trace = nullptr);

/// Raw margins w_c . x + b_c in class-table order.
std::vector<double> decision_function(const TextModel& model, const SparseVector& x);

/// Maps margins to probabilities: clamp((f + 1) / 2, 0, 1), normalized; uniform when all clamp to 0.
std::vector<double> margins_to_probabilities(std::span<const double> margins);

std::vector<double> predict_text_scores(const TextModel& model, std::string_view document);

void save_text_model(const TextModel& model, const std::filesystem::path& path);
TextModel load_text_model(const std::filesystem::path& path);

}  // namespace leaflet::text
