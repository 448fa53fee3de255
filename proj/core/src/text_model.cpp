#include "leaflet/text_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "jsonl.hpp"
#include "leaflet/error.hpp"

namespace leaflet::text {

using detail::json;

namespace {

constexpr std::string_view kFormat = "leaflet-text-model";
constexpr int kFormatVersion = 1;

bool is_word_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

}  // namespace

double SparseVector::dot(std::span<const double> dense) const {
    double sum = 0.0;
    for (std::size_t k = 0; k < indices.size(); ++k) sum += values[k] * dense[indices[k]];
    return sum;
}

std::vector<std::string> tokenize(std::string_view document) {
    std::vector<std::string> tokens;
    std::string current;
    std::size_t code_points = 0;

    auto flush = [&] {
        if (code_points >= 2) tokens.push_back(current);
        current.clear();
        code_points = 0;
    };

    for (std::size_t i = 0; i < document.size(); ++i) {
        auto c = static_cast<unsigned char>(document[i]);
        if (!is_word_byte(c)) {
            flush();
            continue;
        }
        if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
        // Latin-1 supplement capitals (U+00C0..U+00DE except U+00D7) are 0xC3 0x80..0x9E.
        if (c == 0xC3 && i + 1 < document.size()) {
            auto next = static_cast<unsigned char>(document[i + 1]);
            if (next >= 0x80 && next <= 0x9E && next != 0x97) {
                current.push_back(static_cast<char>(c));
                current.push_back(static_cast<char>(next + 0x20));
                ++code_points;
                ++i;
                continue;
            }
        }
        current.push_back(static_cast<char>(c));
        if ((c & 0xC0) != 0x80) ++code_points;  // continuation bytes extend the previous code point
    }
    flush();
    return tokens;
}

std::int64_t TfidfVocabulary::index_of(std::string_view token) const {
    auto it = lookup_.find(std::string(token));
    return it == lookup_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

void TfidfVocabulary::reindex() {
    lookup_.clear();
    lookup_.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) lookup_.emplace(tokens[i], static_cast<std::uint32_t>(i));
}

TfidfVocabulary fit_vectorizer(std::span<const std::string> documents) {
    if (documents.empty()) throw PreconditionError("fit_vectorizer needs at least one document");

    std::map<std::string, std::size_t> document_frequency;
    for (const auto& doc : documents) {
        auto tokens = tokenize(doc);
        std::set<std::string> unique(tokens.begin(), tokens.end());
        for (const auto& t : unique) ++document_frequency[t];
    }
    if (document_frequency.empty()) throw Error("empty vocabulary");

    TfidfVocabulary vocab;
    vocab.document_count = documents.size();
    const double n = static_cast<double>(documents.size());
    for (const auto& [token, df] : document_frequency) {
        vocab.tokens.push_back(token);
        vocab.idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(df))) + 1.0);
    }
    vocab.reindex();
    return vocab;
}

SparseVector vectorize(std::string_view document, const TfidfVocabulary& vocabulary) {
    std::map<std::uint32_t, double> counts;
    for (const auto& token : tokenize(document)) {
        const auto idx = vocabulary.index_of(token);
        if (idx >= 0) counts[static_cast<std::uint32_t>(idx)] += 1.0;
    }

    SparseVector out;
    double norm_sq = 0.0;
    for (const auto& [idx, count] : counts) {
        const double v = count * vocabulary.idf[idx];
        out.indices.push_back(idx);
        out.values.push_back(v);
        norm_sq += v * v;
    }
    if (norm_sq > 0.0) {
        const double norm = std::sqrt(norm_sq);
        for (auto& v : out.values) v /= norm;
    }
    return out;
}

LossAndGradient modified_huber(double margin) noexcept {
    if (margin >= 1.0) return {0.0, 0.0};
    if (margin >= -1.0) {
        const double gap = 1.0 - margin;
        return {gap * gap, -2.0 * gap};
    }
    return {-4.0 * margin, -4.0};
}

namespace {

struct BinaryFit {
    std::vector<double> weights;
    double bias = 0.0;
    ClassTrace trace;
};

BinaryFit fit_binary(std::span<const SparseVector> x, const std::vector<double>& targets, std::size_t n_features,
                     const SgdHyperparams& hp, std::uint64_t seed) {
    BinaryFit fit;
    fit.weights.assign(n_features, 0.0);
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);

    double eta = hp.eta0;
    double best = std::numeric_limits<double>::infinity();
    int stale_epochs = 0;

    for (int epoch = 0; epoch < hp.max_epochs && eta >= hp.min_eta; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (const std::size_t i : order) {
            const double y = targets[i];
            const double margin = y * (x[i].dot(fit.weights) + fit.bias);
            const auto [loss, grad] = modified_huber(margin);
            total += loss;
            if (hp.l2 > 0.0) {
                const double shrink = 1.0 - eta * hp.l2;
                for (auto& w : fit.weights) w *= shrink;
            }
            if (grad == 0.0) continue;
            const double step = -eta * grad * y;
            for (std::size_t k = 0; k < x[i].indices.size(); ++k)
                fit.weights[x[i].indices[k]] += step * x[i].values[k];
            fit.bias += step;
        }

        double epoch_loss = total / static_cast<double>(x.size());
        if (hp.l2 > 0.0) {
            double sq = 0.0;
            for (const double w : fit.weights) sq += w * w;
            epoch_loss += 0.5 * hp.l2 * sq;
        }
        fit.trace.epoch_loss.push_back(epoch_loss);
        fit.trace.eta.push_back(eta);

        if (epoch_loss > best - hp.tolerance)
            ++stale_epochs;
        else
            stale_epochs = 0;
        best = std::min(best, epoch_loss);
        fit.trace.best_loss.push_back(best);

        if (stale_epochs >= hp.patience) {
            eta /= hp.eta_divisor;
            stale_epochs = 0;
        }
    }
    return fit;
}

}  // namespace

TextModel train_text_model(std::span<const SparseVector> features, std::span<const int> labels,
                           std::vector<int> classes, TfidfVocabulary vocabulary, const SgdHyperparams& hp,
                           std::vector<ClassTrace>* trace) {
    if (features.size() != labels.size())
        throw PreconditionError("feature and label counts differ (" + std::to_string(features.size()) + " vs " +
                                std::to_string(labels.size()) + ")");
    if (features.empty()) throw PreconditionError("no training samples");
    if (hp.eta0 <= 0.0 || hp.eta_divisor <= 1.0 || hp.patience < 1 || hp.max_epochs < 1)
        throw PreconditionError("invalid SGD hyperparameters");

    const std::set<int> class_set(classes.begin(), classes.end());
    if (class_set.size() != classes.size()) throw PreconditionError("duplicate class ids");
    std::set<int> seen;
    for (const int y : labels) {
        if (!class_set.contains(y))
            throw PreconditionError("label " + std::to_string(y) + " is not in the class table");
        seen.insert(y);
    }
    if (seen.size() < 2) throw PreconditionError("training data must contain at least two distinct classes");

    const std::size_t n_features = vocabulary.size();
    for (const auto& x : features) {
        if (x.indices.size() != x.values.size()) throw PreconditionError("malformed sparse vector");
        if (!x.indices.empty() && x.indices.back() >= n_features)
            throw PreconditionError("feature index outside the vocabulary");
    }

    TextModel model;
    model.vocabulary = std::move(vocabulary);
    model.classes = std::move(classes);
    model.hyperparams = hp;
    model.weights.assign(model.classes.size() * n_features, 0.0);
    model.bias.assign(model.classes.size(), 0.0);
    if (trace) trace->assign(model.classes.size(), {});

    std::vector<double> targets(labels.size());
    for (std::size_t r = 0; r < model.classes.size(); ++r) {
        for (std::size_t i = 0; i < labels.size(); ++i) targets[i] = labels[i] == model.classes[r] ? 1.0 : -1.0;
        auto fit = fit_binary(features, targets, n_features, hp, hp.seed + 0x9E3779B97F4A7C15ull * (r + 1));
        std::copy(fit.weights.begin(), fit.weights.end(), model.weights.begin() + static_cast<std::ptrdiff_t>(r * n_features));
        model.bias[r] = fit.bias;
        if (trace) (*trace)[r] = std::move(fit.trace);
    }
    return model;
}

std::vector<double> decision_function(const TextModel& model, const SparseVector& x) {
    std::vector<double> margins(model.n_classes());
    for (std::size_t r = 0; r < margins.size(); ++r) margins[r] = x.dot(model.row(r)) + model.bias[r];
    return margins;
}

std::vector<double> margins_to_probabilities(std::span<const double> margins) {
    std::vector<double> p(margins.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
        p[i] = std::clamp((margins[i] + 1.0) / 2.0, 0.0, 1.0);
        sum += p[i];
    }
    if (sum == 0.0) {
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
        return p;
    }
    for (auto& v : p) v /= sum;
    return p;
}

std::vector<double> predict_text_scores(const TextModel& model, std::string_view document) {
    return margins_to_probabilities(decision_function(model, vectorize(document, model.vocabulary)));
}

void save_text_model(const TextModel& model, const std::filesystem::path& path) {
    const auto& hp = model.hyperparams;
    json out{
        {"format", kFormat},
        {"version", kFormatVersion},
        {"vocabulary",
         {{"tokens", model.vocabulary.tokens},
          {"idf", model.vocabulary.idf},
          {"document_count", model.vocabulary.document_count}}},
        {"classes", model.classes},
        {"n_features", model.n_features()},
        {"weights", model.weights},
        {"bias", model.bias},
        {"hyperparams",
         {{"eta0", hp.eta0},
          {"tolerance", hp.tolerance},
          {"patience", hp.patience},
          {"eta_divisor", hp.eta_divisor},
          {"min_eta", hp.min_eta},
          {"max_epochs", hp.max_epochs},
          {"l2", hp.l2},
          {"seed", hp.seed}}},
    };
    detail::write_atomically(path, out.dump());
}

TextModel load_text_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    if (j.value("format", "") != kFormat) throw ParseError(path.string(), 0, "not a text model file");
    if (j.value("version", 0) != kFormatVersion)
        throw ParseError(path.string(), 0, "unsupported text model version " + j.value("version", json()).dump());

    TextModel model;
    try {
        const auto& v = j.at("vocabulary");
        model.vocabulary.tokens = v.at("tokens").get<std::vector<std::string>>();
        model.vocabulary.idf = v.at("idf").get<std::vector<double>>();
        model.vocabulary.document_count = v.at("document_count").get<std::size_t>();
        model.vocabulary.reindex();
        model.classes = j.at("classes").get<std::vector<int>>();
        model.weights = j.at("weights").get<std::vector<double>>();
        model.bias = j.at("bias").get<std::vector<double>>();
        const auto& h = j.at("hyperparams");
        auto& hp = model.hyperparams;
        hp.eta0 = h.at("eta0").get<double>();
        hp.tolerance = h.at("tolerance").get<double>();
        hp.patience = h.at("patience").get<int>();
        hp.eta_divisor = h.at("eta_divisor").get<double>();
        hp.min_eta = h.at("min_eta").get<double>();
        hp.max_epochs = h.at("max_epochs").get<int>();
        hp.l2 = h.at("l2").get<double>();
        hp.seed = h.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    if (model.vocabulary.idf.size() != model.vocabulary.size() ||
        model.weights.size() != model.n_classes() * model.n_features() || model.bias.size() != model.n_classes())
        throw ParseError(path.string(), 0, "inconsistent model dimensions");
    return model;
}

}  // namespace leaflet::text
