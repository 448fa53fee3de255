#include "leaflet/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "leaflet/error.hpp"

namespace leaflet::fusion {

std::string_view to_string(Confidence c) {
    return c == Confidence::high ? "high" : "low";
}

Confidence confidence_from_string(std::string_view text) {
    if (text == "high") return Confidence::high;
    if (text == "low") return Confidence::low;
    throw PreconditionError("unknown confidence label '" + std::string(text) + "'");
}

std::vector<double> softmax(std::span<const double> scores) {
    if (scores.empty()) throw PreconditionError("softmax of an empty vector");
    for (const double s : scores)
        if (!std::isfinite(s)) throw PreconditionError("softmax input is not finite");

    const double max = *std::max_element(scores.begin(), scores.end());
    std::vector<double> p(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        p[i] = std::exp(scores[i] - max);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

std::vector<double> fuse(std::span<const double> p_image, std::span<const double> p_text, double w_text) {
    if (p_image.size() != p_text.size())
        throw PreconditionError("branch vectors differ in length (" + std::to_string(p_image.size()) + " vs " +
                                std::to_string(p_text.size()) + ")");
    if (!(w_text > 0.0) || !std::isfinite(w_text)) throw PreconditionError("text weight must be a positive number");

    std::vector<double> out(p_image.size());
    const double norm = 1.0 + w_text;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (p_image[i] + w_text * p_text[i]) / norm;
    return out;
}

std::size_t argmax(std::span<const double> p) {
    if (p.empty()) throw PreconditionError("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

Confidence label_confidence(std::span<const double> p_image, std::span<const double> p_text) {
    if (p_image.size() != p_text.size()) throw PreconditionError("branch vectors differ in length");
    return argmax(p_image) == argmax(p_text) ? Confidence::high : Confidence::low;
}

std::vector<RankedClass> top_k(std::span<const double> p, std::size_t k) {
    if (k < 1 || k > p.size())
        throw PreconditionError("k=" + std::to_string(k) + " outside 1.." + std::to_string(p.size()));
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
    std::vector<RankedClass> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back({static_cast<int>(order[i]), p[order[i]]});
    return out;
}

PredictionRecord combine(std::string image_id, std::span<const double> image_scores,
                         std::span<const double> text_scores, double w_text, std::size_t k) {
    PredictionRecord r;
    r.image_id = std::move(image_id);
    r.p_image = softmax(image_scores);
    r.p_text = softmax(text_scores);
    r.p_combined = fuse(r.p_image, r.p_text, w_text);
    r.image_argmax = static_cast<int>(argmax(r.p_image));
    r.text_argmax = static_cast<int>(argmax(r.p_text));
    r.confidence = r.image_argmax == r.text_argmax ? Confidence::high : Confidence::low;
    r.top_k = top_k(r.p_combined, std::min(k, r.p_combined.size()));
    r.predicted_class = r.top_k.front().class_id;
    r.text_weight = w_text;
    return r;
}

}  // namespace leaflet::fusion
