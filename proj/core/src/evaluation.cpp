#include "leaflet/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "leaflet/error.hpp"

namespace leaflet::eval {

using fusion::PredictionRecord;
using nlohmann::json;

namespace {

int truth_of(const Truth& truth, const std::string& image_id) {
    auto it = truth.find(image_id);
    if (it == truth.end()) throw NotFound("no ground truth for image '" + image_id + "'");
    return it->second;
}

bool in_first(const std::vector<fusion::RankedClass>& ranked, int cls, std::size_t k) {
    const std::size_t limit = std::min(k, ranked.size());
    for (std::size_t i = 0; i < limit; ++i)
        if (ranked[i].class_id == cls) return true;
    return false;
}

std::string class_name(const std::vector<std::string>& names, int id) {
    if (id >= 0 && static_cast<std::size_t>(id) < names.size()) return names[id];
    return std::to_string(id);
}

std::string fixed(double v, int precision = 4) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

}  // namespace

EvaluationReport evaluate(std::span<const PredictionRecord> predictions, const Truth& truth,
                          std::size_t confusion_limit) {
    EvaluationReport report;
    report.n = predictions.size();
    std::size_t correct = 0, correct_high = 0, correct_low = 0, hit3 = 0, hit5 = 0;
    std::size_t image_correct = 0, text_correct = 0, union_correct = 0;
    bool can_top3 = true, can_top5 = true;

    for (const auto& p : predictions) {
        const int y = truth_of(truth, p.image_id);
        const bool ok = p.predicted_class == y;
        correct += ok;
        if (p.confidence == fusion::Confidence::high) {
            ++report.n_high;
            correct_high += ok;
        } else {
            ++report.n_low;
            correct_low += ok;
        }
        can_top3 = can_top3 && p.top_k.size() >= 3;
        can_top5 = can_top5 && p.top_k.size() >= 5;
        hit3 += in_first(p.top_k, y, 3);
        hit5 += in_first(p.top_k, y, 5);
        image_correct += p.image_argmax == y;
        text_correct += p.text_argmax == y;
        union_correct += p.image_argmax == y || p.text_argmax == y;
    }

    if (report.n > 0) {
        const double n = static_cast<double>(report.n);
        report.accuracy = correct / n;
        if (can_top3) report.top3 = hit3 / n;
        if (can_top5) report.top5 = hit5 / n;
        report.image_accuracy = image_correct / n;
        report.text_accuracy = text_correct / n;
        report.oracle_union = union_correct / n;
    }
    if (report.n_high > 0) report.accuracy_high_conf = static_cast<double>(correct_high) / report.n_high;
    if (report.n_low > 0) report.accuracy_low_conf = static_cast<double>(correct_low) / report.n_low;
    report.confusion_pairs = confusion_report(predictions, truth, confusion_limit);
    return report;
}

double oracle_union(const std::map<std::string, int>& image_predictions,
                    const std::map<std::string, int>& text_predictions, const Truth& truth) {
    if (image_predictions.size() != text_predictions.size())
        throw PreconditionError("image and text predictions cover different images");
    if (image_predictions.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& [id, image_class] : image_predictions) {
        auto it = text_predictions.find(id);
        if (it == text_predictions.end())
            throw PreconditionError("image '" + id + "' has no text prediction");
        const int y = truth_of(truth, id);
        hits += image_class == y || it->second == y;
    }
    return static_cast<double>(hits) / static_cast<double>(image_predictions.size());
}

std::vector<ConfusionEntry> confusion_report(std::span<const PredictionRecord> predictions, const Truth& truth,
                                             std::size_t limit) {
    std::map<std::pair<int, int>, std::size_t> counts;
    for (const auto& p : predictions) {
        const int y = truth_of(truth, p.image_id);
        if (p.predicted_class != y) ++counts[{y, p.predicted_class}];
    }
    std::vector<ConfusionEntry> out;
    out.reserve(counts.size());
    for (const auto& [key, count] : counts) out.push_back({key.first, key.second, count});
    std::stable_sort(out.begin(), out.end(), [](const ConfusionEntry& a, const ConfusionEntry& b) {
        if (a.count != b.count) return a.count > b.count;
        return std::tie(a.true_class, a.predicted_class) < std::tie(b.true_class, b.predicted_class);
    });
    if (out.size() > limit) out.resize(limit);
    return out;
}

BranchReport evaluate_branch(std::span<const PredictionRecord> predictions, const Truth& truth, Branch branch) {
    BranchReport report;
    if (predictions.empty()) return report;
    std::size_t hit1 = 0, hit3 = 0, hit5 = 0;
    for (const auto& p : predictions) {
        if (!p.has_probabilities())
            throw PreconditionError("branch metrics need probability vectors (prediction file written with --no-probs?)");
        const auto& probs = branch == Branch::image ? p.p_image : branch == Branch::text ? p.p_text : p.p_combined;
        const int y = truth_of(truth, p.image_id);
        const auto ranked = fusion::top_k(probs, std::min<std::size_t>(5, probs.size()));
        hit1 += in_first(ranked, y, 1);
        hit3 += in_first(ranked, y, 3);
        hit5 += in_first(ranked, y, 5);
    }
    const double n = static_cast<double>(predictions.size());
    report.accuracy = hit1 / n;
    report.top3 = hit3 / n;
    report.top5 = hit5 / n;
    return report;
}

WeightSweep sweep_text_weight(std::span<const PredictionRecord> predictions, const Truth& truth,
                              std::span<const double> weights) {
    if (weights.empty()) throw PreconditionError("empty weight grid");
    WeightSweep sweep;
    double best = -1.0;
    for (const double w : weights) {
        std::size_t correct = 0;
        for (const auto& p : predictions) {
            if (!p.has_probabilities()) throw PreconditionError("weight sweep needs probability vectors");
            const auto fused = fusion::fuse(p.p_image, p.p_text, w);
            correct += static_cast<int>(fusion::argmax(fused)) == truth_of(truth, p.image_id);
        }
        const double acc = predictions.empty() ? 0.0 : static_cast<double>(correct) / predictions.size();
        sweep.scores.push_back({w, acc});
        if (acc > best) {
            best = acc;
            sweep.best_weight = w;
        }
    }
    return sweep;
}

json to_json(const EvaluationReport& r, const std::vector<std::string>& class_names) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json pairs = json::array();
    for (const auto& e : r.confusion_pairs)
        pairs.push_back({{"true_class", e.true_class},
                         {"true_name", class_name(class_names, e.true_class)},
                         {"predicted_class", e.predicted_class},
                         {"predicted_name", class_name(class_names, e.predicted_class)},
                         {"count", e.count}});
    return {{"n", r.n},
            {"accuracy", r.accuracy},
            {"top3", opt(r.top3)},
            {"top5", opt(r.top5)},
            {"accuracy_high_conf", opt(r.accuracy_high_conf)},
            {"accuracy_low_conf", opt(r.accuracy_low_conf)},
            {"n_high", r.n_high},
            {"n_low", r.n_low},
            {"image_accuracy", r.image_accuracy},
            {"text_accuracy", r.text_accuracy},
            {"oracle_union", r.oracle_union},
            {"confusion_pairs", pairs}};
}

std::string render_text(const EvaluationReport& r, const std::vector<std::string>& class_names) {
    auto opt = [](const std::optional<double>& v) { return v ? fixed(*v) : std::string("n/a"); };
    std::ostringstream os;
    char line[160];
    auto row = [&](const char* label, const std::string& value) {
        std::snprintf(line, sizeof line, "%-24s %12s\n", label, value.c_str());
        os << line;
    };
    row("images", std::to_string(r.n));
    row("accuracy", fixed(r.accuracy));
    row("top-3", opt(r.top3));
    row("top-5", opt(r.top5));
    row("image branch accuracy", fixed(r.image_accuracy));
    row("text branch accuracy", fixed(r.text_accuracy));
    row("union oracle", fixed(r.oracle_union));
    row("high confidence", std::to_string(r.n_high));
    row("  accuracy", opt(r.accuracy_high_conf));
    row("low confidence", std::to_string(r.n_low));
    row("  accuracy", opt(r.accuracy_low_conf));
    if (!r.confusion_pairs.empty()) {
        os << "\nmost frequent confusions\n";
        std::snprintf(line, sizeof line, "%-28s %-28s %6s\n", "true", "predicted", "count");
        os << line;
        for (const auto& e : r.confusion_pairs) {
            std::snprintf(line, sizeof line, "%-28s %-28s %6zu\n", class_name(class_names, e.true_class).c_str(),
                          class_name(class_names, e.predicted_class).c_str(), e.count);
            os << line;
        }
    }
    return os.str();
}

std::string confusion_csv(std::span<const ConfusionEntry> pairs, const std::vector<std::string>& class_names) {
    auto quote = [](const std::string& s) {
        std::string out = "\"";
        for (const char c : s) {
            if (c == '"') out += '"';
            out += c;
        }
        return out + "\"";
    };
    std::string out = "true_class,true_name,predicted_class,predicted_name,count\n";
    for (const auto& e : pairs) {
        out += std::to_string(e.true_class) + "," + quote(class_name(class_names, e.true_class)) + "," +
               std::to_string(e.predicted_class) + "," + quote(class_name(class_names, e.predicted_class)) + "," +
               std::to_string(e.count) + "\n";
    }
    return out;
}

}  // namespace leaflet::eval
