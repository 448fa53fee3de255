#include "leaflet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "leaflet/error.hpp"

namespace leaflet::pipeline {

std::vector<int> class_ids(const corpus::CorpusManifest& manifest) {
    std::vector<int> ids(manifest.classes.size());
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
}

std::vector<std::string> documents_for(const RecordRefs& records, const Documents& documents) {
    std::vector<std::string> out;
    out.reserve(records.size());
    for (const auto* r : records) {
        auto it = documents.find(r->image_id);
        if (it == documents.end())
            throw NotFound("no extracted text for image '" + r->image_id + "' (run extract-text first)");
        out.push_back(it->second.document);
    }
    return out;
}

eval::Truth truth_for(const RecordRefs& records) {
    eval::Truth truth;
    for (const auto* r : records) truth[r->image_id] = r->class_id;
    return truth;
}

std::pair<RecordRefs, RecordRefs> holdout_split(const RecordRefs& records, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw PreconditionError("holdout fraction must be in (0, 1)");
    std::map<int, RecordRefs> by_class;
    for (const auto* r : records) by_class[r->class_id].push_back(r);

    std::mt19937_64 rng(seed);
    RecordRefs kept, held;
    for (auto& [cls, members] : by_class) {
        std::sort(members.begin(), members.end(),
                  [](const auto* a, const auto* b) { return a->image_id < b->image_id; });
        std::shuffle(members.begin(), members.end(), rng);
        std::size_t n_held = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(members.size())));
        if (members.size() >= 2) n_held = std::clamp<std::size_t>(n_held, 1, members.size() - 1);
        else n_held = 0;
        held.insert(held.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_held));
        kept.insert(kept.end(), members.begin() + static_cast<std::ptrdiff_t>(n_held), members.end());
    }
    return {kept, held};
}

text::TextModel train_text_branch(const corpus::CorpusManifest& manifest, const RecordRefs& records,
                                  const Documents& documents, const text::SgdHyperparams& hp) {
    const auto docs = documents_for(records, documents);
    auto vocabulary = text::fit_vectorizer(docs);
    std::vector<text::SparseVector> features;
    std::vector<int> labels;
    features.reserve(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
        features.push_back(text::vectorize(docs[i], vocabulary));
        labels.push_back(records[i]->class_id);
    }
    return text::train_text_model(features, labels, class_ids(manifest), std::move(vocabulary), hp);
}

image::ImageModel train_image_branch(const corpus::CorpusManifest& manifest, const RecordRefs& records,
                                     const image::ImageHyperparams& hp) {
    std::vector<cv::Mat> images;
    std::vector<int> labels;
    images.reserve(records.size());
    for (const auto* r : records) {
        images.push_back(corpus::load_image(manifest.resolve(*r)));
        labels.push_back(r->class_id);
    }
    return image::train_image_model_on_images(images, labels, class_ids(manifest), hp);
}

std::vector<fusion::PredictionRecord> predict(const corpus::CorpusManifest& manifest, const RecordRefs& records,
                                              const image::ImageScoreProvider& images,
                                              const text::TextModel& text_model, const Documents& documents,
                                              double text_weight, std::size_t k) {
    const std::size_t n_classes = manifest.classes.size();
    if (text_model.n_classes() != n_classes)
        throw ClassTableMismatch("text model has " + std::to_string(text_model.n_classes()) +
                                 " classes, corpus has " + std::to_string(n_classes));
    const auto docs = documents_for(records, documents);

    std::vector<fusion::PredictionRecord> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto* r = records[i];
        const auto image_scores = images.raw_scores(r->image_id, manifest.resolve(*r));
        if (image_scores.size() != n_classes)
            throw ClassTableMismatch("image scores for '" + r->image_id + "' have the wrong length");
        const auto text_scores = text::predict_text_scores(text_model, docs[i]);
        out.push_back(fusion::combine(r->image_id, image_scores, text_scores, text_weight, std::min(k, n_classes)));
    }
    return out;
}

}  // namespace leaflet::pipeline
