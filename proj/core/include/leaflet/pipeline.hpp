#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "leaflet/corpus.hpp"
#include "leaflet/evaluation.hpp"
#include "leaflet/extraction_cache.hpp"
#include "leaflet/fusion.hpp"
#include "leaflet/image_model.hpp"
#include "leaflet/text_model.hpp"

namespace leaflet::pipeline {

using Documents = std::map<std::string, ocr::ExtractedDocument>;
using RecordRefs = std::vector<const corpus::ImageRecord*>;

/// Class ids 0..n-1 of the manifest's class table.
std::vector<int> class_ids(const corpus::CorpusManifest& manifest);

/// The extracted document of each record, in order. Throws NotFound for records
/// missing from `documents`.
std::vector<std::string> documents_for(const RecordRefs& records, const Documents& documents);

eval::Truth truth_for(const RecordRefs& records);

/// Splits records per class into (kept, held out); roughly `fraction` of each class
/// is held out, at least one image when the class has two or more. Seeded.
std::pair<RecordRefs, RecordRefs> holdout_split(const RecordRefs& records, double fraction, std::uint64_t seed);

text::TextModel train_text_branch(const corpus::CorpusManifest& manifest, const RecordRefs& records,
                                  const Documents& documents, const text::SgdHyperparams& hp = {});

image::ImageModel train_image_branch(const corpus::CorpusManifest& manifest, const RecordRefs& records,
                                     const image::ImageHyperparams& hp = {});

/// Image scores from `images`, text probabilities from `text_model`, fused per record.
std::vector<fusion::PredictionRecord> predict(const corpus::CorpusManifest& manifest, const RecordRefs& records,
                                              const image::ImageScoreProvider& images,
                                              const text::TextModel& text_model, const Documents& documents,
                                              double text_weight, std::size_t k);

}  // namespace leaflet::pipeline
