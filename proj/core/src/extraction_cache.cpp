#include "leaflet/extraction_cache.hpp"

#include <fstream>

#include "jsonl.hpp"
#include "leaflet/error.hpp"

namespace leaflet::ocr {

namespace fs = std::filesystem;
using detail::json;

namespace {

json header_json(const std::string& engine_version, const std::string& methods_version) {
    return {{"type", "header"}, {"engine_version", engine_version}, {"methods_version", methods_version}};
}

json document_json(const ExtractedDocument& doc) {
    return {{"type", "document"},
            {"image_id", doc.image_id},
            {"method_texts", doc.method_texts},
            {"document", doc.document},
            {"engine_version", doc.engine_version},
            {"methods_version", doc.methods_version}};
}

struct Scan {
    std::map<std::string, ExtractedDocument> documents;
    std::string last_engine_version;
    std::string last_methods_version;
    bool has_header = false;
};

/// Reads every line; keeps documents matching the given versions, or the
/// versions of the final header when `engine_version` is null.
Scan scan_cache(const fs::path& path, const std::string* engine_version, const std::string* methods_version) {
    Scan scan;
    std::vector<ExtractedDocument> all;
    detail::read_jsonl(path, [&](const json& obj, std::size_t line) {
        const auto type = detail::field<std::string>(obj, "type", path, line);
        if (type == "header") {
            scan.last_engine_version = detail::field<std::string>(obj, "engine_version", path, line);
            scan.last_methods_version = detail::field<std::string>(obj, "methods_version", path, line);
            scan.has_header = true;
            return;
        }
        if (type != "document") throw ParseError(path.string(), line, "unknown record type '" + type + "'");
        ExtractedDocument doc;
        doc.image_id = detail::field<std::string>(obj, "image_id", path, line);
        doc.method_texts = detail::field<std::vector<std::string>>(obj, "method_texts", path, line);
        doc.document = detail::field<std::string>(obj, "document", path, line);
        doc.engine_version = detail::field<std::string>(obj, "engine_version", path, line);
        doc.methods_version = detail::field<std::string>(obj, "methods_version", path, line);
        if (doc.document != join_method_texts(doc.method_texts))
            throw ParseError(path.string(), line, "document is not the join of its method texts");
        all.push_back(std::move(doc));
    });

    const std::string& ev = engine_version ? *engine_version : scan.last_engine_version;
    const std::string& mv = methods_version ? *methods_version : scan.last_methods_version;
    for (auto& doc : all)
        if (doc.engine_version == ev && doc.methods_version == mv) scan.documents[doc.image_id] = std::move(doc);
    return scan;
}

void append_line(const fs::path& path, const json& value) {
    std::ofstream out(path, std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot append to " + path.string());
    out << value.dump() << '\n';
    out.flush();
    if (!out) throw Error("short write to " + path.string());
}

}  // namespace

ExtractionCache::ExtractionCache(fs::path path, std::string engine_version, std::string methods_version)
    : path_(std::move(path)), engine_version_(std::move(engine_version)), methods_version_(std::move(methods_version)) {
    if (fs::exists(path_)) {
        auto scan = scan_cache(path_, &engine_version_, &methods_version_);
        entries_ = std::move(scan.documents);
        if (scan.has_header && scan.last_engine_version == engine_version_ &&
            scan.last_methods_version == methods_version_)
            return;
    } else if (path_.has_parent_path()) {
        fs::create_directories(path_.parent_path());
    }
    append_line(path_, header_json(engine_version_, methods_version_));
}

std::optional<ExtractedDocument> ExtractionCache::find(const std::string& image_id) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(image_id);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ExtractionCache::store(const ExtractedDocument& document) {
    if (document.engine_version != engine_version_ || document.methods_version != methods_version_)
        throw PreconditionError("document versions do not match the cache for " + document.image_id);
    if (document.document != join_method_texts(document.method_texts))
        throw PreconditionError("document is not the join of its method texts for " + document.image_id);
    std::lock_guard lock(mutex_);
    append_line(path_, document_json(document));
    entries_[document.image_id] = document;
}

std::size_t ExtractionCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::map<std::string, ExtractedDocument> read_cache_documents(const fs::path& path) {
    return scan_cache(path, nullptr, nullptr).documents;
}

}  // namespace leaflet::ocr
