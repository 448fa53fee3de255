#include "leaflet/predictions.hpp"

#include "jsonl.hpp"
#include "leaflet/error.hpp"

namespace leaflet::fusion {

using detail::json;

namespace {
constexpr std::string_view kVersion = "1";
}

void save_predictions(const PredictionFile& file, const std::filesystem::path& path, bool include_probabilities) {
    std::string out = json{{"type", "header"},
                           {"version", kVersion},
                           {"classes", file.classes},
                           {"text_weight", file.text_weight},
                           {"top_k", file.top_k},
                           {"image_source", file.image_source}}
                          .dump();
    out += '\n';
    for (const auto& r : file.records) {
        json ranked = json::array();
        for (const auto& c : r.top_k) ranked.push_back({{"class_id", c.class_id}, {"probability", c.probability}});
        json line{{"type", "prediction"},
                  {"image_id", r.image_id},
                  {"predicted_class", r.predicted_class},
                  {"confidence", to_string(r.confidence)},
                  {"image_argmax", r.image_argmax},
                  {"text_argmax", r.text_argmax},
                  {"text_weight", r.text_weight},
                  {"top_k", ranked}};
        if (include_probabilities && r.has_probabilities()) {
            line["p_image"] = r.p_image;
            line["p_text"] = r.p_text;
            line["p_combined"] = r.p_combined;
        }
        out += line.dump();
        out += '\n';
    }
    detail::write_atomically(path, out);
}

PredictionFile load_predictions(const std::filesystem::path& path) {
    PredictionFile file;
    bool have_header = false;
    detail::read_jsonl(path, [&](const json& obj, std::size_t line) {
        const auto type = detail::field<std::string>(obj, "type", path, line);
        if (type == "header") {
            const auto version = detail::field<std::string>(obj, "version", path, line);
            if (version != kVersion)
                throw ParseError(path.string(), line, "unsupported prediction file version '" + version + "'");
            file.classes = detail::field<std::vector<std::string>>(obj, "classes", path, line);
            file.text_weight = detail::field<double>(obj, "text_weight", path, line);
            file.top_k = detail::field<std::size_t>(obj, "top_k", path, line);
            file.image_source = obj.value("image_source", "native");
            have_header = true;
            return;
        }
        if (type != "prediction") throw ParseError(path.string(), line, "unknown record type '" + type + "'");
        if (!have_header) throw ParseError(path.string(), line, "prediction before header");

        PredictionRecord r;
        r.image_id = detail::field<std::string>(obj, "image_id", path, line);
        r.predicted_class = detail::field<int>(obj, "predicted_class", path, line);
        try {
            r.confidence = confidence_from_string(detail::field<std::string>(obj, "confidence", path, line));
        } catch (const PreconditionError& e) {
            throw ParseError(path.string(), line, e.what());
        }
        r.image_argmax = detail::field<int>(obj, "image_argmax", path, line);
        r.text_argmax = detail::field<int>(obj, "text_argmax", path, line);
        r.text_weight = detail::field<double>(obj, "text_weight", path, line);
        for (const auto& c : detail::field<json>(obj, "top_k", path, line)) {
            if (!c.is_object() || !c.contains("class_id") || !c.contains("probability"))
                throw ParseError(path.string(), line, "malformed top_k entry");
            r.top_k.push_back({c["class_id"].get<int>(), c["probability"].get<double>()});
        }
        if (obj.contains("p_combined")) {
            r.p_image = detail::field<std::vector<double>>(obj, "p_image", path, line);
            r.p_text = detail::field<std::vector<double>>(obj, "p_text", path, line);
            r.p_combined = detail::field<std::vector<double>>(obj, "p_combined", path, line);
            if (r.p_image.size() != file.classes.size() || r.p_text.size() != file.classes.size() ||
                r.p_combined.size() != file.classes.size())
                throw ParseError(path.string(), line, "probability vector length differs from the class table");
        }
        file.records.push_back(std::move(r));
    });
    if (!have_header) throw ParseError(path.string(), 0, "missing header");
    return file;
}

}  // namespace leaflet::fusion
