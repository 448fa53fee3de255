#include "leaflet/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>

#include <nlohmann/json.hpp>

#include "leaflet/error.hpp"

namespace leaflet {

namespace {

using Setter = std::function<void(PipelineConfig&, const std::string&)>;

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw PreconditionError(key + ": '" + v + "' is not a number");
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long i = std::stoll(v, &used);
        if (used == v.size()) return i;
    } catch (const std::exception&) {
    }
    throw PreconditionError(key + ": '" + v + "' is not an integer");
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table{
        {"manifest", [](PipelineConfig& c, const std::string& v) { c.manifest = v; }},
        {"cache", [](PipelineConfig& c, const std::string& v) { c.cache = v; }},
        {"text_model", [](PipelineConfig& c, const std::string& v) { c.text_model = v; }},
        {"image_model", [](PipelineConfig& c, const std::string& v) { c.image_model = v; }},
        {"predictions", [](PipelineConfig& c, const std::string& v) { c.predictions = v; }},
        {"queue_dir", [](PipelineConfig& c, const std::string& v) { c.queue_dir = v; }},
        {"text_weight",
         [](PipelineConfig& c, const std::string& v) {
             c.text_weight = parse_double("text_weight", v);
             if (!(c.text_weight > 0.0)) throw PreconditionError("text_weight must be > 0");
         }},
        {"top_k",
         [](PipelineConfig& c, const std::string& v) {
             const auto k = parse_int("top_k", v);
             if (k < 1) throw PreconditionError("top_k must be >= 1");
             c.top_k = static_cast<std::size_t>(k);
         }},
        {"workers",
         [](PipelineConfig& c, const std::string& v) {
             const auto w = parse_int("workers", v);
             if (w < 1) throw PreconditionError("workers must be >= 1");
             c.workers = static_cast<std::size_t>(w);
         }},
        {"engine", [](PipelineConfig& c, const std::string& v) { c.engine = v; }},
        {"languages", [](PipelineConfig& c, const std::string& v) { c.languages = v; }},
        {"ocr_timeout_ms",
         [](PipelineConfig& c, const std::string& v) {
             c.ocr_timeout_ms = static_cast<long>(parse_int("ocr_timeout_ms", v));
             if (c.ocr_timeout_ms <= 0) throw PreconditionError("ocr_timeout_ms must be > 0");
         }},
        {"seed", [](PipelineConfig& c, const std::string& v) {
             const auto s = parse_int("seed", v);
             if (s < 0) throw PreconditionError("seed must be >= 0");
             c.seed = static_cast<std::uint64_t>(s);
         }},
        {"bind", [](PipelineConfig& c, const std::string& v) { c.bind = v; }},
    };
    return table;
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& [k, _] : setters()) out.push_back(k);
        return out;
    }();
    return keys;
}

std::string env_name(const std::string& key) {
    std::string out = "LEAFLET_";
    for (const char c : key) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    return out;
}

Settings environment_settings() {
    Settings out;
    for (const auto& key : config_keys())
        if (const char* v = std::getenv(env_name(key).c_str()); v && *v) out[key] = v;
    return out;
}

Settings load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string(), 0, e.what());
    }
    if (!j.is_object()) throw ParseError(path.string(), 0, "config file must be a JSON object");
    Settings out;
    for (const auto& [key, value] : j.items()) {
        if (!setters().contains(key)) throw ParseError(path.string(), 0, "unknown config key '" + key + "'");
        out[key] = value.is_string() ? value.get<std::string>() : value.dump();
    }
    return out;
}

PipelineConfig resolve_config(const Settings& file, const Settings& environment, const Settings& flags) {
    PipelineConfig config;
    for (const Settings* layer : {&file, &environment, &flags}) {
        for (const auto& [key, value] : *layer) {
            auto it = setters().find(key);
            if (it == setters().end()) throw PreconditionError("unknown setting '" + key + "'");
            it->second(config, value);
        }
    }
    return config;
}

}  // namespace leaflet
