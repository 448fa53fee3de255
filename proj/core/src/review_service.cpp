#include "leaflet/review_service.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "leaflet/error.hpp"

namespace leaflet::review {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

std::string encode_path_segment(const std::string& id) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    for (const unsigned char c : id) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~' || c == '/') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 15]);
        }
    }
    return out;
}

std::string image_url(const std::string& image_id) {
    return "/images/" + encode_path_segment(image_id);
}

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
    reply(res, status, json{{"error", message}});
}

json summary_json(const ReviewItem& item) {
    json j{{"item_id", item.item_id},
           {"image_id", item.image_id},
           {"image_url", image_url(item.image_id)},
           {"status", item.status == Status::pending ? "pending" : "resolved"}};
    if (!item.top3.empty())
        j["top1"] = {{"class_id", item.top3.front().class_id},
                     {"class_name", item.top3.front().class_name},
                     {"probability", item.top3.front().probability}};
    return j;
}

json detail_json(const ReviewItem& item) {
    json j = to_json(item);
    j["image_url"] = image_url(item.image_id);
    j.erase("image_path");
    return j;
}

std::string content_type_for(const fs::path& path) {
    auto ext = path.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".bmp") return "image/bmp";
    return "application/octet-stream";
}

}  // namespace

struct ReviewService::Impl {
    ReviewQueue& queue;
    ServiceOptions options;
    std::map<std::string, fs::path> image_paths;
    httplib::Server server;
    std::thread thread;
    int port = -1;

    Impl(ReviewQueue& q, const corpus::CorpusManifest* manifest, ServiceOptions opts)
        : queue(q), options(std::move(opts)) {
        if (manifest)
            for (const auto& r : manifest->records) image_paths[r.image_id] = manifest->resolve(r);
        routes();
    }

    void routes() {
        server.Get("/api/queue", [this](const httplib::Request& req, httplib::Response& res) {
            std::optional<Status> status = Status::pending;
            const std::string s = req.has_param("status") ? req.get_param_value("status") : "pending";
            if (s == "resolved")
                status = Status::resolved;
            else if (s == "all")
                status.reset();
            else if (s != "pending")
                return reply_error(res, 400, "status must be pending, resolved or all");
            std::size_t limit = 50;
            if (req.has_param("limit")) {
                try {
                    const long long v = std::stoll(req.get_param_value("limit"));
                    if (v < 0) throw std::invalid_argument("negative");
                    limit = static_cast<std::size_t>(v);
                } catch (const std::exception&) {
                    return reply_error(res, 400, "limit must be a non-negative integer");
                }
            }
            json items = json::array();
            for (const auto& item : queue.list(status, limit)) items.push_back(summary_json(item));
            reply(res, 200, json{{"items", items}});
        });

        server.Get("/api/items/:id", [this](const httplib::Request& req, httplib::Response& res) {
            const auto item = queue.get(req.path_params.at("id"));
            if (!item) return reply_error(res, 404, "unknown item");
            reply(res, 200, detail_json(*item));
        });

        server.Post("/api/items/:id/resolution", [this](const httplib::Request& req, httplib::Response& res) {
            const auto id = req.path_params.at("id");
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::exception&) {
                return reply_error(res, 400, "body is not valid JSON");
            }
            if (!body.is_object()) return reply_error(res, 400, "body must be a JSON object");
            if (!body.contains("reviewer") || !body["reviewer"].is_string() ||
                body["reviewer"].get<std::string>().empty())
                return reply_error(res, 400, "reviewer is required");

            std::optional<int> choice;
            const bool reject_flag = body.value("rejected_all", false);
            if (body.contains("chosen_class_id")) {
                const auto& c = body["chosen_class_id"];
                if (c.is_string() && c.get<std::string>() == "rejected_all") {
                } else if (c.is_number_integer() && c.get<long long>() >= 0) {
                    if (reject_flag) return reply_error(res, 400, "choose a class or reject all, not both");
                    choice = c.get<int>();
                } else {
                    return reply_error(res, 400, "chosen_class_id must be a class id or \"rejected_all\"");
                }
            } else if (!reject_flag) {
                return reply_error(res, 400, "chosen_class_id is required");
            }

            try {
                const auto item = queue.resolve(id, choice, body["reviewer"].get<std::string>(), options.clock());
                reply(res, 200, detail_json(item));
            } catch (const NotFound& e) {
                reply_error(res, 404, e.what());
            } catch (const Conflict& e) {
                reply_error(res, 409, e.what());
            }
        });

        server.Get("/api/stats", [this](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, to_json(queue.stats()));
        });

        server.Get("/images/(.+)", [this](const httplib::Request& req, httplib::Response& res) {
            auto it = image_paths.find(req.matches[1].str());
            if (it == image_paths.end()) return reply_error(res, 404, "unknown image");
            std::ifstream in(it->second, std::ios::binary);
            if (!in) return reply_error(res, 404, "image file missing");
            std::ostringstream bytes;
            bytes << in.rdbuf();
            res.status = 200;
            res.set_content(bytes.str(), content_type_for(it->second));
        });

        if (!options.ui_dir.empty() && fs::is_directory(options.ui_dir))
            server.set_mount_point("/", options.ui_dir.string());

        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                spdlog::error("request failed: {}", e.what());
                reply_error(res, 500, e.what());
            } catch (...) {
                reply_error(res, 500, "internal error");
            }
        });
    }
};

ReviewService::ReviewService(ReviewQueue& queue, const corpus::CorpusManifest* manifest, ServiceOptions options)
    : impl_(std::make_unique<Impl>(queue, manifest, std::move(options))) {}

ReviewService::~ReviewService() {
    stop();
}

int ReviewService::bind() {
    auto& o = impl_->options;
    if (o.port == 0)
        impl_->port = impl_->server.bind_to_any_port(o.host);
    else
        impl_->port = impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
    if (impl_->port < 0) throw Error("cannot bind " + o.host + ":" + std::to_string(o.port));
    return impl_->port;
}

void ReviewService::run() {
    if (impl_->port < 0) throw PreconditionError("ReviewService::run before bind");
    impl_->server.listen_after_bind();
}

int ReviewService::start() {
    const int port = bind();
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void ReviewService::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace leaflet::review
