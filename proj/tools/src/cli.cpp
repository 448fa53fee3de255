#include "leaflet_cli/cli.hpp"

#include <csignal>
#include <fstream>
#include <iomanip>
#include <ostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "leaflet/config.hpp"
#include "leaflet/corpus.hpp"
#include "leaflet/error.hpp"
#include "leaflet/evaluation.hpp"
#include "leaflet/extraction_cache.hpp"
#include "leaflet/fusion.hpp"
#include "leaflet/image_model.hpp"
#include "leaflet/ocr.hpp"
#include "leaflet/pipeline.hpp"
#include "leaflet/predictions.hpp"
#include "leaflet/review_queue.hpp"
#include "leaflet/review_service.hpp"
#include "leaflet/synthetic.hpp"
#include "leaflet/text_model.hpp"

namespace leaflet::cli {

namespace fs = std::filesystem;

namespace {

/// Config keys exposed as kebab-case flags on one subcommand.
class SettingFlags {
public:
    void add(CLI::App* app, const std::string& key, const std::string& help) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        auto& slot = values_[key];
        options_.emplace_back(key, app->add_option(flag, slot, help + " [" + env_name(key) + "]"));
    }

    Settings given() const {
        Settings out;
        for (const auto& [key, option] : options_)
            if (option->count() > 0) out[key] = values_.at(key);
        return out;
    }

private:
    std::map<std::string, std::string> values_;
    std::vector<std::pair<std::string, CLI::Option*>> options_;
};

const fs::path& require(const fs::path& value, const std::string& key) {
    if (value.empty()) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        throw PreconditionError(flag + " is required (or set " + env_name(key) + " or '" + key +
                                "' in the config file)");
    }
    return value;
}

corpus::Split parse_split(const std::string& s) { return corpus::split_from_string(s); }

pipeline::RecordRefs select_records(const corpus::CorpusManifest& m, const std::string& split) {
    if (split == "all") {
        pipeline::RecordRefs out;
        for (const auto& r : m.records) out.push_back(&r);
        return out;
    }
    return m.split(parse_split(split));
}

void check_classes(const std::vector<std::string>& got, const std::vector<std::string>& expected,
                   const std::string& what) {
    if (got != expected)
        throw ClassTableMismatch(what + " was produced for a different class table than the manifest");
}

std::pair<std::string, int> parse_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw PreconditionError("bind address must be host:port, got '" + bind + "'");
    try {
        std::size_t used = 0;
        const int port = std::stoi(bind.substr(colon + 1), &used);
        if (used == bind.size() - colon - 1 && port >= 0 && port <= 65535) return {bind.substr(0, colon), port};
    } catch (const std::exception&) {
    }
    throw PreconditionError("invalid port in bind address '" + bind + "'");
}

struct Context {
    std::ostream& out;
    std::ostream& err;
    std::string config_file;
    SettingFlags flags;

    PipelineConfig config() const {
        const Settings file = config_file.empty() ? Settings{} : load_config_file(config_file);
        return resolve_config(file, environment_settings(), flags.given());
    }
};

int cmd_validate(Context& ctx, int train_per_class, int test_per_class) {
    const auto cfg = ctx.config();
    const auto manifest = corpus::load_manifest(require(cfg.manifest, "manifest"));
    const auto report = corpus::validate_corpus(manifest, train_per_class, test_per_class);
    for (const auto& v : report.violations)
        ctx.out << v.rule << '\t' << v.class_id << '\t' << v.image_id << '\t' << v.message << '\n';
    if (report.ok()) {
        ctx.out << "ok: " << manifest.records.size() << " images, " << manifest.classes.size() << " classes\n";
        return kExitOk;
    }
    ctx.out << report.violations.size() << " violation(s)\n";
    return kExitValidation;
}

int cmd_extract(Context& ctx, const std::string& split) {
    const auto cfg = ctx.config();
    const auto manifest = corpus::load_manifest(require(cfg.manifest, "manifest"));
    ocr::TesseractEngine engine({cfg.engine, cfg.languages, std::chrono::milliseconds(cfg.ocr_timeout_ms)});
    ocr::ExtractionCache cache(require(cfg.cache, "cache"), engine.version());

    std::vector<ocr::ExtractionJob> jobs;
    for (const auto* r : select_records(manifest, split)) jobs.push_back({r->image_id, manifest.resolve(*r)});
    const auto& methods = ocr::canonical_methods();
    const auto result = ocr::extract_batch(jobs, methods, engine, &cache, cfg.workers);
    for (const auto& f : result.failures) ctx.err << "failed: " << f.image_id << ": " << f.message << '\n';
    ctx.out << "extracted " << result.documents.size() << " document(s), " << result.failures.size()
            << " failure(s) into " << cfg.cache.string() << '\n';
    return result.failures.empty() ? kExitOk : kExitValidation;
}

int cmd_train_text(Context& ctx) {
    const auto cfg = ctx.config();
    const auto manifest = corpus::load_manifest(require(cfg.manifest, "manifest"));
    const auto documents = ocr::read_cache_documents(require(cfg.cache, "cache"));
    text::SgdHyperparams hp;
    hp.seed = cfg.seed;
    const auto model = pipeline::train_text_branch(manifest, manifest.split(corpus::Split::train), documents, hp);
    text::save_text_model(model, require(cfg.text_model, "text_model"));
    ctx.out << "text model: " << model.n_classes() << " classes, " << model.n_features() << " features -> "
            << cfg.text_model.string() << '\n';
    return kExitOk;
}

int cmd_train_image(Context& ctx, const image::ImageHyperparams& base) {
    const auto cfg = ctx.config();
    const auto manifest = corpus::load_manifest(require(cfg.manifest, "manifest"));
    auto hp = base;
    hp.seed = cfg.seed;
    const auto model = pipeline::train_image_branch(manifest, manifest.split(corpus::Split::train), hp);
    image::save_image_model(model, require(cfg.image_model, "image_model"));
    ctx.out << "image model: " << model.n_classes() << " classes -> " << cfg.image_model.string() << '\n';
    return kExitOk;
}

int cmd_predict(Context& ctx, const std::string& external, const std::string& split, bool no_probs) {
    const auto cfg = ctx.config();
    const auto manifest = corpus::load_manifest(require(cfg.manifest, "manifest"));
    const auto documents = ocr::read_cache_documents(require(cfg.cache, "cache"));
    const auto text_model = text::load_text_model(require(cfg.text_model, "text_model"));
    require(cfg.predictions, "predictions");

    fusion::PredictionFile file;
    file.classes = manifest.classes;
    file.text_weight = cfg.text_weight;
    file.top_k = cfg.top_k;
    const auto records = select_records(manifest, split);

    if (!external.empty()) {
        const auto scores = image::load_external_scores(external, manifest.classes);
        file.image_source = scores.source.empty() ? "external" : scores.source;
        image::ExternalScoreProvider provider(scores);
        file.records =
            pipeline::predict(manifest, records, provider, text_model, documents, cfg.text_weight, cfg.top_k);
    } else {
        const auto model = image::load_image_model(require(cfg.image_model, "image_model"));
        if (model.classes != pipeline::class_ids(manifest))
            throw ClassTableMismatch("image model was trained for a different class table than the manifest");
        image::NativeScoreProvider provider(model);
        file.records =
            pipeline::predict(manifest, records, provider, text_model, documents, cfg.text_weight, cfg.top_k);
    }
    fusion::save_predictions(file, cfg.predictions, !no_probs);
    std::size_t low = 0;
    for (const auto& r : file.records) low += r.confidence == fusion::Confidence::low;
    ctx.out << "predicted " << file.records.size() << " image(s), " << low << " low-confidence -> "
            << cfg.predictions.string() << '\n';
    return kExitOk;
}

int cmd_evaluate(Context& ctx, const std::string& format, std::size_t confusion_limit, const std::string& output) {
    const auto cfg = ctx.config();
    const auto manifest = corpus::load_manifest(require(cfg.manifest, "manifest"));
    const auto predictions = fusion::load_predictions(require(cfg.predictions, "predictions"));
    check_classes(predictions.classes, manifest.classes, "prediction file");

    eval::Truth truth;
    for (const auto& r : manifest.records) truth[r.image_id] = r.class_id;
    const auto report = eval::evaluate(predictions.records, truth, confusion_limit);

    std::string rendered;
    if (format == "json")
        rendered = eval::to_json(report, manifest.classes).dump(2) + "\n";
    else if (format == "text")
        rendered = eval::render_text(report, manifest.classes);
    else
        rendered = eval::confusion_csv(report.confusion_pairs, manifest.classes);

    if (output.empty()) {
        ctx.out << rendered;
    } else {
        std::ofstream f(output);
        if (!(f << rendered)) throw Error("cannot write " + output);
        ctx.out << "report -> " << output << '\n';
    }
    return kExitOk;
}

int cmd_sweep(Context& ctx, double holdout, const std::vector<double>& weights, const std::string& external,
              const image::ImageHyperparams& base) {
    const auto cfg = ctx.config();
    const auto manifest = corpus::load_manifest(require(cfg.manifest, "manifest"));
    const auto documents = ocr::read_cache_documents(require(cfg.cache, "cache"));
    const auto [kept, held] = pipeline::holdout_split(manifest.split(corpus::Split::train), holdout, cfg.seed);

    text::SgdHyperparams text_hp;
    text_hp.seed = cfg.seed;
    const auto text_model = pipeline::train_text_branch(manifest, kept, documents, text_hp);

    std::vector<fusion::PredictionRecord> records;
    if (!external.empty()) {
        const auto scores = image::load_external_scores(external, manifest.classes);
        image::ExternalScoreProvider provider(scores);
        records = pipeline::predict(manifest, held, provider, text_model, documents, 1.0, manifest.classes.size());
    } else {
        auto hp = base;
        hp.seed = cfg.seed;
        const auto image_model = pipeline::train_image_branch(manifest, kept, hp);
        image::NativeScoreProvider provider(image_model);
        records = pipeline::predict(manifest, held, provider, text_model, documents, 1.0, manifest.classes.size());
    }
    const auto sweep = eval::sweep_text_weight(records, pipeline::truth_for(held), weights);

    ctx.out << "held-out images: " << held.size() << '\n' << "weight\taccuracy\n";
    for (const auto& s : sweep.scores)
        ctx.out << s.weight << '\t' << std::fixed << std::setprecision(4) << s.accuracy << std::defaultfloat << '\n';
    ctx.out << "selected weight: " << sweep.best_weight << '\n';
    return kExitOk;
}

int cmd_serve(Context& ctx, const std::string& ui_dir) {
    const auto cfg = ctx.config();
    const auto [host, port] = parse_bind(cfg.bind);
    const auto& dir = require(cfg.queue_dir, "queue_dir");
    if (!fs::is_directory(dir)) throw NotFound("queue store " + dir.string() + " does not exist (run queue first)");

    std::optional<corpus::CorpusManifest> manifest;
    if (!cfg.manifest.empty()) manifest = corpus::load_manifest(cfg.manifest);

    review::ReviewQueue queue(dir);
    review::StoreLock lock(queue.lock_path());

    review::ServiceOptions options;
    options.host = host;
    options.port = port;
    options.ui_dir = ui_dir;

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    review::ReviewService service(queue, manifest ? &*manifest : nullptr, options);
    const int bound = service.start();
    ctx.out << "serving " << dir.string() << " on http://" << host << ':' << bound << '\n' << std::flush;
    int received = 0;
    sigwait(&signals, &received);
    service.stop();
    ctx.out << "stopped\n";
    return kExitOk;
}

int cmd_queue(Context& ctx) {
    const auto cfg = ctx.config();
    const auto manifest = corpus::load_manifest(require(cfg.manifest, "manifest"));
    const auto predictions = fusion::load_predictions(require(cfg.predictions, "predictions"));
    check_classes(predictions.classes, manifest.classes, "prediction file");
    const auto documents = cfg.cache.empty() ? pipeline::Documents{} : ocr::read_cache_documents(cfg.cache);

    const auto& dir = require(cfg.queue_dir, "queue_dir");
    fs::create_directories(dir);
    review::StoreLock lock(dir / "service.lock");
    review::ReviewQueue queue(dir);
    const auto added = review::queue_low_confidence(predictions, manifest, documents, queue);
    ctx.out << "enqueued " << added << " new item(s); " << queue.stats().pending << " pending\n";
    return kExitOk;
}

int cmd_generate(Context& ctx, const std::string& out_dir, const synthetic::SyntheticOptions& options) {
    const auto corpus = synthetic::generate_synthetic_corpus(out_dir, options);
    ctx.out << "generated " << corpus.manifest.records.size() << " images in " << corpus.manifest.classes.size()
            << " classes\nmanifest: " << corpus.manifest_path.string() << "\ncache: " << corpus.cache_path.string()
            << '\n';
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Leaflet product classification: OCR text + image fusion"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "leaflet 0.1.0");

    Context ctx{out, err, {}, {}};
    app.add_option("--config", ctx.config_file, "JSON file of settings (overridden by LEAFLET_* and flags)")
        ->check(CLI::ExistingFile);

    auto add = [&](CLI::App* sub, std::initializer_list<std::pair<const char*, const char*>> keys) {
        for (const auto& [key, help] : keys) ctx.flags.add(sub, key, help);
    };

    int rc = kExitOk;

    auto* validate = app.add_subcommand("validate", "Check a corpus manifest against the corpus rules");
    int train_per_class = corpus::kDefaultTrainPerClass;
    int test_per_class = corpus::kDefaultTestPerClass;
    add(validate, {{"manifest", "corpus manifest (JSON Lines)"}});
    validate->add_option("--train-per-class", train_per_class, "expected training images per class")
        ->capture_default_str();
    validate->add_option("--test-per-class", test_per_class, "expected test images per class")->capture_default_str();
    validate->callback([&] { rc = cmd_validate(ctx, train_per_class, test_per_class); });

    auto* extract = app.add_subcommand("extract-text", "Run the eight OCR methods over corpus images");
    std::string extract_split = "all";
    add(extract, {{"manifest", "corpus manifest"},
                  {"cache", "extraction cache (JSON Lines)"},
                  {"workers", "OCR worker threads"},
                  {"engine", "OCR engine binary"},
                  {"languages", "OCR language packs"},
                  {"ocr_timeout_ms", "per-call OCR timeout"}});
    extract->add_option("--split", extract_split, "train, test or all")
        ->check(CLI::IsMember({"train", "test", "all"}))
        ->capture_default_str();
    extract->callback([&] { rc = cmd_extract(ctx, extract_split); });

    auto* train_text = app.add_subcommand("train-text", "Fit TF-IDF and the one-vs-rest text classifier");
    add(train_text, {{"manifest", "corpus manifest"},
                     {"cache", "extraction cache"},
                     {"text_model", "output text model"},
                     {"seed", "shuffle seed"}});
    train_text->callback([&] { rc = cmd_train_text(ctx); });

    auto* train_image = app.add_subcommand("train-image", "Fit the native image classifier");
    image::ImageHyperparams image_hp;
    add(train_image, {{"manifest", "corpus manifest"}, {"image_model", "output image model"}, {"seed", "seed"}});
    train_image->add_option("--epochs", image_hp.epochs, "training epochs")->capture_default_str();
    train_image->add_flag("--saturation-jitter", image_hp.saturation_jitter, "augment with saturation jitter");
    train_image->add_option("--jitter-copies", image_hp.jitter_copies, "jittered copies per image")
        ->capture_default_str();
    train_image->callback([&] { rc = cmd_train_image(ctx, image_hp); });

    auto* predict = app.add_subcommand("predict", "Fuse image and text branch outputs");
    std::string external_scores;
    std::string predict_split = "test";
    bool no_probs = false;
    add(predict, {{"manifest", "corpus manifest"},
                  {"cache", "extraction cache"},
                  {"text_model", "text model"},
                  {"image_model", "native image model"},
                  {"predictions", "output prediction file"},
                  {"text_weight", "weight of the text branch"},
                  {"top_k", "candidates kept per image"}});
    predict->add_option("--external-scores", external_scores, "image scores file replacing the native model")
        ->check(CLI::ExistingFile);
    predict->add_option("--split", predict_split, "train, test or all")
        ->check(CLI::IsMember({"train", "test", "all"}))
        ->capture_default_str();
    predict->add_flag("--no-probs", no_probs, "omit probability vectors from the output");
    predict->callback([&] { rc = cmd_predict(ctx, external_scores, predict_split, no_probs); });

    auto* evaluate = app.add_subcommand("evaluate", "Score a prediction file against the manifest labels");
    std::string format = "text";
    std::size_t confusion_limit = 20;
    std::string output;
    add(evaluate, {{"manifest", "corpus manifest"}, {"predictions", "prediction file"}});
    evaluate->add_option("--format", format, "json, text or csv (confusion pairs)")
        ->check(CLI::IsMember({"json", "text", "csv"}))
        ->capture_default_str();
    evaluate->add_option("--confusion-limit", confusion_limit, "most frequent confusion pairs to report")
        ->capture_default_str();
    evaluate->add_option("--output", output, "write the report here instead of stdout");
    evaluate->callback([&] { rc = cmd_evaluate(ctx, format, confusion_limit, output); });

    auto* sweep = app.add_subcommand("sweep-weight", "Grid-search the text weight on held-out training images");
    double holdout = 0.2;
    std::vector<double> weights{0.5, 1.0, 2.0, 3.0, 5.0};
    std::string sweep_external;
    image::ImageHyperparams sweep_hp;
    add(sweep, {{"manifest", "corpus manifest"}, {"cache", "extraction cache"}, {"seed", "split and training seed"}});
    sweep->add_option("--holdout", holdout, "fraction of each class held out")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    sweep->add_option("--weights", weights, "candidate text weights")->delimiter(',')->capture_default_str();
    sweep->add_option("--external-scores", sweep_external, "image scores file replacing the native model")
        ->check(CLI::ExistingFile);
    sweep->add_option("--epochs", sweep_hp.epochs, "image training epochs")->capture_default_str();
    sweep->callback([&] { rc = cmd_sweep(ctx, holdout, weights, sweep_external, sweep_hp); });

    auto* serve = app.add_subcommand("serve", "Serve the review queue over HTTP");
    std::string ui_dir;
    add(serve, {{"queue_dir", "queue store directory"},
                {"manifest", "corpus manifest, for serving images"},
                {"bind", "host:port"}});
    serve->add_option("--ui-dir", ui_dir, "static review UI bundle");
    serve->callback([&] { rc = cmd_serve(ctx, ui_dir); });

    auto* queue = app.add_subcommand("queue", "Enqueue low-confidence predictions for review");
    add(queue, {{"manifest", "corpus manifest"},
                {"predictions", "prediction file"},
                {"cache", "extraction cache, for document text"},
                {"queue_dir", "queue store directory"}});
    queue->callback([&] { rc = cmd_queue(ctx); });

    auto* generate = app.add_subcommand("generate-synthetic", "Render the synthetic card corpus");
    std::string out_dir;
    synthetic::SyntheticOptions synth;
    generate->add_option("--out", out_dir, "output directory")->required();
    generate->add_option("--corpus-seed", synth.seed, "rendering seed")->capture_default_str();
    generate->add_option("--train-per-class", synth.train_per_class)->capture_default_str();
    generate->add_option("--test-per-class", synth.test_per_class)->capture_default_str();
    generate->callback([&] { rc = cmd_generate(ctx, out_dir, synth); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitFatal;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitFatal;
    } catch (const std::exception& e) {
        err << "fatal: " << e.what() << '\n';
        return kExitFatal;
    }
    return rc;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace leaflet::cli
