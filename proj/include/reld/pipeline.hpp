/// @file pipeline.hpp
/// @brief Staged, resumable end-to-end run: ingest, generate, assess, score,
/// calibrate, train, evaluate. Every stage records its inputs and outputs by
/// content hash in a run manifest.

#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "reld/calibration.hpp"
#include "reld/corpus.hpp"
#include "reld/discriminator.hpp"
#include "reld/error.hpp"
#include "reld/evaluation.hpp"
#include "reld/llm_gateway.hpp"
#include "reld/metrics.hpp"
#include "reld/scoring.hpp"
#include "reld/util.hpp"

namespace reld {

inline constexpr const char* kToolVersion = "reld 1.0.0";

inline const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> stages = {"ingest", "generate", "assess",  "score",
                                                    "calibrate", "train",  "evaluate"};
    return stages;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct SourceSpec {
    std::filesystem::path descriptor;
    std::filesystem::path records;
};

struct EmbeddingSpec {
    std::string kind = "hash";  // hash | table
    std::size_t dim = 64;
    std::uint64_t salt = 0x5eed;
    std::filesystem::path table;
    std::string oov = "hashed";

    std::unique_ptr<EmbeddingProvider> make() const {
        if (kind == "hash") return std::make_unique<HashEmbeddingProvider>(dim, salt);
        if (kind == "table") return std::make_unique<TableEmbeddingProvider>(TableEmbeddingProvider::load(table, parse_oov_policy(oov)));
        fail(ErrorKind::config, "embedding kind must be hash or table, got " + kind);
    }
};

struct PipelineConfig {
    std::filesystem::path base;  // directory relative paths resolve against
    std::filesystem::path out = "run";
    std::uint64_t seed = 0;
    std::size_t threads = 0;  // 0 picks the hardware count

    std::filesystem::path samples;  // a ready corpus file, or
    std::vector<SourceSpec> sources;

    std::vector<EndpointConfig> generators;
    std::optional<EndpointConfig> judge;
    GenerationOptions generation;
    int parse_retries = 2;

    EmbeddingSpec embedding;
    std::filesystem::path weights;  // empty uses the defaults
    std::string external_scorer;    // command producing extra features; empty disables

    std::filesystem::path human_ratings;
    BlendRatios ratios;
    bool apply_calibrated = true;

    DiscriminatorConfig discriminator;
    std::size_t folds = 10;
    bool stratify = true;
    bool grid = true;
    std::vector<int> grid_ks = {4, 6, 8, 10};
    bool iid_ood = true;
    IidOodConfig iid;

    std::size_t worker_threads() const { return threads ? threads : default_threads(); }

    std::filesystem::path resolve(const std::string& p) const {
        if (p.empty()) return {};
        const std::filesystem::path path(p);
        return path.is_absolute() || base.empty() ? path : (base / path).lexically_normal();
    }

    const EndpointConfig& judge_endpoint() const {
        if (judge) return *judge;
        if (generators.empty()) fail(ErrorKind::config, "no judge endpoint configured");
        return generators.front();
    }

    void validate() const {
        if (samples.empty() && sources.empty()) fail(ErrorKind::config, "config needs \"samples\" or \"sources\"");
        require_supported_class_count(discriminator.k);
        for (int k : grid_ks) require_supported_class_count(k);
        if (discriminator.strategies.empty()) fail(ErrorKind::usage, "at least one strategy is required");
        if (folds < 2) fail(ErrorKind::usage, "folds must be at least 2");
        if (discriminator.train.epochs < 0) fail(ErrorKind::usage, "epochs must be non-negative");
        if (!(discriminator.train.learning_rate > 0)) fail(ErrorKind::usage, "learning rate must be positive");
        ratios.validate();
        std::set<std::string> models;
        for (const auto& g : generators) {
            if (!models.insert(g.model).second) fail(ErrorKind::config, "duplicate generator model " + g.model);
        }
    }

    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base) {
        PipelineConfig c;
        c.base = base;
        try {
            c.out = c.resolve(j.value("out", std::string("run")));
            c.seed = j.value("seed", std::uint64_t{0});
            c.threads = j.value("threads", std::size_t{0});
            c.samples = c.resolve(j.value("samples", std::string{}));
            for (const auto& s : j.value("sources", nlohmann::json::array())) {
                c.sources.push_back({c.resolve(s.at("descriptor").get<std::string>()),
                                     c.resolve(s.at("records").get<std::string>())});
            }
            for (const auto& g : j.value("generators", nlohmann::json::array())) {
                c.generators.push_back(EndpointConfig::from_json(g, base));
            }
            if (j.contains("judge")) c.judge = EndpointConfig::from_json(j["judge"], base);
            const auto gen = j.value("generation", nlohmann::json::object());
            c.generation.window_size = gen.value("window_size", c.generation.window_size);
            c.generation.stride = gen.value("stride", c.generation.window_size);
            c.generation.prompt.max_history_turns = gen.value("max_history_turns", std::size_t{0});
            c.parse_retries = j.value("parse_retries", c.parse_retries);

            const auto emb = j.value("embedding", nlohmann::json::object());
            c.embedding.kind = emb.value("kind", c.embedding.kind);
            c.embedding.dim = emb.value("dim", c.embedding.dim);
            c.embedding.salt = emb.value("salt", c.embedding.salt);
            c.embedding.table = c.resolve(emb.value("table", std::string{}));
            c.embedding.oov = emb.value("oov", c.embedding.oov);
            c.weights = c.resolve(j.value("weights", std::string{}));
            c.external_scorer = j.value("external_scorer", std::string{});

            c.human_ratings = c.resolve(j.value("human_ratings", std::string{}));
            const auto cal = j.value("calibration", nlohmann::json::object());
            c.ratios.auc = cal.value("auc_ratio", c.ratios.auc);
            c.ratios.pearson = cal.value("pearson_ratio", c.ratios.pearson);
            c.apply_calibrated = cal.value("apply", c.apply_calibrated);

            const auto d = j.value("discriminator", nlohmann::json::object());
            c.discriminator.k = d.value("k", c.discriminator.k);
            if (d.contains("strategies")) {
                c.discriminator.strategies.clear();
                for (const auto& s : d["strategies"]) c.discriminator.strategies.push_back(parse_strategy(s.get<std::string>()));
            }
            c.discriminator.train.epochs = d.value("epochs", c.discriminator.train.epochs);
            c.discriminator.train.learning_rate = d.value("learning_rate", c.discriminator.train.learning_rate);
            c.discriminator.train.batch_size = d.value("batch_size", c.discriminator.train.batch_size);

            const auto ev = j.value("evaluation", nlohmann::json::object());
            c.folds = ev.value("folds", c.folds);
            c.stratify = ev.value("stratify", c.stratify);
            c.grid = ev.value("grid", c.grid);
            c.grid_ks = ev.value("grid_ks", c.grid_ks);
            const auto io = ev.value("iid_ood", nlohmann::json::object());
            c.iid_ood = io.value("enabled", c.iid_ood);
            c.iid.repeats = io.value("repeats", c.iid.repeats);
            c.iid.downsample = io.value("downsample", c.iid.downsample);
            c.iid.validation_fraction = io.value("validation_fraction", c.iid.validation_fraction);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::config, std::string("pipeline config: ") + e.what());
        }
        c.discriminator.feature_names = feature_names();
        c.iid.seed = c.seed;
        c.iid.discriminator = c.discriminator;
        c.validate();
        return c;
    }

    static PipelineConfig load(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path)) fail(ErrorKind::usage, "config file " + path.string() + " does not exist");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(path));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::config, path.string() + ": " + e.what());
        }
        return from_json(j, std::filesystem::absolute(path).parent_path());
    }

    /// Snapshot recorded in the manifest.
    nlohmann::json to_json() const {
        nlohmann::json src = nlohmann::json::array();
        for (const auto& s : sources) src.push_back({{"descriptor", s.descriptor.string()}, {"records", s.records.string()}});
        nlohmann::json gens = nlohmann::json::array();
        for (const auto& g : generators) gens.push_back(g.to_json());
        return {{"out", out.string()},
                {"seed", seed},
                {"samples", samples.string()},
                {"sources", src},
                {"generators", gens},
                {"judge", judge ? judge->to_json() : nlohmann::json(nullptr)},
                {"generation",
                 {{"window_size", generation.window_size},
                  {"stride", generation.stride},
                  {"max_history_turns", generation.prompt.max_history_turns}}},
                {"parse_retries", parse_retries},
                {"embedding",
                 {{"kind", embedding.kind},
                  {"dim", embedding.dim},
                  {"salt", embedding.salt},
                  {"table", embedding.table.string()},
                  {"oov", embedding.oov}}},
                {"weights", weights.empty() ? nlohmann::json("default") : nlohmann::json(weights.string())},
                {"external_scorer", external_scorer},
                {"human_ratings", human_ratings.string()},
                {"calibration", {{"auc_ratio", ratios.auc}, {"pearson_ratio", ratios.pearson}, {"apply", apply_calibrated}}},
                {"discriminator", discriminator.to_json()},
                {"evaluation",
                 {{"folds", folds},
                  {"stratify", stratify},
                  {"grid", grid},
                  {"grid_ks", grid_ks},
                  {"iid_ood",
                   {{"enabled", iid_ood},
                    {"repeats", iid.repeats},
                    {"downsample", iid.downsample},
                    {"validation_fraction", iid.validation_fraction}}}}},
                {"tool_version", kToolVersion}};
    }
};

// ---------------------------------------------------------------------------
// Record files shared between stages
// ---------------------------------------------------------------------------

using RecordKey = std::pair<std::string, std::string>;  // (sample_id, model_id)

/// Lines of {"sample_id", "model_id", "label"} with label 0 or 1.
inline std::map<RecordKey, int> read_human_ratings(const std::filesystem::path& path) {
    std::map<RecordKey, int> out;
    for (const auto& j : read_jsonl(path)) {
        try {
            const int label = j.at("label").get<int>();
            if (label != 0 && label != 1) fail(ErrorKind::data, path.string() + ": label must be 0 or 1");
            out[{j.at("sample_id").get<std::string>(), j.value("model_id", "")}] = label;
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::data, path.string() + ": " + e.what());
        }
    }
    return out;
}

inline nlohmann::json to_json(const EvalRecord& r) {
    return {{"sample_id", r.sample_id},   {"model_id", r.model_id},       {"dataset", r.dataset},
            {"features", r.features},     {"final_score", r.final_score}, {"final_tag", r.final_tag},
            {"human", r.human ? nlohmann::json(*r.human) : nlohmann::json(nullptr)}};
}

inline EvalRecord eval_record_from_json(const nlohmann::json& j) {
    EvalRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.model_id = j.value("model_id", "");
    r.dataset = j.value("dataset", "");
    r.features = j.at("features").get<std::vector<double>>();
    r.final_score = j.at("final_score").get<double>();
    r.final_tag = j.at("final_tag").get<int>();
    if (j.contains("human") && !j["human"].is_null()) r.human = j["human"].get<int>();
    return r;
}

inline std::vector<EvalRecord> read_eval_records(const std::filesystem::path& path) {
    std::vector<EvalRecord> out;
    for (const auto& j : read_jsonl(path)) out.push_back(eval_record_from_json(j));
    if (out.empty()) fail(ErrorKind::data, path.string() + " holds no records");
    return out;
}

inline std::vector<MetricVector> read_metric_vectors(const std::filesystem::path& path) {
    std::vector<MetricVector> out;
    for (const auto& j : read_jsonl(path)) out.push_back(metric_vector_from_json(j));
    return out;
}

/// Features in metric order, then any external features; final score and tag
/// from `weights`; human rating when one exists.
inline std::vector<EvalRecord> build_eval_records(const std::vector<MetricVector>& metrics, const WeightConfig& weights,
                                                  const std::map<RecordKey, int>& humans,
                                                  const std::map<RecordKey, std::vector<double>>& external = {}) {
    std::vector<EvalRecord> out;
    for (const auto& mv : metrics) {
        EvalRecord r;
        r.sample_id = mv.sample_id;
        r.model_id = mv.model_id;
        r.dataset = mv.dataset;
        r.features = mv.features();
        const RecordKey key{mv.sample_id, mv.model_id};
        if (const auto it = external.find(key); it != external.end()) {
            r.features.insert(r.features.end(), it->second.begin(), it->second.end());
        }
        r.final_score = composite_score(mv, weights);
        r.final_tag = final_tag(r.final_score);
        if (const auto it = humans.find(key); it != humans.end()) r.human = it->second;
        out.push_back(std::move(r));
    }
    return out;
}

inline std::map<std::string, std::vector<EvalRecord>> by_dataset(const std::vector<EvalRecord>& records) {
    std::map<std::string, std::vector<EvalRecord>> out;
    for (const auto& r : records) out[r.dataset].push_back(r);
    return out;
}

// ---------------------------------------------------------------------------
// External feature scorer
// ---------------------------------------------------------------------------

/// Runs `command` with one JSON request {"question","context","answer"} on
/// stdin and reads a JSON array of numbers from stdout.
class ExternalScorer {
public:
    explicit ExternalScorer(std::string command) : command_(std::move(command)) {}

    std::vector<double> score(const std::string& question, const std::string& context, const std::string& answer) const {
        const auto request = std::filesystem::temp_directory_path() /
                             ("reld-ext-" + sha256_hex(question + "\n" + context + "\n" + answer).substr(0, 16) + ".json");
        write_file(request, nlohmann::json{{"question", question}, {"context", context}, {"answer", answer}}.dump());
        const std::string cmd = "(" + command_ + ") < '" + request.string() + "'";
        std::string output;
        FILE* pipe = ::popen(cmd.c_str(), "r");
        if (!pipe) fail(ErrorKind::endpoint, "cannot start external scorer: " + command_);
        char buf[4096];
        while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) output.append(buf, n);
        const int status = ::pclose(pipe);
        std::filesystem::remove(request);
        if (status != 0) fail(ErrorKind::endpoint, "external scorer exited with status " + std::to_string(status));
        try {
            const auto j = nlohmann::json::parse(output);
            auto v = j.get<std::vector<double>>();
            for (double x : v) {
                if (!std::isfinite(x)) fail(ErrorKind::data, "external scorer returned a non-finite feature");
            }
            return v;
        } catch (const nlohmann::json::exception&) {
            fail(ErrorKind::data, "external scorer output is not a JSON number array: " + output.substr(0, 200));
        }
    }

private:
    std::string command_;
};

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct StageRecord {
    std::string name;
    std::string status;  // complete | skipped | failed | not_run
    std::string key;
    std::map<std::string, std::string> inputs;   // path -> sha256
    std::map<std::string, std::string> outputs;  // path relative to the run dir -> sha256
    std::vector<std::string> warnings;
    std::string summary;
    std::string error_code;
    std::string error;
    bool reused = false;

    nlohmann::json to_json() const {
        nlohmann::json j{{"name", name},         {"status", status},     {"key", key},
                         {"inputs", inputs},     {"outputs", outputs},   {"warnings", warnings},
                         {"summary", summary}};
        if (!error.empty()) j["error"] = {{"code", error_code}, {"message", error}};
        return j;
    }

    static StageRecord from_json(const nlohmann::json& j) {
        StageRecord s;
        s.name = j.at("name").get<std::string>();
        s.status = j.at("status").get<std::string>();
        s.key = j.value("key", "");
        s.inputs = j.value("inputs", std::map<std::string, std::string>{});
        s.outputs = j.value("outputs", std::map<std::string, std::string>{});
        s.warnings = j.value("warnings", std::vector<std::string>{});
        s.summary = j.value("summary", "");
        if (j.contains("error")) {
            s.error_code = j["error"].value("code", "");
            s.error = j["error"].value("message", "");
        }
        return s;
    }
};

struct RunManifest {
    std::string tool_version = kToolVersion;
    nlohmann::json config;
    std::map<std::string, StageRecord> stages;
    std::string status = "empty";  // complete | partial | empty
    std::string failed_stage;

    nlohmann::json to_json() const {
        nlohmann::json st = nlohmann::json::array();
        for (const auto& name : pipeline_stages()) {
            if (const auto it = stages.find(name); it != stages.end()) st.push_back(it->second.to_json());
        }
        nlohmann::json j{{"tool_version", tool_version}, {"config", config}, {"stages", st}, {"status", status}};
        if (!failed_stage.empty()) j["failed_stage"] = failed_stage;
        return j;
    }

    static RunManifest from_json(const nlohmann::json& j) {
        RunManifest m;
        m.tool_version = j.value("tool_version", "");
        m.config = j.value("config", nlohmann::json::object());
        for (const auto& s : j.value("stages", nlohmann::json::array())) {
            auto rec = StageRecord::from_json(s);
            m.stages[rec.name] = std::move(rec);
        }
        m.status = j.value("status", "empty");
        m.failed_stage = j.value("failed_stage", "");
        return m;
    }

    static RunManifest load_or_empty(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path)) return {};
        try {
            return from_json(nlohmann::json::parse(read_file(path)));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::data, path.string() + ": " + e.what());
        }
    }

    /// Producing stage of a run-relative output, if any.
    const StageRecord* producer(const std::string& rel) const {
        for (const auto& [_, s] : stages) {
            if (s.status == "complete" && s.outputs.count(rel)) return &s;
        }
        return nullptr;
    }
};

inline std::string file_hash(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

/// Hash over the sorted names and contents of every regular file below `dir`.
inline std::string dir_hash(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& f : files) acc += std::filesystem::relative(f, dir).generic_string() + "\n" + file_hash(f) + "\n";
    return sha256_hex(acc);
}

inline std::string path_hash(const std::filesystem::path& p) {
    return std::filesystem::is_directory(p) ? dir_hash(p) : file_hash(p);
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Context handed to each stage body.
class StageContext {
public:
    StageContext(const PipelineConfig& cfg, RunManifest& manifest, StageRecord& record)
        : cfg_(cfg), manifest_(manifest), record_(record) {}

    const PipelineConfig& cfg() const { return cfg_; }
    std::filesystem::path path(const std::string& rel) const { return cfg_.out / rel; }

    /// Declares a run artifact as input, checking it against the manifest.
    std::filesystem::path artifact(const std::string& rel, const std::string& made_by) {
        const auto p = path(rel);
        if (!std::filesystem::exists(p)) fail(ErrorKind::data, "missing " + rel + "; run the " + made_by + " stage first");
        const auto hash = file_hash(p);
        if (const auto* producer = manifest_.producer(rel)) {
            if (producer->outputs.at(rel) != hash) {
                fail(ErrorKind::data, rel + " does not match the hash the " + producer->name +
                                          " stage recorded; rerun that stage");
            }
        }
        record_.inputs[rel] = hash;
        return p;
    }

    /// Declares an external file or directory as input.
    const std::filesystem::path& external(const std::filesystem::path& p) {
        if (!std::filesystem::exists(p)) fail(ErrorKind::data, "input " + p.string() + " does not exist");
        record_.inputs[std::filesystem::absolute(p).lexically_normal().string()] = path_hash(p);
        return p;
    }

    void endpoint(const EndpointConfig& ec) {
        if (ec.kind == "mock") external(ec.mock_dir);
    }

    void write(const std::string& rel, const std::string& content) {
        write_file(path(rel), content);
        record_.outputs[rel] = sha256_hex(content);
    }

    /// Run-local file deliberately left out of the hashed outputs.
    void write_volatile(const std::string& rel, const std::string& content) { write_file(path(rel), content); }

    void warn(std::string w) { record_.warnings.push_back(std::move(w)); }
    void summary(std::string s) { record_.summary = std::move(s); }
    void skip(std::string why) {
        skipped_ = true;
        record_.summary = std::move(why);
    }
    bool skipped() const { return skipped_; }
    const RunManifest& manifest() const { return manifest_; }

private:
    const PipelineConfig& cfg_;
    RunManifest& manifest_;
    StageRecord& record_;
    bool skipped_ = false;
};

namespace stages {

template <typename T>
std::string jsonl(const std::vector<T>& records) {
    std::string out;
    for (const auto& r : records) out += to_json(r).dump() + "\n";
    return out;
}

inline nlohmann::json failures_json(const std::vector<BatchFailure>& failures) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& f : failures) out.push_back({{"sample_id", f.sample_id}, {"code", error_code(f.kind)}, {"message", f.message}});
    return out;
}

inline void ingest(StageContext& ctx) {
    const auto& cfg = ctx.cfg();
    std::vector<QASample> samples;
    nlohmann::json report = nlohmann::json::object();
    if (!cfg.samples.empty()) {
        samples = read_corpus(ctx.external(cfg.samples));
        report["samples"] = {{"path", cfg.samples.string()}, {"count", samples.size()}};
    }
    std::set<std::string> ids;
    for (const auto& s : samples) ids.insert(s.id);
    for (const auto& src : cfg.sources) {
        const auto desc = DatasetDescriptor::load(ctx.external(src.descriptor));
        const auto result = ingest_dataset(read_raw_records(ctx.external(src.records)), desc);
        nlohmann::json rejects = nlohmann::json::array();
        for (const auto& r : result.rejects) {
            rejects.push_back({{"index", r.index}, {"reason", r.reason}});
            ctx.warn(desc.dataset + " record " + std::to_string(r.index) + " rejected: " + r.reason);
        }
        for (const auto& s : result.samples) {
            if (!ids.insert(s.id).second) fail(ErrorKind::data, "sample id " + s.id + " appears in more than one dataset");
            samples.push_back(s);
        }
        report[desc.dataset] = {{"accepted", result.samples.size()}, {"rejected", rejects}};
    }
    if (samples.empty()) fail(ErrorKind::data, "ingest produced no samples");
    ctx.write("corpus.jsonl", to_jsonl(samples));
    ctx.write("ingest_report.json", report.dump(2));
    std::set<std::string> datasets;
    for (const auto& s : samples) datasets.insert(s.dataset);
    ctx.summary(std::to_string(samples.size()) + " samples from " + std::to_string(datasets.size()) + " datasets");
}

inline void generate(StageContext& ctx) {
    const auto& cfg = ctx.cfg();
    if (cfg.generators.empty()) fail(ErrorKind::config, "no generator endpoints configured");
    const auto samples = read_corpus(ctx.artifact("corpus.jsonl", "ingest"));
    std::vector<GenerationRecord> all;
    nlohmann::json failures = nlohmann::json::object(), timings = nlohmann::json::object();
    std::size_t regenerated = 0, failed_quality = 0;
    for (const auto& ec : cfg.generators) {
        ctx.endpoint(ec);
        auto client = make_client(ec);
        auto batch = generate_all(samples, *client, cfg.generation, ec.max_in_flight);
        const bool usable = std::any_of(batch.records.begin(), batch.records.end(),
                                        [](const GenerationRecord& r) { return r.usable(); });
        if (!usable) {
            if (!batch.failures.empty()) {
                fail(batch.failures.front().kind,
                     ec.model + " produced no usable answers; first failure: " + batch.failures.front().message);
            }
            fail(ErrorKind::data, ec.model + " produced no usable answers");
        }
        for (auto& r : batch.records) {
            timings[r.sample_id + "|" + r.model_id] = r.latency_ms;
            r.latency_ms.clear();
            regenerated += r.quality == Quality::regenerated;
            failed_quality += r.quality == Quality::failed;
            all.push_back(std::move(r));
        }
        failures[ec.model] = failures_json(batch.failures);
        for (const auto& f : batch.failures) ctx.warn(ec.model + " " + f.sample_id + ": " + f.message);
    }
    std::sort(all.begin(), all.end(), [](const GenerationRecord& a, const GenerationRecord& b) {
        return std::tie(a.sample_id, a.model_id) < std::tie(b.sample_id, b.model_id);
    });
    ctx.write("generations.jsonl", jsonl(all));
    ctx.write("generation_failures.json", failures.dump(2));
    ctx.write_volatile("generation_timings.json", timings.dump());
    ctx.summary(std::to_string(all.size()) + " generations from " + std::to_string(cfg.generators.size()) +
                " models; " + std::to_string(regenerated) + " regenerated, " + std::to_string(failed_quality) +
                " failed quality check");
}

inline void assess(StageContext& ctx) {
    const auto& cfg = ctx.cfg();
    const auto samples = read_corpus(ctx.artifact("corpus.jsonl", "ingest"));
    const auto gens = read_generations(ctx.artifact("generations.jsonl", "generate"));
    const auto& jc = cfg.judge_endpoint();
    ctx.endpoint(jc);
    auto judge = make_client(jc);
    const auto batch = assess_all(samples, gens, *judge, jc.max_in_flight, cfg.parse_retries);
    for (const auto& f : batch.failures) ctx.warn(f.sample_id + ": " + f.message);
    if (batch.records.empty()) {
        if (!batch.failures.empty()) fail(batch.failures.front().kind, "no assessments; first failure: " + batch.failures.front().message);
        fail(ErrorKind::data, "no usable generations to assess");
    }
    std::size_t clamped = 0;
    for (const auto& a : batch.records) clamped += !a.warnings.empty();
    ctx.write("assessments.jsonl", jsonl(batch.records));
    ctx.write("assessment_failures.json", failures_json(batch.failures).dump(2));
    ctx.summary(std::to_string(batch.records.size()) + " assessments by " + jc.model + "; " +
                std::to_string(batch.failures.size()) + " unparseable, " + std::to_string(clamped) + " clamped");
}

inline WeightConfig base_weights(StageContext& ctx) {
    const auto& cfg = ctx.cfg();
    return cfg.weights.empty() ? WeightConfig::defaults() : WeightConfig::load(ctx.external(cfg.weights));
}

inline void score(StageContext& ctx) {
    const auto& cfg = ctx.cfg();
    const auto samples = read_corpus(ctx.artifact("corpus.jsonl", "ingest"));
    const auto gens = read_generations(ctx.artifact("generations.jsonl", "generate"));
    const auto assessments = read_assessments(ctx.artifact("assessments.jsonl", "assess"));
    if (cfg.embedding.kind == "table") ctx.external(cfg.embedding.table);
    const auto provider = cfg.embedding.make();
    const auto weights = base_weights(ctx);

    std::map<std::string, const QASample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;
    std::map<RecordKey, const GenerationRecord*> gen_by_key;
    for (const auto& g : gens) gen_by_key[{g.sample_id, g.model_id}] = &g;
    std::vector<ScoringJob> jobs;
    for (const auto& a : assessments) {
        const auto g = gen_by_key.find({a.sample_id, a.model_id});
        if (g == gen_by_key.end() || !by_id.count(a.sample_id)) {
            fail(ErrorKind::data, "assessment for " + a.sample_id + "/" + a.model_id + " has no generation");
        }
        jobs.push_back({by_id.at(a.sample_id), g->second->final_answer, a, a.model_id});
    }
    const auto metrics = compute_metric_vectors(jobs, *provider, static_cast<unsigned>(cfg.worker_threads()));

    std::string csv = metric_csv_header() + "\n";
    std::vector<ScoreRecord> scores;
    std::size_t warned = 0;
    for (const auto& mv : metrics) {
        csv += metric_csv_row(mv) + "\n";
        const auto& sample = *by_id.at(mv.sample_id);
        const auto& answer = gen_by_key.at({mv.sample_id, mv.model_id})->final_answer;
        scores.push_back(make_score_record(mv, weights, cfg.discriminator.k,
                                           human_label(answer_matches_gold(sample, answer), mv.goodness)));
        warned += !mv.warnings.empty();
    }
    if (warned) ctx.warn(std::to_string(warned) + " metric vectors had out-of-range values clamped");
    ctx.write("metrics.jsonl", jsonl(metrics));
    ctx.write("metrics.csv", csv);
    ctx.write("scores.jsonl", jsonl(scores));

    if (!cfg.external_scorer.empty()) {
        const ExternalScorer ext(cfg.external_scorer);
        std::string out;
        std::optional<std::size_t> width;
        for (const auto& mv : metrics) {
            const auto& sample = *by_id.at(mv.sample_id);
            const auto ctx_text = sample.kind == SampleKind::mtd ? render_history(sample.history, 0) : sample.context;
            const auto f = ext.score(sample.question, ctx_text, gen_by_key.at({mv.sample_id, mv.model_id})->final_answer);
            if (width && *width != f.size()) fail(ErrorKind::data, "external scorer returned feature vectors of different lengths");
            width = f.size();
            out += nlohmann::json{{"sample_id", mv.sample_id}, {"model_id", mv.model_id}, {"features", f}}.dump() + "\n";
        }
        ctx.write("external_features.jsonl", out);
    }
    std::size_t tagged = 0;
    for (const auto& s : scores) tagged += s.final_tag;
    ctx.summary(std::to_string(metrics.size()) + " scored answers (" + provider->version() + "), " +
                std::to_string(tagged) + " tagged reliable, weights " + weights.version);
}

inline std::map<RecordKey, std::vector<double>> read_external(const std::filesystem::path& path) {
    std::map<RecordKey, std::vector<double>> out;
    for (const auto& j : read_jsonl(path)) {
        out[{j.at("sample_id").get<std::string>(), j.value("model_id", "")}] = j.at("features").get<std::vector<double>>();
    }
    return out;
}

inline void calibrate(StageContext& ctx) {
    const auto& cfg = ctx.cfg();
    if (cfg.human_ratings.empty()) {
        ctx.skip("no human ratings configured");
        return;
    }
    const auto humans = read_human_ratings(ctx.external(cfg.human_ratings));
    const auto metrics = read_metric_vectors(ctx.artifact("metrics.jsonl", "score"));
    std::vector<CalibrationRow> rows;
    for (const auto& mv : metrics) {
        const auto it = humans.find({mv.sample_id, mv.model_id});
        if (it == humans.end()) continue;
        rows.push_back({mv.sample_id, mv.model_id, mv.normalized, it->second});
    }
    const auto result = calibrate_weights(rows, cfg.ratios, base_weights(ctx));
    for (const auto& w : result.report.warnings) ctx.warn(w);
    ctx.write("calibration.json", to_json(result.report).dump(2));
    ctx.write("calibration.txt", render_table(result.report));
    ctx.write("weights.calibrated.txt", result.weights.to_text());
    const auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("-"); };
    ctx.summary(std::to_string(rows.size()) + " rated rows; composite AUC " + cell(result.report.composite_auc_default) +
                " default, " + cell(result.report.composite_auc_calibrated) + " calibrated");
}

/// Calibrated weights when the calibrate stage produced them and the config
/// applies them; otherwise the base weights.
inline WeightConfig active_weights(StageContext& ctx) {
    const auto& cfg = ctx.cfg();
    const auto it = ctx.manifest().stages.find("calibrate");
    if (cfg.apply_calibrated && it != ctx.manifest().stages.end() && it->second.status == "complete") {
        return WeightConfig::load(ctx.artifact("weights.calibrated.txt", "calibrate"));
    }
    return base_weights(ctx);
}

inline std::vector<EvalRecord> assemble_records(StageContext& ctx) {
    const auto& cfg = ctx.cfg();
    const auto metrics = read_metric_vectors(ctx.artifact("metrics.jsonl", "score"));
    std::map<RecordKey, int> humans;
    if (!cfg.human_ratings.empty()) humans = read_human_ratings(ctx.external(cfg.human_ratings));
    std::map<RecordKey, std::vector<double>> external;
    if (!cfg.external_scorer.empty()) external = read_external(ctx.artifact("external_features.jsonl", "score"));
    return build_eval_records(metrics, active_weights(ctx), humans, external);
}

inline DiscriminatorConfig discriminator_for(const PipelineConfig& cfg, const std::vector<EvalRecord>& records) {
    auto d = cfg.discriminator;
    if (!records.empty() && records.front().features.size() > d.feature_names.size()) {
        for (std::size_t i = d.feature_names.size(); i < records.front().features.size(); ++i) {
            d.feature_names.push_back("ext" + std::to_string(i - kMetricOrder.size()));
        }
    }
    return d;
}

inline void train(StageContext& ctx) {
    const auto& cfg = ctx.cfg();
    const auto records = assemble_records(ctx);
    const auto dcfg = discriminator_for(cfg, records);
    std::vector<const EvalRecord*> rows;
    for (const auto& r : records) rows.push_back(&r);
    const auto head = train_on(rows, dcfg, derive_seed(cfg.seed, "final-head"));
    const auto fit = score_split(head, rows, dcfg.strategies.front());
    ctx.write("eval_records.jsonl", jsonl(records));
    ctx.write("head.json", to_json(head).dump(2));
    ctx.summary("K=" + std::to_string(dcfg.k) + " head on " + std::to_string(records.size()) + " rows, loss " +
                format_double(head.report.final_loss) + ", training accuracy " + format_double(fit.accuracy));
}

inline void evaluate(StageContext& ctx) {
    const auto& cfg = ctx.cfg();
    const auto records = read_eval_records(ctx.artifact("eval_records.jsonl", "train"));
    const auto dcfg = discriminator_for(cfg, records);
    const auto threads = cfg.worker_threads();

    const auto cv = kfold_cv(records, dcfg, cfg.folds, cfg.seed, cfg.stratify, threads);
    std::map<std::string, std::vector<EvalRecord>> per_model;
    for (const auto& r : records) per_model[r.model_id].push_back(r);
    std::map<std::string, CvReport> by_model;
    nlohmann::json models = nlohmann::json::object();
    for (const auto& [model, recs] : per_model) {
        if (recs.size() < cfg.folds) {
            ctx.warn("model " + model + " has fewer records than folds; left out of the per-model table");
            continue;
        }
        by_model[model] = kfold_cv(recs, dcfg, cfg.folds, cfg.seed, cfg.stratify, threads);
        models[model] = to_json(by_model[model]);
    }
    ctx.write("cv.json", nlohmann::json{{"all", to_json(cv)}, {"models", models}}.dump(2));
    ctx.write("cv_table.txt", render_model_table(by_model));

    std::string summary = std::to_string(cfg.folds) + "-fold CV accuracy " + format_double(cv.primary().mean_accuracy);
    if (cv.primary().mean_human_auc) summary += ", human AUC " + format_double(*cv.primary().mean_human_auc);

    if (cfg.grid) {
        const auto cells = strategy_grid(records, dcfg, cfg.folds, cfg.seed, cfg.grid_ks);
        ctx.write("grid.json", to_json(cells).dump(2));
        ctx.write("grid.txt", render_grid_table(cells));
        summary += "; grid " + std::to_string(cells.size()) + " cells";
    }
    const auto datasets = by_dataset(records);
    if (cfg.iid_ood && datasets.size() >= 2) {
        auto io = cfg.iid;
        io.seed = cfg.seed;
        io.discriminator = dcfg;
        const auto rows = iid_ood_sweep(datasets, io);
        for (const auto& w : rows.front().warnings) ctx.warn(w);
        ctx.write("iid_ood.json", to_json(rows, io).dump(2));
        ctx.write("iid_ood.txt", render_ratio_table(rows));
        summary += "; IID/OOD " + std::to_string(rows.size()) + " ratios";
    } else if (cfg.iid_ood) {
        ctx.warn("IID/OOD needs at least 2 datasets; skipped");
    }
    ctx.summary(summary);
}

}  // namespace stages

using StageFn = std::function<void(StageContext&)>;

inline const std::map<std::string, StageFn>& stage_table() {
    static const std::map<std::string, StageFn> table = {
        {"ingest", stages::ingest},       {"generate", stages::generate}, {"assess", stages::assess},
        {"score", stages::score},         {"calibrate", stages::calibrate}, {"train", stages::train},
        {"evaluate", stages::evaluate}};
    return table;
}

/// Config slice each stage depends on; part of the resume key.
inline nlohmann::json stage_config(const PipelineConfig& cfg, const std::string& stage) {
    const auto j = cfg.to_json();
    if (stage == "ingest") return {j["samples"], j["sources"]};
    if (stage == "generate") {
        auto gens = j["generators"];
        for (auto& g : gens) g.erase("cache_dir");
        return {gens, j["generation"]};
    }
    if (stage == "assess") {
        auto judge = cfg.judge_endpoint().to_json();
        judge.erase("cache_dir");
        return {judge, j["parse_retries"]};
    }
    if (stage == "score") return {j["embedding"], j["weights"], j["external_scorer"], j["discriminator"]["k"]};
    if (stage == "calibrate") return {j["human_ratings"], j["calibration"], j["weights"]};
    if (stage == "train") return {j["discriminator"], j["seed"], j["calibration"], j["human_ratings"], j["weights"]};
    return {j["discriminator"], j["seed"], j["evaluation"]};
}

struct PipelineResult {
    RunManifest manifest;
    std::vector<std::string> log;  // one line per stage
    bool ok = true;
    std::optional<Error> error;
};

inline std::filesystem::path manifest_path(const PipelineConfig& cfg) { return cfg.out / "manifest.json"; }

inline std::string stage_key(const PipelineConfig& cfg, const std::string& stage,
                             const std::map<std::string, std::string>& inputs) {
    return sha256_hex(nlohmann::json{{"stage", stage}, {"config", stage_config(cfg, stage)}, {"inputs", inputs}}.dump());
}

/// True when `previous` can stand: same config slice, inputs unchanged on
/// disk, outputs still present with their recorded hashes.
inline bool reusable(const PipelineConfig& cfg, const StageRecord& previous) {
    if (previous.status != "complete" && previous.status != "skipped") return false;
    std::map<std::string, std::string> now;
    for (const auto& [path, _] : previous.inputs) {
        const std::filesystem::path p(path);
        const auto full = p.is_absolute() ? p : cfg.out / p;
        if (!std::filesystem::exists(full)) return false;
        now[path] = path_hash(full);
    }
    if (stage_key(cfg, previous.name, now) != previous.key) return false;
    for (const auto& [rel, hash] : previous.outputs) {
        const auto p = cfg.out / rel;
        if (!std::filesystem::exists(p) || file_hash(p) != hash) return false;
    }
    return true;
}

/// Runs `requested` (default: every stage) in dependency order. A stage whose
/// resume key and outputs match the manifest is reused rather than rerun.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, std::vector<std::string> requested = {}, bool force = false) {
    cfg.validate();
    if (requested.empty()) requested = pipeline_stages();
    for (const auto& r : requested) {
        if (!stage_table().count(r)) fail(ErrorKind::usage, "unknown stage '" + r + "'");
    }
    std::filesystem::create_directories(cfg.out);
    PipelineResult result;
    auto& m = result.manifest;
    m = RunManifest::load_or_empty(manifest_path(cfg));
    m.tool_version = kToolVersion;
    m.config = cfg.to_json();
    m.failed_stage.clear();
    const auto save = [&] {
        bool all = true;
        for (const auto& name : pipeline_stages()) {
            const auto it = m.stages.find(name);
            all = all && it != m.stages.end() && (it->second.status == "complete" || it->second.status == "skipped");
        }
        m.status = !m.failed_stage.empty() ? "partial" : all ? "complete" : "partial";
        write_file(manifest_path(cfg), m.to_json().dump(2) + "\n");
    };

    for (const auto& name : pipeline_stages()) {
        if (std::find(requested.begin(), requested.end(), name) == requested.end()) continue;
        if (!result.ok) {
            auto& rec = m.stages[name];
            rec = StageRecord{};
            rec.name = name;
            rec.status = "not_run";
            continue;
        }
        StageRecord previous;
        if (const auto it = m.stages.find(name); it != m.stages.end()) previous = it->second;
        if (!force && reusable(cfg, previous)) {
            result.log.push_back(name + ": reused - " + previous.summary);
            m.stages[name].reused = true;
            continue;
        }
        StageRecord rec;
        rec.name = name;
        try {
            StageContext ctx(cfg, m, rec);
            stage_table().at(name)(ctx);
            rec.status = ctx.skipped() ? "skipped" : "complete";
            rec.key = stage_key(cfg, name, rec.inputs);
        } catch (const Error& e) {
            rec.status = "failed";
            rec.error_code = error_code(e.kind());
            rec.error = e.what();
            m.failed_stage = name;
            result.ok = false;
            result.error = e;
        } catch (const std::exception& e) {
            rec.status = "failed";
            rec.error_code = "internal_error";
            rec.error = e.what();
            m.failed_stage = name;
            result.ok = false;
            result.error = Error(ErrorKind::data, e.what());
        }
        std::string line = name + ": " + rec.status;
        if (!rec.summary.empty()) line += " - " + rec.summary;
        if (!rec.error.empty()) line += " - " + rec.error;
        if (!rec.warnings.empty()) line += " (" + std::to_string(rec.warnings.size()) + " warnings)";
        result.log.push_back(line);
        m.stages[name] = std::move(rec);
        save();
    }
    save();
    return result;
}

/// Checks every hashed output in the manifest against the files on disk.
inline std::vector<std::string> verify_manifest(const std::filesystem::path& run_dir) {
    const auto m = RunManifest::load_or_empty(run_dir / "manifest.json");
    std::vector<std::string> problems;
    for (const auto& [name, s] : m.stages) {
        for (const auto& [rel, hash] : s.outputs) {
            const auto p = run_dir / rel;
            if (!std::filesystem::exists(p)) {
                problems.push_back(rel + " (" + name + ") is missing");
            } else if (file_hash(p) != hash) {
                problems.push_back(rel + " (" + name + ") changed since it was written");
            }
        }
    }
    return problems;
}

}  // namespace reld
