/// @file cli.hpp
/// @brief Command-line front end. `run_cli` parses arguments, dispatches to
/// the pipeline, evaluation, analysis and campaign commands, and maps errors
/// onto exit codes.

#pragma once

#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "reld/annotation.hpp"
#include "reld/annotation_server.hpp"
#include "reld/demo.hpp"
#include "reld/pipeline.hpp"

namespace reld {

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitEndpoint = 3 };

inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage:
        case ErrorKind::config: return kExitUsage;
        case ErrorKind::endpoint: return kExitEndpoint;
        default: return kExitData;
    }
}

namespace cli {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> k;
    std::vector<std::string> strategies;
    std::optional<std::size_t> threads;
    bool force = false;
};

inline void apply_overrides(PipelineConfig& cfg, const Globals& g) {
    if (g.seed) cfg.seed = *g.seed;
    if (!g.out.empty()) cfg.out = g.out;
    if (g.k) cfg.discriminator.k = *g.k;
    if (!g.strategies.empty()) {
        cfg.discriminator.strategies.clear();
        for (const auto& s : g.strategies) cfg.discriminator.strategies.push_back(parse_strategy(s));
    }
    if (g.threads) cfg.threads = *g.threads;
    cfg.iid.seed = cfg.seed;
    cfg.iid.discriminator = cfg.discriminator;
    require_supported_class_count(cfg.discriminator.k);
}

inline PipelineConfig require_config(const Globals& g) {
    if (g.config.empty()) fail(ErrorKind::usage, "this command needs --config PATH");
    auto cfg = PipelineConfig::load(g.config);
    apply_overrides(cfg, g);
    cfg.validate();
    return cfg;
}

/// Config when one is given; otherwise defaults with the global overrides.
inline PipelineConfig optional_config(const Globals& g) {
    if (!g.config.empty()) return require_config(g);
    PipelineConfig cfg;
    cfg.out = g.out.empty() ? "run" : g.out;
    cfg.discriminator.feature_names = feature_names();
    apply_overrides(cfg, g);
    return cfg;
}

/// Path of a run artifact, checked against the hash the manifest recorded.
inline std::filesystem::path checked(const std::filesystem::path& run, const std::string& rel, const std::string& stage) {
    const auto p = run / rel;
    if (!std::filesystem::exists(p)) fail(ErrorKind::data, p.string() + " not found; run the " + stage + " stage first");
    const auto m = RunManifest::load_or_empty(run / "manifest.json");
    if (const auto* producer = m.producer(rel); producer && producer->outputs.at(rel) != file_hash(p)) {
        fail(ErrorKind::data, p.string() + " does not match the hash recorded in the manifest");
    }
    return p;
}

inline int print_pipeline(const PipelineResult& r, const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
    for (const auto& line : r.log) out << line << "\n";
    out << "status: " << r.manifest.status << " (" << manifest_path(cfg).string() << ")\n";
    if (r.error) {
        err << "error: " << r.error->what() << "\n";
        return exit_code_for(r.error->kind());
    }
    return kExitOk;
}

inline void emit(const std::string& path, const std::string& content, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << content;
    } else {
        write_file(path, content);
    }
}

struct RecordInputs {
    std::string head;
    std::string records;
    std::string strategy;
    double threshold = 0.5;
};

struct Prediction {
    const EvalRecord* record;
    double reliability;
    bool reliable;
};

inline std::vector<Prediction> predict_records(const HeadParams& head, const std::vector<EvalRecord>& records,
                                               BinaryStrategy strategy, double threshold) {
    std::vector<Prediction> out;
    for (const auto& r : records) {
        if (r.features.size() != head.feature_count()) {
            fail(ErrorKind::data, "record " + r.key() + " has " + std::to_string(r.features.size()) +
                                      " features, the head expects " + std::to_string(head.feature_count()));
        }
        const double p = reliability(head, r.features, strategy);
        out.push_back({&r, p, decide(p, threshold) == Verdict::reliable});
    }
    return out;
}

struct Loaded {
    HeadParams head;
    std::vector<EvalRecord> records;
    BinaryStrategy strategy;
};

inline Loaded load_for_prediction(const PipelineConfig& cfg, const RecordInputs& in) {
    Loaded l;
    const auto head_path = in.head.empty() ? checked(cfg.out, "head.json", "train") : std::filesystem::path(in.head);
    try {
        l.head = head_from_json(nlohmann::json::parse(read_file(head_path)));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::data, head_path.string() + ": " + e.what());
    }
    l.records = read_eval_records(in.records.empty() ? checked(cfg.out, "eval_records.jsonl", "train")
                                                     : std::filesystem::path(in.records));
    l.strategy = in.strategy.empty() ? cfg.discriminator.strategies.front() : parse_strategy(in.strategy);
    if (!(in.threshold > 0.0 && in.threshold < 1.0)) fail(ErrorKind::usage, "threshold must lie in (0,1)");
    return l;
}

struct CategoryCounts {
    std::array<std::size_t, 4> n{};
    std::size_t total() const { return n[0] + n[1] + n[2] + n[3]; }
};

inline std::string render_categories(const std::map<std::string, CategoryCounts>& by_model) {
    std::ostringstream os;
    const auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    os << pad("LLM", 14) << "| " << pad("1", 14) << "| " << pad("2", 14) << "| " << pad("3", 14) << "| "
       << pad("4", 14) << "| rows\n";
    for (const auto& [model, c] : by_model) {
        os << pad(model, 14);
        for (std::size_t i = 0; i < 4; ++i) {
            const double frac = c.total() ? static_cast<double>(c.n[i]) / static_cast<double>(c.total()) : 0.0;
            os << "| " << pad(std::to_string(c.n[i]) + " (" + format_double(frac, 3) + ")", 14);
        }
        os << "| " << c.total() << "\n";
    }
    return os.str();
}

inline std::string render_vocab(const VocabReport& r) {
    std::ostringstream os;
    const auto side = [&os](const char* title, const std::vector<TokenScore>& s) {
        os << title << "\n";
        for (const auto& t : s) {
            os << "  " << t.token;
            const auto width = static_cast<std::size_t>(std::count_if(
                t.token.begin(), t.token.end(), [](char ch) { return (static_cast<unsigned char>(ch) & 0xC0) != 0x80; }));
            for (std::size_t i = width; i < 16; ++i) os << ' ';
            os << format_double(t.log_odds, 4) << "  (" << t.count_a << " vs " << t.count_b << ")\n";
        }
    };
    side("correctly judged (categories 1, 4)", r.side_a);
    side("misjudged (categories 2, 3)", r.side_b);
    os << "tokens " << r.total_a << " vs " << r.total_b << ", vocabulary " << r.vocabulary << "\n";
    return os.str();
}

inline std::vector<PoolEntry> pool_from_run(const std::filesystem::path& run) {
    const auto samples = read_corpus(checked(run, "corpus.jsonl", "ingest"));
    const auto gens = read_generations(checked(run, "generations.jsonl", "generate"));
    std::map<std::string, const QASample*> by_id;
    for (const auto& s : samples) by_id[s.id] = &s;
    std::vector<PoolEntry> pool;
    for (const auto& g : gens) {
        if (!g.usable()) continue;
        const auto it = by_id.find(g.sample_id);
        if (it == by_id.end()) fail(ErrorKind::data, "generation for unknown sample " + g.sample_id);
        const auto& s = *it->second;
        pool.push_back({s.id, g.model_id, s.dataset, s.question,
                        s.kind == SampleKind::mtd ? render_history(s.history, 0) : s.context, g.final_answer,
                        s.gold_answers});
    }
    return pool;
}

inline std::vector<PoolEntry> read_pool(const std::filesystem::path& path) {
    std::vector<PoolEntry> pool;
    for (const auto& j : read_jsonl(path)) pool.push_back(pool_entry_from_json(j));
    return pool;
}

}  // namespace cli

/// Runs the command line `args` (without the program name).
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    using namespace cli;
    CLI::App app{"Reliability discriminator for LLM question answering: pipeline, evaluation and rating campaigns.", "reld"};
    app.fallthrough();
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    Globals g;
    app.add_option("--config", g.config, "Pipeline config file (JSON)");
    app.add_option("--seed", g.seed, "Override the root seed");
    app.add_option("--out", g.out, "Run directory (overrides the config)");
    app.add_option("--k", g.k, "Class count K (4, 6, 8 or 10)");
    app.add_option("--strategy", g.strategies, "Binary conversion strategy: normalization, discrete, weighted_average (repeatable)");
    app.add_option("--threads", g.threads, "Worker threads (0: all cores)");
    app.add_flag("--force", g.force, "Rerun stages even when the manifest says they are current");

    std::function<int()> action;

    auto* run = app.add_subcommand("run", "Run every pipeline stage (or --stages) in order");
    std::vector<std::string> stage_list;
    run->add_option("--stages", stage_list, "Stages to run")->delimiter(',');
    run->callback([&] {
        action = [&] {
            const auto cfg = require_config(g);
            return print_pipeline(run_pipeline(cfg, stage_list, g.force), cfg, out, err);
        };
    });

    const std::vector<std::pair<std::string, std::string>> stage_help = {
        {"ingest", "Read dataset sources into the canonical corpus"},
        {"generate", "Generate answers with every configured model"},
        {"assess", "Rate answers with the judge model"},
        {"score", "Compute metric vectors and final scores"},
        {"calibrate", "Fit metric weights against human ratings"},
        {"train", "Train the discriminator head"}};
    for (const auto& [name, help] : stage_help) {
        auto* sc = app.add_subcommand(name, help);
        sc->callback([&, stage = name] {
            action = [&, stage] {
                const auto cfg = require_config(g);
                return print_pipeline(run_pipeline(cfg, {stage}, g.force), cfg, out, err);
            };
        });
    }

    RecordInputs rin;
    const auto add_record_inputs = [&rin](CLI::App* sc, bool with_head) {
        if (with_head) sc->add_option("--head", rin.head, "Head file (default: <out>/head.json)");
        sc->add_option("--records", rin.records, "Evaluation records (default: <out>/eval_records.jsonl)");
    };

    auto* predict = app.add_subcommand("predict", "Score records with a trained head");
    add_record_inputs(predict, true);
    predict->add_option("--threshold", rin.threshold, "Decision threshold on the reliability probability");
    std::string predict_output;
    predict->add_option("--output", predict_output, "Output JSONL (default: stdout)");
    predict->callback([&] {
        action = [&] {
            const auto cfg = optional_config(g);
            rin.strategy = g.strategies.empty() ? "" : g.strategies.front();
            const auto l = load_for_prediction(cfg, rin);
            std::string body;
            for (const auto& p : predict_records(l.head, l.records, l.strategy, rin.threshold)) {
                body += nlohmann::json{{"sample_id", p.record->sample_id},
                                       {"model_id", p.record->model_id},
                                       {"dataset", p.record->dataset},
                                       {"reliability", p.reliability},
                                       {"reliable", p.reliable}}
                            .dump() +
                        "\n";
            }
            emit(predict_output, body, out);
            return kExitOk;
        };
    });

    auto* evaluate = app.add_subcommand("evaluate", "Run the evaluate stage, or one experiment via a subcommand");
    evaluate->require_subcommand(0, 1);
    evaluate->callback([&] {
        if (evaluate->get_subcommands().empty()) {
            action = [&] {
                const auto cfg = require_config(g);
                return print_pipeline(run_pipeline(cfg, {"evaluate"}, g.force), cfg, out, err);
            };
        }
    });
    std::size_t folds = 10;
    bool with_grid = false;
    std::string report_path;
    auto* ev_cv = evaluate->add_subcommand("cv", "Stratified k-fold cross-validation with per-model tables");
    add_record_inputs(ev_cv, false);
    ev_cv->add_option("--folds", folds, "Fold count");
    ev_cv->add_flag("--grid", with_grid, "Also run the K x strategy grid");
    ev_cv->add_option("--report", report_path, "Write the JSON report here");
    ev_cv->callback([&] {
        action = [&] {
            const auto cfg = optional_config(g);
            const auto records = read_eval_records(rin.records.empty() ? checked(cfg.out, "eval_records.jsonl", "train")
                                                                       : std::filesystem::path(rin.records));
            const auto dcfg = stages::discriminator_for(cfg, records);
            const auto threads = cfg.worker_threads();
            std::map<std::string, std::vector<EvalRecord>> per_model;
            for (const auto& r : records) per_model[r.model_id].push_back(r);
            std::map<std::string, CvReport> by_model;
            nlohmann::json report{{"all", to_json(kfold_cv(records, dcfg, folds, cfg.seed, true, threads))}};
            for (const auto& [model, recs] : per_model) {
                by_model[model] = kfold_cv(recs, dcfg, folds, cfg.seed, true, threads);
                report["models"][model] = to_json(by_model[model]);
            }
            out << render_model_table(by_model);
            if (with_grid) {
                const auto cells = strategy_grid(records, dcfg, folds, cfg.seed, cfg.grid_ks);
                out << "\n" << render_grid_table(cells);
                report["grid"] = to_json(cells);
            }
            if (!report_path.empty()) write_file(report_path, report.dump(2) + "\n");
            return kExitOk;
        };
    });
    auto* ev_io = evaluate->add_subcommand("iid-ood", "In- versus out-of-distribution sweep over dataset ratios");
    add_record_inputs(ev_io, false);
    std::optional<std::size_t> repeats, downsample;
    ev_io->add_option("--repeats", repeats, "Repeats per ratio");
    ev_io->add_option("--downsample", downsample, "Per-dataset cap");
    ev_io->add_option("--report", report_path, "Write the JSON report here");
    ev_io->callback([&] {
        action = [&] {
            const auto cfg = optional_config(g);
            const auto records = read_eval_records(rin.records.empty() ? checked(cfg.out, "eval_records.jsonl", "train")
                                                                       : std::filesystem::path(rin.records));
            auto io = cfg.iid;
            io.discriminator = stages::discriminator_for(cfg, records);
            if (repeats) io.repeats = *repeats;
            if (downsample) io.downsample = *downsample;
            const auto datasets = by_dataset(records);
            if (datasets.size() < 2) fail(ErrorKind::data, "IID/OOD needs records from at least 2 datasets");
            const auto rows = iid_ood_sweep(datasets, io);
            for (const auto& w : rows.front().warnings) err << "warning: " << w << "\n";
            out << render_ratio_table(rows);
            if (!report_path.empty()) write_file(report_path, to_json(rows, io).dump(2) + "\n");
            return kExitOk;
        };
    });

    auto* analyze = app.add_subcommand("analyze", "Answer-category and vocabulary analyses");
    analyze->require_subcommand(1);
    auto* an_cat = analyze->add_subcommand("categories", "Count the four correctness x prediction categories per model");
    add_record_inputs(an_cat, true);
    an_cat->add_option("--report", report_path, "Write the JSON report here");
    std::size_t top_k = 20;
    std::string corpus_path;
    auto* an_vocab = analyze->add_subcommand("vocab", "Question tokens that separate correctly judged from misjudged answers");
    add_record_inputs(an_vocab, true);
    an_vocab->add_option("--corpus", corpus_path, "Corpus file (default: <out>/corpus.jsonl)");
    an_vocab->add_option("--top", top_k, "Tokens listed per side");
    an_vocab->add_option("--report", report_path, "Write the JSON report here");

    // categories of records with a human rating
    const auto categorized = [&](const Loaded& l, std::size_t& skipped) {
        std::vector<std::pair<const EvalRecord*, int>> out_rows;
        skipped = 0;
        for (const auto& p : predict_records(l.head, l.records, l.strategy, rin.threshold)) {
            if (!p.record->human) {
                ++skipped;
                continue;
            }
            out_rows.emplace_back(p.record, categorize(*p.record->human == 1, p.reliable));
        }
        if (out_rows.empty()) fail(ErrorKind::data, "no records carry a human rating");
        return out_rows;
    };
    an_cat->callback([&] {
        action = [&] {
            const auto cfg = optional_config(g);
            rin.strategy = g.strategies.empty() ? "" : g.strategies.front();
            const auto l = load_for_prediction(cfg, rin);
            std::size_t skipped = 0;
            std::map<std::string, CategoryCounts> by_model;
            for (const auto& [r, cat] : categorized(l, skipped)) ++by_model[r->model_id].n[static_cast<std::size_t>(cat - 1)];
            out << render_categories(by_model);
            if (skipped) err << "warning: " << skipped << " records without a human rating skipped\n";
            if (!report_path.empty()) {
                nlohmann::json rep = nlohmann::json::object();
                for (const auto& [model, c] : by_model) rep[model] = c.n;
                write_file(report_path, nlohmann::json{{"categories", rep}, {"skipped", skipped}}.dump(2) + "\n");
            }
            return kExitOk;
        };
    });
    an_vocab->callback([&] {
        action = [&] {
            const auto cfg = optional_config(g);
            rin.strategy = g.strategies.empty() ? "" : g.strategies.front();
            const auto l = load_for_prediction(cfg, rin);
            const auto samples = read_corpus(corpus_path.empty() ? checked(cfg.out, "corpus.jsonl", "ingest")
                                                                 : std::filesystem::path(corpus_path));
            std::map<std::string, const QASample*> by_id;
            for (const auto& s : samples) by_id[s.id] = &s;
            std::vector<std::vector<std::string>> right, wrong;
            std::size_t skipped = 0;
            for (const auto& [r, cat] : categorized(l, skipped)) {
                const auto it = by_id.find(r->sample_id);
                if (it == by_id.end()) fail(ErrorKind::data, "record " + r->key() + " has no corpus sample");
                auto toks = tokenize(it->second->question, it->second->language).tokens;
                (cat == 1 || cat == 4 ? right : wrong).push_back(std::move(toks));
            }
            const auto rep = vocab_divergence(right, wrong, top_k);
            out << render_vocab(rep);
            if (!report_path.empty()) write_file(report_path, to_json(rep).dump(2) + "\n");
            return kExitOk;
        };
    });

    auto* campaign = app.add_subcommand("campaign", "Manage human rating campaigns");
    campaign->require_subcommand(1);
    std::string state_dir = "campaigns";
    std::string campaign_id, pool_path, export_output;
    CampaignConfig ccfg;
    ccfg.per_dataset_count = 1000;
    auto* c_create = campaign->add_subcommand("create", "Sample items and assign rater groups");
    auto* c_gate = campaign->add_subcommand("gate", "Flag low-agreement items and draw replacements");
    auto* c_export = campaign->add_subcommand("export", "Write agreed ratings as JSONL (usable as human ratings)");
    for (auto* sc : {c_create, c_gate, c_export}) sc->add_option("--state-dir", state_dir, "Campaign state directory");
    c_create->add_option("--id", campaign_id, "Campaign id (default: derived from the content)");
    c_create->add_option("--pool", pool_path, "Pool JSONL (default: usable answers of the run in --out)");
    c_create->add_option("--per-dataset", ccfg.per_dataset_count, "Items sampled per dataset");
    c_create->add_option("--groups", ccfg.groups, "Rater groups");
    c_create->add_option("--raters", ccfg.raters_per_group, "Raters per group");
    c_create->add_option("--threshold", ccfg.threshold, "Per-item agreement threshold");
    c_gate->add_option("--id", campaign_id, "Campaign id")->required();
    c_export->add_option("--id", campaign_id, "Campaign id")->required();
    c_export->add_option("--output", export_output, "Output JSONL (default: stdout)");
    c_create->callback([&] {
        action = [&] {
            const auto pool = pool_path.empty() ? pool_from_run(g.out.empty() ? optional_config(g).out : std::filesystem::path(g.out))
                                                : read_pool(pool_path);
            nlohmann::json items = nlohmann::json::array();
            for (const auto& e : pool) items.push_back(to_json(e));
            ccfg.id = campaign_id;
            ccfg.seed = g.seed.value_or(0);
            auto body = ccfg.to_json();
            if (campaign_id.empty()) body.erase("id");
            body["items"] = std::move(items);
            CampaignStore store(state_dir);
            out << store.create(body).dump(2) << "\n";
            return kExitOk;
        };
    });
    c_gate->callback([&] {
        action = [&] {
            CampaignStore store(state_dir);
            out << store.gate(campaign_id).dump(2) << "\n";
            return kExitOk;
        };
    });
    c_export->callback([&] {
        action = [&] {
            CampaignStore store(state_dir);
            std::string body;
            for (const auto& r : store.export_rows(campaign_id)) body += to_json(r).dump() + "\n";
            emit(export_output, body, out);
            return kExitOk;
        };
    });

    auto* serve = app.add_subcommand("serve", "Serve the campaign HTTP API");
    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--state-dir", state_dir, "Campaign state directory");
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Port");
    serve->callback([&] {
        action = [&] {
            CampaignStore store(state_dir);
            httplib::Server server;
            mount_campaign_routes(server, store);
            out << "serving campaigns from " << state_dir << " on http://" << host << ":" << port << std::endl;
            if (!server.listen(host, port)) fail(ErrorKind::usage, "cannot listen on " + host + ":" + std::to_string(port));
            return kExitOk;
        };
    });

    auto* demo_cmd = app.add_subcommand("demo", "Write the synthetic demo corpus");
    std::string demo_dir = "data/demo";
    demo_cmd->add_option("--dir", demo_dir, "Destination directory");
    demo_cmd->callback([&] {
        action = [&] {
            demo::write_demo(demo_dir);
            out << "wrote demo corpus to " << demo_dir << " (config: " << (std::filesystem::path(demo_dir) / "pipeline.json").string()
                << ")\n";
            return kExitOk;
        };
    });

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    try {
        return action ? action() : kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
}

}  // namespace reld
