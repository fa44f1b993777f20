#include <gtest/gtest.h>

#include <map>
#include <set>

#include "reld/demo.hpp"
#include "reld/pipeline.hpp"
#include "run_fixture.hpp"

using namespace reld;
using json = nlohmann::json;
using fixture::TempDir;

namespace {

std::map<std::string, std::string> output_hashes(const std::filesystem::path& run) {
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(run)) {
        if (e.is_regular_file()) out[e.path().filename().string()] = file_hash(e.path());
    }
    return out;
}

const StageRecord& stage(const RunManifest& m, const std::string& name) { return m.stages.at(name); }

/// Copies the demo directory so tests can edit inputs.
std::filesystem::path copy_demo(const TempDir& tmp) {
    const auto dst = tmp / "demo";
    std::filesystem::copy(fixture::demo_dir(), dst, std::filesystem::copy_options::recursive);
    return dst;
}

}  // namespace

TEST(DemoCorpus, CommittedFilesMatchGenerator) {
    const auto files = demo::demo_files();
    std::set<std::string> on_disk;
    for (const auto& e : std::filesystem::recursive_directory_iterator(fixture::demo_dir())) {
        if (e.is_regular_file()) on_disk.insert(std::filesystem::relative(e.path(), fixture::demo_dir()).generic_string());
    }
    std::set<std::string> expected;
    for (const auto& [rel, content] : files) {
        expected.insert(rel);
        ASSERT_TRUE(on_disk.count(rel)) << rel << " missing; regenerate with `reld demo`";
        EXPECT_EQ(read_file(fixture::demo_dir() / rel), content) << rel;
    }
    EXPECT_EQ(on_disk, expected);
}

TEST(DemoCorpus, ShapeAndSeparation) {
    const auto files = demo::demo_files();
    std::size_t mock = 0;
    for (const auto& [rel, _] : files) mock += rel.rfind("mock/", 0) == 0;
    EXPECT_EQ(mock, 4 * demo::kPerDataset);
    const auto ratings = files.at("human_ratings.jsonl");
    EXPECT_EQ(static_cast<std::size_t>(std::count(ratings.begin(), ratings.end(), '\n')), 2 * 4 * demo::kPerDataset);
}

TEST(PipelineConfig, ResolvesPathsAgainstConfigDir) {
    const auto cfg = PipelineConfig::load(fixture::demo_dir() / "pipeline.json");
    ASSERT_EQ(cfg.sources.size(), 4u);
    EXPECT_TRUE(cfg.sources[0].descriptor.is_absolute());
    EXPECT_TRUE(std::filesystem::exists(cfg.sources[0].records));
    EXPECT_EQ(cfg.generators.size(), 2u);
    EXPECT_EQ(cfg.judge_endpoint().model, "demo-judge");
    EXPECT_EQ(cfg.discriminator.k, 4);
    EXPECT_EQ(cfg.discriminator.strategies.size(), 3u);
}

TEST(PipelineConfig, RejectsUnsupportedK) {
    json j = fixture::read_json(fixture::demo_dir() / "pipeline.json");
    j["discriminator"]["k"] = 7;
    try {
        PipelineConfig::from_json(j, fixture::demo_dir());
        FAIL() << "K=7 accepted";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::usage);
        EXPECT_NE(std::string(e.what()).find("K must be one of 4,6,8,10"), std::string::npos);
    }
    j["discriminator"]["k"] = 4;
    j["evaluation"]["grid_ks"] = {4, 7};
    EXPECT_THROW(PipelineConfig::from_json(j, fixture::demo_dir()), Error);
}

TEST(PipelineConfig, StructuralErrors) {
    const auto kind_of = [](const json& j) {
        try {
            PipelineConfig::from_json(j, {});
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::not_found;
    };
    EXPECT_EQ(kind_of(json::object()), ErrorKind::config);
    EXPECT_EQ(kind_of({{"samples", "x.jsonl"}, {"generators", {{{"kind", "carrier-pigeon"}}}}}), ErrorKind::config);
    EXPECT_EQ(kind_of({{"samples", "x.jsonl"}, {"discriminator", {{"strategies", {"vote"}}}}}), ErrorKind::usage);
    EXPECT_EQ(kind_of({{"samples", "x.jsonl"}, {"evaluation", {{"folds", 1}}}}), ErrorKind::usage);
    EXPECT_EQ(kind_of({{"samples", "x.jsonl"}, {"seed", "abc"}}), ErrorKind::config);
    EXPECT_THROW(PipelineConfig::load("/nonexistent/pipeline.json"), Error);
}

TEST(Pipeline, DemoRunCompletesEveryStage) {
    TempDir tmp("pipeline_full");
    const auto result = run_pipeline(fixture::demo_config(tmp.path()));
    ASSERT_TRUE(result.ok) << (result.error ? result.error->what() : "");
    EXPECT_EQ(result.manifest.status, "complete");
    for (const auto& name : pipeline_stages()) {
        EXPECT_EQ(stage(result.manifest, name).status, "complete") << name;
        for (const auto& [rel, hash] : stage(result.manifest, name).outputs) {
            EXPECT_EQ(file_hash(tmp / rel), hash) << rel;
        }
    }
    EXPECT_EQ(result.log.size(), pipeline_stages().size());
    EXPECT_TRUE(verify_manifest(tmp.path()).empty());

    EXPECT_EQ(read_corpus(tmp / "corpus.jsonl").size(), 200u);
    EXPECT_EQ(stage(result.manifest, "ingest").warnings.size(), 1u);  // the one broken demo record
    EXPECT_EQ(read_eval_records(tmp / "eval_records.jsonl").size(), 400u);

    const auto cv = fixture::read_json(tmp / "cv.json");
    for (const auto& [name, s] : cv["all"]["strategies"].items()) {
        if (name != "discrete") {
            EXPECT_GE(s["mean_accuracy"].get<double>(), 0.95) << name;
        }
    }
    EXPECT_EQ(fixture::read_json(tmp / "grid.json").size(), 12u);
    EXPECT_EQ(fixture::read_json(tmp / "iid_ood.json")["rows"].size(), 3u);
    const auto table = read_file(tmp / "cv_table.txt");
    for (const char* row : {"Automatic", "Human", "Average score", "demo-large", "demo-small"}) {
        EXPECT_NE(table.find(row), std::string::npos) << row;
    }
    const auto m = fixture::read_json(tmp / "manifest.json");
    EXPECT_EQ(m["tool_version"], kToolVersion);
    EXPECT_EQ(m["config"]["discriminator"]["k"], 4);
    EXPECT_EQ(m.dump().find("latency"), std::string::npos);
}

TEST(Pipeline, RerunReusesStagesAndForcedRerunIsByteIdentical) {
    TempDir tmp("pipeline_rerun");
    const auto cfg = fixture::demo_config(tmp.path());
    ASSERT_TRUE(run_pipeline(cfg).ok);
    auto before = output_hashes(tmp.path());
    before.erase("generation_timings.json");

    const auto again = run_pipeline(cfg);
    ASSERT_TRUE(again.ok);
    for (const auto& line : again.log) EXPECT_NE(line.find(": reused"), std::string::npos) << line;

    const auto forced = run_pipeline(cfg, {}, true);
    ASSERT_TRUE(forced.ok);
    for (const auto& line : forced.log) EXPECT_EQ(line.find(": reused"), std::string::npos) << line;
    auto after = output_hashes(tmp.path());
    after.erase("generation_timings.json");
    EXPECT_EQ(before, after);
}

TEST(Pipeline, ChangedInputRerunsOnlyDownstreamStages) {
    TempDir tmp("pipeline_change");
    const auto demo = copy_demo(tmp);
    auto cfg = PipelineConfig::load(demo / "pipeline.json");
    cfg.out = tmp / "run";
    ASSERT_TRUE(run_pipeline(cfg).ok);

    // a different judge verdict for one answer
    const auto mock_path = demo / "mock" / "choice-3.json";
    auto mock = fixture::read_json(mock_path);
    auto& verdict = mock["models"]["demo-large"]["judge"][0];
    verdict = verdict.get<std::string>() == "Goodness: 1\nSimilarity: 1" ? "Goodness: 2\nSimilarity: 1"
                                                                          : "Goodness: 3\nSimilarity: 3";
    write_file(mock_path, mock.dump(2));

    const auto again = run_pipeline(cfg);
    ASSERT_TRUE(again.ok);
    std::map<std::string, bool> reused;
    for (const auto& line : again.log) reused[line.substr(0, line.find(':'))] = line.find(": reused") != std::string::npos;
    EXPECT_TRUE(reused.at("ingest"));
    // the generator and judge share the mock directory, so both rerun
    EXPECT_FALSE(reused.at("generate"));
    EXPECT_FALSE(reused.at("assess"));
    EXPECT_FALSE(reused.at("score"));
    EXPECT_EQ(stage(again.manifest, "generate").outputs, stage(run_pipeline(cfg).manifest, "generate").outputs);
}

TEST(Pipeline, SeedOverrideChangesEvaluationKeyOnly) {
    TempDir tmp("pipeline_seed");
    auto cfg = fixture::demo_config(tmp.path());
    cfg.iid_ood = false;
    cfg.grid = false;
    ASSERT_TRUE(run_pipeline(cfg).ok);
    cfg.seed += 1;
    const auto again = run_pipeline(cfg);
    ASSERT_TRUE(again.ok);
    for (const auto& line : again.log) {
        const bool is_reused = line.find(": reused") != std::string::npos;
        const auto name = line.substr(0, line.find(':'));
        EXPECT_EQ(is_reused, name != "train" && name != "evaluate") << line;
    }
}

TEST(Pipeline, EndpointFailureRecordsPartialRun) {
    TempDir tmp("pipeline_partial");
    auto cfg = fixture::demo_config(tmp / "run");
    std::filesystem::create_directories(tmp / "empty_mock");
    cfg.generators[1].mock_dir = tmp / "empty_mock";
    const auto result = run_pipeline(cfg);
    EXPECT_FALSE(result.ok);
    ASSERT_TRUE(result.error.has_value());
    EXPECT_EQ(result.error->kind(), ErrorKind::endpoint);

    const auto m = RunManifest::from_json(fixture::read_json(tmp / "run" / "manifest.json"));
    EXPECT_EQ(m.status, "partial");
    EXPECT_EQ(m.failed_stage, "generate");
    EXPECT_EQ(stage(m, "ingest").status, "complete");
    EXPECT_EQ(stage(m, "generate").status, "failed");
    EXPECT_EQ(stage(m, "generate").error_code, "endpoint_error");
    EXPECT_FALSE(stage(m, "generate").error.empty());
    for (const char* s : {"assess", "score", "calibrate", "train", "evaluate"}) EXPECT_EQ(stage(m, s).status, "not_run") << s;
    EXPECT_FALSE(std::filesystem::exists(tmp / "run" / "assessments.jsonl"));

    // fixing the endpoint resumes from the failed stage
    cfg.generators[1].mock_dir = cfg.generators[0].mock_dir;
    const auto resumed = run_pipeline(cfg);
    ASSERT_TRUE(resumed.ok);
    EXPECT_NE(resumed.log.front().find("ingest: reused"), std::string::npos);
    EXPECT_EQ(resumed.manifest.status, "complete");
}

TEST(Pipeline, TamperedArtifactIsRejected) {
    TempDir tmp("pipeline_tamper");
    const auto cfg = fixture::demo_config(tmp.path());
    ASSERT_TRUE(run_pipeline(cfg, {"ingest", "generate"}).ok);
    write_file(tmp / "generations.jsonl", read_file(tmp / "generations.jsonl") + "\n");
    EXPECT_EQ(verify_manifest(tmp.path()).size(), 1u);
    const auto r = run_pipeline(cfg, {"assess"});
    EXPECT_FALSE(r.ok);
    ASSERT_TRUE(r.error.has_value());
    EXPECT_EQ(r.error->kind(), ErrorKind::data);
    EXPECT_NE(std::string(r.error->what()).find("does not match"), std::string::npos);
}

TEST(Pipeline, MissingUpstreamArtifactIsDataError) {
    TempDir tmp("pipeline_missing");
    const auto r = run_pipeline(fixture::demo_config(tmp.path()), {"score"});
    EXPECT_FALSE(r.ok);
    ASSERT_TRUE(r.error.has_value());
    EXPECT_EQ(r.error->kind(), ErrorKind::data);
    EXPECT_EQ(r.manifest.status, "partial");
}

TEST(Pipeline, UnknownStageIsUsageError) {
    TempDir tmp("pipeline_unknown");
    try {
        run_pipeline(fixture::demo_config(tmp.path()), {"polish"});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::usage);
    }
}

TEST(Pipeline, CalibrationSkippedWithoutHumanRatings) {
    TempDir tmp("pipeline_nohuman");
    auto cfg = fixture::demo_config(tmp.path());
    cfg.human_ratings.clear();
    cfg.iid_ood = false;
    cfg.grid = false;
    const auto r = run_pipeline(cfg);
    ASSERT_TRUE(r.ok) << (r.error ? r.error->what() : "");
    EXPECT_EQ(stage(r.manifest, "calibrate").status, "skipped");
    EXPECT_EQ(r.manifest.status, "complete");
    for (const auto& rec : read_eval_records(tmp / "eval_records.jsonl")) EXPECT_FALSE(rec.human.has_value());
}

TEST(Pipeline, AppliedCalibrationChangesFinalScores) {
    TempDir tmp("pipeline_calibrated");
    auto cfg = fixture::demo_config(tmp / "a");
    cfg.iid_ood = false;
    cfg.grid = false;
    ASSERT_TRUE(run_pipeline(cfg, {"ingest", "generate", "assess", "score", "calibrate", "train"}).ok);
    const auto plain = read_eval_records(tmp / "a" / "eval_records.jsonl");
    cfg.apply_calibrated = true;
    ASSERT_TRUE(run_pipeline(cfg, {"calibrate", "train"}).ok);
    const auto calibrated = read_eval_records(tmp / "a" / "eval_records.jsonl");
    const auto weights = WeightConfig::load(tmp / "a" / "weights.calibrated.txt");
    ASSERT_EQ(plain.size(), calibrated.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < plain.size(); ++i) {
        EXPECT_EQ(plain[i].features, calibrated[i].features);
        any_diff = any_diff || plain[i].final_score != calibrated[i].final_score;
    }
    EXPECT_TRUE(any_diff);
    EXPECT_NE(weights.version, WeightConfig::defaults().version);
}

TEST(Pipeline, ExternalScorerAppendsFeatures) {
    TempDir tmp("pipeline_external");
    auto cfg = fixture::demo_config(tmp.path());
    cfg.external_scorer = "cat > /dev/null; echo '[0.25, 1]'";
    const auto r = run_pipeline(cfg, {"ingest", "generate", "assess", "score", "train"});
    ASSERT_TRUE(r.ok) << (r.error ? r.error->what() : "");
    const auto recs = read_eval_records(tmp / "eval_records.jsonl");
    ASSERT_EQ(recs.front().features.size(), kMetricOrder.size() + 2);
    EXPECT_EQ(recs.front().features.back(), 1.0);
    const auto head = fixture::read_json(tmp / "head.json");
    EXPECT_EQ(head["feature_order"].size(), kMetricOrder.size() + 2);

    cfg.external_scorer = "cat > /dev/null; echo 'not json'";
    const auto bad = run_pipeline(cfg, {"score"});
    EXPECT_FALSE(bad.ok);
    EXPECT_EQ(bad.error->kind(), ErrorKind::data);
    cfg.external_scorer = "exit 3";
    const auto crashed = run_pipeline(cfg, {"score"});
    EXPECT_FALSE(crashed.ok);
    EXPECT_EQ(crashed.error->kind(), ErrorKind::endpoint);
}

TEST(HumanRatings, ReadsAndValidates) {
    TempDir tmp("ratings");
    write_file(tmp / "ok.jsonl", R"({"sample_id":"a","model_id":"m","label":1})" "\n" R"({"sample_id":"b","label":0})" "\n");
    const auto r = read_human_ratings(tmp / "ok.jsonl");
    EXPECT_EQ(r.at({"a", "m"}), 1);
    EXPECT_EQ(r.at({"b", ""}), 0);
    write_file(tmp / "bad.jsonl", R"({"sample_id":"a","label":2})" "\n");
    EXPECT_THROW(read_human_ratings(tmp / "bad.jsonl"), Error);
    write_file(tmp / "nolabel.jsonl", R"({"sample_id":"a"})" "\n");
    EXPECT_THROW(read_human_ratings(tmp / "nolabel.jsonl"), Error);
}

TEST(EvalRecordJson, RoundTrips) {
    EvalRecord r{"s1", "m", "d", {0.1, 0.2}, 0.75, 1, 0};
    const auto back = eval_record_from_json(to_json(r));
    EXPECT_EQ(back.key(), r.key());
    EXPECT_EQ(back.features, r.features);
    EXPECT_EQ(back.final_score, r.final_score);
    EXPECT_EQ(back.human, r.human);
    r.human.reset();
    EXPECT_FALSE(eval_record_from_json(to_json(r)).human.has_value());
}

TEST(BuildEvalRecords, FinalTagFollowsCompositeScore) {
    MetricVector mv;
    mv.sample_id = "s";
    mv.model_id = "m";
    mv.dataset = "d";
    for (const auto& name : kMetricOrder) mv.normalized[std::string(name)] = 1.0;
    const auto recs = build_eval_records({mv}, WeightConfig::defaults(), {{{"s", "m"}, 1}});
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_DOUBLE_EQ(recs[0].final_score, 1.0);
    EXPECT_EQ(recs[0].final_tag, 1);
    EXPECT_EQ(recs[0].human, 1);
    EXPECT_EQ(recs[0].features.size(), kMetricOrder.size());
}
