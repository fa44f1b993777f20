#include <gtest/gtest.h>

#include <sstream>
#include <sys/wait.h>

#include "campaign_sim.hpp"
#include "reld/cli.hpp"
#include "run_fixture.hpp"

using namespace reld;
using json = nlohmann::json;
using fixture::TempDir;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string demo_config() { return (fixture::demo_dir() / "pipeline.json").string(); }

std::vector<json> jsonl(const std::string& text) {
    std::vector<json> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.push_back(json::parse(line));
    }
    return out;
}

}  // namespace

TEST(CliHelp, EnumeratesDocumentedInterface) {
    const auto top = invoke({"--help"});
    EXPECT_EQ(top.code, 0);
    for (const char* flag : {"--config", "--seed", "--out", "--k", "--strategy", "--force", "--threads"}) {
        EXPECT_NE(top.out.find(flag), std::string::npos) << flag;
    }
    for (const char* sub : {"ingest", "generate", "assess", "score", "calibrate", "train", "predict", "evaluate",
                            "analyze", "campaign", "serve", "run", "demo"}) {
        EXPECT_NE(top.out.find(std::string("  ") + sub), std::string::npos) << sub;
    }
    const std::vector<std::pair<std::string, std::vector<std::string>>> nested = {
        {"evaluate", {"cv", "iid-ood"}}, {"analyze", {"categories", "vocab"}}, {"campaign", {"create", "gate", "export"}}};
    for (const auto& [parent, children] : nested) {
        const auto h = invoke({parent, "--help"});
        EXPECT_EQ(h.code, 0) << parent;
        for (const auto& c : children) EXPECT_NE(h.out.find(c), std::string::npos) << parent << " " << c;
    }
    const auto serve = invoke({"serve", "--help"});
    for (const char* flag : {"--port", "--state-dir", "--host"}) EXPECT_NE(serve.out.find(flag), std::string::npos) << flag;
    EXPECT_EQ(invoke({"--version"}).code, 0);
}

TEST(CliExitCodes, UsageErrorsExitOne) {
    EXPECT_EQ(invoke({}).code, 1);
    EXPECT_EQ(invoke({"frobnicate"}).code, 1);
    EXPECT_EQ(invoke({"run"}).code, 1);  // no --config
    EXPECT_EQ(invoke({"--config", "/nonexistent.json", "run"}).code, 1);
    EXPECT_EQ(invoke({"--config", demo_config(), "--strategy", "vote", "run"}).code, 1);
    EXPECT_EQ(invoke({"run", "--seed", "not-a-number"}).code, 1);

    const auto k7 = invoke({"--config", demo_config(), "--k", "7", "train"});
    EXPECT_EQ(k7.code, 1);
    EXPECT_NE(k7.err.find("K must be one of 4,6,8,10"), std::string::npos);
}

TEST(CliExitCodes, DataErrorsExitTwo) {
    TempDir tmp("cli_data");
    const auto r = invoke({"--out", tmp.path().string(), "predict"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("head.json"), std::string::npos);
    EXPECT_EQ(invoke({"campaign", "gate", "--state-dir", tmp.path().string(), "--id", "nope"}).code, 2);
}

TEST(CliExitCodes, EndpointErrorsExitThree) {
    TempDir tmp("cli_endpoint");
    json cfg = fixture::read_json(fixture::demo_dir() / "pipeline.json");
    std::filesystem::create_directories(tmp / "nomock");
    cfg["generators"][0]["mock_dir"] = (tmp / "nomock").string();
    for (auto& src : cfg["sources"]) {
        src["descriptor"] = (fixture::demo_dir() / src["descriptor"].get<std::string>()).string();
        src["records"] = (fixture::demo_dir() / src["records"].get<std::string>()).string();
    }
    cfg["out"] = (tmp / "run").string();
    write_file(tmp / "pipeline.json", cfg.dump());
    const auto r = invoke({"--config", (tmp / "pipeline.json").string(), "run"});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.out.find("generate: failed"), std::string::npos);
    EXPECT_NE(r.out.find("status: partial"), std::string::npos);
}

TEST(CliBinary, ExitCodeReachesTheShell) {
    const std::string bin = RELD_CLI_PATH;
    const auto status = [](const std::string& cmd) {
        const int s = std::system((cmd + " > /dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    EXPECT_EQ(status(bin + " --help"), 0);
    EXPECT_EQ(status(bin + " --config " + demo_config() + " --k 7 train"), 1);
    EXPECT_EQ(status(bin + " --out /nonexistent-run predict"), 2);
}

TEST(CliRun, DemoEndToEnd) {
    TempDir tmp("cli_run");
    const auto out = tmp.path().string();
    const auto run = invoke({"--config", demo_config(), "--out", out, "run"});
    ASSERT_EQ(run.code, 0) << run.err;
    for (const auto& s : pipeline_stages()) EXPECT_NE(run.out.find(s + ": complete"), std::string::npos) << s;
    EXPECT_NE(run.out.find("status: complete"), std::string::npos);

    const auto again = invoke({"--config", demo_config(), "--out", out, "score"});
    EXPECT_EQ(again.code, 0);
    EXPECT_NE(again.out.find("score: reused"), std::string::npos);

    const auto predict = invoke({"--config", demo_config(), "--out", out, "predict"});
    ASSERT_EQ(predict.code, 0) << predict.err;
    const auto preds = jsonl(predict.out);
    ASSERT_EQ(preds.size(), 400u);
    for (const auto& p : preds) {
        const double r = p["reliability"].get<double>();
        EXPECT_GE(r, 0.0);
        EXPECT_LE(r, 1.0);
        EXPECT_EQ(p["reliable"].get<bool>(), r > 0.5);
    }

    const auto cv = invoke({"--config", demo_config(), "--out", out, "evaluate", "cv", "--report", (tmp / "cv.json").string()});
    ASSERT_EQ(cv.code, 0) << cv.err;
    EXPECT_NE(cv.out.find("Automatic"), std::string::npos);
    EXPECT_GE(fixture::read_json(tmp / "cv.json")["all"]["strategies"]["weighted_average"]["mean_accuracy"].get<double>(), 0.95);

    const auto io = invoke({"--config", demo_config(), "--out", out, "evaluate", "iid-ood", "--repeats", "2"});
    ASSERT_EQ(io.code, 0) << io.err;
    EXPECT_NE(io.out.find("1 to 3"), std::string::npos);
    EXPECT_NE(io.out.find("Average"), std::string::npos);

    const auto cats = invoke({"--config", demo_config(), "--out", out, "analyze", "categories", "--report",
                           (tmp / "cats.json").string()});
    ASSERT_EQ(cats.code, 0) << cats.err;
    std::size_t total = 0;
    const auto cats_report = fixture::read_json(tmp / "cats.json");
    for (const auto& [model, counts] : cats_report["categories"].items()) {
        for (const auto& n : counts) total += n.get<std::size_t>();
    }
    EXPECT_EQ(total, 400u);

    const auto vocab = invoke({"--config", demo_config(), "--out", out, "analyze", "vocab", "--top", "5"});
    ASSERT_EQ(vocab.code, 0) << vocab.err;
    EXPECT_NE(vocab.out.find("misjudged"), std::string::npos);
}

TEST(CliCampaign, CreateGateExport) {
    TempDir tmp("cli_campaign");
    const auto state = (tmp / "state").string();
    std::string pool;
    for (const auto& e : sim::pool(3, 10)) pool += to_json(e).dump() + "\n";
    write_file(tmp / "pool.jsonl", pool);

    const auto created = invoke({"--seed", "5", "campaign", "create", "--state-dir", state, "--id", "c1", "--pool",
                              (tmp / "pool.jsonl").string(), "--per-dataset", "10"});
    ASSERT_EQ(created.code, 0) << created.err;
    const auto summary = json::parse(created.out);
    EXPECT_EQ(summary["items"], 30);
    EXPECT_EQ(summary["config"]["seed"], 5);
    EXPECT_EQ(invoke({"campaign", "create", "--state-dir", state, "--id", "c1", "--pool", (tmp / "pool.jsonl").string()}).code, 2);

    {
        CampaignStore store(state);
        for (const auto& group : summary["raters"]) {
            for (std::size_t m = 0; m < group.size(); ++m) {
                const auto rater = group[m].get<std::string>();
                for (;;) {
                    const auto next = store.next("c1", rater);
                    if (next["status"] == "exhausted") break;
                    const auto& item = next["item"];
                    const auto sid = item["sample_id"].get<std::string>();
                    store.rate("c1", {{"item_id", item["item_id"]}, {"rater", rater}, {"score", sim::scripted_score(sid, m)}});
                }
            }
        }
    }
    const auto gate = invoke({"campaign", "gate", "--state-dir", state, "--id", "c1"});
    ASSERT_EQ(gate.code, 0) << gate.err;
    const auto gated = json::parse(gate.out);

    const auto exported = invoke({"campaign", "export", "--state-dir", state, "--id", "c1", "--output", (tmp / "h.jsonl").string()});
    ASSERT_EQ(exported.code, 0) << exported.err;
    const auto labels = read_human_ratings(tmp / "h.jsonl");
    EXPECT_EQ(labels.size(), 30u - gated["flagged"].size());
    for (const auto& [key, label] : labels) {
        EXPECT_FALSE(sim::controversial(key.first)) << key.first;
        EXPECT_EQ(label, sim::true_label(key.first));
    }
}

TEST(CliDemo, WritesTheCommittedCorpus) {
    TempDir tmp("cli_demo");
    ASSERT_EQ(invoke({"demo", "--dir", tmp.path().string()}).code, 0);
    for (const auto& [rel, content] : demo::demo_files()) EXPECT_EQ(read_file(tmp / rel), content) << rel;
}
