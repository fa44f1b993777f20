#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "metric_sweep.hpp"
#include "reld/metrics.hpp"

using namespace reld;

namespace {

TokenSequence seq(std::initializer_list<const char*> toks) {
    TokenSequence s;
    for (const char* t : toks) s.tokens.emplace_back(t);
    return s;
}

// x -> (1,0), y -> (0,1)
TableEmbeddingProvider toy_provider() {
    return TableEmbeddingProvider(2, {{"x", {1.0, 0.0}}, {"y", {0.0, 1.0}}}, OovPolicy::error);
}

}  // namespace

TEST(LexicalOverlap, HandComputedExample) {
    const auto o = lexical_overlap(seq({"the", "cat", "sat"}), seq({"the", "cat"}));
    EXPECT_DOUBLE_EQ(o.precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(o.recall, 1.0);
    EXPECT_DOUBLE_EQ(o.f1, 0.8);
}

TEST(LexicalOverlap, IdentityDisjointAndEmpty) {
    const auto same = lexical_overlap(seq({"a", "b"}), seq({"a", "b"}));
    EXPECT_EQ(same.f1, 1.0);
    const auto disjoint = lexical_overlap(seq({"a"}), seq({"b"}));
    EXPECT_EQ(disjoint.f1, 0.0);
    EXPECT_EQ(lexical_overlap(seq({}), seq({"a"})).recall, 0.0);
}

TEST(Bleu, Examples) {
    EXPECT_EQ(bleu(seq({"a", "b", "c", "d"}), seq({"a", "b", "c", "d"})), 1.0);
    EXPECT_DOUBLE_EQ(bleu(seq({"the", "cat"}), seq({"the", "dog"}), 1), 0.5);
    EXPECT_EQ(bleu(seq({}), seq({"a"})), 0.0);
}

TEST(Bleu, BrevityPenaltyAndSmoothing) {
    // pred shorter than gold: BP = exp(1 - 4/2)
    EXPECT_NEAR(bleu(seq({"a", "b"}), seq({"a", "b", "c", "d"}), 1), std::exp(-1.0), 1e-15);
    // no matching bigram: the zero precision becomes 1e-9
    EXPECT_NEAR(bleu(seq({"a", "b"}), seq({"b", "a"}), 2), std::sqrt(1e-9), 1e-18);
}

TEST(Rouge, LcsExample) {
    const auto r = rouge(seq({"the", "cat", "sat", "on", "mat"}), seq({"the", "cat", "on", "the", "mat"}), RougeVariant::l);
    EXPECT_EQ(lcs_length({"the", "cat", "sat", "on", "mat"}, {"the", "cat", "on", "the", "mat"}), 4u);
    EXPECT_DOUBLE_EQ(r.precision, 0.8);
    EXPECT_DOUBLE_EQ(r.recall, 0.8);
    EXPECT_DOUBLE_EQ(r.f1, 0.8);
}

TEST(Rouge, IdentityAndDegenerateBigram) {
    for (auto v : {RougeVariant::n1, RougeVariant::n2, RougeVariant::l}) {
        EXPECT_EQ(rouge(seq({"a", "b", "c"}), seq({"a", "b", "c"}), v).f1, 1.0);
    }
    const auto r = rouge(seq({"a"}), seq({"a", "b"}), RougeVariant::n2);
    EXPECT_EQ(r.precision, 0.0);
    EXPECT_EQ(r.recall, 0.0);
    EXPECT_EQ(r.f1, 0.0);
}

TEST(Distinct, Examples) {
    EXPECT_DOUBLE_EQ(distinct_n(seq({"a", "a", "a"}), 1), 1.0 / 3.0);
    EXPECT_EQ(distinct_n(seq({"a", "b", "c"}), 1), 1.0);
    EXPECT_EQ(distinct_n(seq({"a"}), 2), 0.0);
    EXPECT_THROW(distinct_n(seq({"a"}), 3), Error);
}

TEST(Embedding, ToyProviderExamples) {
    const auto p = toy_provider();
    for (auto m : {EmbeddingMethod::greedy, EmbeddingMethod::average, EmbeddingMethod::extrema, EmbeddingMethod::bertscore}) {
        EXPECT_EQ(embed_similarity(seq({"x"}), seq({"x"}), p, m), 1.0);
    }
    EXPECT_DOUBLE_EQ(embed_similarity(seq({"x", "y"}), seq({"x"}), p, EmbeddingMethod::greedy), 0.75);
    EXPECT_NEAR(embed_similarity(seq({"x", "y"}), seq({"x"}), p, EmbeddingMethod::bertscore), 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(embed_similarity(seq({"x", "y"}), seq({"x"}), p, EmbeddingMethod::average), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(embed_similarity(seq({"x", "y"}), seq({"x"}), p, EmbeddingMethod::extrema), 1.0 / std::sqrt(2.0), 1e-12);
    EXPECT_EQ(embed_similarity(seq({}), seq({"x"}), p, EmbeddingMethod::greedy), 0.0);
}

TEST(Embedding, DimensionMismatchIsConfigError) {
    class Broken final : public EmbeddingProvider {
    public:
        std::size_t dimension() const override { return 3; }
        Vector lookup(const std::string&) const override { return {1.0, 0.0}; }
        std::string version() const override { return "broken"; }
    };
    try {
        embed_similarity(seq({"a"}), seq({"a"}), Broken{}, EmbeddingMethod::average);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
    }
}

TEST(Embedding, TableFileFormat) {
    const auto path = std::filesystem::temp_directory_path() / "reld_emb.txt";
    write_file(path, "dim 3\ncat 1 0 0\ndog 0 1 0.5\n");
    const auto p = TableEmbeddingProvider::load(path, OovPolicy::zero_vector);
    EXPECT_EQ(p.dimension(), 3u);
    EXPECT_EQ(p.lookup("dog"), (Vector{0.0, 1.0, 0.5}));
    EXPECT_EQ(p.lookup("zebra"), (Vector{0.0, 0.0, 0.0}));
    write_file(path, "dim 3\ncat 1 0\n");
    EXPECT_THROW(TableEmbeddingProvider::load(path), Error);
    write_file(path, "dimension 3\n");
    EXPECT_THROW(TableEmbeddingProvider::load(path), Error);
    std::filesystem::remove(path);
}

TEST(Embedding, HashedVectorsAreDeterministicUnitVectors) {
    HashEmbeddingProvider p(16);
    const auto a = p.lookup("token");
    EXPECT_EQ(a, p.lookup("token"));
    double norm = 0;
    for (double v : a) norm += v * v;
    EXPECT_NEAR(norm, 1.0, 1e-12);
    EXPECT_NE(a, p.lookup("other"));
}

TEST(MetricProperties, SymmetryUnderSwap) {
    std::mt19937_64 rng(3);
    HashEmbeddingProvider provider(16);
    for (int t = 0; t < 500; ++t) {
        const auto a = sweep::random_sequence(rng, 8, 6);
        const auto b = sweep::random_sequence(rng, 8, 6);
        EXPECT_EQ(lexical_overlap(a, b).f1, lexical_overlap(b, a).f1);
        EXPECT_EQ(lexical_overlap(a, b).precision, lexical_overlap(b, a).recall);
        for (auto v : {RougeVariant::n1, RougeVariant::n2, RougeVariant::l}) EXPECT_EQ(rouge(a, b, v).f1, rouge(b, a, v).f1);
        for (auto m : {EmbeddingMethod::greedy, EmbeddingMethod::average, EmbeddingMethod::extrema}) {
            EXPECT_EQ(embed_similarity(a, b, provider, m), embed_similarity(b, a, provider, m));
        }
    }
    // BLEU is directional.
    EXPECT_NE(bleu(seq({"a"}), seq({"a", "b", "c"})), bleu(seq({"a", "b", "c"}), seq({"a"})));
}

TEST(MetricProperties, Boundedness) {
    std::mt19937_64 rng(5);
    HashEmbeddingProvider provider(8);
    for (int t = 0; t < 10000; ++t) {
        const auto a = sweep::random_sequence(rng, 10, 8);
        const auto b = sweep::random_sequence(rng, 10, 8);
        for (double v : {lexical_overlap(a, b).f1, bleu(a, b), rouge(a, b, RougeVariant::n1).f1,
                         rouge(a, b, RougeVariant::n2).f1, rouge(a, b, RougeVariant::l).f1, distinct_n(a, 1),
                         distinct_n(a, 2)}) {
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
        }
        if (t % 10 == 0) {
            for (auto m : {EmbeddingMethod::greedy, EmbeddingMethod::average, EmbeddingMethod::extrema, EmbeddingMethod::bertscore}) {
                const double v = embed_similarity(a, b, provider, m);
                ASSERT_GE(v, -1.0);
                ASSERT_LE(v, 1.0);
            }
        }
    }
}

TEST(MetricProperties, IdentityLaw) {
    std::string failure;
    EXPECT_EQ(sweep::identity_violations(300, 17, &failure), 0u) << failure;
}

TEST(MetricProperties, AppendingGoldTokenNeverLowersRecall) {
    std::mt19937_64 rng(9);
    for (int t = 0; t < 2000; ++t) {
        auto pred = sweep::random_sequence(rng, 6, 5);
        const auto gold = sweep::random_sequence(rng, 6, 5);
        const double before = lexical_overlap(pred, gold).recall;
        pred.tokens.push_back(gold.tokens[rng() % gold.size()]);
        EXPECT_GE(lexical_overlap(pred, gold).recall, before);
    }
}

TEST(MetricOracle, ExhaustiveShortSequences) {
    // The acceptance suite runs the same sweep up to six tokens.
    const auto result = sweep::exhaustive(4);
    EXPECT_GT(result.pairs, 1000u);
    EXPECT_LE(result.max_abs_error, 1e-12) << result.worst;
    EXPECT_EQ(sweep::renaming_invariance_error(2000, 6, 1), 0.0);
}

TEST(MetricVector, IdentityAnswerAndMaxOverGolds) {
    QASample s;
    s.id = "s1";
    s.dataset = "d";
    s.context = "ctx";
    s.question = "q";
    s.gold_answers = {"Paris is the capital"};
    LlmAssessment a;
    a.goodness = 5;
    a.similarity = 5;
    HashEmbeddingProvider provider(16);
    const auto mv = compute_metric_vector(s, "Paris is the capital", a, provider);
    for (const char* name : {"f1", "recall", "bleu", "rouge1", "rouge2", "rougeL", "greedy", "emb_avg", "emb_extrema",
                             "bert_score", "goodness", "similarity"}) {
        EXPECT_EQ(mv.normalized.at(name), 1.0) << name;
    }

    s.gold_answers = {"London", "Lyon is big"};
    const auto second = compute_metric_vector(s, "Lyon is big.", a, provider);
    EXPECT_EQ(second.f1, 1.0);
}

TEST(MetricVector, ZeroVectorProviderZeroesEmbeddingMetricsOnly) {
    QASample s;
    s.id = "s1";
    s.context = "ctx";
    s.question = "q";
    s.gold_answers = {"alpha beta"};
    LlmAssessment a;
    a.goodness = 3;
    a.similarity = 2;
    const TableEmbeddingProvider empty(4, {}, OovPolicy::zero_vector);
    const auto mv = compute_metric_vector(s, "alpha beta", a, empty);
    EXPECT_EQ(mv.greedy, 0.0);
    EXPECT_EQ(mv.emb_avg, 0.0);
    EXPECT_EQ(mv.emb_extrema, 0.0);
    EXPECT_EQ(mv.bert_score, 0.0);
    EXPECT_EQ(mv.f1, 1.0);
    EXPECT_EQ(mv.normalized.at("goodness"), 0.5);
}

TEST(MetricVector, JsonAndCsvExport) {
    QASample s;
    s.id = "s,1";
    s.context = "ctx";
    s.question = "q";
    s.gold_answers = {"a b"};
    LlmAssessment a;
    HashEmbeddingProvider provider(8);
    const auto mv = compute_metric_vector(s, "a c", a, provider, "m");
    const auto back = metric_vector_from_json(to_json(mv));
    EXPECT_EQ(back.features(), mv.features());
    EXPECT_EQ(metric_csv_header().substr(0, 32), "sample_id,model_id,dataset,f1,re");
    EXPECT_EQ(metric_csv_row(mv).rfind("\"s,1\",m,", 0), 0u);
}

TEST(MetricVector, BatchOrderIndependentOfThreads) {
    std::vector<QASample> samples(12);
    std::vector<ScoringJob> jobs;
    for (int i = 11; i >= 0; --i) {
        auto& s = samples[static_cast<std::size_t>(i)];
        s.id = "s" + std::to_string(i < 10 ? 0 : 1) + std::to_string(i);
        s.context = "c";
        s.question = "q";
        s.gold_answers = {"gold " + std::to_string(i)};
        jobs.push_back({&s, "gold", LlmAssessment{}, "m"});
    }
    HashEmbeddingProvider provider(8);
    const auto one = compute_metric_vectors(jobs, provider, 1);
    const auto four = compute_metric_vectors(jobs, provider, 4);
    ASSERT_EQ(one.size(), four.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
        EXPECT_EQ(one[i].sample_id, four[i].sample_id);
        EXPECT_EQ(one[i].features(), four[i].features());
        if (i) {
            EXPECT_LT(one[i - 1].sample_id, one[i].sample_id);
        }
    }
}
