#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "oracles.hpp"
#include "travl/errors.hpp"
#include "travl/eval.hpp"

using namespace travl;

namespace {

std::string slurp(const std::string& name) {
    std::ifstream in(std::string(TRAVL_GOLDEN_DIR) + "/" + name, std::ios::binary);
    EXPECT_TRUE(in) << name;
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

const OptionList kTwo = {{"A", "Yes, it falls."}, {"B", "No, it floats."}};

// Real key is A for the first `a_keys` pairs and B for the rest.
std::vector<BenchmarkPair> keyed_fixture(std::size_t count, std::size_t a_keys) {
    using enum OptionTag;
    std::vector<BenchmarkPair> pairs;
    for (std::size_t i = 0; i < count; ++i) {
        const bool a = i < a_keys;
        const OptionTag order[7] = {a ? plausible : implausible, a ? implausible : plausible, plausible, implausible,
                                    plausible,                   implausible,                none_of_the_above};
        BenchmarkPair p;
        p.pair_id = "q" + std::to_string(i);
        p.question = "What happens?";
        for (int k = 0; k < 7; ++k) p.options.push_back({static_cast<char>('A' + k), "option " + std::to_string(k), order[k]});
        p.correct_real = a ? 'A' : 'B';
        p.correct_generated = a ? 'B' : 'A';
        p.validate();
        pairs.push_back(p);
    }
    return pairs;
}

}  // namespace

TEST(JudgePrompt, MatchesGolden) {
    EXPECT_EQ(build_judge_prompt("Does the ball obey gravity?", kTwo, "a ball rolls"), slurp("judge_two_options.txt"));
}

TEST(JudgePrompt, OptionsRenderingAndPurity) {
    const auto a = build_judge_prompt("q", {{"A", "x"}, {"B", "y"}}, "c");
    EXPECT_NE(a.find("A. x\nB. y"), std::string::npos);
    EXPECT_EQ(a, build_judge_prompt("q", {{"A", "x"}, {"B", "y"}}, "c"));
    EXPECT_THROW(build_judge_prompt("", kTwo, "c"), ValidationError);
    EXPECT_THROW(build_judge_prompt("q", {}, "c"), ValidationError);
}

TEST(QaPrompt, MatchesGoldens) {
    EXPECT_EQ(build_qa_prompt("ball drop", "a ball rolls", QaVariant::implausible), slurp("qagen_implausible.txt"));
    EXPECT_EQ(build_qa_prompt("ball drop", "a ball rolls", QaVariant::plausible), slurp("qagen_plausible.txt"));
}

TEST(QaPrompt, RequiredClauses) {
    const auto p = build_qa_prompt("s", "c", QaVariant::implausible);
    EXPECT_NE(p.find("Generate 3 to 6 Q/A pairs per scenario."), std::string::npos);
    EXPECT_NE(p.find("DO NOT ask"), std::string::npos);
}

TEST(QaPrompt, VariantsDifferOnlyInRealismLines) {
    const auto imp = lines(build_qa_prompt("s", "c", QaVariant::implausible));
    const auto pla = lines(build_qa_prompt("s", "c", QaVariant::plausible));
    ASSERT_EQ(imp.size(), pla.size());
    std::vector<std::size_t> differing;
    for (std::size_t i = 0; i < imp.size(); ++i)
        if (imp[i] != pla[i]) differing.push_back(i);
    EXPECT_EQ(differing, (std::vector<std::size_t>{4, 5, 6, 21}));
}

TEST(OpenEndedPrompt, Text) {
    EXPECT_EQ(std::string(kOpenEndedPrompt),
              "Do the events in the video appear to be real, following physics principles, or are they implausible? Why?");
}

TEST(JudgeParsing, Examples) {
    const OptionList seven = keyed_fixture(1, 0)[0].option_list();
    EXPECT_EQ(judge_response_to_letter("B", seven), 'B');
    EXPECT_EQ(judge_response_to_letter("The best match is option C.", seven), 'C');
    EXPECT_EQ(judge_response_to_letter("none match", seven), std::nullopt);
    EXPECT_EQ(judge_response_to_letter("(D)", seven), 'D');
    EXPECT_EQ(judge_response_to_letter("b.", seven), 'B');
    EXPECT_EQ(judge_response_to_letter("It is a ball, so E", seven), 'E');
    EXPECT_EQ(judge_response_to_letter("Option Z", seven), std::nullopt);
    EXPECT_EQ(judge_response_to_letter("BAD answer", seven), std::nullopt);
}

TEST(Benchmark, JsonlRoundTripAndErrors) {
    const auto pairs = synthetic_benchmark(5, {}, 3);
    std::stringstream buf;
    write_benchmark(pairs, buf);
    EXPECT_EQ(read_benchmark(buf), pairs);

    std::stringstream five;
    write_benchmark(synthetic_benchmark(3, OptionComposition::five_option(), 4), five);
    const std::string text = five.str();
    std::istringstream as_seven(text);
    EXPECT_THROW(read_benchmark(as_seven), ValidationError);
    std::istringstream as_five(text);
    EXPECT_EQ(read_benchmark(as_five, OptionComposition::five_option()).size(), 3u);

    std::istringstream broken("{\"pair_id\": \n");
    try {
        read_benchmark(broken);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 1u);
    }
    std::stringstream dup;
    write_benchmark({pairs[0], pairs[0]}, dup);
    EXPECT_THROW(read_benchmark(dup), ValidationError);
}

TEST(Benchmark, SyntheticFixtureShape) {
    for (const auto& p : synthetic_benchmark(50, {}, 9)) {
        EXPECT_NO_THROW(p.validate());
        EXPECT_EQ(p.options.back().tag, OptionTag::none_of_the_above);
        EXPECT_EQ(p.letters(), "ABCDEFG");
    }
    EXPECT_EQ(synthetic_benchmark(3, {}, 9), synthetic_benchmark(3, {}, 9));
    auto p = synthetic_benchmark(1, {}, 9)[0];
    p.correct_real = p.correct_generated;
    EXPECT_THROW(p.validate(), ValidationError);
}

TEST(Score, AllCorrectAndAllUnmapped) {
    const auto pairs = synthetic_benchmark(6, {}, 1);
    AnswerMap right, none;
    for (const auto& p : pairs) {
        right[{p.pair_id, Variant::real}] = p.correct_real;
        right[{p.pair_id, Variant::generated}] = p.correct_generated;
        none[{p.pair_id, Variant::real}] = std::nullopt;
    }
    const auto s = score_benchmark(pairs, right);
    EXPECT_DOUBLE_EQ(s.real.accuracy(), 1.0);
    EXPECT_DOUBLE_EQ(s.generated.accuracy(), 1.0);
    EXPECT_EQ(s.both_correct, 6u);
    const auto z = score_benchmark(pairs, none);
    EXPECT_EQ(z.real.accuracy(), 0.0);
    EXPECT_EQ(z.generated.accuracy(), 0.0);
    EXPECT_EQ(z.real.unmapped, 6u);
    EXPECT_EQ(z.generated.unmapped, 6u);
}

TEST(Score, HandFixture) {
    const auto pairs = synthetic_benchmark(4, {}, 2);
    AnswerMap a;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& p = pairs[i];
        a[{p.pair_id, Variant::real}] = i < 3 ? p.correct_real : p.correct_generated;
        a[{p.pair_id, Variant::generated}] = i == 0 ? std::optional<char>(p.correct_generated) : std::optional<char>('G');
    }
    const auto s = score_benchmark(pairs, a);
    EXPECT_DOUBLE_EQ(s.real.accuracy(), 0.75);
    EXPECT_DOUBLE_EQ(s.generated.accuracy(), 0.25);
    EXPECT_EQ(s.both_correct, 1u);
    EXPECT_NE(format_score_table(s).find("75.0"), std::string::npos);
    a[{"ghost", Variant::real}] = 'A';
    EXPECT_THROW(score_benchmark(pairs, a), ValidationError);
}

TEST(BlindTest, ScriptedAlwaysA) {
    const auto pairs = keyed_fixture(100, 10);
    ScriptedClient always_a({"A"});
    const auto r = run_blind_test(pairs, always_a, 1);
    EXPECT_EQ(r.real.score.correct, 10u);
    EXPECT_DOUBLE_EQ(r.real.score.accuracy(), 0.10);
    EXPECT_DOUBLE_EQ(r.generated.score.accuracy(), 0.90);
    EXPECT_EQ(always_a.prompts().size(), 200u);
    EXPECT_EQ(always_a.prompts()[0], build_blind_prompt("What happens?", pairs[0].option_list()));
    EXPECT_THROW(run_blind_test(pairs, always_a, 0), InvalidInput);
}

TEST(BlindTest, FailuresCountAsUnmapped) {
    struct Flaky : CompletionClient {
        int n = 0;
        std::string send(const std::string&) override {
            if (n++ % 2) throw std::runtime_error("timeout");
            return "A";
        }
        std::string name() const override { return "flaky"; }
    } flaky;
    std::ostringstream log;
    const auto r = run_blind_test(keyed_fixture(4, 4), flaky, 1, 0, &log);
    EXPECT_EQ(r.failures, 4u);
    EXPECT_EQ(r.generated.score.unmapped, 4u);
    EXPECT_EQ(r.real.score.correct, 4u);
    EXPECT_NE(log.str().find("timeout"), std::string::npos);
}

TEST(BlindTest, RandomClientIsReproducible) {
    const auto pairs = synthetic_benchmark(20, {}, 5);
    RandomLetterClient a("ABCDEFG", 1), b("ABCDEFG", 99);
    const auto ra = run_blind_test(pairs, a, 5, 42);
    const auto rb = run_blind_test(pairs, b, 5, 42);
    EXPECT_EQ(ra.to_json().dump(), rb.to_json().dump());
    EXPECT_NE(trial_seed(1, "x", 0), trial_seed(1, "x", 1));
    EXPECT_NEAR(ra.chance, 1.0 / 7.0, 1e-15);
}

TEST(Wilson, Bounds) {
    const auto ci = wilson_interval(20, 100);
    EXPECT_LT(ci.low, 0.2);
    EXPECT_GT(ci.high, 0.2);
    EXPECT_NEAR(ci.low, 0.1333, 1e-3);
    EXPECT_NEAR(ci.high, 0.2888, 1e-3);
    EXPECT_EQ(wilson_interval(0, 0).low, 0.0);
    EXPECT_TRUE(oracle::within_binomial_95(20, 100, 0.2));
    EXPECT_FALSE(oracle::within_binomial_95(40, 100, 0.2));
}

TEST(HttpClient, EnvironmentRequired) {
    unsetenv("EVAL_ENDPOINT");
    EXPECT_THROW(HttpCompletionClient::from_environment(), InvalidInput);
    EXPECT_THROW(HttpCompletionClient("not a url", ""), InvalidInput);
}
