#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace travl {

/// Ordered (letter, text) pairs; rendering keeps this order.
using OptionList = std::vector<std::pair<std::string, std::string>>;

enum class OptionTag { plausible, implausible, none_of_the_above };
enum class Variant { real, generated };
enum class QaVariant { plausible, implausible };

std::string to_string(OptionTag tag);
std::string to_string(Variant variant);
OptionTag parse_option_tag(const std::string& text);
Variant parse_variant(const std::string& text);

struct BenchmarkOption {
    char letter = 'A';
    std::string text;
    OptionTag tag = OptionTag::plausible;

    bool operator==(const BenchmarkOption&) const = default;
};

/// How many options of each tag a pair carries.
struct OptionComposition {
    std::size_t plausible = 3;
    std::size_t implausible = 3;
    std::size_t none_of_the_above = 1;

    std::size_t total() const noexcept { return plausible + implausible + none_of_the_above; }
    /// Two plausible, two implausible, one none-of-the-above.
    static OptionComposition five_option() { return {2, 2, 1}; }
};

/// One question asked of a real clip and its generated counterpart.
struct BenchmarkPair {
    std::string pair_id;
    std::string question;
    std::vector<BenchmarkOption> options;  // letters A, B, C, ... in order
    char correct_real = 'A';
    char correct_generated = 'B';

    /// Throws ValidationError when the options break the composition, the
    /// letters are not consecutive from A, or a key points at the wrong tag.
    void validate(const OptionComposition& composition = {}) const;

    OptionList option_list() const;
    std::string letters() const;
    char key(Variant variant) const { return variant == Variant::real ? correct_real : correct_generated; }

    nlohmann::json to_json() const;
    static BenchmarkPair from_json(const nlohmann::json& j);

    bool operator==(const BenchmarkPair&) const = default;
};

/// One JSON record per line; blank lines are skipped. Every pair is validated
/// against `composition`; duplicate ids are rejected.
std::vector<BenchmarkPair> read_benchmark(std::istream& in, const OptionComposition& composition = {});
std::vector<BenchmarkPair> read_benchmark(const std::filesystem::path& path,
                                          const OptionComposition& composition = {});
void write_benchmark(const std::vector<BenchmarkPair>& pairs, std::ostream& out);
void write_benchmark(const std::vector<BenchmarkPair>& pairs, const std::filesystem::path& path);

/// Seeded fixture with shuffled tags and keys.
std::vector<BenchmarkPair> synthetic_benchmark(std::size_t count, const OptionComposition& composition,
                                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Prompts

extern const char* const kOpenEndedPrompt;

/// Throws ValidationError on an empty question or empty option list.
std::string build_judge_prompt(const std::string& question, const OptionList& options, const std::string& caption);
std::string build_qa_prompt(const std::string& scenario, const std::string& caption, QaVariant variant);
/// Question and options only.
std::string build_blind_prompt(const std::string& question, const OptionList& options);

/// First standalone uppercase option letter in `response`. A response that is
/// only a lowercase letter plus punctuation or whitespace also maps.
std::optional<char> judge_response_to_letter(const std::string& response, const OptionList& options);

// ---------------------------------------------------------------------------
// Scoring

struct SubsetScore {
    std::size_t items = 0;
    std::size_t correct = 0;
    std::size_t incorrect = 0;
    std::size_t unmapped = 0;

    double accuracy() const noexcept { return items ? static_cast<double>(correct) / items : 0.0; }
    nlohmann::json to_json() const;
};

struct BenchmarkScore {
    SubsetScore real;
    SubsetScore generated;
    /// Pairs answered correctly on both variants.
    std::size_t both_correct = 0;
    std::size_t pairs = 0;

    double both_accuracy() const noexcept { return pairs ? static_cast<double>(both_correct) / pairs : 0.0; }
    nlohmann::json to_json() const;
};

using AnswerKey = std::pair<std::string, Variant>;
/// nullopt is an unmapped answer.
using AnswerMap = std::map<AnswerKey, std::optional<char>>;

/// Missing answers count as unmapped. Throws ValidationError on an answer
/// for an unknown pair id.
BenchmarkScore score_benchmark(const std::vector<BenchmarkPair>& pairs, const AnswerMap& answers);

/// Aligned text table with counts and percentages.
std::string format_score_table(const BenchmarkScore& score);

// ---------------------------------------------------------------------------
// Completion clients

class CompletionClient {
public:
    virtual ~CompletionClient() = default;
    /// May throw; callers treat any exception as a failed request.
    virtual std::string send(const std::string& prompt) = 0;
    /// Called before each blind-test item with a seed derived from (master seed, pair id, trial).
    virtual void reseed(std::uint64_t /*seed*/) {}
    virtual std::string name() const = 0;
};

/// Replays canned responses in order, cycling when exhausted.
class ScriptedClient : public CompletionClient {
public:
    explicit ScriptedClient(std::vector<std::string> responses);
    std::string send(const std::string& prompt) override;
    std::string name() const override { return "scripted"; }
    const std::vector<std::string>& prompts() const noexcept { return prompts_; }

private:
    std::vector<std::string> responses_;
    std::size_t next_ = 0;
    std::vector<std::string> prompts_;
};

/// Answers with a uniformly drawn letter from `letters`.
class RandomLetterClient : public CompletionClient {
public:
    RandomLetterClient(std::string letters, std::uint64_t seed);
    std::string send(const std::string& prompt) override;
    void reseed(std::uint64_t seed) override { rng_.seed(seed); }
    std::string name() const override { return "random"; }

private:
    std::string letters_;
    std::mt19937_64 rng_;
};

/// POSTs the prompt as text/plain and returns the response body.
class HttpCompletionClient : public CompletionClient {
public:
    HttpCompletionClient(std::string endpoint, std::string token);
    /// Reads EVAL_ENDPOINT and EVAL_TOKEN; throws InvalidInput when the endpoint is unset.
    static std::unique_ptr<HttpCompletionClient> from_environment();
    std::string send(const std::string& prompt) override;
    std::string name() const override { return "http"; }

private:
    std::string endpoint_;
    std::string token_;
};

// ---------------------------------------------------------------------------
// Blind test

struct ProportionInterval {
    double low = 0.0;
    double high = 0.0;
};

/// Wilson score interval at confidence level given by the normal quantile z.
ProportionInterval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

struct BlindVariantResult {
    SubsetScore score;
    ProportionInterval ci;
    nlohmann::json to_json() const;
};

struct BlindTestReport {
    BlindVariantResult real;
    BlindVariantResult generated;
    std::size_t trials = 0;
    std::size_t pairs = 0;
    std::size_t failures = 0;
    /// 1 / option count of the first pair.
    double chance = 0.0;

    nlohmann::json to_json() const;
};

/// Seed for one blind-test item.
std::uint64_t trial_seed(std::uint64_t master_seed, const std::string& pair_id, std::size_t trial);

/// Sends each pair's question and options (twice per trial: real then
/// generated) and scores the reply against that variant's key. Client
/// exceptions count as unmapped and are logged to `log` when non-null.
/// Throws InvalidInput when trials is 0.
BlindTestReport run_blind_test(const std::vector<BenchmarkPair>& pairs, CompletionClient& client,
                               std::size_t trials, std::uint64_t master_seed = 0, std::ostream* log = nullptr);

std::string format_blind_table(const BlindTestReport& report);

}  // namespace travl
