#include "travl/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <httplib.h>

#include "travl/errors.hpp"

namespace travl {

namespace {

constexpr const char* kQaHead = R"(
    You are an expert in video-language reasoning. Your task is to generate
    3 to 6 question–answer (Q/A) pairs for the given video scenario and caption.

)";

constexpr const char* kQaRealismImplausible = R"(    All videos in this batch are implausible — they contain physically
    unrealistic events. The answers must explicitly state this and
    explain why the scene is implausible, based only on the caption.
)";

constexpr const char* kQaRealismPlausible = R"(    All videos in this batch are plausible — they contain physically
    realistic events. The answers must explicitly state this and
    explain why the scene is plausible, based only on the caption.
)";

constexpr const char* kQaBody = R"(
    Questions should focus on:
    - General video understanding (overall events, including what appears implausible)
    - Physical realism (phrased neutrally, e.g., “Do the events appear realistic or implausible?”)
    - Physical behavior (object interactions, motion, deformations)
    - Temporal reasoning (what happens first, next, last)

    Instructions:
    - Generate 3 to 6 Q/A pairs per scenario. Never fewer, never more.
    - Include at least one neutral question on physical realism.
    - DO NOT ask “What makes the video implausible?” or similar.
      Implausibility should only appear in the answers.
    - Questions must sound natural and varied.
    - Answers must be detailed, grounded only in the caption, and
)";

constexpr const char* kQaReasonsImplausible = "      list all reasons for implausibility.\n";
constexpr const char* kQaReasonsPlausible = "      list all reasons the events follow physical principles.\n";

constexpr const char* kQaFormat = R"(
    Output Format:
    Q1: <question 1>
    A1: <answer 1>
    Q2: <question 2>
    A2: <answer 2>
    ...

    Video Scenario:
    )";

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string render_options(const OptionList& options) {
    std::string out;
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (i) out += '\n';
        out += options[i].first + ". " + options[i].second;
    }
    return out;
}

char letter_field(const nlohmann::json& j, const char* key) {
    const auto s = j.at(key).get<std::string>();
    if (s.size() != 1) throw ValidationError(std::string(key) + " must be a single letter, got '" + s + "'");
    return s[0];
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

const char* const kOpenEndedPrompt =
    "Do the events in the video appear to be real, following physics principles, or are they implausible? Why?";

std::string to_string(OptionTag tag) {
    switch (tag) {
        case OptionTag::plausible: return "plausible";
        case OptionTag::implausible: return "implausible";
        case OptionTag::none_of_the_above: return "none";
    }
    throw InternalError("bad option tag");
}

std::string to_string(Variant variant) { return variant == Variant::real ? "real" : "generated"; }

OptionTag parse_option_tag(const std::string& text) {
    if (text == "plausible") return OptionTag::plausible;
    if (text == "implausible") return OptionTag::implausible;
    if (text == "none") return OptionTag::none_of_the_above;
    throw ValidationError("unknown option tag '" + text + "'");
}

Variant parse_variant(const std::string& text) {
    if (text == "real") return Variant::real;
    if (text == "generated") return Variant::generated;
    throw ValidationError("unknown variant '" + text + "'");
}

void BenchmarkPair::validate(const OptionComposition& composition) const {
    const std::string where = "pair '" + pair_id + "': ";
    if (pair_id.empty()) throw ValidationError("pair id is empty");
    if (question.empty()) throw ValidationError(where + "question is empty");
    if (options.size() != composition.total())
        throw ValidationError(where + "expected " + std::to_string(composition.total()) + " options, got " +
                              std::to_string(options.size()));
    std::size_t counts[3] = {0, 0, 0};
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (options[i].letter != static_cast<char>('A' + i))
            throw ValidationError(where + "option " + std::to_string(i) + " has letter '" +
                                  std::string(1, options[i].letter) + "'");
        ++counts[static_cast<int>(options[i].tag)];
    }
    if (counts[0] != composition.plausible || counts[1] != composition.implausible ||
        counts[2] != composition.none_of_the_above)
        throw ValidationError(where + "option tags are " + std::to_string(counts[0]) + " plausible / " +
                              std::to_string(counts[1]) + " implausible / " + std::to_string(counts[2]) +
                              " none");
    auto tag_of = [&](char letter) -> const BenchmarkOption& {
        for (const auto& o : options)
            if (o.letter == letter) return o;
        throw ValidationError(where + "key '" + std::string(1, letter) + "' is not an option");
    };
    if (correct_real == correct_generated) throw ValidationError(where + "real and generated keys coincide");
    if (tag_of(correct_real).tag != OptionTag::plausible)
        throw ValidationError(where + "correct_real must point at a plausible option");
    if (tag_of(correct_generated).tag != OptionTag::implausible)
        throw ValidationError(where + "correct_generated must point at an implausible option");
}

OptionList BenchmarkPair::option_list() const {
    OptionList out;
    out.reserve(options.size());
    for (const auto& o : options) out.emplace_back(std::string(1, o.letter), o.text);
    return out;
}

std::string BenchmarkPair::letters() const {
    std::string out;
    for (const auto& o : options) out += o.letter;
    return out;
}

nlohmann::json BenchmarkPair::to_json() const {
    nlohmann::json opts = nlohmann::json::array();
    for (const auto& o : options)
        opts.push_back({{"letter", std::string(1, o.letter)}, {"text", o.text}, {"tag", to_string(o.tag)}});
    return {{"pair_id", pair_id},
            {"question", question},
            {"options", opts},
            {"correct_real", std::string(1, correct_real)},
            {"correct_generated", std::string(1, correct_generated)}};
}

BenchmarkPair BenchmarkPair::from_json(const nlohmann::json& j) {
    BenchmarkPair p;
    p.pair_id = j.at("pair_id").get<std::string>();
    p.question = j.at("question").get<std::string>();
    for (const auto& o : j.at("options")) {
        BenchmarkOption opt;
        opt.letter = letter_field(o, "letter");
        opt.text = o.at("text").get<std::string>();
        opt.tag = parse_option_tag(o.at("tag").get<std::string>());
        p.options.push_back(std::move(opt));
    }
    p.correct_real = letter_field(j, "correct_real");
    p.correct_generated = letter_field(j, "correct_generated");
    return p;
}

std::vector<BenchmarkPair> read_benchmark(std::istream& in, const OptionComposition& composition) {
    std::vector<BenchmarkPair> pairs;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        BenchmarkPair p;
        try {
            p = BenchmarkPair::from_json(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, e.what());
        } catch (const ValidationError& e) {
            throw ParseError(lineno, e.what());
        }
        p.validate(composition);
        if (!ids.insert(p.pair_id).second) throw ValidationError("duplicate pair id '" + p.pair_id + "'");
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::vector<BenchmarkPair> read_benchmark(const std::filesystem::path& path, const OptionComposition& composition) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_benchmark(in, composition);
}

void write_benchmark(const std::vector<BenchmarkPair>& pairs, std::ostream& out) {
    for (const auto& p : pairs) out << p.to_json().dump() << '\n';
}

void write_benchmark(const std::vector<BenchmarkPair>& pairs, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_benchmark(pairs, out);
}

std::vector<BenchmarkPair> synthetic_benchmark(std::size_t count, const OptionComposition& composition,
                                               std::uint64_t seed) {
    if (composition.plausible == 0 || composition.implausible == 0)
        throw InvalidInput("composition needs at least one plausible and one implausible option");
    if (composition.total() > 26) throw InvalidInput("at most 26 options");
    std::mt19937_64 rng(seed);
    std::vector<BenchmarkPair> pairs;
    pairs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<OptionTag> tags;
        tags.insert(tags.end(), composition.plausible, OptionTag::plausible);
        tags.insert(tags.end(), composition.implausible, OptionTag::implausible);
        std::shuffle(tags.begin(), tags.end(), rng);
        tags.insert(tags.end(), composition.none_of_the_above, OptionTag::none_of_the_above);

        char id[32];
        std::snprintf(id, sizeof id, "pair-%04zu", i);
        BenchmarkPair p;
        p.pair_id = id;
        p.question = "What happens to the object in the clip?";
        std::vector<char> plausible, implausible;
        for (std::size_t k = 0; k < tags.size(); ++k) {
            const char letter = static_cast<char>('A' + k);
            std::string text;
            switch (tags[k]) {
                case OptionTag::plausible:
                    text = "It moves continuously (variant " + std::to_string(k) + ").";
                    plausible.push_back(letter);
                    break;
                case OptionTag::implausible:
                    text = "It jumps, vanishes or splits (variant " + std::to_string(k) + ").";
                    implausible.push_back(letter);
                    break;
                case OptionTag::none_of_the_above: text = "None of the above"; break;
            }
            p.options.push_back({letter, text, tags[k]});
        }
        p.correct_real = plausible[std::uniform_int_distribution<std::size_t>(0, plausible.size() - 1)(rng)];
        p.correct_generated =
            implausible[std::uniform_int_distribution<std::size_t>(0, implausible.size() - 1)(rng)];
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::string build_judge_prompt(const std::string& question, const OptionList& options, const std::string& caption) {
    if (question.empty()) throw ValidationError("judge prompt: question is empty");
    if (options.empty()) throw ValidationError("judge prompt: no options");
    std::string out;
    out += "You are a reasoning assistant evaluating the output of a video-language model.\n\n";
    out += "The VLM model has watched a video and described the video as:\n";
    out += caption + "\n\n";
    out += "Based on the above answer and analyzing its reasoning to the question of: " + question +
           ", select which of the following multiple-choice options best matches the model's reasoning.\n";
    out += "Your judgment should be based only on the VLM's output.\n";
    out += "Respond with the letter of the best matching option.\n\n";
    out += "Options:\n" + render_options(options);
    return out;
}

std::string build_qa_prompt(const std::string& scenario, const std::string& caption, QaVariant variant) {
    const bool plausible = variant == QaVariant::plausible;
    std::string out = kQaHead;
    out += plausible ? kQaRealismPlausible : kQaRealismImplausible;
    out += kQaBody;
    out += plausible ? kQaReasonsPlausible : kQaReasonsImplausible;
    out += kQaFormat;
    out += scenario + "\n\n    Video Description:\n    " + caption + "\n    ";
    return out;
}

std::string build_blind_prompt(const std::string& question, const OptionList& options) {
    if (question.empty()) throw ValidationError("blind prompt: question is empty");
    if (options.empty()) throw ValidationError("blind prompt: no options");
    return "Question: " + question + "\n\nOptions:\n" + render_options(options) +
           "\n\nRespond with the letter of the best matching option.";
}

std::optional<char> judge_response_to_letter(const std::string& response, const OptionList& options) {
    std::string letters;
    for (const auto& [key, text] : options)
        if (key.size() == 1) letters += static_cast<char>(std::toupper(static_cast<unsigned char>(key[0])));
    auto is_option = [&](char c) {
        return std::isupper(static_cast<unsigned char>(c)) && letters.find(c) != std::string::npos;
    };
    for (std::size_t i = 0; i < response.size(); ++i) {
        if (!is_option(response[i])) continue;
        if (i > 0 && is_word_char(response[i - 1])) continue;
        if (i + 1 < response.size() && is_word_char(response[i + 1])) continue;
        return response[i];
    }
    // A bare lowercase letter ("b", "c.") is still an answer; inside prose it is usually an article.
    std::string core;
    for (char c : response)
        if (!std::isspace(static_cast<unsigned char>(c)) && !std::ispunct(static_cast<unsigned char>(c))) core += c;
    if (core.size() == 1) {
        const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(core[0])));
        if (is_option(c)) return c;
    }
    return std::nullopt;
}

nlohmann::json SubsetScore::to_json() const {
    return {{"items", items},
            {"correct", correct},
            {"incorrect", incorrect},
            {"unmapped", unmapped},
            {"accuracy_pct", 100.0 * accuracy()}};
}

nlohmann::json BenchmarkScore::to_json() const {
    return {{"real", real.to_json()},
            {"generated", generated.to_json()},
            {"pairs", pairs},
            {"both_correct", both_correct},
            {"both_correct_pct", 100.0 * both_accuracy()}};
}

BenchmarkScore score_benchmark(const std::vector<BenchmarkPair>& pairs, const AnswerMap& answers) {
    std::set<std::string> ids;
    for (const auto& p : pairs) ids.insert(p.pair_id);
    for (const auto& [key, letter] : answers)
        if (!ids.count(key.first)) throw ValidationError("answer for unknown pair id '" + key.first + "'");

    BenchmarkScore score;
    score.pairs = pairs.size();
    for (const auto& p : pairs) {
        bool both = true;
        for (Variant v : {Variant::real, Variant::generated}) {
            SubsetScore& s = v == Variant::real ? score.real : score.generated;
            ++s.items;
            auto it = answers.find({p.pair_id, v});
            if (it == answers.end() || !it->second) {
                ++s.unmapped;
                both = false;
            } else if (*it->second == p.key(v)) {
                ++s.correct;
            } else {
                ++s.incorrect;
                both = false;
            }
        }
        if (both) ++score.both_correct;
    }
    return score;
}

namespace {

std::string score_row(const std::string& label, const SubsetScore& s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-10s %8zu %10zu %9zu %7zu %9.1f%%\n", label.c_str(), s.correct, s.incorrect,
                  s.unmapped, s.items, 100.0 * s.accuracy());
    return buf;
}

std::string table_header() {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-10s %8s %10s %9s %7s %10s\n", "subset", "correct", "incorrect", "unmapped",
                  "items", "accuracy");
    return buf;
}

}  // namespace

std::string format_score_table(const BenchmarkScore& score) {
    std::string out = table_header();
    out += score_row("real", score.real);
    out += score_row("generated", score.generated);
    char buf[160];
    std::snprintf(buf, sizeof buf, "both-correct pairs: %zu / %zu (%.1f%%)\n", score.both_correct, score.pairs,
                  100.0 * score.both_accuracy());
    return out + buf;
}

ScriptedClient::ScriptedClient(std::vector<std::string> responses) : responses_(std::move(responses)) {
    if (responses_.empty()) throw InvalidInput("scripted client needs at least one response");
}

std::string ScriptedClient::send(const std::string& prompt) {
    prompts_.push_back(prompt);
    const std::string& r = responses_[next_];
    next_ = (next_ + 1) % responses_.size();
    return r;
}

RandomLetterClient::RandomLetterClient(std::string letters, std::uint64_t seed)
    : letters_(std::move(letters)), rng_(seed) {
    if (letters_.empty()) throw InvalidInput("random client needs at least one letter");
}

std::string RandomLetterClient::send(const std::string&) {
    std::uniform_int_distribution<std::size_t> pick(0, letters_.size() - 1);
    return std::string(1, letters_[pick(rng_)]);
}

HttpCompletionClient::HttpCompletionClient(std::string endpoint, std::string token)
    : endpoint_(std::move(endpoint)), token_(std::move(token)) {
    if (endpoint_.find("://") == std::string::npos) throw InvalidInput("endpoint must be an http(s) URL: " + endpoint_);
}

std::unique_ptr<HttpCompletionClient> HttpCompletionClient::from_environment() {
    const char* endpoint = std::getenv("EVAL_ENDPOINT");
    if (!endpoint || !*endpoint) throw InvalidInput("EVAL_ENDPOINT is not set");
    const char* token = std::getenv("EVAL_TOKEN");
    return std::make_unique<HttpCompletionClient>(endpoint, token ? token : "");
}

std::string HttpCompletionClient::send(const std::string& prompt) {
    const auto scheme_end = endpoint_.find("://") + 3;
    const auto path_start = endpoint_.find('/', scheme_end);
    const std::string base = endpoint_.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : endpoint_.substr(path_start);

    httplib::Client client(base);
    client.set_connection_timeout(10);
    client.set_read_timeout(120);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    auto res = client.Post(path, headers, prompt, "text/plain");
    if (!res) throw IoError("request to " + endpoint_ + " failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw IoError("request to " + endpoint_ + " returned HTTP " + std::to_string(res->status));
    return res->body;
}

ProportionInterval wilson_interval(std::size_t successes, std::size_t trials, double z) {
    if (trials == 0) return {0.0, 1.0};
    const double n = static_cast<double>(trials);
    const double p = successes / n;
    const double z2 = z * z;
    const double center = (p + z2 / (2 * n)) / (1 + z2 / n);
    const double half = z / (1 + z2 / n) * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n));
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

nlohmann::json BlindVariantResult::to_json() const {
    auto j = score.to_json();
    j["ci95_pct"] = {100.0 * ci.low, 100.0 * ci.high};
    return j;
}

nlohmann::json BlindTestReport::to_json() const {
    return {{"real", real.to_json()},
            {"generated", generated.to_json()},
            {"trials", trials},
            {"pairs", pairs},
            {"failures", failures},
            {"chance_pct", 100.0 * chance}};
}

std::uint64_t trial_seed(std::uint64_t master_seed, const std::string& pair_id, std::size_t trial) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : pair_id) h = (h ^ c) * 0x100000001b3ULL;
    return splitmix64(splitmix64(master_seed ^ h) + trial);
}

BlindTestReport run_blind_test(const std::vector<BenchmarkPair>& pairs, CompletionClient& client,
                               std::size_t trials, std::uint64_t master_seed, std::ostream* log) {
    if (trials == 0) throw InvalidInput("blind test needs at least one trial");
    BlindTestReport report;
    report.trials = trials;
    report.pairs = pairs.size();
    if (!pairs.empty()) report.chance = 1.0 / static_cast<double>(pairs.front().options.size());

    for (const auto& p : pairs) {
        const OptionList options = p.option_list();
        const std::string prompt = build_blind_prompt(p.question, options);
        for (std::size_t t = 0; t < trials; ++t) {
            client.reseed(trial_seed(master_seed, p.pair_id, t));
            for (Variant v : {Variant::real, Variant::generated}) {
                SubsetScore& s = v == Variant::real ? report.real.score : report.generated.score;
                ++s.items;
                std::optional<char> letter;
                try {
                    letter = judge_response_to_letter(client.send(prompt), options);
                } catch (const std::exception& e) {
                    ++report.failures;
                    if (log) *log << "blind test: " << p.pair_id << " trial " << t << ": " << e.what() << '\n';
                }
                if (!letter)
                    ++s.unmapped;
                else if (*letter == p.key(v))
                    ++s.correct;
                else
                    ++s.incorrect;
            }
        }
    }
    for (BlindVariantResult* r : {&report.real, &report.generated})
        r->ci = wilson_interval(r->score.correct, r->score.items);
    return report;
}

std::string format_blind_table(const BlindTestReport& report) {
    std::string out = table_header();
    out += score_row("real", report.real.score);
    out += score_row("generated", report.generated.score);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "95%% CI real [%.1f%%, %.1f%%], generated [%.1f%%, %.1f%%]; chance %.1f%%; %zu pairs x %zu "
                  "trials; %zu client failures\n",
                  100.0 * report.real.ci.low, 100.0 * report.real.ci.high, 100.0 * report.generated.ci.low,
                  100.0 * report.generated.ci.high, 100.0 * report.chance, report.pairs, report.trials,
                  report.failures);
    return out + buf;
}

}  // namespace travl
