#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "travl/errors.hpp"
#include "travl/eval.hpp"
#include "travl/gradcheck.hpp"
#include "travl/mask.hpp"
#include "travl/pipeline.hpp"
#include "travl/tracks.hpp"
#include "travl/trainer.hpp"

#ifndef TRAVL_VERSION
#define TRAVL_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace travl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitInputError = 2;

struct RunManifest {
    std::string subcommand;
    std::vector<std::string> args;
    json config = json::object();
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string started_utc;
    double wall_clock_s = 0.0;
    int exit_code = 0;

    json to_json() const {
        return {{"subcommand", subcommand}, {"args", args},       {"config", config},
                {"seed", seed},             {"inputs", inputs},   {"outputs", outputs},
                {"tool_version", TRAVL_VERSION}, {"started_utc", started_utc},
                {"wall_clock_s", wall_clock_s},  {"exit_code", exit_code}};
    }
};

/// A check ran to completion and failed.
struct CheckFailed {
    std::string what;
};

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// key=value lines; '#' starts a comment. Keys map to --key flags.
std::vector<std::string> read_config_args(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::vector<std::string> args;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(lineno, "expected key=value in " + path.string());
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError(lineno, "empty key in " + path.string());
        for (auto& c : key)
            if (c == '_') c = '-';
        args.push_back("--" + key + "=" + value);
    }
    return args;
}

/// Expands every --config FILE; its settings go right after the subcommand
/// name so that flags on the command line win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::vector<std::string> before, after;
    std::size_t i = 0;
    if (!args.empty() && args[0].rfind("-", 0) != 0) before.push_back(args[i++]);
    for (; i < args.size(); ++i) {
        const std::string& a = args[i];
        std::optional<std::string> file;
        if (a == "--config") {
            if (i + 1 >= args.size()) throw InvalidInput("--config needs a file");
            file = args[++i];
        } else if (a.rfind("--config=", 0) == 0) {
            file = a.substr(9);
        }
        if (file) {
            auto expanded = read_config_args(*file);
            before.insert(before.end(), expanded.begin(), expanded.end());
        } else {
            after.push_back(a);
        }
    }
    before.insert(before.end(), after.begin(), after.end());
    return before;
}

json resolved_config(const CLI::App& sub) {
    json out = json::object();
    std::istringstream in(sub.config_to_str(true, false));
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string value = line.substr(eq + 1);
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        out[line.substr(0, eq)] = value;
    }
    return out;
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

OptionComposition composition_for(std::size_t options) {
    if (options == 7) return {};
    if (options == 5) return OptionComposition::five_option();
    throw InvalidInput("--options must be 7 or 5");
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

// ---------------------------------------------------------------------------
// Subcommand state. Each struct owns the variables its options bind to.

struct Context {
    RunManifest manifest;
    std::string manifest_path;
};

struct SimulateCmd {
    std::string spec_path;
    std::size_t count = 10;
    std::string out_dir;
    std::optional<std::uint64_t> seed;

    void add(CLI::App& app) {
        app.add_option("--spec", spec_path, "JSON scene generator spec");
        app.add_option("--count", count, "number of scenes")->capture_default_str();
        app.add_option("--out", out_dir, "output directory")->required();
        app.add_option("--seed", seed, "base seed (overrides the spec; default 0)");
    }

    int run(Context& ctx) {
        int height = 128, width = 128, side = 8;
        std::size_t frames = 12, k = kDefaultReinitInterval;
        double noise = 0.5, radius = kDefaultObjectRadius;
        std::uint64_t base_seed = 0;
        if (!spec_path.empty()) {
            ctx.manifest.inputs.push_back(spec_path);
            std::ifstream in(spec_path);
            if (!in) throw IoError("cannot open spec " + spec_path);
            json spec;
            try {
                spec = json::parse(in);
            } catch (const json::exception& e) {
                throw ParseError(0, spec_path + ": " + e.what());
            }
            if (!spec.is_object()) throw ValidationError(spec_path + ": spec must be a JSON object");
            for (const auto& [key, value] : spec.items()) {
                try {
                    if (key == "height") height = value.get<int>();
                    else if (key == "width") width = value.get<int>();
                    else if (key == "grid_side") side = value.get<int>();
                    else if (key == "num_frames") frames = value.get<std::size_t>();
                    else if (key == "reinit_interval") k = value.get<std::size_t>();
                    else if (key == "noise_sigma") noise = value.get<double>();
                    else if (key == "object_radius") radius = value.get<double>();
                    else if (key == "seed") base_seed = value.get<std::uint64_t>();
                    else throw ValidationError(spec_path + ": unknown spec key '" + key + "'");
                } catch (const json::exception& e) {
                    throw ValidationError(spec_path + ": bad value for '" + key + "': " + e.what());
                }
            }
        }
        if (seed) base_seed = *seed;
        if (k == 0) throw InvalidInput("reinit_interval must be >= 1");
        ctx.manifest.seed = base_seed;
        const PatchGrid grid(height, width, side);

        fs::create_directories(out_dir);
        std::ostringstream labels;
        labels << "index,file,label,violation,seed\n";
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint64_t s = base_seed + i;
            const SceneSpec spec = random_scene_spec(grid, frames, k, noise, i, s, radius);
            const Scene scene = simulate_scene(spec);
            char name[32];
            std::snprintf(name, sizeof name, "scene_%05zu.jsonl", i);
            write_tracks(TrackFile{scene.tracks, grid, s}, fs::path(out_dir) / name);
            ctx.manifest.outputs.push_back((fs::path(out_dir) / name).string());
            labels << i << ',' << name << ','
                   << (scene.label == Plausibility::plausible ? "plausible" : "implausible") << ','
                   << scene.violation_tag << ',' << s << '\n';
        }
        const fs::path index = fs::path(out_dir) / "labels.csv";
        write_text(index, labels.str());
        ctx.manifest.outputs.push_back(index.string());
        std::printf("simulated %zu scenes (%dx%d px, G=%d, T=%zu, k=%zu) into %s\n", count, width, height, side,
                    frames, k, out_dir.c_str());
        return kExitOk;
    }
};

void print_mask_stats(const MaskStats& s) {
    std::printf("%-12s %zu\n%-12s %zu\n%-12s %.6f\n%-12s %zu\n%-12s %.4f\n%-12s %zu\n", "tokens", s.tokens,
                "entries", s.entries, "density", s.density, "max_degree", s.max_degree, "mean_degree",
                s.mean_degree, "anchor_rows", s.anchor_rows);
}

json mask_stats_json(const MaskStats& s) {
    return {{"tokens", s.tokens},         {"entries", s.entries},         {"density", s.density},
            {"max_degree", s.max_degree}, {"mean_degree", s.mean_degree}, {"anchor_rows", s.anchor_rows}};
}

struct BuildMaskCmd {
    std::string tracks_path;
    std::optional<int> grid_side, height, width;
    std::size_t k = kDefaultReinitInterval;
    double threshold = kDefaultVisibilityThreshold;
    std::string out;

    void add(CLI::App& app) {
        app.add_option("--tracks", tracks_path, "track file")->required();
        app.add_option("--grid-side", grid_side, "patch grid side G (default: track file header)");
        app.add_option("--height", height, "frame height in px (default: track file header)");
        app.add_option("--width", width, "frame width in px (default: track file header)");
        app.add_option("--k", k, "query reinitialization interval")->capture_default_str();
        app.add_option("--threshold", threshold, "visibility cutoff")->capture_default_str();
        app.add_option("--out", out, "mask file")->required();
    }

    int run(Context& ctx) {
        if (k == 0) throw InvalidInput("--k must be >= 1");
        ctx.manifest.inputs.push_back(tracks_path);
        const TrackFile file = read_tracks(fs::path(tracks_path));
        ctx.manifest.seed = file.seed;
        const PatchGrid grid(height.value_or(file.grid.height_px()), width.value_or(file.grid.width_px()),
                             grid_side.value_or(file.grid.grid_side()));
        const TrajectoryMask mask = build_mask(file.tracks, grid, threshold, k);
        ensure_parent(out);
        write_mask(mask, fs::path(out));
        const MaskStats stats = mask_stats(mask);
        const std::string stats_path = out + ".stats.json";
        write_json(stats_path, mask_stats_json(stats));
        ctx.manifest.outputs = {out, stats_path};
        print_mask_stats(stats);
        return kExitOk;
    }
};

struct MaskStatsCmd {
    std::string mask_path;
    std::string out;

    void add(CLI::App& app) {
        app.add_option("--mask", mask_path, "mask file")->required();
        app.add_option("--out", out, "write the stats as JSON here");
    }

    int run(Context& ctx) {
        ctx.manifest.inputs.push_back(mask_path);
        const MaskStats stats = mask_stats(read_mask(fs::path(mask_path)));
        if (!out.empty()) {
            write_json(out, mask_stats_json(stats));
            ctx.manifest.outputs.push_back(out);
        }
        print_mask_stats(stats);
        return kExitOk;
    }
};

struct TrainCmd {
    Experiment exp = Experiment::efficacy();
    int frame_px = 128;
    int grid_side = 8;
    std::string layout = "llavanext";
    std::string schedule = "cosine";
    std::string out_dir;

    void add(CLI::App& app) {
        auto& c = exp.corpus;
        auto& m = exp.model;
        auto& t = exp.train;
        app.add_option("--out", out_dir, "output directory")->required();
        app.add_option("--scenes", exp.scenes, "corpus size")->capture_default_str();
        app.add_option("--val-fraction", exp.val_fraction, "held-out share (the corpus tail)")->capture_default_str();
        app.add_option("--corpus-seed", c.seed, "scene i uses corpus-seed + i")->capture_default_str();
        app.add_option("--frame-px", frame_px, "square frame side in px")->capture_default_str();
        app.add_option("--grid-side", grid_side, "patch grid side G")->capture_default_str();
        app.add_option("--frames", c.num_frames, "frames per scene")->capture_default_str();
        app.add_option("--k", c.reinit_interval, "query reinitialization interval")->capture_default_str();
        app.add_option("--noise", c.noise_sigma, "track noise sigma (px)")->capture_default_str();
        app.add_option("--object-radius", c.object_radius, "object radius in patch strides")->capture_default_str();
        app.add_option("--dim", c.dim, "token dimension")->capture_default_str();
        app.add_option("--feature-seed", c.feature_seed, "descriptor projection seed")->capture_default_str();
        app.add_option("--identity-masks", c.identity_masks, "replace trajectory masks by identity")
            ->capture_default_str();
        app.add_option("--heads", m.heads, "attention heads")->capture_default_str();
        app.add_option("--layout", layout, "videochatgpt or llavanext")->capture_default_str();
        app.add_option("--pool-factor", m.pool_factor, "llavanext pooling factor")->capture_default_str();
        app.add_option("--residual", m.residual, "residual around each attention block")->capture_default_str();
        app.add_option("--spatial", m.spatial, "enable spatial attention")->capture_default_str();
        app.add_option("--temporal", m.temporal, "enable temporal attention")->capture_default_str();
        app.add_option("--encodings", m.encodings, "add positional encodings")->capture_default_str();
        app.add_option("--chunk-window", m.chunk_window, "temporal window in frames (0: unchunked)")
            ->capture_default_str();
        app.add_option("--chunk-stride", m.chunk_stride, "temporal window stride")->capture_default_str();
        app.add_option("--model-seed", m.seed, "parameter init seed")->capture_default_str();
        app.add_option("--init-scale", m.init_scale, "attention init scale")->capture_default_str();
        app.add_option("--head-init-scale", m.head_init_scale, "classifier init scale")->capture_default_str();
        app.add_option("--lr-attention", t.lr_attention, "attention learning rate")->capture_default_str();
        app.add_option("--lr-projector", t.lr_projector, "projector learning rate")->capture_default_str();
        app.add_option("--weight-decay", t.weight_decay, "decoupled weight decay")->capture_default_str();
        app.add_option("--beta1", t.beta1)->capture_default_str();
        app.add_option("--beta2", t.beta2)->capture_default_str();
        app.add_option("--eps", t.eps)->capture_default_str();
        app.add_option("--batch-size", t.batch_size)->capture_default_str();
        app.add_option("--epochs", t.epochs)->capture_default_str();
        app.add_option("--schedule", schedule, "cosine or constant")->capture_default_str();
        app.add_option("--seed", t.seed, "batch order seed")->capture_default_str();
    }

    int run(Context& ctx) {
        exp.corpus.grid = PatchGrid(frame_px, frame_px, grid_side);
        exp.model.dim = exp.corpus.dim;
        exp.model.layout = parse_layout(layout);
        exp.train.schedule = parse_lr_schedule(schedule);
        ctx.manifest.seed = exp.train.seed;

        const TrainResult result = run_experiment(exp);
        fs::create_directories(out_dir);
        const fs::path report = fs::path(out_dir) / "report.json";
        const fs::path model = fs::path(out_dir) / "model.ckpt";
        write_json(report, result.report.to_json());
        save_checkpoint(result.model, model);
        ctx.manifest.outputs = {report.string(), model.string()};

        std::printf("%-6s %10s %10s %10s\n", "epoch", "loss", "train_acc", "val_acc");
        for (std::size_t e = 0; e < result.report.epochs.size(); ++e) {
            const auto& s = result.report.epochs[e];
            std::printf("%-6zu %10.4f %9.1f%% %9.1f%%\n", e + 1, s.loss, 100.0 * s.train_accuracy,
                        100.0 * s.val_accuracy);
        }
        std::printf("train %zu / val %zu scenes, masks: %s\n", result.report.train_size, result.report.val_size,
                    exp.corpus.identity_masks ? "identity" : "trajectory");
        return kExitOk;
    }
};

struct GradcheckCmd {
    GradCheckInstance inst;
    std::string layout = "videochatgpt";
    double tolerance = kGradCheckTolerance;
    std::string out;

    void add(CLI::App& app) {
        app.add_option("--frames", inst.frames)->capture_default_str();
        app.add_option("--grid-side", inst.grid_side)->capture_default_str();
        app.add_option("--dim", inst.dim)->capture_default_str();
        app.add_option("--heads", inst.heads)->capture_default_str();
        app.add_option("--layout", layout, "videochatgpt or llavanext")->capture_default_str();
        app.add_option("--pool-factor", inst.pool_factor)->capture_default_str();
        app.add_option("--residual", inst.residual)->capture_default_str();
        app.add_option("--epsilon", inst.epsilon, "central difference step")->capture_default_str();
        app.add_option("--tolerance", tolerance, "maximum relative error")->capture_default_str();
        app.add_option("--seed", inst.seed)->capture_default_str();
        app.add_option("--out", out, "write the report as JSON here");
    }

    int run(Context& ctx) {
        inst.layout = parse_layout(layout);
        ctx.manifest.seed = inst.seed;
        GradCheckReport report = check_pipeline_gradients(inst);
        report.tolerance = tolerance;
        if (!out.empty()) {
            write_json(out, report.to_json());
            ctx.manifest.outputs.push_back(out);
        }
        std::printf("%-20s %6s %12s %12s\n", "array", "size", "max_rel_err", "max_|grad|");
        for (const auto& a : report.arrays)
            std::printf("%-20s %6zu %12.3e %12.3e%s\n", a.name.c_str(), a.size, a.max_relative_error,
                        a.max_abs_gradient, a.structural_zero ? "  (zero by construction)" : "");
        std::printf("max relative error %.3e (tolerance %.1e): %s\n", report.max_relative_error, tolerance,
                    report.passed() ? "PASS" : "FAIL");
        if (!report.passed()) throw CheckFailed{"gradient check exceeded tolerance"};
        return kExitOk;
    }
};

struct ClientOptions {
    std::string kind = "random";
    std::string responses;
    std::uint64_t seed = 0;

    void add(CLI::App& app, const std::string& default_kind) {
        kind = default_kind;
        app.add_option("--client", kind, "random, scripted or http (EVAL_ENDPOINT, EVAL_TOKEN)")
            ->capture_default_str();
        app.add_option("--responses", responses, "scripted client: one canned response per line");
        app.add_option("--seed", seed, "client seed")->capture_default_str();
    }

    std::unique_ptr<CompletionClient> make(const std::string& letters, RunManifest& manifest) const {
        manifest.seed = seed;
        if (kind == "random") return std::make_unique<RandomLetterClient>(letters, seed);
        if (kind == "scripted") {
            if (responses.empty()) throw InvalidInput("--client scripted needs --responses");
            manifest.inputs.push_back(responses);
            return std::make_unique<ScriptedClient>(read_lines(responses));
        }
        if (kind == "http") return HttpCompletionClient::from_environment();
        throw InvalidInput("unknown client '" + kind + "'");
    }
};

struct EvalCmd {
    std::string benchmark;
    std::string answers;
    std::size_t options = 7;
    ClientOptions client;
    std::string out;

    void add(CLI::App& app) {
        app.add_option("--benchmark", benchmark, "benchmark JSONL")->required();
        app.add_option("--answers", answers,
                       "JSONL of {pair_id, variant, letter | response | caption}; captions go through the judge")
            ->required();
        app.add_option("--options", options, "options per question (7 or 5)")->capture_default_str();
        client.add(app, "scripted");
        app.add_option("--out", out, "write the scores as JSON here");
    }

    int run(Context& ctx) {
        ctx.manifest.inputs = {benchmark, answers};
        const auto pairs = read_benchmark(fs::path(benchmark), composition_for(options));
        std::map<std::string, const BenchmarkPair*> by_id;
        for (const auto& p : pairs) by_id[p.pair_id] = &p;
        std::unique_ptr<CompletionClient> judge;

        AnswerMap map;
        const auto lines = read_lines(answers);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (lines[i].find_first_not_of(" \t\r") == std::string::npos) continue;
            json rec;
            try {
                rec = json::parse(lines[i]);
            } catch (const json::exception& e) {
                throw ParseError(i + 1, answers + ": " + e.what());
            }
            const auto id = rec.value("pair_id", std::string());
            const auto it = by_id.find(id);
            if (it == by_id.end()) throw ValidationError(answers + ": unknown pair id '" + id + "'");
            const Variant variant = parse_variant(rec.value("variant", std::string()));
            const OptionList opts = it->second->option_list();
            std::optional<char> letter;
            if (rec.contains("letter")) {
                letter = judge_response_to_letter(rec.at("letter").get<std::string>(), opts);
            } else if (rec.contains("response")) {
                letter = judge_response_to_letter(rec.at("response").get<std::string>(), opts);
            } else if (rec.contains("caption")) {
                if (!judge) judge = client.make(it->second->letters(), ctx.manifest);
                try {
                    letter = judge_response_to_letter(
                        judge->send(build_judge_prompt(it->second->question, opts, rec.at("caption").get<std::string>())), opts);
                } catch (const travl::IoError& e) {
                    std::fprintf(stderr, "judge failed on %s/%s: %s\n", id.c_str(), to_string(variant).c_str(),
                                 e.what());
                }
            } else {
                throw ValidationError(answers + ": line " + std::to_string(i + 1) +
                                      " needs letter, response or caption");
            }
            map[{id, variant}] = letter;
        }
        const BenchmarkScore score = score_benchmark(pairs, map);
        if (!out.empty()) {
            write_json(out, score.to_json());
            ctx.manifest.outputs.push_back(out);
        }
        std::fputs(format_score_table(score).c_str(), stdout);
        return kExitOk;
    }
};

struct BlindtestCmd {
    std::string benchmark;
    std::size_t synthetic = 150;
    std::size_t options = 7;
    std::size_t trials = 100;
    std::uint64_t fixture_seed = 0;
    ClientOptions client;
    std::string out;

    void add(CLI::App& app) {
        app.add_option("--benchmark", benchmark, "benchmark JSONL (default: a synthetic fixture)");
        app.add_option("--synthetic", synthetic, "pairs in the synthetic fixture")->capture_default_str();
        app.add_option("--fixture-seed", fixture_seed, "synthetic fixture seed")->capture_default_str();
        app.add_option("--options", options, "options per question (7 or 5)")->capture_default_str();
        app.add_option("--trials", trials, "trials per pair")->capture_default_str();
        client.add(app, "random");
        app.add_option("--out", out, "write the report as JSON here");
    }

    int run(Context& ctx) {
        if (trials == 0) throw InvalidInput("--trials must be >= 1");
        const OptionComposition composition = composition_for(options);
        std::vector<BenchmarkPair> pairs;
        if (benchmark.empty()) {
            pairs = synthetic_benchmark(synthetic, composition, fixture_seed);
        } else {
            ctx.manifest.inputs.push_back(benchmark);
            pairs = read_benchmark(fs::path(benchmark), composition);
        }
        if (pairs.empty()) throw InvalidInput("no benchmark pairs");
        auto c = client.make(pairs.front().letters(), ctx.manifest);
        const BlindTestReport report = run_blind_test(pairs, *c, trials, client.seed, &std::cerr);
        if (!out.empty()) {
            write_json(out, report.to_json());
            ctx.manifest.outputs.push_back(out);
        }
        std::fputs(format_blind_table(report).c_str(), stdout);
        return kExitOk;
    }
};

struct PromptsCmd {
    std::string kind;
    std::string question, caption, scenario;
    std::string variant = "implausible";
    std::vector<std::string> option_specs;
    std::string benchmark, pair_id;
    std::string out;

    void add(CLI::App& app) {
        app.add_option("kind", kind, "judge, qa, blind or open")->required();
        app.add_option("--question", question);
        app.add_option("--caption", caption);
        app.add_option("--scenario", scenario);
        app.add_option("--variant", variant, "qa variant: plausible or implausible")->capture_default_str();
        app.add_option("--option", option_specs, "LETTER=text, repeatable, in order");
        app.add_option("--benchmark", benchmark, "take question and options from this benchmark");
        app.add_option("--pair", pair_id, "pair id within --benchmark");
        app.add_option("--out", out, "write the prompt here instead of stdout");
    }

    OptionList options(Context& ctx) {
        if (!benchmark.empty()) {
            ctx.manifest.inputs.push_back(benchmark);
            std::ifstream in(benchmark);
            if (!in) throw IoError("cannot open " + benchmark);
            std::vector<BenchmarkPair> pairs;
            std::string line;
            while (std::getline(in, line))
                if (line.find_first_not_of(" \t\r") != std::string::npos)
                    pairs.push_back(BenchmarkPair::from_json(json::parse(line)));
            for (const auto& p : pairs)
                if (p.pair_id == pair_id) {
                    if (question.empty()) question = p.question;
                    return p.option_list();
                }
            throw InvalidInput("pair '" + pair_id + "' not in " + benchmark);
        }
        OptionList opts;
        for (const auto& spec : option_specs) {
            const auto eq = spec.find('=');
            if (eq == std::string::npos || eq == 0) throw InvalidInput("--option expects LETTER=text, got '" + spec + "'");
            opts.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
        }
        return opts;
    }

    int run(Context& ctx) {
        std::string text;
        if (kind == "judge") {
            text = build_judge_prompt(question, options(ctx), caption);
        } else if (kind == "blind") {
            text = build_blind_prompt(question, options(ctx));
        } else if (kind == "qa") {
            if (scenario.empty() || caption.empty()) throw InvalidInput("qa prompt needs --scenario and --caption");
            QaVariant v;
            if (variant == "plausible") v = QaVariant::plausible;
            else if (variant == "implausible") v = QaVariant::implausible;
            else throw InvalidInput("--variant must be plausible or implausible");
            text = build_qa_prompt(scenario, caption, v);
        } else if (kind == "open") {
            text = kOpenEndedPrompt;
        } else {
            throw InvalidInput("unknown prompt kind '" + kind + "'");
        }
        if (out.empty()) {
            std::fwrite(text.data(), 1, text.size(), stdout);
        } else {
            write_text(out, text);
            ctx.manifest.outputs.push_back(out);
        }
        return kExitOk;
    }
};

int run_cli(std::vector<std::string> args);

struct ReplayCmd {
    std::string manifest_path;
    std::string out;

    void add(CLI::App& app) {
        app.add_option("--from", manifest_path, "manifest of the run to repeat")->required();
        app.add_option("--out", out, "replace the recorded --out");
    }

    int run(Context& ctx) {
        ctx.manifest.inputs.push_back(manifest_path);
        std::ifstream in(manifest_path);
        if (!in) throw IoError("cannot open " + manifest_path);
        json m;
        try {
            m = json::parse(in);
        } catch (const json::exception& e) {
            throw ParseError(0, manifest_path + ": " + e.what());
        }
        std::vector<std::string> args{m.at("subcommand").get<std::string>()};
        for (const auto& a : m.at("args")) {
            std::string s = a.get<std::string>();
            if (!out.empty() && s.rfind("--out=", 0) == 0) s = "--out=" + out;
            args.push_back(s);
        }
        return run_cli(args);
    }
};

/// Normalizes "--flag value" into "--flag=value" for recorded args.
std::vector<std::string> canonical_args(const CLI::App& sub, const std::vector<std::string>& args) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a.rfind("--", 0) == 0 && a.find('=') == std::string::npos) {
            const CLI::Option* opt = sub.get_option_no_throw(a);
            if (opt && opt->get_type_size() != 0 && i + 1 < args.size()) {
                out.push_back(a + "=" + args[++i]);
                continue;
            }
        }
        out.push_back(a);
    }
    return out;
}

int run_cli(std::vector<std::string> args) {
    const auto start = std::chrono::steady_clock::now();
    CLI::App app{"Trajectory-masked attention toolkit: scenes, masks, toy training and benchmark scoring.", "travl"};
    app.set_version_flag("--version", TRAVL_VERSION);
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    Context ctx;
    SimulateCmd simulate;
    BuildMaskCmd build_mask_cmd;
    MaskStatsCmd mask_stats_cmd;
    TrainCmd train;
    GradcheckCmd gradcheck;
    EvalCmd eval;
    BlindtestCmd blindtest;
    PromptsCmd prompts;
    ReplayCmd replay;

    struct Entry {
        CLI::App* app;
        std::function<int(Context&)> run;
        std::function<std::string()> default_manifest;
    };
    std::vector<Entry> entries;
    auto add = [&](const char* name, const char* help, auto& cmd, std::function<std::string()> manifest_for) {
        CLI::App* sub = app.add_subcommand(name, help);
        cmd.add(*sub);
        sub->add_option("--manifest", ctx.manifest_path, "where to write the run manifest");
        sub->add_option("--config", "key=value file; flags given on the command line win");
        entries.push_back({sub, [&cmd](Context& c) { return cmd.run(c); }, std::move(manifest_for)});
    };
    add("simulate", "generate synthetic scenes as track files", simulate,
        [&] { return (fs::path(simulate.out_dir) / "manifest.json").string(); });
    add("build-mask", "build a trajectory mask from a track file", build_mask_cmd,
        [&] { return build_mask_cmd.out + ".manifest.json"; });
    add("mask-stats", "summarize a mask file", mask_stats_cmd,
        [&] { return mask_stats_cmd.out.empty() ? std::string("travl-mask-stats.manifest.json")
                                                : mask_stats_cmd.out + ".manifest.json"; });
    add("train", "train the toy plausibility classifier", train,
        [&] { return (fs::path(train.out_dir) / "manifest.json").string(); });
    add("gradcheck", "finite-difference check of the pipeline gradients", gradcheck,
        [&] { return gradcheck.out.empty() ? std::string("travl-gradcheck.manifest.json")
                                           : gradcheck.out + ".manifest.json"; });
    add("eval", "score benchmark answers", eval,
        [&] { return eval.out.empty() ? std::string("travl-eval.manifest.json") : eval.out + ".manifest.json"; });
    add("blindtest", "answer benchmark questions without the video", blindtest,
        [&] { return blindtest.out.empty() ? std::string("travl-blindtest.manifest.json")
                                           : blindtest.out + ".manifest.json"; });
    add("prompts", "emit a judge, QA-generation, blind or open-ended prompt", prompts,
        [&] { return prompts.out.empty() ? std::string("travl-prompts.manifest.json")
                                         : prompts.out + ".manifest.json"; });
    add("replay", "repeat a run from its manifest", replay, [] { return std::string(); });

    std::vector<std::string> expanded;
    try {
        expanded = expand_config(args);
        std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInputError;
    } catch (const travl::Error& e) {
        std::fprintf(stderr, "travl: %s\n", e.what());
        return kExitInputError;
    }

    const Entry* entry = nullptr;
    for (const auto& e : entries)
        if (e.app->parsed()) entry = &e;
    if (!entry) return kExitInputError;

    RunManifest& man = ctx.manifest;
    man.subcommand = entry->app->get_name();
    man.args = canonical_args(*entry->app, std::vector<std::string>(expanded.begin() + 1, expanded.end()));
    std::erase_if(man.args, [](const std::string& a) { return a.rfind("--manifest", 0) == 0; });
    man.config = resolved_config(*entry->app);
    man.config.erase("manifest");
    man.config.erase("config");
    man.started_utc = utc_now();

    int code = kExitOk;
    try {
        code = entry->run(ctx);
    } catch (const CheckFailed& e) {
        std::fprintf(stderr, "travl: %s\n", e.what.c_str());
        code = kExitCheckFailed;
    } catch (const InternalError& e) {
        std::fprintf(stderr, "travl: internal error: %s\n", e.what());
        code = kExitCheckFailed;
    } catch (const travl::Error& e) {
        std::fprintf(stderr, "travl: %s\n", e.what());
        code = kExitInputError;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "travl: %s\n", e.what());
        code = kExitInputError;
    } catch (const json::exception& e) {
        std::fprintf(stderr, "travl: %s\n", e.what());
        code = kExitInputError;
    }
    // The replayed run writes its own manifest.
    if (man.subcommand == "replay") return code;

    man.exit_code = code;
    man.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string path = ctx.manifest_path.empty() ? entry->default_manifest() : ctx.manifest_path;
    try {
        write_json(path, man.to_json());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "travl: cannot write manifest: %s\n", e.what());
        if (code == kExitOk) code = kExitInputError;
    }
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(std::move(args));
}
