#include "travl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "travl/errors.hpp"

namespace travl {

void TrainConfig::validate() const {
    if (!(lr_attention >= 0.0) || !(lr_projector >= 0.0)) {
        throw ValidationError("learning rates must be >= 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ValidationError("betas must lie in [0, 1)");
    }
    if (!(eps > 0.0) || !(weight_decay >= 0.0)) {
        throw ValidationError("eps must be > 0 and weight_decay >= 0");
    }
    if (batch_size == 0 || epochs == 0) {
        throw ValidationError("batch_size and epochs must be >= 1");
    }
}

double TrainConfig::lr_scale(double progress) const {
    if (schedule == LrSchedule::constant) {
        return 1.0;
    }
    return 0.5 * (1.0 + std::cos(std::numbers::pi * std::clamp(progress, 0.0, 1.0)));
}

std::string to_string(LrSchedule schedule) { return schedule == LrSchedule::cosine ? "cosine" : "constant"; }

LrSchedule parse_lr_schedule(const std::string& name) {
    if (name == "cosine") return LrSchedule::cosine;
    if (name == "constant") return LrSchedule::constant;
    throw InvalidInput("unknown lr schedule '" + name + "'");
}

void adamw_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                const TrainConfig& config, const std::string& name) {
    if (params.size() != grads.size()) {
        throw ValidationError(name + ": gradient has " + std::to_string(grads.size()) + " entries, parameter has " +
                              std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw ValidationError("non-finite gradient in " + name + "[" + std::to_string(i) + "]");
        }
    }
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= lr * config.weight_decay * params[i];
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / correction1;
        const double v_hat = state.v[i] / correction2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
}

void ModelOptimizer::step(Model& model, const Model& grads, double lr_scale) {
    std::vector<const std::vector<double>*> g;
    grads.for_each_array([&](const std::string&, ParamGroup, const std::vector<double>& a) { g.push_back(&a); });
    std::size_t idx = 0;
    model.for_each_array([&](const std::string& name, ParamGroup group, std::vector<double>& a) {
        adamw_step(a, *g[idx++], state_[name], lr_scale * config_.learning_rate(group), config_, name);
    });
}

// ---------------------------------------------------------------------------

TokenTensor featurize_scene(const TrackSet& tracks, const PatchGrid& grid, std::size_t dim, std::uint64_t seed,
                            double visibility_threshold) {
    constexpr std::size_t kDescriptor = 4;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> proj(dim * kDescriptor);
    std::vector<double> empty(dim);
    for (auto& w : proj) {
        w = kFeatureProjectionScale * normal(rng) / std::sqrt(static_cast<double>(kDescriptor));
    }
    for (auto& e : empty) {
        e = normal(rng);
    }

    const std::size_t frames = tracks.num_frames();
    const std::size_t patches = grid.patch_count();
    const auto centers = patch_centers(grid);
    // occupied, visibility, dx, dy, plus the squared center distance of the nearest point.
    std::vector<double> desc(frames * patches * (kDescriptor + 1), 0.0);
    for (std::size_t n = 0; n < tracks.size(); ++n) {
        for (std::size_t t = 0; t < frames; ++t) {
            const double vis = tracks.visibility(n, t);
            if (!(vis > visibility_threshold)) {
                continue;
            }
            const auto& pt = tracks.position(n, t);
            const std::size_t p = patch_index(pt.x, pt.y, grid);
            double* d = &desc[(t * patches + p) * (kDescriptor + 1)];
            const double dx = std::clamp((pt.x - centers[p].x) / grid.stride_x(), -1.0, 1.0);
            const double dy = std::clamp((pt.y - centers[p].y) / grid.stride_y(), -1.0, 1.0);
            const double r2 = dx * dx + dy * dy;
            if (d[0] == 0.0 || r2 < d[4]) {
                d[2] = dx;
                d[3] = dy;
                d[4] = r2;
            }
            d[0] = 1.0;
            d[1] = std::max(d[1], vis);
        }
    }

    TokenTensor out(frames, patches, dim);
    for (std::size_t i = 0; i < frames * patches; ++i) {
        const double* d = &desc[i * (kDescriptor + 1)];
        auto tok = out.token(i);
        for (std::size_t c = 0; c < dim; ++c) {
            double acc = empty[c];
            for (std::size_t k = 0; k < kDescriptor; ++k) {
                acc += proj[c * kDescriptor + k] * d[k];
            }
            tok[c] = acc;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

nlohmann::json TrainReport::to_json() const {
    nlohmann::json epochs_json = nlohmann::json::array();
    for (std::size_t e = 0; e < epochs.size(); ++e) {
        epochs_json.push_back({{"epoch", e + 1},
                               {"loss", epochs[e].loss},
                               {"train_accuracy", epochs[e].train_accuracy},
                               {"val_accuracy", epochs[e].val_accuracy}});
    }
    return {{"seed", config.seed},
            {"train_size", train_size},
            {"val_size", val_size},
            {"config",
             {{"lr_attention", config.lr_attention},
              {"lr_projector", config.lr_projector},
              {"beta1", config.beta1},
              {"beta2", config.beta2},
              {"eps", config.eps},
              {"weight_decay", config.weight_decay},
              {"batch_size", config.batch_size},
              {"epochs", config.epochs},
              {"schedule", to_string(config.schedule)}}},
            {"model",
             {{"dim", model.dim},
              {"heads", model.heads},
              {"layout", to_string(model.layout)},
              {"pool_factor", model.pool_factor},
              {"spatial", model.spatial},
              {"temporal", model.temporal},
              {"residual", model.residual},
              {"chunk_window", model.chunk_window},
              {"chunk_stride", model.chunk_stride},
              {"encodings", model.encodings},
              {"init_scale", model.init_scale},
              {"head_init_scale", model.head_init_scale},
              {"init_seed", model.seed}}},
            {"epochs", std::move(epochs_json)}};
}

namespace {

void add_scaled(Model& into, const Model& from, double scale) {
    std::vector<const std::vector<double>*> src;
    from.for_each_array([&](const std::string&, ParamGroup, const std::vector<double>& a) { src.push_back(&a); });
    std::size_t idx = 0;
    into.for_each_array([&](const std::string&, ParamGroup, std::vector<double>& a) {
        const auto& s = *src[idx++];
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] += scale * s[i];
        }
    });
}

// Shuffles each class separately, then interleaves them in proportion so every
// mini-batch sees both labels at the dataset ratio.
void balanced_order(std::span<const Example> train, std::mt19937_64& rng, std::vector<std::size_t>& order) {
    std::vector<std::size_t> by_label[2];
    for (std::size_t i = 0; i < train.size(); ++i) {
        by_label[train[i].label].push_back(i);
    }
    std::vector<std::pair<double, std::size_t>> keyed;
    keyed.reserve(train.size());
    for (auto& group : by_label) {
        std::shuffle(group.begin(), group.end(), rng);
        for (std::size_t r = 0; r < group.size(); ++r) {
            keyed.emplace_back((static_cast<double>(r) + 0.5) / static_cast<double>(group.size()), group[r]);
        }
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < keyed.size(); ++i) {
        order[i] = keyed[i].second;
    }
}

int predict(const std::array<double, 2>& logits) {
    return logits[1] > logits[0] ? 1 : 0;
}

}  // namespace

double batch_loss(const Model& model, std::span<const Example* const> batch, const PatchGrid& grid, Model* grads) {
    double total = 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (const Example* ex : batch) {
        const ForwardPass pass = forward(model, ex->features, ex->mask, grid);
        std::array<double, 2> dlogits{};
        total += cross_entropy(pass.logits, ex->label, grads ? &dlogits : nullptr);
        if (grads) {
            const ModelGradients g = backward(model, pass, dlogits);
            add_scaled(*grads, g.params, inv);
        }
    }
    return total * inv;
}

double accuracy(const Model& model, std::span<const Example> examples, const PatchGrid& grid) {
    if (examples.empty()) {
        return 0.0;
    }
    std::size_t correct = 0;
    for (const auto& ex : examples) {
        correct += predict(forward(model, ex.features, ex.mask, grid).logits) == ex.label;
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

TrainResult train_toy(std::span<const Example> train, std::span<const Example> val, const TrainConfig& config,
                      const ModelConfig& model_config, const PatchGrid& grid) {
    config.validate();
    if (train.empty()) {
        throw ValidationError("training set is empty");
    }
    const bool has_plausible = std::any_of(train.begin(), train.end(), [](const Example& e) { return e.label == 0; });
    const bool has_implausible = std::any_of(train.begin(), train.end(), [](const Example& e) { return e.label == 1; });
    if (!has_plausible || !has_implausible) {
        throw ValidationError("training set must contain both labels");
    }

    TrainResult result{TrainReport{{}, config, model_config, train.size(), val.size()}, Model::init(model_config)};
    ModelOptimizer optimizer(config);
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> example_loss(train.size(), 0.0);
    std::vector<const Example*> batch;

    const std::size_t total_steps = config.epochs * ((train.size() + config.batch_size - 1) / config.batch_size);
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        balanced_order(train, rng, order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            batch.clear();
            Model grads = result.model.zeros_like();
            const double inv = 1.0 / static_cast<double>(end - start);
            for (std::size_t b = start; b < end; ++b) {
                const Example& ex = train[order[b]];
                const ForwardPass pass = forward(result.model, ex.features, ex.mask, grid);
                std::array<double, 2> dlogits{};
                example_loss[order[b]] = cross_entropy(pass.logits, ex.label, &dlogits);
                add_scaled(grads, backward(result.model, pass, dlogits).params, inv);
            }
            const double progress = static_cast<double>(step++) / static_cast<double>(total_steps);
            optimizer.step(result.model, grads, config.lr_scale(progress));
        }
        EpochStats stats;
        // Summed in dataset order so the value does not depend on the shuffle.
        stats.loss = std::accumulate(example_loss.begin(), example_loss.end(), 0.0) /
                     static_cast<double>(example_loss.size());
        if (!std::isfinite(stats.loss)) {
            throw ValidationError("training loss became non-finite in epoch " + std::to_string(epoch + 1));
        }
        stats.train_accuracy = accuracy(result.model, train, grid);
        stats.val_accuracy = accuracy(result.model, val, grid);
        result.report.epochs.push_back(stats);
    }
    return result;
}

std::vector<Example> make_corpus(const CorpusConfig& config, std::size_t count) {
    std::vector<Example> corpus;
    corpus.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const SceneSpec spec = random_scene_spec(config.grid, config.num_frames, config.reinit_interval,
                                                 config.noise_sigma, i, config.seed + i, config.object_radius);
        const Scene scene = simulate_scene(spec);
        TrajectoryMask mask = config.identity_masks
                                  ? TrajectoryMask(config.num_frames, config.grid.patch_count(), config.reinit_interval)
                                  : build_mask(scene.tracks, config.grid, kDefaultVisibilityThreshold,
                                               config.reinit_interval);
        corpus.push_back(Example{featurize_scene(scene.tracks, config.grid, config.dim, config.feature_seed),
                                 std::move(mask), scene.label == Plausibility::implausible ? 1 : 0});
    }
    return corpus;
}

Experiment Experiment::efficacy() {
    Experiment e;
    e.corpus.seed = 1000;
    e.model.dim = e.corpus.dim;
    e.model.heads = 4;
    e.model.layout = Layout::llavanext;
    e.model.pool_factor = 1;
    e.model.residual = true;
    e.model.seed = 5;
    e.train.lr_attention = 5e-3;
    e.train.lr_projector = 2.5e-3;
    e.train.batch_size = 2;
    e.train.epochs = 5;
    e.train.seed = 3;
    return e;
}

std::size_t Experiment::train_size() const {
    return scenes - static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(scenes)));
}

void Experiment::validate() const {
    train.validate();
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
        throw ValidationError("val_fraction must lie in [0, 1)");
    }
    if (model.dim != corpus.dim) {
        throw ValidationError("model dim " + std::to_string(model.dim) + " differs from feature dim " +
                              std::to_string(corpus.dim));
    }
    if (train_size() < 2) {
        throw ValidationError("need at least two training scenes");
    }
}

TrainResult run_experiment(const Experiment& experiment) {
    experiment.validate();
    const std::vector<Example> corpus = make_corpus(experiment.corpus, experiment.scenes);
    const std::span<const Example> all(corpus);
    const std::size_t n = experiment.train_size();
    return train_toy(all.subspan(0, n), all.subspan(n), experiment.train, experiment.model, experiment.corpus.grid);
}

}  // namespace travl
