#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "travl/grid.hpp"
#include "travl/mask.hpp"
#include "travl/pipeline.hpp"
#include "travl/tracks.hpp"

namespace travl {

enum class LrSchedule { constant, cosine };

std::string to_string(LrSchedule schedule);
LrSchedule parse_lr_schedule(const std::string& name);

struct TrainConfig {
    double lr_attention = 1e-4;
    double lr_projector = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::size_t batch_size = 8;
    std::size_t epochs = 5;
    std::uint64_t seed = 0;
    /// Cosine decays both group rates from their base value to 0 over the run.
    LrSchedule schedule = LrSchedule::cosine;

    /// Throws ValidationError on negative rates, zero batch size or zero epochs.
    void validate() const;
    /// Multiplier at `progress` in [0, 1] (steps taken / total steps).
    double lr_scale(double progress) const;
    double learning_rate(ParamGroup group) const {
        return group == ParamGroup::attention ? lr_attention : lr_projector;
    }
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;
};

/// One decoupled-weight-decay Adam update with bias correction. Throws
/// ValidationError naming `name` when a gradient entry is non-finite.
void adamw_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                const TrainConfig& config, const std::string& name = "param");

/// AdamW over every array of a Model, with per-group learning rates.
class ModelOptimizer {
public:
    explicit ModelOptimizer(TrainConfig config) : config_(config) {}
    void step(Model& model, const Model& grads, double lr_scale = 1.0);
    const TrainConfig& config() const noexcept { return config_; }

private:
    TrainConfig config_;
    std::map<std::string, AdamState> state_;
};

/// Std of the descriptor projection is kFeatureProjectionScale / sqrt(4).
inline constexpr double kFeatureProjectionScale = 0.3;

/// Per-patch descriptor (occupied, visibility, dx, dy) pushed through a fixed
/// seeded random projection; empty patches map to the same embedding.
TokenTensor featurize_scene(const TrackSet& tracks, const PatchGrid& grid, std::size_t dim, std::uint64_t seed,
                            double visibility_threshold = kDefaultVisibilityThreshold);

struct Example {
    TokenTensor features;
    TrajectoryMask mask;
    int label = 0;  // 0 plausible, 1 implausible
};

struct EpochStats {
    double loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    TrainConfig config;
    ModelConfig model;
    std::size_t train_size = 0;
    std::size_t val_size = 0;

    nlohmann::json to_json() const;
};

struct TrainResult {
    TrainReport report;
    Model model;
};

/// Mean cross-entropy and gradient of a batch; accumulates into `grads` when non-null.
double batch_loss(const Model& model, std::span<const Example* const> batch, const PatchGrid& grid,
                  Model* grads = nullptr);
double accuracy(const Model& model, std::span<const Example> examples, const PatchGrid& grid);

/// Mini-batch AdamW on cross-entropy. Each epoch shuffles the two classes
/// separately and interleaves them so every batch keeps the class ratio. Throws
/// ValidationError when `train` is empty or lacks one of the two labels.
TrainResult train_toy(std::span<const Example> train, std::span<const Example> val, const TrainConfig& config,
                      const ModelConfig& model_config, const PatchGrid& grid);

struct CorpusConfig {
    PatchGrid grid{128, 128, 8};
    std::size_t num_frames = 12;
    std::size_t reinit_interval = kDefaultReinitInterval;
    double noise_sigma = 0.5;
    std::size_t dim = 16;
    std::uint64_t seed = 0;
    std::uint64_t feature_seed = 7;
    /// In patch strides.
    double object_radius = kDefaultObjectRadius;
    bool identity_masks = false;
};

/// Balanced synthetic corpus of `count` scenes (scene i seeded with seed + i).
std::vector<Example> make_corpus(const CorpusConfig& config, std::size_t count);

/// Corpus, model and optimizer settings of one toy run. The first
/// (1 - val_fraction) of the corpus trains, the rest is held out.
struct Experiment {
    CorpusConfig corpus;
    ModelConfig model;
    TrainConfig train;
    std::size_t scenes = 400;
    double val_fraction = 0.2;

    /// The configuration the mask-versus-identity comparison is run with.
    static Experiment efficacy();
    std::size_t train_size() const;
    void validate() const;
};

TrainResult run_experiment(const Experiment& experiment);

}  // namespace travl
