#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "travl/adapter.hpp"
#include "travl/attention.hpp"
#include "travl/encodings.hpp"
#include "travl/grid.hpp"
#include "travl/mask.hpp"

namespace travl {

inline constexpr std::size_t kMinChunkWindow = 4;
inline constexpr std::size_t kMaxChunkWindow = 16;

/// Throws InvalidInput unless window lies in [kMinChunkWindow, kMaxChunkWindow].
void validate_chunk_window(std::size_t window);

/// Token geometry of a host architecture.
struct IntegrationLayout {
    std::string name;
    Layout layout = Layout::videochatgpt;
    std::size_t frames = 0;
    std::size_t grid_side = 0;
    std::size_t chunk_window = 0;  // 0: unchunked temporal attention
    std::size_t chunk_stride = 0;
    std::size_t pool_factor = 1;

    std::size_t patches() const noexcept { return grid_side * grid_side; }
    /// Tokens handed to the projector after aggregation.
    std::size_t output_tokens() const;

    /// 100 frames of 16x16 CLIP patches, pooled to P + T tokens.
    static IntegrationLayout video_chatgpt();
    /// 64 frames of 27x27 SigLIP patches with chunked temporal attention.
    static IntegrationLayout llava_next(std::size_t window = kMaxChunkWindow, std::size_t stride = kMaxChunkWindow / 2,
                                        std::size_t pool_factor = 2);
};

struct ModelConfig {
    std::size_t dim = 16;
    std::size_t heads = 1;
    Layout layout = Layout::videochatgpt;
    std::size_t pool_factor = 2;
    bool spatial = true;
    bool temporal = true;
    bool residual = false;
    bool encodings = true;
    std::size_t chunk_window = 0;  // 0: unchunked
    std::size_t chunk_stride = 0;
    std::uint64_t seed = 0;
    double init_scale = 1.0;
    /// Multiplies the initial classifier weights.
    double head_init_scale = 0.01;
};

enum class ParamGroup { attention, projector };

/// Spatial attention -> trajectory-masked temporal attention -> aggregation ->
/// projection MLP -> plausibility head.
struct Model {
    ModelConfig config;
    AttentionParams spatial;
    AttentionParams temporal;
    AdapterParams adapter;

    static Model init(const ModelConfig& config);
    Model zeros_like() const;

    /// Visits every trainable array as f(name, group, values).
    template <typename F>
    void for_each_array(F&& f) {
        spatial.for_each_array([&](const char* n, auto& a) { f(std::string("spatial.") + n, ParamGroup::attention, a); });
        temporal.for_each_array([&](const char* n, auto& a) { f(std::string("temporal.") + n, ParamGroup::attention, a); });
        adapter.for_each_array([&](const char* n, auto& a) { f(std::string("adapter.") + n, ParamGroup::projector, a); });
    }
    template <typename F>
    void for_each_array(F&& f) const {
        spatial.for_each_array([&](const char* n, const auto& a) { f(std::string("spatial.") + n, ParamGroup::attention, a); });
        temporal.for_each_array([&](const char* n, const auto& a) { f(std::string("temporal.") + n, ParamGroup::attention, a); });
        adapter.for_each_array([&](const char* n, const auto& a) { f(std::string("adapter.") + n, ParamGroup::projector, a); });
    }

    bool operator==(const Model& other) const;
};

struct ForwardPass {
    std::size_t frames = 0;
    std::size_t patches = 0;
    TokenTensor encoded;
    std::optional<AttentionTape> spatial;
    std::optional<AttentionTape> temporal;
    std::optional<ChunkedTape> chunked;
    TokenTensor attended;
    TokenTensor aggregated;
    ProjectionTape projection;
    std::array<double, 2> logits{};
};

struct ModelGradients {
    Model params;
    TokenTensor input;
};

ForwardPass forward(const Model& model, const TokenTensor& features, const TrajectoryMask& mask, const PatchGrid& grid);
ModelGradients backward(const Model& model, const ForwardPass& pass, const std::array<double, 2>& grad_logits);

/// Two-class cross-entropy; writes d(loss)/d(logits) when `grad` is non-null.
double cross_entropy(const std::array<double, 2>& logits, int label, std::array<double, 2>* grad = nullptr);

/// Text checkpoint, version 1: a "travl-checkpoint 1" line, "config <key> <value>"
/// lines, then for every array a "<name> <count>" line followed by its values.
void save_checkpoint(const Model& model, std::ostream& out);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(std::istream& in);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace travl
