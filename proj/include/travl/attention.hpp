#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "travl/grid.hpp"
#include "travl/mask.hpp"

namespace travl {

enum class AttentionRole { spatial, temporal };

std::string to_string(AttentionRole role);

/// Multi-head self-attention parameters. Every matrix is dim x dim, row-major,
/// applied as y = W x + b. Gradients use the same type.
struct AttentionParams {
    std::size_t dim = 0;
    std::size_t heads = 1;
    AttentionRole role = AttentionRole::spatial;
    /// y = x + attention(x). Off by default; the attention maps themselves carry no residual.
    bool residual = false;

    std::vector<double> wq, wk, wv, wo;
    std::vector<double> bq, bk, bv, bo;

    /// Identity projections, zero biases.
    static AttentionParams identity(std::size_t dim, std::size_t heads, AttentionRole role);
    /// Gaussian weights with std `scale / sqrt(dim)`, zero biases.
    static AttentionParams random(std::size_t dim, std::size_t heads, AttentionRole role, std::uint64_t seed,
                                  double scale = 1.0);
    AttentionParams zeros_like() const;

    std::size_t head_dim() const noexcept { return dim / heads; }
    /// Throws ValidationError on inconsistent shapes or non-finite weights.
    void validate() const;

    template <typename F>
    void for_each_array(F&& f) {
        f("wq", wq); f("wk", wk); f("wv", wv); f("wo", wo);
        f("bq", bq); f("bk", bk); f("bv", bv); f("bo", bo);
    }
    template <typename F>
    void for_each_array(F&& f) const {
        f("wq", wq); f("wk", wk); f("wv", wv); f("wo", wo);
        f("bq", bq); f("bk", bk); f("bv", bv); f("bo", bo);
    }
};

/// Activations cached by one forward call.
///
/// Rows attend either densely within their frame (spatial) or over the
/// support of a mask row (temporal).
class AttentionTape {
public:
    const TokenTensor& input() const noexcept { return input_; }
    const TokenTensor& output() const noexcept { return output_; }
    const AttentionParams& params() const noexcept { return params_; }

    /// Softmax weights of token i, head h, in support order.
    std::span<const double> weights(std::size_t i, std::size_t h) const;
    /// Column token indices of token i's support.
    std::vector<std::uint32_t> support(std::size_t i) const;
    /// max over rows and heads of |sum(weights) - 1|.
    double max_row_sum_deviation() const;

    /// Recomputes the forward pass from the cached input.
    TokenTensor replay() const;

private:
    friend class AttentionKernel;

    TokenTensor input_;
    TokenTensor output_;
    AttentionParams params_;
    std::shared_ptr<const TrajectoryMask> mask_;  // null: dense per-frame support

    std::vector<double> q_, k_, v_, context_;
    std::vector<std::size_t> weight_offset_;
    std::vector<double> weights_;
};

struct AttentionGradients {
    TokenTensor input;
    AttentionParams params;
};

/// Self-attention over the P patches of each frame independently.
/// Throws ValidationError when params.dim != tokens.dim().
AttentionTape spatial_attention(const TokenTensor& tokens, const AttentionParams& params);

/// Self-attention over flattened T*P tokens restricted to the mask support.
/// Throws ValidationError when the mask does not cover T*P tokens.
AttentionTape masked_temporal_attention(const TokenTensor& tokens, const TrajectoryMask& mask,
                                        const AttentionParams& params);

/// Exact gradients of the forward map recorded in `tape` for upstream gradient `grad_output`.
AttentionGradients attention_backward(const AttentionTape& tape, const TokenTensor& grad_output);

/// Masked temporal attention applied per window of frames; tokens covered by
/// several windows take the mean of their window outputs.
class ChunkedTape {
public:
    const TokenTensor& output() const noexcept { return output_; }
    const std::vector<std::size_t>& window_starts() const noexcept { return starts_; }
    std::size_t window() const noexcept { return window_; }
    const std::vector<AttentionTape>& windows() const noexcept { return tapes_; }

private:
    friend ChunkedTape chunked_temporal_attention_tape(const TokenTensor&, const TrajectoryMask&,
                                                       const AttentionParams&, std::size_t, std::size_t);
    friend AttentionGradients chunked_backward(const ChunkedTape&, const TokenTensor&);

    TokenTensor output_;
    std::size_t window_ = 0;
    std::vector<std::size_t> starts_;
    std::vector<std::size_t> coverage_;  // windows per frame
    std::vector<AttentionTape> tapes_;
};

/// Window starts 0, stride, 2*stride, ... with the last window right-aligned to end at T.
/// A window longer than T is clamped to T. Throws InvalidInput when stride is 0 or exceeds window.
std::vector<std::size_t> chunk_starts(std::size_t frames, std::size_t window, std::size_t stride);

TokenTensor chunked_temporal_attention(const TokenTensor& tokens, const TrajectoryMask& mask,
                                       const AttentionParams& params, std::size_t window, std::size_t stride);
ChunkedTape chunked_temporal_attention_tape(const TokenTensor& tokens, const TrajectoryMask& mask,
                                            const AttentionParams& params, std::size_t window, std::size_t stride);
AttentionGradients chunked_backward(const ChunkedTape& tape, const TokenTensor& grad_output);

}  // namespace travl
