#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "travl/grid.hpp"

namespace travl {

/// Token layouts of the two host architectures.
enum class Layout {
    /// P per-patch time means followed by T per-frame patch means.
    videochatgpt,
    /// Per-frame f x f block pooling of the patch grid.
    llavanext,
};

std::string to_string(Layout layout);
Layout parse_layout(const std::string& name);

/// 2-layer gelu MLP (d -> d_hidden -> d_out) plus the 2-logit plausibility head.
/// Matrices are row-major (out x in). Gradients use the same type.
struct AdapterParams {
    Layout layout = Layout::videochatgpt;
    std::size_t pool_factor = 1;
    std::size_t dim_in = 0;
    std::size_t dim_hidden = 0;
    std::size_t dim_out = 0;

    std::vector<double> w1, b1, w2, b2;
    std::vector<double> wc, bc;

    /// Gaussian init with std 1/sqrt(fan_in); d_hidden defaults to 2*d_in.
    static AdapterParams random(std::size_t dim_in, std::size_t dim_out, std::uint64_t seed,
                                std::size_t dim_hidden = 0);
    AdapterParams zeros_like() const;
    void validate() const;

    template <typename F>
    void for_each_array(F&& f) {
        f("w1", w1); f("b1", b1); f("w2", w2); f("b2", b2); f("wc", wc); f("bc", bc);
    }
    template <typename F>
    void for_each_array(F&& f) const {
        f("w1", w1); f("b1", b1); f("w2", w2); f("b2", b2); f("wc", wc); f("bc", bc);
    }
};

/// (T, P, d) -> (1, P + T, d): spatial block of per-patch means over frames,
/// then temporal block of per-frame means over patches.
TokenTensor aggregate_videochatgpt(const TokenTensor& tokens);
TokenTensor aggregate_videochatgpt_backward(const TokenTensor& grad_output, std::size_t frames, std::size_t patches);

/// (T, G*G, d) -> (T, ceil(G/f)^2, d) by f x f block means; edge blocks may be smaller.
/// Throws ValidationError when P is not a perfect square, InvalidInput when f == 0.
TokenTensor aggregate_llavanext(const TokenTensor& tokens, std::size_t pool_factor);
TokenTensor aggregate_llavanext_backward(const TokenTensor& grad_output, std::size_t patches,
                                         std::size_t pool_factor);

double gelu(double x);
double gelu_derivative(double x);

struct ProjectionTape {
    TokenTensor input;
    std::vector<double> hidden_pre;  // tokens x d_hidden
    TokenTensor output;
};

/// out = W2 gelu(W1 x + b1) + b2 per token. Throws ValidationError on a dim mismatch.
ProjectionTape project(const TokenTensor& tokens, const AdapterParams& params);
/// Returns the input gradient and accumulates into the w1/b1/w2/b2 entries of `grads`.
TokenTensor project_backward(const ProjectionTape& tape, const AdapterParams& params, const TokenTensor& grad_output,
                             AdapterParams& grads);

/// Mean over all tokens, then Wc * mean + bc. Index 0 = plausible, 1 = implausible.
std::array<double, 2> classify_plausibility(const TokenTensor& tokens, const AdapterParams& params);
TokenTensor classify_backward(const TokenTensor& tokens, const AdapterParams& params,
                              const std::array<double, 2>& grad_logits, AdapterParams& grads);

std::array<double, 2> softmax2(const std::array<double, 2>& logits);

}  // namespace travl
