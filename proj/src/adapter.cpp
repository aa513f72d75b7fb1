#include "travl/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "travl/errors.hpp"

namespace travl {

std::string to_string(Layout layout) {
    return layout == Layout::videochatgpt ? "videochatgpt" : "llavanext";
}

Layout parse_layout(const std::string& name) {
    if (name == "videochatgpt") {
        return Layout::videochatgpt;
    }
    if (name == "llavanext") {
        return Layout::llavanext;
    }
    throw InvalidInput("unknown layout '" + name + "' (expected videochatgpt or llavanext)");
}

AdapterParams AdapterParams::random(std::size_t dim_in, std::size_t dim_out, std::uint64_t seed,
                                    std::size_t dim_hidden) {
    AdapterParams p;
    p.dim_in = dim_in;
    p.dim_hidden = dim_hidden == 0 ? 2 * dim_in : dim_hidden;
    p.dim_out = dim_out;
    std::mt19937_64 rng(seed);
    const auto fill = [&](std::vector<double>& w, std::size_t rows, std::size_t cols) {
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
        w.resize(rows * cols);
        for (auto& x : w) {
            x = normal(rng);
        }
    };
    fill(p.w1, p.dim_hidden, dim_in);
    fill(p.w2, dim_out, p.dim_hidden);
    fill(p.wc, 2, dim_out);
    p.b1.assign(p.dim_hidden, 0.0);
    p.b2.assign(dim_out, 0.0);
    p.bc.assign(2, 0.0);
    return p;
}

AdapterParams AdapterParams::zeros_like() const {
    AdapterParams z = *this;
    z.for_each_array([](const char*, std::vector<double>& a) { std::fill(a.begin(), a.end(), 0.0); });
    return z;
}

void AdapterParams::validate() const {
    if (dim_in == 0 || dim_hidden == 0 || dim_out == 0) {
        throw ValidationError("adapter dims must be positive");
    }
    if (layout == Layout::llavanext && pool_factor == 0) {
        throw ValidationError("llavanext pool_factor must be >= 1");
    }
    const auto check = [](const char* name, const std::vector<double>& a, std::size_t want) {
        if (a.size() != want) {
            throw ValidationError(std::string("adapter ") + name + " has " + std::to_string(a.size()) +
                                  " entries, expected " + std::to_string(want));
        }
        if (!std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); })) {
            throw ValidationError(std::string("adapter ") + name + " has a non-finite entry");
        }
    };
    check("w1", w1, dim_hidden * dim_in);
    check("b1", b1, dim_hidden);
    check("w2", w2, dim_out * dim_hidden);
    check("b2", b2, dim_out);
    check("wc", wc, 2 * dim_out);
    check("bc", bc, 2);
}

// ---------------------------------------------------------------------------
// Aggregation

TokenTensor aggregate_videochatgpt(const TokenTensor& tokens) {
    const std::size_t frames = tokens.frames();
    const std::size_t patches = tokens.patches();
    const std::size_t d = tokens.dim();
    TokenTensor out(1, patches + frames, d);
    const double inv_t = 1.0 / static_cast<double>(frames);
    const double inv_p = 1.0 / static_cast<double>(patches);
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t p = 0; p < patches; ++p) {
            const auto x = tokens.token(t * patches + p);
            auto spatial = out.token(p);
            auto temporal = out.token(patches + t);
            for (std::size_t c = 0; c < d; ++c) {
                spatial[c] += x[c] * inv_t;
                temporal[c] += x[c] * inv_p;
            }
        }
    }
    return out;
}

TokenTensor aggregate_videochatgpt_backward(const TokenTensor& grad_output, std::size_t frames, std::size_t patches) {
    if (grad_output.token_count() != frames + patches) {
        throw ValidationError("aggregate gradient has " + std::to_string(grad_output.token_count()) +
                              " tokens, expected T+P = " + std::to_string(frames + patches));
    }
    const std::size_t d = grad_output.dim();
    TokenTensor dx(frames, patches, d);
    const double inv_t = 1.0 / static_cast<double>(frames);
    const double inv_p = 1.0 / static_cast<double>(patches);
    for (std::size_t t = 0; t < frames; ++t) {
        const auto gt = grad_output.token(patches + t);
        for (std::size_t p = 0; p < patches; ++p) {
            const auto gp = grad_output.token(p);
            auto out = dx.token(t * patches + p);
            for (std::size_t c = 0; c < d; ++c) {
                out[c] = gp[c] * inv_t + gt[c] * inv_p;
            }
        }
    }
    return dx;
}

namespace {

std::size_t grid_side_of(std::size_t patches) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(patches))));
    if (side * side != patches) {
        throw ValidationError("patch count " + std::to_string(patches) + " is not a perfect square");
    }
    return side;
}

// Pooled block id and block size for every patch of a G x G grid.
struct BlockMap {
    std::size_t blocks_per_side;
    std::vector<std::size_t> block_of;
    std::vector<double> block_size;
};

BlockMap block_map(std::size_t patches, std::size_t f) {
    if (f == 0) {
        throw InvalidInput("pool_factor must be >= 1");
    }
    const std::size_t side = grid_side_of(patches);
    const std::size_t per_side = (side + f - 1) / f;
    BlockMap m{per_side, std::vector<std::size_t>(patches), std::vector<double>(per_side * per_side, 0.0)};
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            const std::size_t b = (r / f) * per_side + c / f;
            m.block_of[r * side + c] = b;
            m.block_size[b] += 1.0;
        }
    }
    return m;
}

}  // namespace

TokenTensor aggregate_llavanext(const TokenTensor& tokens, std::size_t pool_factor) {
    const BlockMap m = block_map(tokens.patches(), pool_factor);
    const std::size_t d = tokens.dim();
    const std::size_t out_patches = m.block_size.size();
    TokenTensor out(tokens.frames(), out_patches, d);
    for (std::size_t t = 0; t < tokens.frames(); ++t) {
        for (std::size_t p = 0; p < tokens.patches(); ++p) {
            const std::size_t b = m.block_of[p];
            const double w = 1.0 / m.block_size[b];
            const auto x = tokens.token(t * tokens.patches() + p);
            auto y = out.token(t * out_patches + b);
            for (std::size_t c = 0; c < d; ++c) {
                y[c] += x[c] * w;
            }
        }
    }
    return out;
}

TokenTensor aggregate_llavanext_backward(const TokenTensor& grad_output, std::size_t patches,
                                         std::size_t pool_factor) {
    const BlockMap m = block_map(patches, pool_factor);
    if (grad_output.patches() != m.block_size.size()) {
        throw ValidationError("pooled gradient has " + std::to_string(grad_output.patches()) +
                              " tokens per frame, expected " + std::to_string(m.block_size.size()));
    }
    const std::size_t d = grad_output.dim();
    TokenTensor dx(grad_output.frames(), patches, d);
    for (std::size_t t = 0; t < grad_output.frames(); ++t) {
        for (std::size_t p = 0; p < patches; ++p) {
            const std::size_t b = m.block_of[p];
            const double w = 1.0 / m.block_size[b];
            const auto g = grad_output.token(t * grad_output.patches() + b);
            auto out = dx.token(t * patches + p);
            for (std::size_t c = 0; c < d; ++c) {
                out[c] = g[c] * w;
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Projection MLP

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

ProjectionTape project(const TokenTensor& tokens, const AdapterParams& params) {
    if (tokens.dim() != params.dim_in) {
        throw ValidationError("projection expects dim " + std::to_string(params.dim_in) + ", got " +
                              std::to_string(tokens.dim()));
    }
    const std::size_t n = tokens.token_count();
    const std::size_t dh = params.dim_hidden;
    const std::size_t din = params.dim_in;
    const std::size_t dout = params.dim_out;
    ProjectionTape tape{tokens, std::vector<double>(n * dh), TokenTensor(tokens.frames(), tokens.patches(), dout)};
    std::vector<double> act(dh);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = tokens.token(i);
        double* pre = &tape.hidden_pre[i * dh];
        for (std::size_t a = 0; a < dh; ++a) {
            double acc = params.b1[a];
            for (std::size_t b = 0; b < din; ++b) {
                acc += params.w1[a * din + b] * x[b];
            }
            pre[a] = acc;
            act[a] = gelu(acc);
        }
        auto y = tape.output.token(i);
        for (std::size_t a = 0; a < dout; ++a) {
            double acc = params.b2[a];
            for (std::size_t b = 0; b < dh; ++b) {
                acc += params.w2[a * dh + b] * act[b];
            }
            y[a] = acc;
        }
    }
    return tape;
}

TokenTensor project_backward(const ProjectionTape& tape, const AdapterParams& params, const TokenTensor& grad_output,
                             AdapterParams& grads) {
    if (!grad_output.same_shape(tape.output)) {
        throw ValidationError("projection gradient shape mismatch");
    }
    const std::size_t n = tape.input.token_count();
    const std::size_t dh = params.dim_hidden;
    const std::size_t din = params.dim_in;
    const std::size_t dout = params.dim_out;
    TokenTensor dx(tape.input.frames(), tape.input.patches(), din);
    std::vector<double> dhid(dh);
    for (std::size_t i = 0; i < n; ++i) {
        const auto g = grad_output.token(i);
        const double* pre = &tape.hidden_pre[i * dh];
        std::fill(dhid.begin(), dhid.end(), 0.0);
        for (std::size_t a = 0; a < dout; ++a) {
            grads.b2[a] += g[a];
            for (std::size_t b = 0; b < dh; ++b) {
                grads.w2[a * dh + b] += g[a] * gelu(pre[b]);
                dhid[b] += g[a] * params.w2[a * dh + b];
            }
        }
        const auto x = tape.input.token(i);
        auto dxi = dx.token(i);
        for (std::size_t a = 0; a < dh; ++a) {
            const double gp = dhid[a] * gelu_derivative(pre[a]);
            grads.b1[a] += gp;
            for (std::size_t b = 0; b < din; ++b) {
                grads.w1[a * din + b] += gp * x[b];
                dxi[b] += gp * params.w1[a * din + b];
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Classifier

std::array<double, 2> classify_plausibility(const TokenTensor& tokens, const AdapterParams& params) {
    if (tokens.dim() != params.dim_out) {
        throw ValidationError("classifier expects dim " + std::to_string(params.dim_out) + ", got " +
                              std::to_string(tokens.dim()));
    }
    const std::size_t d = tokens.dim();
    std::vector<double> mean(d, 0.0);
    const double inv_n = 1.0 / static_cast<double>(tokens.token_count());
    for (std::size_t i = 0; i < tokens.token_count(); ++i) {
        const auto x = tokens.token(i);
        for (std::size_t c = 0; c < d; ++c) {
            mean[c] += x[c] * inv_n;
        }
    }
    std::array<double, 2> logits{params.bc[0], params.bc[1]};
    for (std::size_t k = 0; k < 2; ++k) {
        for (std::size_t c = 0; c < d; ++c) {
            logits[k] += params.wc[k * d + c] * mean[c];
        }
    }
    return logits;
}

TokenTensor classify_backward(const TokenTensor& tokens, const AdapterParams& params,
                              const std::array<double, 2>& grad_logits, AdapterParams& grads) {
    const std::size_t d = tokens.dim();
    const double inv_n = 1.0 / static_cast<double>(tokens.token_count());
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < tokens.token_count(); ++i) {
        const auto x = tokens.token(i);
        for (std::size_t c = 0; c < d; ++c) {
            mean[c] += x[c] * inv_n;
        }
    }
    std::vector<double> dmean(d, 0.0);
    for (std::size_t k = 0; k < 2; ++k) {
        grads.bc[k] += grad_logits[k];
        for (std::size_t c = 0; c < d; ++c) {
            grads.wc[k * d + c] += grad_logits[k] * mean[c];
            dmean[c] += grad_logits[k] * params.wc[k * d + c];
        }
    }
    TokenTensor dx(tokens.frames(), tokens.patches(), d);
    for (std::size_t i = 0; i < tokens.token_count(); ++i) {
        auto g = dx.token(i);
        for (std::size_t c = 0; c < d; ++c) {
            g[c] = dmean[c] * inv_n;
        }
    }
    return dx;
}

std::array<double, 2> softmax2(const std::array<double, 2>& logits) {
    const double top = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - top);
    const double e1 = std::exp(logits[1] - top);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

}  // namespace travl
