#include "travl/attention.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "travl/errors.hpp"

namespace travl {

std::string to_string(AttentionRole role) {
    return role == AttentionRole::spatial ? "spatial" : "temporal";
}

AttentionParams AttentionParams::identity(std::size_t dim, std::size_t heads, AttentionRole role) {
    AttentionParams p;
    p.dim = dim;
    p.heads = heads;
    p.role = role;
    for (auto* w : {&p.wq, &p.wk, &p.wv, &p.wo}) {
        w->assign(dim * dim, 0.0);
        for (std::size_t a = 0; a < dim; ++a) {
            (*w)[a * dim + a] = 1.0;
        }
    }
    for (auto* b : {&p.bq, &p.bk, &p.bv, &p.bo}) {
        b->assign(dim, 0.0);
    }
    p.validate();
    return p;
}

AttentionParams AttentionParams::random(std::size_t dim, std::size_t heads, AttentionRole role, std::uint64_t seed,
                                        double scale) {
    AttentionParams p = identity(dim, heads, role);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, scale / std::sqrt(static_cast<double>(dim)));
    for (auto* w : {&p.wq, &p.wk, &p.wv, &p.wo}) {
        for (auto& x : *w) {
            x = normal(rng);
        }
    }
    return p;
}

AttentionParams AttentionParams::zeros_like() const {
    AttentionParams z = *this;
    z.for_each_array([](const char*, std::vector<double>& a) { std::fill(a.begin(), a.end(), 0.0); });
    return z;
}

void AttentionParams::validate() const {
    if (dim == 0 || heads == 0 || dim % heads != 0) {
        throw ValidationError("attention dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                              " heads");
    }
    for_each_array([&](const char* name, const std::vector<double>& a) {
        const std::size_t want = name[0] == 'w' ? dim * dim : dim;
        if (a.size() != want) {
            throw ValidationError(to_string(role) + " attention " + name + " has " + std::to_string(a.size()) +
                                  " entries, expected " + std::to_string(want));
        }
        if (!std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); })) {
            throw ValidationError(to_string(role) + " attention " + name + " has a non-finite entry");
        }
    });
}

namespace {

struct Columns {
    const std::uint32_t* sparse = nullptr;
    std::size_t count = 0;
    std::size_t base = 0;

    std::size_t operator[](std::size_t m) const { return sparse ? sparse[m] : base + m; }
};

void affine(const std::vector<double>& w, const std::vector<double>& b, const double* x, double* y, std::size_t d) {
    for (std::size_t a = 0; a < d; ++a) {
        double acc = b[a];
        const double* row = w.data() + a * d;
        for (std::size_t c = 0; c < d; ++c) {
            acc += row[c] * x[c];
        }
        y[a] = acc;
    }
}

}  // namespace

class AttentionKernel {
public:
    static Columns columns(const AttentionTape& tape, std::size_t i) {
        if (tape.mask_) {
            const auto r = tape.mask_->row(i);
            return {r.data(), r.size(), 0};
        }
        const std::size_t p = tape.input_.patches();
        return {nullptr, p, (i / p) * p};
    }

    static void forward(AttentionTape& tape) {
        const TokenTensor& x = tape.input_;
        const AttentionParams& prm = tape.params_;
        const std::size_t n = x.token_count();
        const std::size_t d = prm.dim;
        const std::size_t heads = prm.heads;
        const std::size_t dh = prm.head_dim();
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

        tape.q_.assign(n * d, 0.0);
        tape.k_.assign(n * d, 0.0);
        tape.v_.assign(n * d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* xi = x.token(i).data();
            affine(prm.wq, prm.bq, xi, &tape.q_[i * d], d);
            affine(prm.wk, prm.bk, xi, &tape.k_[i * d], d);
            affine(prm.wv, prm.bv, xi, &tape.v_[i * d], d);
        }

        tape.weight_offset_.assign(n + 1, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t m = columns(tape, i).count;
            if (m == 0) {
                throw InternalError("attention row " + std::to_string(i) + " has empty support");
            }
            tape.weight_offset_[i + 1] = tape.weight_offset_[i] + m * heads;
        }
        tape.weights_.assign(tape.weight_offset_[n], 0.0);
        tape.context_.assign(n * d, 0.0);

        std::vector<double> scores;
        for (std::size_t i = 0; i < n; ++i) {
            const Columns cols = columns(tape, i);
            scores.resize(cols.count);
            for (std::size_t h = 0; h < heads; ++h) {
                const double* qi = &tape.q_[i * d + h * dh];
                double top = -INFINITY;
                for (std::size_t m = 0; m < cols.count; ++m) {
                    const double* kj = &tape.k_[cols[m] * d + h * dh];
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) {
                        s += qi[c] * kj[c];
                    }
                    scores[m] = s * scale;
                    top = std::max(top, scores[m]);
                }
                double total = 0.0;
                for (auto& s : scores) {
                    s = std::exp(s - top);
                    total += s;
                }
                double* alpha = &tape.weights_[tape.weight_offset_[i] + h * cols.count];
                double* ctx = &tape.context_[i * d + h * dh];
                for (std::size_t m = 0; m < cols.count; ++m) {
                    alpha[m] = scores[m] / total;
                    const double* vj = &tape.v_[cols[m] * d + h * dh];
                    for (std::size_t c = 0; c < dh; ++c) {
                        ctx[c] += alpha[m] * vj[c];
                    }
                }
            }
        }

        tape.output_ = TokenTensor(x.frames(), x.patches(), d);
        for (std::size_t i = 0; i < n; ++i) {
            auto yi = tape.output_.token(i);
            affine(prm.wo, prm.bo, &tape.context_[i * d], yi.data(), d);
            if (prm.residual) {
                const auto xi = x.token(i);
                for (std::size_t c = 0; c < d; ++c) {
                    yi[c] += xi[c];
                }
            }
        }
    }

    static AttentionTape run(const TokenTensor& tokens, const AttentionParams& params,
                             std::shared_ptr<const TrajectoryMask> mask) {
        params.validate();
        if (params.dim != tokens.dim()) {
            throw ValidationError(to_string(params.role) + " attention dim " + std::to_string(params.dim) +
                                  " does not match token dim " + std::to_string(tokens.dim()));
        }
        AttentionTape tape;
        tape.input_ = tokens;
        tape.params_ = params;
        tape.mask_ = std::move(mask);
        forward(tape);
        return tape;
    }

    static AttentionGradients backward(const AttentionTape& tape, const TokenTensor& dy) {
        const TokenTensor& x = tape.input_;
        if (!dy.same_shape(tape.output_)) {
            throw ValidationError("upstream gradient shape does not match attention output");
        }
        const AttentionParams& prm = tape.params_;
        const std::size_t n = x.token_count();
        const std::size_t d = prm.dim;
        const std::size_t heads = prm.heads;
        const std::size_t dh = prm.head_dim();
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

        AttentionGradients g{TokenTensor(x.frames(), x.patches(), d), prm.zeros_like()};
        std::vector<double> dctx(n * d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto gi = dy.token(i);
            const double* ci = &tape.context_[i * d];
            for (std::size_t a = 0; a < d; ++a) {
                g.params.bo[a] += gi[a];
                for (std::size_t b = 0; b < d; ++b) {
                    g.params.wo[a * d + b] += gi[a] * ci[b];
                    dctx[i * d + b] += gi[a] * prm.wo[a * d + b];
                }
            }
            if (prm.residual) {
                auto dxi = g.input.token(i);
                for (std::size_t c = 0; c < d; ++c) {
                    dxi[c] += gi[c];
                }
            }
        }

        std::vector<double> dq(n * d, 0.0);
        std::vector<double> dk(n * d, 0.0);
        std::vector<double> dv(n * d, 0.0);
        std::vector<double> dalpha;
        for (std::size_t i = 0; i < n; ++i) {
            const Columns cols = columns(tape, i);
            dalpha.resize(cols.count);
            for (std::size_t h = 0; h < heads; ++h) {
                const double* alpha = &tape.weights_[tape.weight_offset_[i] + h * cols.count];
                const double* gctx = &dctx[i * d + h * dh];
                double dot = 0.0;
                for (std::size_t m = 0; m < cols.count; ++m) {
                    const std::size_t j = cols[m];
                    const double* vj = &tape.v_[j * d + h * dh];
                    double* dvj = &dv[j * d + h * dh];
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) {
                        s += gctx[c] * vj[c];
                        dvj[c] += alpha[m] * gctx[c];
                    }
                    dalpha[m] = s;
                    dot += alpha[m] * s;
                }
                const double* qi = &tape.q_[i * d + h * dh];
                double* dqi = &dq[i * d + h * dh];
                for (std::size_t m = 0; m < cols.count; ++m) {
                    const double ds = alpha[m] * (dalpha[m] - dot) * scale;
                    if (ds == 0.0) {
                        continue;
                    }
                    const std::size_t j = cols[m];
                    const double* kj = &tape.k_[j * d + h * dh];
                    double* dkj = &dk[j * d + h * dh];
                    for (std::size_t c = 0; c < dh; ++c) {
                        dqi[c] += ds * kj[c];
                        dkj[c] += ds * qi[c];
                    }
                }
            }
        }

        const auto project_back = [&](const std::vector<double>& dproj, const std::vector<double>& w,
                                      std::vector<double>& gw, std::vector<double>& gb) {
            for (std::size_t i = 0; i < n; ++i) {
                const auto xi = x.token(i);
                auto dxi = g.input.token(i);
                const double* gi = &dproj[i * d];
                for (std::size_t a = 0; a < d; ++a) {
                    if (gi[a] == 0.0) {
                        continue;
                    }
                    gb[a] += gi[a];
                    for (std::size_t b = 0; b < d; ++b) {
                        gw[a * d + b] += gi[a] * xi[b];
                        dxi[b] += gi[a] * w[a * d + b];
                    }
                }
            }
        };
        project_back(dq, prm.wq, g.params.wq, g.params.bq);
        project_back(dk, prm.wk, g.params.wk, g.params.bk);
        project_back(dv, prm.wv, g.params.wv, g.params.bv);
        return g;
    }
};

std::span<const double> AttentionTape::weights(std::size_t i, std::size_t h) const {
    const std::size_t m = (weight_offset_.at(i + 1) - weight_offset_.at(i)) / params_.heads;
    return {weights_.data() + weight_offset_[i] + h * m, m};
}

std::vector<std::uint32_t> AttentionTape::support(std::size_t i) const {
    const Columns cols = AttentionKernel::columns(*this, i);
    std::vector<std::uint32_t> out(cols.count);
    for (std::size_t m = 0; m < cols.count; ++m) {
        out[m] = static_cast<std::uint32_t>(cols[m]);
    }
    return out;
}

double AttentionTape::max_row_sum_deviation() const {
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < weight_offset_.size(); ++i) {
        for (std::size_t h = 0; h < params_.heads; ++h) {
            double total = 0.0;
            for (double w : weights(i, h)) {
                total += w;
            }
            worst = std::max(worst, std::abs(total - 1.0));
        }
    }
    return worst;
}

TokenTensor AttentionTape::replay() const {
    AttentionTape copy;
    copy.input_ = input_;
    copy.params_ = params_;
    copy.mask_ = mask_;
    AttentionKernel::forward(copy);
    return copy.output_;
}

AttentionTape spatial_attention(const TokenTensor& tokens, const AttentionParams& params) {
    return AttentionKernel::run(tokens, params, nullptr);
}

AttentionTape masked_temporal_attention(const TokenTensor& tokens, const TrajectoryMask& mask,
                                        const AttentionParams& params) {
    if (mask.tokens() != tokens.token_count() || mask.patches() != tokens.patches()) {
        throw ValidationError("mask covers " + std::to_string(mask.tokens()) + " tokens, input has " +
                              std::to_string(tokens.token_count()));
    }
    return AttentionKernel::run(tokens, params, std::make_shared<const TrajectoryMask>(mask));
}

AttentionGradients attention_backward(const AttentionTape& tape, const TokenTensor& grad_output) {
    return AttentionKernel::backward(tape, grad_output);
}

// ---------------------------------------------------------------------------
// Chunked windows

std::vector<std::size_t> chunk_starts(std::size_t frames, std::size_t window, std::size_t stride) {
    if (frames == 0 || window == 0) {
        throw InvalidInput("chunk window and frame count must be positive");
    }
    window = std::min(window, frames);
    if (stride == 0 || stride > window) {
        // A stride longer than the clamped window only matters when there is more than one window.
        if (stride == 0 || window < frames) {
            throw InvalidInput("chunk stride must lie in [1, window]");
        }
    }
    std::vector<std::size_t> starts;
    std::size_t s = 0;
    for (; s + window <= frames; s += stride) {
        starts.push_back(s);
    }
    if (starts.back() + window < frames) {
        starts.push_back(frames - window);
    }
    return starts;
}

namespace {

TokenTensor frame_slice(const TokenTensor& x, std::size_t first, std::size_t count) {
    const std::size_t stride = x.patches() * x.dim();
    const auto all = x.values();
    std::vector<double> data(all.begin() + static_cast<std::ptrdiff_t>(first * stride),
                             all.begin() + static_cast<std::ptrdiff_t>((first + count) * stride));
    return TokenTensor(count, x.patches(), x.dim(), std::move(data));
}

}  // namespace

ChunkedTape chunked_temporal_attention_tape(const TokenTensor& tokens, const TrajectoryMask& mask,
                                            const AttentionParams& params, std::size_t window, std::size_t stride) {
    if (mask.tokens() != tokens.token_count() || mask.patches() != tokens.patches()) {
        throw ValidationError("mask covers " + std::to_string(mask.tokens()) + " tokens, input has " +
                              std::to_string(tokens.token_count()));
    }
    const std::size_t frames = tokens.frames();
    ChunkedTape tape;
    tape.window_ = std::min(window, frames);
    tape.starts_ = chunk_starts(frames, window, stride);
    tape.coverage_.assign(frames, 0);
    tape.output_ = TokenTensor(frames, tokens.patches(), tokens.dim());

    const std::size_t stride_vals = tokens.patches() * tokens.dim();
    auto out = tape.output_.values();
    for (std::size_t s : tape.starts_) {
        if (s == 0 && tape.window_ == frames) {
            tape.tapes_.push_back(masked_temporal_attention(tokens, mask, params));
        } else {
            tape.tapes_.push_back(masked_temporal_attention(frame_slice(tokens, s, tape.window_),
                                                            mask.frame_window(s, tape.window_), params));
        }
        const auto y = tape.tapes_.back().output().values();
        for (std::size_t v = 0; v < y.size(); ++v) {
            out[s * stride_vals + v] += y[v];
        }
        for (std::size_t t = s; t < s + tape.window_; ++t) {
            ++tape.coverage_[t];
        }
    }
    for (std::size_t t = 0; t < frames; ++t) {
        const double c = static_cast<double>(tape.coverage_[t]);
        for (std::size_t v = 0; v < stride_vals; ++v) {
            out[t * stride_vals + v] /= c;
        }
    }
    return tape;
}

TokenTensor chunked_temporal_attention(const TokenTensor& tokens, const TrajectoryMask& mask,
                                       const AttentionParams& params, std::size_t window, std::size_t stride) {
    return chunked_temporal_attention_tape(tokens, mask, params, window, stride).output();
}

AttentionGradients chunked_backward(const ChunkedTape& tape, const TokenTensor& grad_output) {
    if (!grad_output.same_shape(tape.output_)) {
        throw ValidationError("upstream gradient shape does not match chunked output");
    }
    const std::size_t stride_vals = grad_output.patches() * grad_output.dim();
    AttentionGradients total{TokenTensor(grad_output.frames(), grad_output.patches(), grad_output.dim()),
                             tape.tapes_.front().params().zeros_like()};
    auto dx = total.input.values();
    const auto dy = grad_output.values();
    for (std::size_t w = 0; w < tape.starts_.size(); ++w) {
        const std::size_t s = tape.starts_[w];
        TokenTensor local(tape.window_, grad_output.patches(), grad_output.dim());
        auto lv = local.values();
        for (std::size_t t = 0; t < tape.window_; ++t) {
            const double c = static_cast<double>(tape.coverage_[s + t]);
            for (std::size_t v = 0; v < stride_vals; ++v) {
                lv[t * stride_vals + v] = dy[(s + t) * stride_vals + v] / c;
            }
        }
        const AttentionGradients g = attention_backward(tape.tapes_[w], local);
        const auto gx = g.input.values();
        for (std::size_t v = 0; v < gx.size(); ++v) {
            dx[s * stride_vals + v] += gx[v];
        }
        auto accumulate = [](std::vector<double>& into, const std::vector<double>& from) {
            for (std::size_t e = 0; e < into.size(); ++e) {
                into[e] += from[e];
            }
        };
        accumulate(total.params.wq, g.params.wq);
        accumulate(total.params.wk, g.params.wk);
        accumulate(total.params.wv, g.params.wv);
        accumulate(total.params.wo, g.params.wo);
        accumulate(total.params.bq, g.params.bq);
        accumulate(total.params.bk, g.params.bk);
        accumulate(total.params.bv, g.params.bv);
        accumulate(total.params.bo, g.params.bo);
    }
    return total;
}

}  // namespace travl
