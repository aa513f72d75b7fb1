#include "travl/encodings.hpp"

#include <cmath>
#include <string>

#include "travl/errors.hpp"

namespace travl {

namespace {

// Writes sin/cos pairs for `pos` into out[0..width).
void sinusoid(double pos, std::size_t width, double* out) {
    for (std::size_t i = 0; i < width / 2; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(2 * i) / static_cast<double>(width));
        out[2 * i] = std::sin(pos * freq);
        out[2 * i + 1] = std::cos(pos * freq);
    }
}

}  // namespace

EncodingTable spatial_encoding_2d(const PatchGrid& grid, std::size_t dim) {
    if (dim == 0 || dim % 4 != 0) {
        throw InvalidInput("spatial encoding dim must be a positive multiple of 4, got " + std::to_string(dim));
    }
    const std::size_t side = static_cast<std::size_t>(grid.grid_side());
    const std::size_t half = dim / 2;
    EncodingTable table{EncodingKind::spatial2d, grid.patch_count(), dim, std::vector<double>(grid.patch_count() * dim)};
    for (std::size_t p = 0; p < table.length; ++p) {
        double* out = table.data.data() + p * dim;
        sinusoid(static_cast<double>(p / side), half, out);
        sinusoid(static_cast<double>(p % side), half, out + half);
    }
    return table;
}

EncodingTable temporal_encoding_1d(std::size_t num_frames, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) {
        throw InvalidInput("temporal encoding dim must be positive and even, got " + std::to_string(dim));
    }
    EncodingTable table{EncodingKind::temporal1d, num_frames, dim, std::vector<double>(num_frames * dim)};
    for (std::size_t t = 0; t < num_frames; ++t) {
        sinusoid(static_cast<double>(t), dim, table.data.data() + t * dim);
    }
    return table;
}

TokenTensor apply_encodings(const TokenTensor& tokens, const EncodingTable& spatial, const EncodingTable& temporal) {
    if (spatial.dim != tokens.dim() || temporal.dim != tokens.dim()) {
        throw ValidationError("encoding dim does not match token dim " + std::to_string(tokens.dim()));
    }
    if (spatial.length != tokens.patches() || temporal.length < tokens.frames()) {
        throw ValidationError("encoding tables do not cover " + std::to_string(tokens.frames()) + " frames x " +
                              std::to_string(tokens.patches()) + " patches");
    }
    TokenTensor out = tokens;
    for (std::size_t t = 0; t < tokens.frames(); ++t) {
        const auto tcode = temporal.row(t);
        for (std::size_t p = 0; p < tokens.patches(); ++p) {
            const auto scode = spatial.row(p);
            auto tok = out.token(t * tokens.patches() + p);
            for (std::size_t c = 0; c < tok.size(); ++c) {
                tok[c] += scode[c] + tcode[c];
            }
        }
    }
    return out;
}

}  // namespace travl
