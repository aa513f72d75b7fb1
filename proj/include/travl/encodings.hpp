#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "travl/grid.hpp"

namespace travl {

enum class EncodingKind { spatial2d, temporal1d };

/// length x dim table of sinusoidal position codes, one row per position.
struct EncodingTable {
    EncodingKind kind = EncodingKind::temporal1d;
    std::size_t length = 0;
    std::size_t dim = 0;
    std::vector<double> data;

    std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
};

/// Row code in the first d/2 channels, column code in the last d/2; each half
/// is a base-10000 sin/cos sinusoid. Throws InvalidInput unless d % 4 == 0.
EncodingTable spatial_encoding_2d(const PatchGrid& grid, std::size_t dim);

/// Base-10000 sin/cos sinusoid over the frame index. Throws InvalidInput for odd d.
EncodingTable temporal_encoding_1d(std::size_t num_frames, std::size_t dim);

/// out[t,p,:] = in[t,p,:] + spatial[p,:] + temporal[t,:]. Throws ValidationError on shape mismatch.
TokenTensor apply_encodings(const TokenTensor& tokens, const EncodingTable& spatial, const EncodingTable& temporal);

}  // namespace travl
