#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace travl {

/// Frame geometry: a height_px x width_px frame divided into a G x G patch grid.
class PatchGrid {
public:
    /// Throws InvalidInput unless 1 <= grid_side <= min(height_px, width_px).
    PatchGrid(int height_px, int width_px, int grid_side);

    int height_px() const noexcept { return height_; }
    int width_px() const noexcept { return width_; }
    int grid_side() const noexcept { return side_; }
    std::size_t patch_count() const noexcept {
        return static_cast<std::size_t>(side_) * static_cast<std::size_t>(side_);
    }

    /// Integer patch strides used for quantization: floor(W/G), floor(H/G).
    int stride_x() const noexcept { return width_ / side_; }
    int stride_y() const noexcept { return height_ / side_; }

    bool operator==(const PatchGrid&) const = default;

private:
    int height_;
    int width_;
    int side_;
};

struct PixelPoint {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const PixelPoint&) const = default;
};

/// Quantizes a pixel coordinate to a row-major patch id. Coordinates outside
/// the frame clamp to the boundary patch; non-finite ones throw InvalidInput.
std::size_t patch_index(double x, double y, const PatchGrid& grid);

/// Flat token index t*P + p. Throws InvalidInput when p >= P.
std::size_t token_index(std::size_t t, std::size_t p, std::size_t patch_count);

/// Centers ((j+0.5)*W/G, (i+0.5)*H/G), ordered by patch id.
std::vector<PixelPoint> patch_centers(const PatchGrid& grid);

/// Dense (frames x patches x dim) real array, row-major with dim fastest.
class TokenTensor {
public:
    TokenTensor() = default;
    /// Zero-filled. Throws InvalidInput when any extent is zero.
    TokenTensor(std::size_t frames, std::size_t patches, std::size_t dim);
    /// Takes ownership of data; throws ValidationError on size mismatch or a non-finite entry.
    TokenTensor(std::size_t frames, std::size_t patches, std::size_t dim, std::vector<double> data);

    std::size_t frames() const noexcept { return frames_; }
    std::size_t patches() const noexcept { return patches_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t token_count() const noexcept { return frames_ * patches_; }

    double& at(std::size_t t, std::size_t p, std::size_t c) { return data_[(t * patches_ + p) * dim_ + c]; }
    double at(std::size_t t, std::size_t p, std::size_t c) const { return data_[(t * patches_ + p) * dim_ + c]; }

    /// Row of flat token i = t*P + p.
    std::span<double> token(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
    std::span<const double> token(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool all_finite() const noexcept;
    /// Throws ValidationError when the patch axis disagrees with the grid.
    void check_grid(const PatchGrid& grid) const;
    bool same_shape(const TokenTensor& other) const noexcept {
        return frames_ == other.frames_ && patches_ == other.patches_ && dim_ == other.dim_;
    }

    bool operator==(const TokenTensor&) const = default;

private:
    std::size_t frames_ = 0;
    std::size_t patches_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

}  // namespace travl
