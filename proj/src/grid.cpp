#include "travl/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "travl/errors.hpp"

namespace travl {

PatchGrid::PatchGrid(int height_px, int width_px, int grid_side)
    : height_(height_px), width_(width_px), side_(grid_side) {
    if (grid_side < 1) {
        throw InvalidInput("grid_side must be >= 1, got " + std::to_string(grid_side));
    }
    if (height_px < grid_side || width_px < grid_side) {
        throw InvalidInput("frame " + std::to_string(height_px) + "x" + std::to_string(width_px) +
                           " is smaller than grid side " + std::to_string(grid_side));
    }
}

namespace {

std::size_t quantize(double coord, int stride, int side) {
    const double cell = std::floor(coord / static_cast<double>(stride));
    const double clamped = std::clamp(cell, 0.0, static_cast<double>(side - 1));
    return static_cast<std::size_t>(clamped);
}

}  // namespace

std::size_t patch_index(double x, double y, const PatchGrid& grid) {
    if (!std::isfinite(x) || !std::isfinite(y)) {
        throw InvalidInput("patch_index: non-finite coordinate");
    }
    const std::size_t col = quantize(x, grid.stride_x(), grid.grid_side());
    const std::size_t row = quantize(y, grid.stride_y(), grid.grid_side());
    return row * static_cast<std::size_t>(grid.grid_side()) + col;
}

std::size_t token_index(std::size_t t, std::size_t p, std::size_t patch_count) {
    if (p >= patch_count) {
        throw InvalidInput("token_index: patch " + std::to_string(p) + " out of range for P=" +
                           std::to_string(patch_count));
    }
    return t * patch_count + p;
}

std::vector<PixelPoint> patch_centers(const PatchGrid& grid) {
    const int side = grid.grid_side();
    const double cell_w = static_cast<double>(grid.width_px()) / side;
    const double cell_h = static_cast<double>(grid.height_px()) / side;
    std::vector<PixelPoint> centers;
    centers.reserve(grid.patch_count());
    for (int i = 0; i < side; ++i) {
        for (int j = 0; j < side; ++j) {
            centers.push_back({(j + 0.5) * cell_w, (i + 0.5) * cell_h});
        }
    }
    return centers;
}

TokenTensor::TokenTensor(std::size_t frames, std::size_t patches, std::size_t dim)
    : frames_(frames), patches_(patches), dim_(dim), data_(frames * patches * dim, 0.0) {
    if (frames == 0 || patches == 0 || dim == 0) {
        throw InvalidInput("TokenTensor extents must be positive");
    }
}

TokenTensor::TokenTensor(std::size_t frames, std::size_t patches, std::size_t dim,
                         std::vector<double> data)
    : frames_(frames), patches_(patches), dim_(dim), data_(std::move(data)) {
    if (frames == 0 || patches == 0 || dim == 0) {
        throw InvalidInput("TokenTensor extents must be positive");
    }
    if (data_.size() != frames * patches * dim) {
        throw ValidationError("TokenTensor data has " + std::to_string(data_.size()) +
                              " entries, expected " + std::to_string(frames * patches * dim));
    }
    if (!all_finite()) {
        throw ValidationError("TokenTensor contains a non-finite entry");
    }
}

bool TokenTensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void TokenTensor::check_grid(const PatchGrid& grid) const {
    if (patches_ != grid.patch_count()) {
        throw ValidationError("token tensor has " + std::to_string(patches_) +
                              " patches but grid has " + std::to_string(grid.patch_count()));
    }
}

}  // namespace travl
