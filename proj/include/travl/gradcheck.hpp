#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "travl/pipeline.hpp"

namespace travl {

inline constexpr double kGradCheckTolerance = 1e-4;
/// Key biases shift every score of a query equally, so their gradient is
/// identically zero; both estimates must stay below this absolute bound.
inline constexpr double kStructuralZeroBound = 1e-9;

/// |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double analytic, double numeric);

struct GradCheckEntry {
    std::string name;
    std::size_t size = 0;
    double max_relative_error = 0.0;
    double max_abs_gradient = 0.0;
    /// Scored as max(|analytic|, |numeric|) / kStructuralZeroBound * tolerance,
    /// so it passes exactly when both stay under the bound.
    bool structural_zero = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> arrays;  // every model array, then "input"
    double max_relative_error = 0.0;
    double tolerance = kGradCheckTolerance;

    bool passed() const noexcept { return max_relative_error < tolerance; }
    nlohmann::json to_json() const;
};

struct GradCheckInstance {
    std::size_t frames = 3;
    std::size_t grid_side = 2;
    std::size_t dim = 4;
    std::size_t heads = 2;
    Layout layout = Layout::videochatgpt;
    std::size_t pool_factor = 1;
    bool residual = true;
    double epsilon = 1e-5;
    std::uint64_t seed = 0;
};

/// Central differences of the end-to-end cross-entropy loss with respect to
/// every parameter entry and every input feature, on a random model, random
/// features and a random trajectory mask.
GradCheckReport check_pipeline_gradients(const GradCheckInstance& instance);

}  // namespace travl
