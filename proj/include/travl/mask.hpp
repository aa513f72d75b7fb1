#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "travl/grid.hpp"
#include "travl/tracks.hpp"

namespace travl {

inline constexpr std::size_t kDefaultReinitInterval = 10;
inline constexpr double kDefaultVisibilityThreshold = 0.5;

/// Sparse boolean adjacency over the T*P flattened (frame, patch) tokens.
///
/// Each row holds a sorted, duplicate-free list of column token indices and
/// always contains its own diagonal entry. The mask is not symmetric: only
/// trajectory anchor rows carry off-diagonal links.
class TrajectoryMask {
public:
    using Row = std::vector<std::uint32_t>;

    /// Identity mask.
    TrajectoryMask(std::size_t frames, std::size_t patches, std::size_t reinit_interval = kDefaultReinitInterval,
                   double threshold = kDefaultVisibilityThreshold);

    /// Builds from explicit rows; sorts, dedups and adds the diagonal.
    /// Throws ValidationError on a row count mismatch or an out-of-range column.
    static TrajectoryMask from_rows(std::size_t frames, std::size_t patches, std::vector<Row> rows,
                                    std::size_t reinit_interval = kDefaultReinitInterval,
                                    double threshold = kDefaultVisibilityThreshold);
    /// Every token attends to every token.
    static TrajectoryMask full(std::size_t frames, std::size_t patches);
    /// Every token attends to the tokens of its own frame.
    static TrajectoryMask frame_blocks(std::size_t frames, std::size_t patches);

    std::size_t frames() const noexcept { return frames_; }
    std::size_t patches() const noexcept { return patches_; }
    std::size_t tokens() const noexcept { return rows_.size(); }
    std::size_t reinit_interval() const noexcept { return k_; }
    double threshold() const noexcept { return threshold_; }

    std::span<const std::uint32_t> row(std::size_t i) const { return rows_[i]; }
    const std::vector<Row>& rows() const noexcept { return rows_; }
    bool contains(std::size_t i, std::size_t j) const;
    std::size_t entry_count() const noexcept;

    /// Rows restricted to frames [first, first + count), with columns outside
    /// that range dropped and indices shifted to start at zero.
    TrajectoryMask frame_window(std::size_t first, std::size_t count) const;

    /// Checks diagonal presence, ordering and column range.
    void validate() const;

    bool operator==(const TrajectoryMask&) const = default;

private:
    TrajectoryMask(std::size_t frames, std::size_t patches, std::size_t k, double threshold, std::vector<Row> rows);
    void link(std::size_t i, std::size_t j) { rows_[i].push_back(static_cast<std::uint32_t>(j)); }
    void normalize();

    std::size_t frames_;
    std::size_t patches_;
    std::size_t k_;
    double threshold_;
    std::vector<Row> rows_;

    friend TrajectoryMask build_mask(const TrackSet&, const PatchGrid&, double, std::size_t);
};

/// One tracking query per patch center at frames 0, k, 2k, ... < T,
/// epoch-major then row-major.
std::vector<TrackQuery> generate_queries(std::size_t num_frames, std::size_t reinit_interval,
                                         const PatchGrid& grid);

/// Links each query's anchor token (query frame, initial patch) to the token
/// it occupies at every frame whose visibility exceeds `threshold`, then adds the
/// full diagonal. `reinit_interval` is recorded as metadata only.
TrajectoryMask build_mask(const TrackSet& tracks, const PatchGrid& grid,
                          double threshold = kDefaultVisibilityThreshold,
                          std::size_t reinit_interval = kDefaultReinitInterval);

struct MaskStats {
    std::size_t tokens = 0;
    std::size_t entries = 0;
    double density = 0.0;
    std::size_t max_degree = 0;
    double mean_degree = 0.0;
    /// Rows with at least one off-diagonal link.
    std::size_t anchor_rows = 0;
};

MaskStats mask_stats(const TrajectoryMask& mask);

/// Text export: a JSON header {T, P, k, threshold} then one "row: col col ..." line per row.
std::size_t write_mask(const TrajectoryMask& mask, std::ostream& out);
std::size_t write_mask(const TrajectoryMask& mask, const std::filesystem::path& path);
TrajectoryMask read_mask(std::istream& in);
TrajectoryMask read_mask(const std::filesystem::path& path);

}  // namespace travl
