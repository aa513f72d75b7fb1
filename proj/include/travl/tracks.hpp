#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "travl/grid.hpp"

namespace travl {

struct TrackQuery {
    std::size_t time = 0;
    double x = 0.0;
    double y = 0.0;

    bool operator==(const TrackQuery&) const = default;
};

/// Point tracks for N queries over T frames: the tracker output contract.
///
/// positions is N x T x 2 (x, y interleaved), visibility is N x T. Every query
/// is visible (>= 0.5) at its own query time.
class TrackSet {
public:
    explicit TrackSet(std::size_t num_frames = 1);

    std::size_t num_frames() const noexcept { return frames_; }
    std::size_t size() const noexcept { return queries_.size(); }
    bool empty() const noexcept { return queries_.empty(); }

    /// Appends one track. `points` and `visibility` must both have num_frames entries.
    void add(const TrackQuery& query, std::vector<PixelPoint> points, std::vector<double> visibility);

    const TrackQuery& query(std::size_t n) const { return queries_[n]; }
    const PixelPoint& position(std::size_t n, std::size_t t) const { return positions_[n * frames_ + t]; }
    double visibility(std::size_t n, std::size_t t) const { return visibility_[n * frames_ + t]; }

    /// Throws ValidationError naming the first broken invariant.
    void validate() const;

    bool operator==(const TrackSet&) const = default;

private:
    std::size_t frames_;
    std::vector<TrackQuery> queries_;
    std::vector<PixelPoint> positions_;
    std::vector<double> visibility_;
};

/// A track file: header (frame count, grid, generating seed) plus the tracks.
struct TrackFile {
    TrackSet tracks;
    PatchGrid grid{384, 384, 27};
    std::uint64_t seed = 0;
};

/// Writes the header line and one JSON record per query. Returns bytes written.
std::size_t write_tracks(const TrackFile& file, std::ostream& out);
std::size_t write_tracks(const TrackFile& file, const std::filesystem::path& path);

/// Throws ParseError (with line number) on malformed input and
/// ValidationError when the decoded tracks break an invariant.
TrackFile read_tracks(std::istream& in);
TrackFile read_tracks(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic scenes

struct SceneObject {
    PixelPoint start;
    PixelPoint velocity;  // px/frame
    PixelPoint gravity;   // px/frame^2
    /// 0: one track point at the center; otherwise four points on a circle of this radius (px).
    double radius = 0.0;
};

struct NoViolation {};
struct Teleport {
    std::size_t frame = 1;
    PixelPoint displacement;
    std::size_t object = 0;
};
struct Vanish {
    std::size_t frame_start = 1;
    std::size_t frame_end = 1;  // inclusive
    std::size_t object = 0;
};
struct Duplicate {
    std::size_t frame = 1;
    PixelPoint offset;
    std::size_t object = 0;
};

using Violation = std::variant<NoViolation, Teleport, Vanish, Duplicate>;

enum class Plausibility { plausible = 0, implausible = 1 };

struct SceneSpec {
    PatchGrid grid{384, 384, 27};
    std::size_t num_frames = 16;
    std::size_t reinit_interval = 10;
    std::vector<SceneObject> objects;
    Violation violation = NoViolation{};
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    /// Throws ValidationError on out-of-range frames, unknown object index,
    /// or a teleport too short to cross two patches.
    void validate() const;
};

struct Scene {
    TrackSet tracks;
    Plausibility label = Plausibility::plausible;
    std::string violation_tag;  // "none", "teleport", "vanish", "duplicate"
};

std::string violation_tag(const Violation& v);

/// Deterministic in `spec` (seed included).
Scene simulate_scene(const SceneSpec& spec);

inline constexpr double kDefaultObjectRadius = 0.75;

/// Randomized scene for a balanced corpus: even indices are plausible,
/// odd indices cycle teleport, vanish, duplicate. One or two objects, each
/// `object_radius` patch strides wide (see SceneObject::radius).
SceneSpec random_scene_spec(const PatchGrid& grid, std::size_t num_frames, std::size_t reinit_interval,
                            double noise_sigma, std::size_t index, std::uint64_t seed,
                            double object_radius = kDefaultObjectRadius);

}  // namespace travl
