#include "travl/tracks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "travl/errors.hpp"

namespace travl {

using nlohmann::json;

TrackSet::TrackSet(std::size_t num_frames) : frames_(num_frames) {
    if (num_frames == 0) {
        throw InvalidInput("TrackSet needs at least one frame");
    }
}

void TrackSet::add(const TrackQuery& query, std::vector<PixelPoint> points, std::vector<double> visibility) {
    if (points.size() != frames_ || visibility.size() != frames_) {
        throw ValidationError("track has " + std::to_string(points.size()) + " points and " +
                              std::to_string(visibility.size()) + " visibility values, expected " +
                              std::to_string(frames_));
    }
    queries_.push_back(query);
    positions_.insert(positions_.end(), points.begin(), points.end());
    visibility_.insert(visibility_.end(), visibility.begin(), visibility.end());
}

void TrackSet::validate() const {
    for (std::size_t n = 0; n < queries_.size(); ++n) {
        const auto& q = queries_[n];
        if (q.time >= frames_) {
            throw ValidationError("query " + std::to_string(n) + " time " + std::to_string(q.time) +
                                  " outside [0, " + std::to_string(frames_) + ")");
        }
        for (std::size_t t = 0; t < frames_; ++t) {
            const double v = visibility(n, t);
            if (!(v >= 0.0 && v <= 1.0)) {
                throw ValidationError("query " + std::to_string(n) + " frame " + std::to_string(t) +
                                      ": visibility " + std::to_string(v) + " outside [0, 1]");
            }
            const auto& p = position(n, t);
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
                throw ValidationError("query " + std::to_string(n) + " frame " + std::to_string(t) +
                                      ": non-finite position");
            }
        }
        if (visibility(n, q.time) < 0.5) {
            throw ValidationError("query " + std::to_string(n) + " is not visible at its query time");
        }
    }
}

// ---------------------------------------------------------------------------
// Track file format

namespace {

json header_json(const TrackFile& file) {
    return json{{"num_frames", file.tracks.num_frames()},
                {"grid", {{"h", file.grid.height_px()}, {"w", file.grid.width_px()}, {"g", file.grid.grid_side()}}},
                {"seed", file.seed},
                {"num_queries", file.tracks.size()}};
}

json record_json(const TrackSet& ts, std::size_t n) {
    json points = json::array();
    json vis = json::array();
    for (std::size_t t = 0; t < ts.num_frames(); ++t) {
        const auto& p = ts.position(n, t);
        points.push_back({p.x, p.y});
        vis.push_back(ts.visibility(n, t));
    }
    const auto& q = ts.query(n);
    return json{{"query_time", q.time}, {"x0", q.x}, {"y0", q.y}, {"points", std::move(points)},
                {"visibility", std::move(vis)}};
}

template <typename T>
T field(const json& obj, const char* key, std::size_t line) {
    if (!obj.is_object() || !obj.contains(key)) {
        throw ParseError(line, std::string("missing field '") + key + "'");
    }
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(line, std::string("field '") + key + "': " + e.what());
    }
}

json parse_line(const std::string& text, std::size_t line) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(line, e.what());
    }
}

}  // namespace

std::size_t write_tracks(const TrackFile& file, std::ostream& out) {
    std::ostringstream buf;
    buf << header_json(file).dump() << '\n';
    for (std::size_t n = 0; n < file.tracks.size(); ++n) {
        buf << record_json(file.tracks, n).dump() << '\n';
    }
    const std::string text = buf.str();
    out << text;
    if (!out) {
        throw IoError("failed writing track stream");
    }
    return text.size();
}

std::size_t write_tracks(const TrackFile& file, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    return write_tracks(file, out);
}

TrackFile read_tracks(std::istream& in) {
    std::string text;
    std::size_t line = 0;
    if (!std::getline(in, text)) {
        throw ParseError(1, "missing header line");
    }
    ++line;
    const json header = parse_line(text, line);
    const auto frames = field<std::size_t>(header, "num_frames", line);
    if (!header.contains("grid")) {
        throw ParseError(line, "missing field 'grid'");
    }
    const json& g = header.at("grid");
    TrackFile file{TrackSet(std::max<std::size_t>(frames, 1)),
                   PatchGrid(field<int>(g, "h", line), field<int>(g, "w", line), field<int>(g, "g", line)),
                   header.contains("seed") ? field<std::uint64_t>(header, "seed", line) : 0};
    if (frames == 0) {
        throw ValidationError("num_frames must be >= 1");
    }

    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) {
            continue;
        }
        const json rec = parse_line(text, line);
        TrackQuery q{field<std::size_t>(rec, "query_time", line), field<double>(rec, "x0", line),
                     field<double>(rec, "y0", line)};
        const auto raw_points = field<std::vector<std::vector<double>>>(rec, "points", line);
        auto vis = field<std::vector<double>>(rec, "visibility", line);
        if (raw_points.size() != frames || vis.size() != frames) {
            throw ParseError(line, "record has " + std::to_string(raw_points.size()) + " points and " +
                                       std::to_string(vis.size()) + " visibility values, expected " +
                                       std::to_string(frames));
        }
        std::vector<PixelPoint> points;
        points.reserve(frames);
        for (const auto& xy : raw_points) {
            if (xy.size() != 2) {
                throw ParseError(line, "point must be [x, y]");
            }
            points.push_back({xy[0], xy[1]});
        }
        file.tracks.add(q, std::move(points), std::move(vis));
    }
    if (header.contains("num_queries") && field<std::size_t>(header, "num_queries", 1) != file.tracks.size()) {
        throw ParseError(line, "header announces " + std::to_string(field<std::size_t>(header, "num_queries", 1)) +
                                   " records, found " + std::to_string(file.tracks.size()));
    }
    file.tracks.validate();
    return file;
}

TrackFile read_tracks(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return read_tracks(in);
}

// ---------------------------------------------------------------------------
// Scene simulation

std::string violation_tag(const Violation& v) {
    struct Tagger {
        std::string operator()(const NoViolation&) const { return "none"; }
        std::string operator()(const Teleport&) const { return "teleport"; }
        std::string operator()(const Vanish&) const { return "vanish"; }
        std::string operator()(const Duplicate&) const { return "duplicate"; }
    };
    return std::visit(Tagger{}, v);
}

void SceneSpec::validate() const {
    if (num_frames < 2 && !std::holds_alternative<NoViolation>(violation)) {
        throw ValidationError("violations need at least two frames");
    }
    if (reinit_interval == 0) {
        throw ValidationError("reinit_interval must be >= 1");
    }
    if (noise_sigma < 0.0) {
        throw ValidationError("noise_sigma must be >= 0");
    }
    const auto in_range = [&](std::size_t f) { return f >= 1 && f + 1 <= num_frames; };
    const auto check_object = [&](std::size_t idx) {
        if (idx >= objects.size()) {
            throw ValidationError("violation refers to object " + std::to_string(idx) + " but scene has " +
                                  std::to_string(objects.size()));
        }
    };
    if (const auto* tp = std::get_if<Teleport>(&violation)) {
        check_object(tp->object);
        if (!in_range(tp->frame)) {
            throw ValidationError("teleport frame " + std::to_string(tp->frame) + " outside [1, T-1]");
        }
        const double min_jump = 2.0 * std::max(grid.stride_x(), grid.stride_y());
        if (std::hypot(tp->displacement.x, tp->displacement.y) <= min_jump) {
            throw ValidationError("teleport displacement must exceed " + std::to_string(min_jump) + " px");
        }
    } else if (const auto* vn = std::get_if<Vanish>(&violation)) {
        check_object(vn->object);
        if (!in_range(vn->frame_start) || !in_range(vn->frame_end) || vn->frame_start > vn->frame_end) {
            throw ValidationError("vanish window [" + std::to_string(vn->frame_start) + ", " +
                                  std::to_string(vn->frame_end) + "] outside [1, T-1]");
        }
    } else if (const auto* dp = std::get_if<Duplicate>(&violation)) {
        check_object(dp->object);
        if (!in_range(dp->frame)) {
            throw ValidationError("duplicate frame " + std::to_string(dp->frame) + " outside [1, T-1]");
        }
    }
}

namespace {

struct ObjectPath {
    std::vector<PixelPoint> points;
    std::vector<double> visibility;
    std::vector<int> segment;  // the tracker cannot follow a point across segments
};

std::vector<PixelPoint> integrate(const SceneObject& obj, std::size_t frames) {
    std::vector<PixelPoint> pts(frames);
    PixelPoint pos = obj.start;
    PixelPoint vel = obj.velocity;
    for (std::size_t t = 0; t < frames; ++t) {
        pts[t] = pos;
        pos.x += vel.x;
        pos.y += vel.y;
        vel.x += obj.gravity.x;
        vel.y += obj.gravity.y;
    }
    return pts;
}

std::vector<double> segment_visibility(const ObjectPath& path, std::size_t query_time) {
    std::vector<double> vis = path.visibility;
    for (std::size_t t = 0; t < vis.size(); ++t) {
        if (path.segment[t] != path.segment[query_time]) {
            vis[t] = 0.0;
        }
    }
    return vis;
}

// Track points on an object of the given radius: its center, or four points on the rim.
std::vector<PixelPoint> sample_offsets(double radius) {
    if (radius <= 0.0) {
        return {{0.0, 0.0}};
    }
    const double r = radius / std::sqrt(2.0);
    return {{-r, -r}, {r, -r}, {-r, r}, {r, r}};
}

void add_queries(TrackSet& ts, const ObjectPath& path, std::size_t k) {
    const std::size_t frames = ts.num_frames();
    for (std::size_t t = 0; t < frames; ++t) {
        if (path.visibility[t] < 0.5) {
            continue;
        }
        // Reinit epochs, plus the first visible frame of every segment appearing between them.
        bool appears = true;
        for (std::size_t s = 0; s < t; ++s) {
            if (path.segment[s] == path.segment[t] && path.visibility[s] >= 0.5) {
                appears = false;
                break;
            }
        }
        if (t % k == 0 || appears) {
            ts.add({t, path.points[t].x, path.points[t].y}, path.points, segment_visibility(path, t));
        }
    }
}

}  // namespace

Scene simulate_scene(const SceneSpec& spec) {
    spec.validate();
    const std::size_t frames = spec.num_frames;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    std::vector<ObjectPath> paths;
    paths.reserve(spec.objects.size() + 1);
    for (const auto& obj : spec.objects) {
        paths.push_back({integrate(obj, frames), std::vector<double>(frames, 1.0), std::vector<int>(frames, 0)});
    }
    std::vector<double> radii;
    for (const auto& obj : spec.objects) {
        radii.push_back(obj.radius);
    }

    if (const auto* tp = std::get_if<Teleport>(&spec.violation)) {
        auto& path = paths[tp->object];
        for (std::size_t t = tp->frame; t < frames; ++t) {
            path.points[t].x += tp->displacement.x;
            path.points[t].y += tp->displacement.y;
            path.segment[t] = 1;
        }
    } else if (const auto* vn = std::get_if<Vanish>(&spec.violation)) {
        auto& vis = paths[vn->object].visibility;
        std::fill(vis.begin() + static_cast<std::ptrdiff_t>(vn->frame_start),
                  vis.begin() + static_cast<std::ptrdiff_t>(vn->frame_end + 1), 0.0);
    } else if (const auto* dp = std::get_if<Duplicate>(&spec.violation)) {
        ObjectPath clone = paths[dp->object];
        for (std::size_t t = 0; t < frames; ++t) {
            clone.points[t].x += dp->offset.x;
            clone.points[t].y += dp->offset.y;
            if (t < dp->frame) {
                clone.visibility[t] = 0.0;
            }
        }
        paths.push_back(std::move(clone));
        radii.push_back(radii[dp->object]);
    }

    // The tracker never bridges a gap: reappearing after invisibility starts a new segment.
    for (auto& path : paths) {
        for (std::size_t t = 1; t < frames; ++t) {
            if (path.visibility[t - 1] < 0.5 && path.visibility[t] >= 0.5) {
                for (std::size_t s = t; s < frames; ++s) {
                    path.segment[s] += 2;
                }
            }
        }
    }

    Scene scene{TrackSet(frames), Plausibility::plausible, violation_tag(spec.violation)};
    for (std::size_t i = 0; i < paths.size(); ++i) {
        for (const auto& offset : sample_offsets(radii[i])) {
            ObjectPath point = paths[i];
            for (auto& p : point.points) {
                p.x += offset.x;
                p.y += offset.y;
                if (spec.noise_sigma > 0.0) {
                    p.x += spec.noise_sigma * noise(rng);
                    p.y += spec.noise_sigma * noise(rng);
                }
            }
            add_queries(scene.tracks, point, spec.reinit_interval);
        }
    }
    if (!std::holds_alternative<NoViolation>(spec.violation)) {
        scene.label = Plausibility::implausible;
    }
    scene.tracks.validate();
    return scene;
}

namespace {

// Inclusive extents of a path relative to its start point.
std::pair<PixelPoint, PixelPoint> path_extent(const SceneObject& obj, std::size_t frames) {
    SceneObject origin = obj;
    origin.start = {0.0, 0.0};
    const auto pts = integrate(origin, frames);
    PixelPoint lo{0.0, 0.0};
    PixelPoint hi{0.0, 0.0};
    for (const auto& p : pts) {
        lo.x = std::min(lo.x, p.x);
        lo.y = std::min(lo.y, p.y);
        hi.x = std::max(hi.x, p.x);
        hi.y = std::max(hi.y, p.y);
    }
    return {lo, hi};
}

}  // namespace

SceneSpec random_scene_spec(const PatchGrid& grid, std::size_t num_frames, std::size_t reinit_interval,
                            double noise_sigma, std::size_t index, std::uint64_t seed, double object_radius) {
    if (num_frames < 4) {
        throw InvalidInput("random scenes need at least 4 frames");
    }
    if (!(object_radius >= 0.0)) {
        throw InvalidInput("object radius must be >= 0");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double w = grid.width_px();
    const double h = grid.height_px();
    const double stride = std::max(grid.stride_x(), grid.stride_y());
    const double radius = object_radius * stride;
    const double margin = 0.5 * stride + radius;
    const double frames = static_cast<double>(num_frames);

    SceneSpec spec;
    spec.grid = grid;
    spec.num_frames = num_frames;
    spec.reinit_interval = reinit_interval;
    spec.noise_sigma = noise_sigma;
    spec.seed = seed;

    const std::size_t object_count = 1 + static_cast<std::size_t>(unit(rng) < 0.5);
    for (std::size_t i = 0; i < object_count; ++i) {
        SceneObject obj;
        obj.radius = radius;
        for (int attempt = 0;; ++attempt) {
            // Smooth motion covers at most ~2 patches over the clip.
            const double speed = unit(rng) * 2.0 * stride / frames;
            const double angle = unit(rng) * 2.0 * M_PI;
            obj.velocity = {speed * std::cos(angle), speed * std::sin(angle)};
            obj.gravity = unit(rng) < 0.3 ? PixelPoint{0.0, 0.5 * stride / (frames * frames)} : PixelPoint{};
            const auto [lo, hi] = path_extent(obj, num_frames);
            const double x_min = margin - lo.x;
            const double x_max = w - margin - hi.x;
            const double y_min = margin - lo.y;
            const double y_max = h - margin - hi.y;
            if ((x_min < x_max && y_min < y_max) || attempt > 64) {
                obj.start = {x_min + unit(rng) * std::max(0.0, x_max - x_min),
                             y_min + unit(rng) * std::max(0.0, y_max - y_min)};
                break;
            }
        }
        spec.objects.push_back(obj);
    }

    if (index % 2 == 0) {
        return spec;
    }

    const auto object = static_cast<std::size_t>(unit(rng) * static_cast<double>(object_count)) % object_count;
    const auto path = integrate(spec.objects[object], num_frames);
    const auto pick_frame = [&](std::size_t lo, std::size_t hi) {  // inclusive
        return lo + static_cast<std::size_t>(unit(rng) * static_cast<double>(hi - lo + 1)) % (hi - lo + 1);
    };
    // Displacement of 2.5-4.5 patch strides whose shifted path stays in frame.
    const auto pick_jump = [&](std::size_t from) {
        PixelPoint best{2.5 * stride + 1.0, 0.0};
        for (int attempt = 0; attempt < 256; ++attempt) {
            const double mag = (2.5 + 2.0 * unit(rng)) * stride;
            const double angle = unit(rng) * 2.0 * M_PI;
            const PixelPoint d{mag * std::cos(angle), mag * std::sin(angle)};
            const bool inside = std::all_of(path.begin() + static_cast<std::ptrdiff_t>(from), path.end(),
                                            [&](const PixelPoint& p) {
                                                return p.x + d.x >= 0.0 && p.x + d.x < w && p.y + d.y >= 0.0 &&
                                                       p.y + d.y < h;
                                            });
            best = d;
            if (inside) {
                break;
            }
        }
        return best;
    };

    switch ((index / 2) % 3) {
        case 0: {
            const std::size_t frame = pick_frame(2, num_frames - 2);
            spec.violation = Teleport{frame, pick_jump(frame), object};
            break;
        }
        case 1: {
            const std::size_t span = std::max<std::size_t>(2, num_frames / 4);
            const std::size_t start = pick_frame(1, num_frames - 1 - span);
            spec.violation = Vanish{start, start + span - 1, object};
            break;
        }
        default: {
            const std::size_t frame = pick_frame(2, num_frames - 2);
            spec.violation = Duplicate{frame, pick_jump(0), object};
            break;
        }
    }
    return spec;
}

}  // namespace travl
