#include "travl/mask.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "travl/errors.hpp"

namespace travl {

TrajectoryMask::TrajectoryMask(std::size_t frames, std::size_t patches, std::size_t k, double threshold,
                               std::vector<Row> rows)
    : frames_(frames), patches_(patches), k_(k), threshold_(threshold), rows_(std::move(rows)) {}

TrajectoryMask::TrajectoryMask(std::size_t frames, std::size_t patches, std::size_t reinit_interval,
                               double threshold)
    : frames_(frames), patches_(patches), k_(reinit_interval), threshold_(threshold), rows_(frames * patches) {
    if (frames == 0 || patches == 0) {
        throw InvalidInput("mask extents must be positive");
    }
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        rows_[i].push_back(static_cast<std::uint32_t>(i));
    }
}

void TrajectoryMask::normalize() {
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        auto& r = rows_[i];
        r.push_back(static_cast<std::uint32_t>(i));
        std::sort(r.begin(), r.end());
        r.erase(std::unique(r.begin(), r.end()), r.end());
    }
}

TrajectoryMask TrajectoryMask::from_rows(std::size_t frames, std::size_t patches, std::vector<Row> rows,
                                         std::size_t reinit_interval, double threshold) {
    if (frames == 0 || patches == 0) {
        throw InvalidInput("mask extents must be positive");
    }
    if (rows.size() != frames * patches) {
        throw ValidationError("mask has " + std::to_string(rows.size()) + " rows, expected " +
                              std::to_string(frames * patches));
    }
    for (const auto& r : rows) {
        for (auto j : r) {
            if (j >= rows.size()) {
                throw ValidationError("mask column " + std::to_string(j) + " out of range");
            }
        }
    }
    TrajectoryMask m(frames, patches, reinit_interval, threshold, std::move(rows));
    m.normalize();
    return m;
}

TrajectoryMask TrajectoryMask::full(std::size_t frames, std::size_t patches) {
    const std::size_t n = frames * patches;
    std::vector<Row> rows(n);
    for (auto& r : rows) {
        r.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            r[j] = static_cast<std::uint32_t>(j);
        }
    }
    return from_rows(frames, patches, std::move(rows));
}

TrajectoryMask TrajectoryMask::frame_blocks(std::size_t frames, std::size_t patches) {
    std::vector<Row> rows(frames * patches);
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t p = 0; p < patches; ++p) {
            auto& r = rows[t * patches + p];
            for (std::size_t q = 0; q < patches; ++q) {
                r.push_back(static_cast<std::uint32_t>(t * patches + q));
            }
        }
    }
    return from_rows(frames, patches, std::move(rows));
}

bool TrajectoryMask::contains(std::size_t i, std::size_t j) const {
    const auto& r = rows_.at(i);
    return std::binary_search(r.begin(), r.end(), static_cast<std::uint32_t>(j));
}

std::size_t TrajectoryMask::entry_count() const noexcept {
    std::size_t n = 0;
    for (const auto& r : rows_) {
        n += r.size();
    }
    return n;
}

TrajectoryMask TrajectoryMask::frame_window(std::size_t first, std::size_t count) const {
    if (count == 0 || first + count > frames_) {
        throw InvalidInput("frame window [" + std::to_string(first) + ", " + std::to_string(first + count) +
                           ") outside mask of " + std::to_string(frames_) + " frames");
    }
    const std::uint32_t lo = static_cast<std::uint32_t>(first * patches_);
    const std::uint32_t hi = static_cast<std::uint32_t>((first + count) * patches_);
    std::vector<Row> rows(count * patches_);
    for (std::uint32_t i = lo; i < hi; ++i) {
        auto& out = rows[i - lo];
        for (auto j : rows_[i]) {
            if (j >= lo && j < hi) {
                out.push_back(j - lo);
            }
        }
    }
    // Columns stay sorted and the diagonal survives the shift.
    return TrajectoryMask(count, patches_, k_, threshold_, std::move(rows));
}

void TrajectoryMask::validate() const {
    if (rows_.size() != frames_ * patches_) {
        throw ValidationError("mask row count does not match T*P");
    }
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        const auto& r = rows_[i];
        if (!std::is_sorted(r.begin(), r.end()) || std::adjacent_find(r.begin(), r.end()) != r.end()) {
            throw ValidationError("mask row " + std::to_string(i) + " is not sorted and unique");
        }
        if (!r.empty() && r.back() >= rows_.size()) {
            throw ValidationError("mask row " + std::to_string(i) + " has an out-of-range column");
        }
        if (!std::binary_search(r.begin(), r.end(), static_cast<std::uint32_t>(i))) {
            throw ValidationError("mask row " + std::to_string(i) + " lacks its diagonal entry");
        }
    }
}

std::vector<TrackQuery> generate_queries(std::size_t num_frames, std::size_t reinit_interval,
                                         const PatchGrid& grid) {
    if (num_frames == 0 || reinit_interval == 0) {
        throw InvalidInput("generate_queries needs T >= 1 and k >= 1");
    }
    const auto centers = patch_centers(grid);
    std::vector<TrackQuery> queries;
    queries.reserve(((num_frames + reinit_interval - 1) / reinit_interval) * centers.size());
    for (std::size_t t = 0; t < num_frames; t += reinit_interval) {
        for (const auto& c : centers) {
            queries.push_back({t, c.x, c.y});
        }
    }
    return queries;
}

TrajectoryMask build_mask(const TrackSet& tracks, const PatchGrid& grid, double threshold,
                          std::size_t reinit_interval) {
    if (!(threshold >= 0.0 && threshold < 1.0)) {
        throw ValidationError("visibility threshold must lie in [0, 1)");
    }
    tracks.validate();
    const std::size_t frames = tracks.num_frames();
    const std::size_t patches = grid.patch_count();
    TrajectoryMask mask(frames, patches, reinit_interval, threshold, std::vector<TrajectoryMask::Row>(frames * patches));

    for (std::size_t n = 0; n < tracks.size(); ++n) {
        const std::size_t q = tracks.query(n).time;
        const auto& start = tracks.position(n, q);
        const std::size_t anchor = q * patches + patch_index(start.x, start.y, grid);
        for (std::size_t t = 0; t < frames; ++t) {
            if (tracks.visibility(n, t) > threshold) {
                const auto& p = tracks.position(n, t);
                mask.link(anchor, t * patches + patch_index(p.x, p.y, grid));
            }
        }
        mask.link(anchor, anchor);
    }
    mask.normalize();
    return mask;
}

MaskStats mask_stats(const TrajectoryMask& mask) {
    MaskStats s;
    s.tokens = mask.tokens();
    for (std::size_t i = 0; i < mask.tokens(); ++i) {
        const std::size_t deg = mask.row(i).size();
        s.entries += deg;
        s.max_degree = std::max(s.max_degree, deg);
        if (deg > 1) {
            ++s.anchor_rows;
        }
    }
    const double n = static_cast<double>(s.tokens);
    s.density = static_cast<double>(s.entries) / (n * n);
    s.mean_degree = static_cast<double>(s.entries) / n;
    return s;
}

std::size_t write_mask(const TrajectoryMask& mask, std::ostream& out) {
    std::ostringstream buf;
    buf << nlohmann::json{{"T", mask.frames()},
                          {"P", mask.patches()},
                          {"k", mask.reinit_interval()},
                          {"threshold", mask.threshold()}}
               .dump()
        << '\n';
    for (std::size_t i = 0; i < mask.tokens(); ++i) {
        const auto r = mask.row(i);
        if (r.empty()) {
            continue;
        }
        buf << i << ':';
        for (auto j : r) {
            buf << ' ' << j;
        }
        buf << '\n';
    }
    const std::string text = buf.str();
    out << text;
    if (!out) {
        throw IoError("failed writing mask stream");
    }
    return text.size();
}

std::size_t write_mask(const TrajectoryMask& mask, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    return write_mask(mask, out);
}

TrajectoryMask read_mask(std::istream& in) {
    std::string text;
    if (!std::getline(in, text)) {
        throw ParseError(1, "missing mask header");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(1, e.what());
    }
    std::size_t frames = 0;
    std::size_t patches = 0;
    std::size_t k = kDefaultReinitInterval;
    double threshold = kDefaultVisibilityThreshold;
    try {
        frames = header.at("T").get<std::size_t>();
        patches = header.at("P").get<std::size_t>();
        k = header.value("k", k);
        threshold = header.value("threshold", threshold);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(1, e.what());
    }
    if (frames == 0 || patches == 0) {
        throw ParseError(1, "T and P must be positive");
    }
    std::vector<TrajectoryMask::Row> rows(frames * patches);
    std::size_t line = 1;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) {
            continue;
        }
        const auto colon = text.find(':');
        if (colon == std::string::npos) {
            throw ParseError(line, "expected 'row: cols'");
        }
        std::size_t row = 0;
        try {
            std::size_t used = 0;
            row = std::stoul(text.substr(0, colon), &used);
            if (used != colon) {
                throw ParseError(line, "bad row index");
            }
        } catch (const std::logic_error&) {
            throw ParseError(line, "bad row index");
        }
        if (row >= rows.size()) {
            throw ParseError(line, "row " + std::to_string(row) + " out of range");
        }
        std::istringstream cols(text.substr(colon + 1));
        long long j = 0;
        while (cols >> j) {
            if (j < 0 || static_cast<std::size_t>(j) >= rows.size()) {
                throw ParseError(line, "column " + std::to_string(j) + " out of range");
            }
            rows[row].push_back(static_cast<std::uint32_t>(j));
        }
        if (!cols.eof()) {
            throw ParseError(line, "bad column list");
        }
    }
    return TrajectoryMask::from_rows(frames, patches, std::move(rows), k, threshold);
}

TrajectoryMask read_mask(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return read_mask(in);
}

}  // namespace travl
