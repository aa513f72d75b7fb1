#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "travl/errors.hpp"
#include "travl/mask.hpp"

using namespace travl;

namespace {

TrackSet one_query(double vis_t1) {
    TrackSet ts(2);
    ts.add({0, 10, 10}, {{10, 10}, {300, 300}}, {1.0, vis_t1});
    return ts;
}

}  // namespace

TEST(GenerateQueries, CentersAtFirstEpoch) {
    const auto q = generate_queries(1, 10, PatchGrid(384, 384, 2));
    ASSERT_EQ(q.size(), 4u);
    EXPECT_EQ(q[0], (TrackQuery{0, 96, 96}));
    EXPECT_EQ(q[1], (TrackQuery{0, 288, 96}));
    EXPECT_EQ(q[2], (TrackQuery{0, 96, 288}));
    EXPECT_EQ(q[3], (TrackQuery{0, 288, 288}));
}

TEST(GenerateQueries, EpochCounts) {
    const auto q = generate_queries(20, 10, PatchGrid(384, 384, 27));
    ASSERT_EQ(q.size(), 1458u);
    EXPECT_EQ(q[728].time, 0u);
    EXPECT_EQ(q[729].time, 10u);
    const auto single = generate_queries(10, 10, PatchGrid(384, 384, 3));
    EXPECT_EQ(single.size(), 9u);
    for (const auto& x : single) EXPECT_EQ(x.time, 0u);
    EXPECT_THROW(generate_queries(10, 0, PatchGrid(384, 384, 3)), InvalidInput);
}

TEST(BuildMask, EmptyTracksGiveIdentity) {
    const auto m = build_mask(TrackSet(3), PatchGrid(384, 384, 2));
    ASSERT_EQ(m.tokens(), 12u);
    for (std::size_t i = 0; i < 12; ++i) {
        ASSERT_EQ(m.row(i).size(), 1u);
        EXPECT_EQ(m.row(i)[0], i);
    }
    EXPECT_EQ(m.reinit_interval(), 10u);
}

TEST(BuildMask, SingleTrackLinksAnchor) {
    const PatchGrid g(384, 384, 2);
    const auto m = build_mask(one_query(1.0), g);
    EXPECT_TRUE(m.contains(0, 7));
    EXPECT_FALSE(m.contains(7, 0));
    EXPECT_EQ(m.entry_count(), 9u);
    EXPECT_EQ(oracle::to_dense(m), oracle::dense_mask(one_query(1.0), 384, 384, 2, 0.5));
    const auto gated = build_mask(one_query(0.4), g);
    EXPECT_FALSE(gated.contains(0, 7));
    EXPECT_EQ(gated.entry_count(), 8u);
}

TEST(BuildMask, GateIsStrict) {
    const auto m = build_mask(one_query(0.5), PatchGrid(384, 384, 2));
    EXPECT_FALSE(m.contains(0, 7));
}

TEST(BuildMask, RejectsInconsistentInputs) {
    EXPECT_THROW(build_mask(one_query(1.0), PatchGrid(384, 384, 2), 1.0), ValidationError);
    EXPECT_THROW(build_mask(one_query(1.0), PatchGrid(384, 384, 2), -0.1), ValidationError);
}

TEST(BuildMask, MatchesDenseOracle) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 300; ++trial) {
        const auto inst = oracle::random_mask_instance(rng);
        const double thr = trial % 3 == 0 ? 0.25 : 0.5;
        const auto m = build_mask(inst.tracks, inst.grid, thr);
        ASSERT_NO_THROW(m.validate());
        ASSERT_EQ(oracle::to_dense(m),
                  oracle::dense_mask(inst.tracks, inst.grid.height_px(), inst.grid.width_px(), inst.grid.grid_side(), thr))
            << "trial " << trial;
        EXPECT_LE(m.entry_count(), m.tokens() + inst.tracks.size() * inst.tracks.num_frames());
    }
}

TEST(MaskStats, Identity) {
    const auto s = mask_stats(TrajectoryMask(3, 4));
    EXPECT_EQ(s.tokens, 12u);
    EXPECT_EQ(s.entries, 12u);
    EXPECT_DOUBLE_EQ(s.density, 1.0 / 12.0);
    EXPECT_EQ(s.max_degree, 1u);
    EXPECT_EQ(s.anchor_rows, 0u);
}

TEST(MaskStats, SingleTrack) {
    const auto s = mask_stats(build_mask(one_query(1.0), PatchGrid(384, 384, 2)));
    EXPECT_EQ(s.entries, 9u);
    EXPECT_DOUBLE_EQ(s.density, 9.0 / 64.0);
    EXPECT_EQ(s.max_degree, 2u);
    EXPECT_EQ(s.anchor_rows, 1u);
}

TEST(TrajectoryMask, FromRowsNormalizes) {
    const auto m = TrajectoryMask::from_rows(1, 3, {{2, 2, 1}, {}, {0}});
    EXPECT_EQ(std::vector<std::uint32_t>(m.row(0).begin(), m.row(0).end()), (std::vector<std::uint32_t>{0, 1, 2}));
    EXPECT_EQ(m.row(1).size(), 1u);
    EXPECT_EQ(m.entry_count(), 6u);
    EXPECT_THROW(TrajectoryMask::from_rows(1, 3, {{0}, {1}}), ValidationError);
    EXPECT_THROW(TrajectoryMask::from_rows(1, 2, {{0, 5}, {1}}), ValidationError);
}

TEST(TrajectoryMask, FullAndFrameBlocks) {
    EXPECT_EQ(TrajectoryMask::full(2, 3).entry_count(), 36u);
    const auto b = TrajectoryMask::frame_blocks(2, 3);
    EXPECT_EQ(b.entry_count(), 18u);
    EXPECT_TRUE(b.contains(4, 3));
    EXPECT_FALSE(b.contains(4, 2));
}

TEST(TrajectoryMask, FrameWindowShiftsColumns) {
    const auto m = TrajectoryMask::from_rows(3, 2, {{0, 5}, {1, 3}, {2, 4}, {3}, {4}, {5}});
    const auto w = m.frame_window(1, 2);
    EXPECT_EQ(w.tokens(), 4u);
    EXPECT_TRUE(w.contains(0, 2));
    EXPECT_EQ(w.row(1).size(), 1u);
    EXPECT_THROW(m.frame_window(2, 2), InvalidInput);
}

TEST(MaskIo, RoundTrip) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const auto inst = oracle::random_mask_instance(rng);
        const auto m = build_mask(inst.tracks, inst.grid, 0.5, 1 + trial % 12);
        std::stringstream buf;
        write_mask(m, buf);
        EXPECT_EQ(read_mask(buf), m);
    }
}

TEST(MaskIo, MalformedInput) {
    std::istringstream bad_header("not json\n");
    EXPECT_THROW(read_mask(bad_header), ParseError);
    std::stringstream buf;
    write_mask(TrajectoryMask(1, 2), buf);
    std::string text = buf.str();
    text += "2: 0\n";
    std::istringstream extra(text);
    EXPECT_THROW(read_mask(extra), Error);
}
