#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "support.hpp"
#include "travl/mask.hpp"
#include "travl/tracks.hpp"

namespace fs = std::filesystem;
using support::read_file;
using support::run_cli;

namespace {

std::size_t line_count(const std::string& s) {
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST(Cli, SimulateCountsAndDeterminism) {
    const auto dir = support::scratch_dir("cli-sim");
    EXPECT_EQ(run_cli("simulate --count 0 --out " + q(dir / "empty")), 0);
    EXPECT_EQ(read_file(dir / "empty" / "labels.csv"), "index,file,label,violation,seed\n");
    ASSERT_EQ(run_cli("simulate --count 6 --seed 4 --out " + q(dir / "a")), 0);
    ASSERT_EQ(run_cli("simulate --count 6 --seed 4 --out " + q(dir / "b")), 0);
    EXPECT_EQ(line_count(read_file(dir / "a" / "labels.csv")), 7u);
    for (int i = 0; i < 6; ++i) {
        const std::string name = "scene_0000" + std::to_string(i) + ".jsonl";
        EXPECT_EQ(read_file(dir / "a" / name), read_file(dir / "b" / name));
    }
    const auto manifest = nlohmann::json::parse(read_file(dir / "a" / "manifest.json"));
    EXPECT_EQ(manifest["subcommand"], "simulate");
    EXPECT_EQ(manifest["exit_code"], 0);
    EXPECT_EQ(manifest["seed"], 4);
}

TEST(Cli, SimulateSpecFile) {
    const auto dir = support::scratch_dir("cli-spec");
    std::ofstream(dir / "spec.json") << R"({"height": 64, "width": 64, "grid_side": 4, "num_frames": 5})";
    ASSERT_EQ(run_cli("simulate --count 2 --spec " + q(dir / "spec.json") + " --out " + q(dir / "o")), 0);
    const auto file = travl::read_tracks(dir / "o" / "scene_00000.jsonl");
    EXPECT_EQ(file.grid, travl::PatchGrid(64, 64, 4));
    EXPECT_EQ(file.tracks.num_frames(), 5u);
    std::ofstream(dir / "bad.json") << R"({"heigth": 64})";
    EXPECT_EQ(run_cli("simulate --spec " + q(dir / "bad.json") + " --out " + q(dir / "p")), 2);
}

TEST(Cli, BuildMaskEmptyTracks) {
    const auto dir = support::scratch_dir("cli-mask");
    travl::write_tracks(travl::TrackFile{travl::TrackSet(3), travl::PatchGrid(384, 384, 2), 0}, dir / "t.jsonl");
    ASSERT_EQ(run_cli("build-mask --tracks " + q(dir / "t.jsonl") + " --out " + q(dir / "m.txt")), 0);
    const auto mask = travl::read_mask(dir / "m.txt");
    EXPECT_EQ(mask, travl::TrajectoryMask(3, 4));
    EXPECT_EQ(mask.reinit_interval(), 10u);
    const auto stats = nlohmann::json::parse(read_file(dir / "m.txt.stats.json"));
    EXPECT_DOUBLE_EQ(stats["density"].get<double>(), 1.0 / 12.0);
}

TEST(Cli, BuildMaskStatsMatchRecount) {
    const auto dir = support::scratch_dir("cli-recount");
    ASSERT_EQ(run_cli("simulate --count 2 --seed 8 --out " + q(dir)), 0);
    ASSERT_EQ(run_cli("build-mask --k 7 --tracks " + q(dir / "scene_00001.jsonl") + " --out " + q(dir / "m.txt")), 0);
    const auto stats = nlohmann::json::parse(read_file(dir / "m.txt.stats.json"));
    std::size_t entries = 0, rows = 0, anchors = 0;
    std::istringstream in(read_file(dir / "m.txt"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(nlohmann::json::parse(line)["k"], 7);
    while (std::getline(in, line)) {
        std::istringstream ls(line.substr(line.find(':') + 1));
        std::size_t n = 0;
        for (std::size_t col; ls >> col;) ++n;
        entries += n;
        anchors += n > 1;
        ++rows;
    }
    EXPECT_EQ(stats["tokens"].get<std::size_t>(), rows);
    EXPECT_EQ(stats["entries"].get<std::size_t>(), entries);
    EXPECT_EQ(stats["anchor_rows"].get<std::size_t>(), anchors);
}

TEST(Cli, ExitCodes) {
    const auto dir = support::scratch_dir("cli-exit");
    EXPECT_EQ(run_cli("gradcheck --manifest " + q(dir / "g.json")), 0);
    EXPECT_EQ(run_cli("gradcheck --tolerance 1e-30 --manifest " + q(dir / "g.json")), 1);
    EXPECT_EQ(nlohmann::json::parse(read_file(dir / "g.json"))["exit_code"], 1);
    EXPECT_EQ(run_cli("build-mask --tracks " + q(dir / "missing.jsonl") + " --out " + q(dir / "m")), 2);
    std::ofstream(dir / "broken.jsonl") << "{\"T\": 2\n";
    EXPECT_EQ(run_cli("build-mask --tracks " + q(dir / "broken.jsonl") + " --out " + q(dir / "m")), 2);
    EXPECT_EQ(run_cli("simulate --no-such-flag"), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
}

TEST(Cli, PromptsPassThrough) {
    const auto dir = support::scratch_dir("cli-prompts");
    ASSERT_EQ(run_cli("prompts judge --question \"Does the ball obey gravity?\" --option \"A=Yes, it falls.\" "
                      "--option \"B=No, it floats.\" --caption \"a ball rolls\" --out " + q(dir / "j.txt")),
              0);
    EXPECT_EQ(read_file(dir / "j.txt"), read_file(fs::path(TRAVL_GOLDEN_DIR) / "judge_two_options.txt"));
    ASSERT_EQ(run_cli("prompts qa --scenario \"ball drop\" --caption \"a ball rolls\" --variant plausible --out " +
                      q(dir / "p.txt")),
              0);
    EXPECT_EQ(read_file(dir / "p.txt"), read_file(fs::path(TRAVL_GOLDEN_DIR) / "qagen_plausible.txt"));
}

TEST(Cli, BlindTestReport) {
    const auto dir = support::scratch_dir("cli-blind");
    ASSERT_EQ(run_cli("blindtest --synthetic 150 --trials 20 --out " + q(dir / "r.json")), 0);
    const auto r = nlohmann::json::parse(read_file(dir / "r.json"));
    EXPECT_NEAR(r["chance_pct"].get<double>(), 100.0 / 7.0, 1e-9);
    EXPECT_EQ(r["trials"], 20);
}

TEST(Cli, ConfigFileAndReplay) {
    const auto dir = support::scratch_dir("cli-config");
    std::ofstream(dir / "sim.conf") << "# scenes\ncount=3\nseed=11\n";
    ASSERT_EQ(run_cli("simulate --config " + q(dir / "sim.conf") + " --out " + q(dir / "a")), 0);
    EXPECT_EQ(line_count(read_file(dir / "a" / "labels.csv")), 4u);
    ASSERT_EQ(run_cli("simulate --config " + q(dir / "sim.conf") + " --count 1 --out " + q(dir / "b")), 0);
    EXPECT_EQ(line_count(read_file(dir / "b" / "labels.csv")), 2u);
    ASSERT_EQ(run_cli("replay --from " + q(dir / "a" / "manifest.json") + " --out " + q(dir / "c")), 0);
    EXPECT_EQ(read_file(dir / "a" / "labels.csv"), read_file(dir / "c" / "labels.csv"));
    EXPECT_EQ(read_file(dir / "a" / "scene_00002.jsonl"), read_file(dir / "c" / "scene_00002.jsonl"));
    std::ofstream(dir / "bad.conf") << "cuont=3\n";
    EXPECT_EQ(run_cli("simulate --config " + q(dir / "bad.conf") + " --out " + q(dir / "d")), 2);
}
