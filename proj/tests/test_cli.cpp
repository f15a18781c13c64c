#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "cli_runner.hpp"
#include "lpdh/errors.hpp"
#include "lpdh/image_io.hpp"
#include "lpdh/manifest.hpp"
#include "test_util.hpp"

using namespace lpdh;
using lpdh::test::random_tensor;
using lpdh::test::read_lines;
using lpdh::test::run_lpdh;
using lpdh::test::TempDir;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace

TEST(ImageIo, PpmHeaderAndRoundTrip) {
    TempDir dir("ppm");
    Xoshiro256 rng(1);
    const auto img = random_tensor<float>({1, 3, 5, 7}, rng);
    write_ppm(dir.file("a.ppm"), img);
    const std::string bytes = slurp(dir.file("a.ppm"));
    EXPECT_EQ(bytes.substr(0, 11), "P6\n7 5\n255\n");
    EXPECT_EQ(bytes.size(), 11u + 3 * 5 * 7);
    const auto back = read_pnm(dir.file("a.ppm"));
    EXPECT_EQ(back.shape(), img.shape());
    EXPECT_LE(max_abs_diff(back, img), 1.0f / 510.0f + 1e-7f);
    write_ppm(dir.file("b.ppm"), back);
    EXPECT_EQ(slurp(dir.file("b.ppm")), bytes);
}

TEST(ImageIo, GrayAndErrors) {
    TempDir dir("pgm");
    {
        std::ofstream os(dir.file("g.pgm"), std::ios::binary);
        os << "P5\n# comment\n2 2\n255\n";
        os.write("\x00\x40\x80\xff", 4);
    }
    const auto g = read_pnm(dir.file("g.pgm"));
    EXPECT_EQ(g.shape(), (Shape{1, 1, 2, 2}));
    EXPECT_FLOAT_EQ(g[3], 1.0f);
    EXPECT_FLOAT_EQ(g[2], 128.0f / 255.0f);
    EXPECT_THROW(read_pnm(dir.file("missing.ppm")), IoError);
    {
        std::ofstream os(dir.file("short.ppm"), std::ios::binary);
        os << "P6\n4 4\n255\n" << "abc";
    }
    EXPECT_THROW(read_pnm(dir.file("short.ppm")), Error);
}

TEST(ImageIo, F32RoundTripIsExact) {
    TempDir dir("f32");
    Xoshiro256 rng(2);
    const auto t = random_tensor<float>({1, 3, 6, 4}, rng, -1, 1);
    write_f32(dir.file("t.f32"), t);
    const auto back = read_f32(dir.file("t.f32"));
    EXPECT_EQ(back.shape(), t.shape());
    EXPECT_EQ(back.vec(), t.vec());
}

TEST(Manifest, HashAndJsonLine) {
    const unsigned char empty[1] = {0};
    EXPECT_EQ(fnv1a(std::span<const unsigned char>(empty, 0)), 0xcbf29ce484222325ull);
    const unsigned char a[] = {'a'};
    EXPECT_EQ(fnv1a(a), 0xaf63dc4c8601ec8cull);
    RunManifest m;
    m.command = "x";
    m.flags["--k"] = "v";
    m.seed = 3;
    const auto j = nlohmann::json::parse(m.to_json_line());
    EXPECT_EQ(j.at("command"), "x");
    EXPECT_EQ(j.at("flags").at("--k"), "v");
    EXPECT_EQ(j.at("seed"), 3);
}

TEST(Cli, ExitCodes) {
    TempDir dir("codes");
    const std::string man = dir.file("m.jsonl");
    EXPECT_EQ(run_lpdh({"--help"}), 0);
    EXPECT_EQ(run_lpdh({"--manifest", man, "train", "--bogus"}), 2);
    EXPECT_EQ(run_lpdh({"--manifest", man, "dehaze", dir.file("in.ppm"), "--ckpt", dir.file("none.lpdh"), "--out",
                        dir.file("o.ppm")}),
              1);
    EXPECT_EQ(run_lpdh({"--manifest", man, "bench", "--iters", "2"}), 1);
    const auto lines = read_lines(man);
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(nlohmann::json::parse(lines[0]).at("exit_code"), 1);
}

TEST(Cli, DecomposeReconstructRoundTrip) {
    TempDir dir("decomp");
    Xoshiro256 rng(3);
    write_ppm(dir.file("in.ppm"), random_tensor<float>({1, 3, 37, 50}, rng));
    const std::string man = dir.file("m.jsonl");
    ASSERT_EQ(run_lpdh({"--manifest", man, "decompose", dir.file("in.ppm"), "--levels", "3", "--out-dir",
                        dir.file("bands")}),
              0);
    for (const char* f : {"meta.json", "low.f32", "low.ppm"}) EXPECT_TRUE(std::filesystem::exists(dir.file("bands/") + f)) << f;
    ASSERT_EQ(run_lpdh({"--manifest", man, "reconstruct", dir.file("bands"), "--out", dir.file("out.ppm")}), 0);
    EXPECT_EQ(slurp(dir.file("out.ppm")), slurp(dir.file("in.ppm")));
    const auto lines = read_lines(man);
    ASSERT_EQ(lines.size(), 2u);
    const auto j = nlohmann::json::parse(lines[0]);
    EXPECT_EQ(j.at("command"), "decompose");
    EXPECT_EQ(j.at("flags").at("--levels"), "3");
    EXPECT_FALSE(j.at("artifacts").empty());
}

TEST(Cli, SynthIsDeterministic) {
    TempDir dir("synth");
    const std::string man = dir.file("m.jsonl");
    for (const char* out : {"a", "b"})
        ASSERT_EQ(run_lpdh({"--manifest", man, "synth", "--seed", "11", "--count", "3", "--height", "32", "--width", "32",
                            "--out-dir", dir.file(out)}),
                  0);
    const auto records = read_pairs_csv(dir.file("a"));
    ASSERT_EQ(records.size(), 3u);
    for (const auto& r : records) {
        EXPECT_EQ(slurp(dir.file("a/") + r.hazy), slurp(dir.file("b/") + r.hazy));
        EXPECT_EQ(slurp(dir.file("a/") + r.clean), slurp(dir.file("b/") + r.clean));
        EXPECT_GE(r.airlight, 0.8);
        EXPECT_LE(r.beta, 2.0);
    }
    EXPECT_EQ(slurp(dir.file("a/pairs.csv")), slurp(dir.file("b/pairs.csv")));
    EXPECT_EQ(load_pairs(dir.file("a")).size(), 3u);
}

TEST(Cli, TrainDehazeEval) {
    TempDir dir("train");
    const std::string man = dir.file("m.jsonl");
    ASSERT_EQ(run_lpdh({"--manifest", man, "synth", "--seed", "5", "--count", "2", "--height", "32", "--width", "32",
                        "--out-dir", dir.file("data")}),
              0);
    ASSERT_EQ(run_lpdh({"--manifest", man, "train", "--data", dir.file("data"), "--steps", "5", "--terms", "3", "--out",
                        dir.file("m.lpdh")}),
              0);
    const auto loss = read_lines(dir.file("m.lpdh.loss.csv"));
    ASSERT_EQ(loss.size(), 6u);
    EXPECT_EQ(loss[0], "step,data_loss,reg_loss,total");
    const auto pairs = read_pairs_csv(dir.file("data"));
    ASSERT_EQ(run_lpdh({"--manifest", man, "dehaze", dir.file("data/") + pairs[0].hazy, "--ckpt", dir.file("m.lpdh"),
                        "--out", dir.file("o.ppm")}),
              0);
    EXPECT_EQ(read_pnm(dir.file("o.ppm")).shape(), (Shape{1, 3, 32, 32}));
    ASSERT_EQ(run_lpdh({"--manifest", man, "eval", "--data", dir.file("data"), "--ckpt", dir.file("m.lpdh"), "--report",
                        dir.file("r.csv")}),
              0);
    EXPECT_EQ(read_lines(dir.file("r.csv")).size(), 4u);
}

TEST(Cli, TrainingLossTrendsDown) {
    // Same data and flags as the desk-scale acceptance run, first 300 steps.
    TempDir dir("trend");
    const std::string man = dir.file("m.jsonl");
    ASSERT_EQ(run_lpdh({"--manifest", man, "synth", "--seed", "7", "--count", "8", "--height", "64", "--width", "64",
                        "--out-dir", dir.file("data")}),
              0);
    ASSERT_EQ(run_lpdh({"--manifest", man, "train", "--data", dir.file("data"), "--steps", "300", "--out",
                        dir.file("m.lpdh")}),
              0);
    const auto lines = read_lines(dir.file("m.lpdh.loss.csv"));
    ASSERT_EQ(lines.size(), 301u);
    std::vector<double> total;
    for (std::size_t i = 1; i < lines.size(); ++i) total.push_back(std::stod(lines[i].substr(lines[i].rfind(',') + 1)));
    // Per-step moving averages jitter with the sampled pair, so the check is
    // on the means of consecutive 50-step blocks.
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < 6; ++b) {
        double s = 0;
        for (std::size_t i = 50 * b; i < 50 * (b + 1); ++i) s += total[i];
        EXPECT_LT(s / 50, prev) << "block " << b;
        prev = s / 50;
    }
}
