#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lpdh/network.hpp"
#include "lpdh/training.hpp"

namespace lpdh {

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const unsigned char> bytes);
// Hex FNV-1a of a file's contents.
std::string hash_file(const std::string& path);

// One line of the run log: what was invoked, with which flags, how long
// each stage took and what it produced.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> flags;
    std::uint64_t seed = 0;
    std::map<std::string, double> stage_seconds;
    std::map<std::string, std::string> artifacts;  // path -> hash
    int exit_code = 0;

    void add_artifact(const std::string& path);
    void add_stages(const StageTimes& t);
    std::string to_json_line() const;
    // Appends one JSON line to `path`.
    void append_to(const std::string& path) const;
};

// Pair list of a synthesized dataset directory.
inline constexpr char kPairsFile[] = "pairs.csv";

struct PairRecord {
    std::string hazy;   // file names relative to the directory
    std::string clean;
    double airlight = 0;
    double beta = 0;
    std::uint64_t seed = 0;
};

void write_pairs_csv(const std::string& dir, std::span<const PairRecord> pairs);
std::vector<PairRecord> read_pairs_csv(const std::string& dir);

// Reads every pair listed in `dir`/pairs.csv.
std::vector<ImagePair<float>> load_pairs(const std::string& dir);

} // namespace lpdh
