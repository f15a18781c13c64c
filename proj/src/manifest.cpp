#include "lpdh/manifest.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "lpdh/errors.hpp"
#include "lpdh/image_io.hpp"

namespace lpdh {

std::uint64_t fnv1a(std::span<const unsigned char> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hash_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot hash file: " + path);
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
    return buf;
}

void RunManifest::add_artifact(const std::string& path) { artifacts[path] = hash_file(path); }

void RunManifest::add_stages(const StageTimes& t) {
    stage_seconds["decompose"] = t.decompose;
    stage_seconds["bottom_net"] = t.bottom_net;
    stage_seconds["tucker"] = t.tucker;
    stage_seconds["k_net"] = t.k_net;
    stage_seconds["modulate"] = t.modulate;
    stage_seconds["reconstruct"] = t.reconstruct;
    stage_seconds["total"] = t.total();
}

std::string RunManifest::to_json_line() const {
    nlohmann::json j;
    j["command"] = command;
    j["flags"] = flags;
    j["seed"] = seed;
    j["stage_seconds"] = stage_seconds;
    j["artifacts"] = artifacts;
    j["exit_code"] = exit_code;
    return j.dump();
}

void RunManifest::append_to(const std::string& path) const {
    std::ofstream os(path, std::ios::app);
    if (!os) throw IoError("cannot append manifest: " + path);
    os << to_json_line() << '\n';
}

void write_pairs_csv(const std::string& dir, std::span<const PairRecord> pairs) {
    const std::string path = (std::filesystem::path(dir) / kPairsFile).string();
    std::ofstream os(path);
    if (!os) throw IoError("cannot write pair list: " + path);
    os << "hazy,clean,A,beta,seed\n" << std::setprecision(17);
    for (const auto& p : pairs) os << p.hazy << ',' << p.clean << ',' << p.airlight << ',' << p.beta << ',' << p.seed << '\n';
    if (!os) throw IoError("failed writing pair list: " + path);
}

std::vector<PairRecord> read_pairs_csv(const std::string& dir) {
    const std::string path = (std::filesystem::path(dir) / kPairsFile).string();
    std::ifstream is(path);
    if (!is) throw IoError("cannot open pair list: " + path);
    std::string line;
    std::getline(is, line);
    if (line.rfind("hazy,clean", 0) != 0) throw IoError("unexpected header in " + path);
    std::vector<PairRecord> out;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> f;
        while (std::getline(ss, field, ',')) f.push_back(field);
        if (f.size() != 5) throw IoError(path + ":" + std::to_string(lineno) + ": expected 5 fields");
        try {
            out.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[3]), std::stoull(f[4])});
        } catch (const std::exception&) {
            throw IoError(path + ":" + std::to_string(lineno) + ": bad number");
        }
    }
    return out;
}

std::vector<ImagePair<float>> load_pairs(const std::string& dir) {
    std::vector<ImagePair<float>> out;
    for (const auto& r : read_pairs_csv(dir)) {
        const std::filesystem::path base(dir);
        ImagePair<float> p{r.hazy, read_pnm((base / r.hazy).string()), read_pnm((base / r.clean).string())};
        check_same_shape(p.hazy.shape(), p.clean.shape(), "load_pairs");
        out.push_back(std::move(p));
    }
    return out;
}

} // namespace lpdh
