#include "lpdh/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "lpdh/errors.hpp"

namespace lpdh {

namespace {

// Next header token, skipping whitespace and comments.
std::string header_token(std::istream& is, const std::string& path) {
    std::string tok;
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw IoError("truncated image header: " + path);
    return tok;
}

std::size_t header_number(std::istream& is, const std::string& path, const char* what) {
    const std::string tok = header_token(is, path);
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char ch) { return ch >= '0' && ch <= '9'; }) ||
        tok.size() > 9) {
        throw IoError("bad " + std::string(what) + " '" + tok + "' in image header: " + path);
    }
    return std::stoul(tok);
}

} // namespace

Tensor<float> read_pnm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open image: " + path);
    const std::string magic = header_token(is, path);
    std::size_t channels = 0;
    if (magic == "P6") channels = 3;
    else if (magic == "P5") channels = 1;
    else throw IoError("unsupported image format '" + magic + "' (expected P5 or P6): " + path);
    const std::size_t w = header_number(is, path, "width");
    const std::size_t h = header_number(is, path, "height");
    const std::size_t maxval = header_number(is, path, "maxval");
    if (w == 0 || h == 0) throw IoError("image has zero extent: " + path);
    if (maxval == 0 || maxval > 255) throw IoError("unsupported maxval " + std::to_string(maxval) + ": " + path);

    std::vector<unsigned char> bytes(w * h * channels);
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(is.gcount()) != bytes.size()) throw IoError("truncated image data: " + path);

    Tensor<float> img({1, channels, h, w});
    const float scale = 1.0f / static_cast<float>(maxval);
    for (std::size_t p = 0; p < h * w; ++p)
        for (std::size_t c = 0; c < channels; ++c) {
            img[c * h * w + p] = std::min(1.0f, static_cast<float>(bytes[p * channels + c]) * scale);
        }
    return img;
}

void write_ppm(const std::string& path, const Tensor<float>& img) {
    check_nchw(img.shape(), "write_ppm");
    const std::size_t ch = img.dim(1);
    if (img.dim(0) != 1 || (ch != 1 && ch != 3)) {
        throw DimensionError("write_ppm: expected (1, 1|3, H, W), got " + shape_str(img.shape()));
    }
    const std::size_t h = img.dim(2);
    const std::size_t w = img.dim(3);
    std::vector<unsigned char> bytes(3 * h * w);
    for (std::size_t p = 0; p < h * w; ++p)
        for (std::size_t c = 0; c < 3; ++c) {
            const float v = img[(ch == 1 ? 0 : c) * h * w + p];
            const float q = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
            bytes[p * 3 + c] = static_cast<unsigned char>(std::lround(q * 255.0f));
        }
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write image: " + path);
    os << "P6\n" << w << ' ' << h << "\n255\n";
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("failed writing image: " + path);
}

void write_f32(const std::string& path, const Tensor<float>& t) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write tensor file: " + path);
    os.write("LPDF", 4);
    const auto nd = static_cast<std::uint32_t>(t.ndim());
    os.write(reinterpret_cast<const char*>(&nd), sizeof nd);
    for (std::size_t d : t.shape()) {
        const auto d64 = static_cast<std::uint64_t>(d);
        os.write(reinterpret_cast<const char*>(&d64), sizeof d64);
    }
    os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!os) throw IoError("failed writing tensor file: " + path);
}

Tensor<float> read_f32(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open tensor file: " + path);
    char magic[4];
    std::uint32_t nd = 0;
    is.read(magic, 4);
    is.read(reinterpret_cast<char*>(&nd), sizeof nd);
    if (!is || std::memcmp(magic, "LPDF", 4) != 0) throw IoError("not a tensor file: " + path);
    if (nd == 0 || nd > 8) throw IoError("bad rank in tensor file: " + path);
    Shape shape(nd);
    for (auto& d : shape) {
        std::uint64_t d64 = 0;
        is.read(reinterpret_cast<char*>(&d64), sizeof d64);
        if (!is || d64 == 0 || d64 > (1ull << 32)) throw IoError("bad extent in tensor file: " + path);
        d = static_cast<std::size_t>(d64);
    }
    std::vector<float> data(shape_numel(shape));
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (static_cast<std::size_t>(is.gcount()) != data.size() * sizeof(float)) {
        throw IoError("truncated tensor file: " + path);
    }
    return Tensor<float>(shape, std::move(data));
}

Tensor<double> read_depth_map(const std::string& path) {
    const Tensor<float> img = read_pnm(path);
    const std::size_t c = img.dim(1);
    const std::size_t h = img.dim(2);
    const std::size_t w = img.dim(3);
    Tensor<double> d({h, w}, 0.0);
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t p = 0; p < h * w; ++p) d[p] += static_cast<double>(img[k * h * w + p]) / static_cast<double>(c);
    return d;
}

} // namespace lpdh
