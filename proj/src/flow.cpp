// SPDX-License-Identifier: Apache-2.0

#include "masktrack/flow.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "masktrack/simd/kernels.hpp"

namespace masktrack {

static_assert(std::endian::native == std::endian::little,
              "the .flo codec assumes a little-endian host");

namespace {

constexpr std::size_t kHeaderBytes = 12;
// Guards against absurd headers before allocating.
constexpr std::int64_t kMaxFlowPixels = std::int64_t{1} << 28;

template <typename T>
T load_le(const std::byte* p) {
    T v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

template <typename T>
void append_le(std::vector<std::byte>& out, T v) {
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    out.insert(out.end(), p, p + sizeof v);
}

}  // namespace

FlowField::FlowField(int width, int height, std::vector<float> uv)
    : width_(width), height_(height), uv_(std::move(uv)) {
    if (width < 1 || height < 1) throw FlowFormatError("flow dimensions must be positive");
    if (uv_.size() != 2 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        throw FlowFormatError("flow payload size does not match dimensions");
    }
    for (std::size_t i = 0; i < uv_.size(); ++i) {
        if (!std::isfinite(uv_[i])) {
            throw FlowFormatError("non-finite flow value at pixel " + std::to_string(i / 2));
        }
    }
}

FlowField decode_flo(std::span<const std::byte> bytes) {
    if (bytes.size() < kHeaderBytes) throw FlowFormatError(".flo: truncated header");
    const float magic = load_le<float>(bytes.data());
    if (magic != kFloMagic) throw FlowFormatError(".flo: bad magic number");
    const std::int32_t w = load_le<std::int32_t>(bytes.data() + 4);
    const std::int32_t h = load_le<std::int32_t>(bytes.data() + 8);
    if (w < 1 || h < 1 || std::int64_t{w} * h > kMaxFlowPixels) {
        throw FlowFormatError(".flo: invalid dimensions " + std::to_string(w) + "x" +
                              std::to_string(h));
    }
    const std::size_t values = 2 * static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    const std::size_t expected = kHeaderBytes + values * sizeof(float);
    if (bytes.size() < expected) throw FlowFormatError(".flo: truncated payload");
    if (bytes.size() > expected) throw FlowFormatError(".flo: trailing bytes after payload");
    std::vector<float> uv(values);
    std::memcpy(uv.data(), bytes.data() + kHeaderBytes, values * sizeof(float));
    return FlowField(w, h, std::move(uv));
}

std::vector<std::byte> encode_flo(const FlowField& flow) {
    std::vector<std::byte> out;
    out.reserve(kHeaderBytes + flow.interleaved().size_bytes());
    append_le(out, kFloMagic);
    append_le(out, static_cast<std::int32_t>(flow.width()));
    append_le(out, static_cast<std::int32_t>(flow.height()));
    const auto* p = reinterpret_cast<const std::byte*>(flow.interleaved().data());
    out.insert(out.end(), p, p + flow.interleaved().size_bytes());
    return out;
}

FlowField read_flo(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FlowFormatError("cannot open flow file: " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_flo(std::as_bytes(std::span(raw)));
    } catch (const FlowFormatError& e) {
        throw FlowFormatError(path.string() + ": " + e.what());
    }
}

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    const auto bytes = encode_flo(flow);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FlowFormatError("cannot write flow file: " + path.string());
}

Image magnitude_image(const FlowField& flow, std::optional<double> fixed_scale) {
    const std::size_t n = static_cast<std::size_t>(flow.width()) * flow.height();
    const auto uv = flow.interleaved();
    std::vector<double> magnitude(n);
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double u = uv[2 * i];
        const double v = uv[2 * i + 1];
        magnitude[i] = std::sqrt(u * u + v * v);
        peak = std::max(peak, magnitude[i]);
    }
    const double scale = fixed_scale ? *fixed_scale : peak;
    if (fixed_scale && !(*fixed_scale > 0.0)) {
        throw Error("magnitude_image: fixed scale must be positive");
    }
    Image image(flow.width(), flow.height(), 3);
    auto out = image.data();
    for (std::size_t i = 0; i < n; ++i) {
        std::uint8_t q = 0;
        if (scale > 0.0) {
            const double level = std::floor(255.0 * std::min(magnitude[i] / scale, 1.0) + 0.5);
            q = static_cast<std::uint8_t>(level);
        }
        out[3 * i] = out[3 * i + 1] = out[3 * i + 2] = q;
    }
    return image;
}

ScoreMap fuse_scores(const ScoreMap& rgb, const ScoreMap& flow) {
    require_same_size(rgb.width(), rgb.height(), flow.width(), flow.height(), "fuse_scores");
    std::vector<float> fused(rgb.pixel_count());
    simd::active().average(rgb.data(), flow.data(), fused);
    return ScoreMap(rgb.width(), rgb.height(), std::move(fused));
}

}  // namespace masktrack
