// SPDX-License-Identifier: Apache-2.0
//
// Precomputed optical flow: Middlebury .flo I/O, magnitude images, and score
// fusion of the RGB and flow-magnitude branches.

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "masktrack/types.hpp"

namespace masktrack {

class FlowFormatError : public Error {
public:
    using Error::Error;
};

/// Dense displacement field in pixels per frame. Values are always finite.
class FlowField {
public:
    FlowField() = default;
    /// `uv` holds interleaved (u, v) pairs, row-major.
    FlowField(int width, int height, std::vector<float> uv);

    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] float u(int x, int y) const { return uv_[2 * index(x, y)]; }
    [[nodiscard]] float v(int x, int y) const { return uv_[2 * index(x, y) + 1]; }
    [[nodiscard]] std::span<const float> interleaved() const noexcept { return uv_; }

    friend bool operator==(const FlowField&, const FlowField&) = default;

private:
    [[nodiscard]] std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * width_ + x;
    }

    int width_ = 0;
    int height_ = 0;
    std::vector<float> uv_;
};

inline constexpr float kFloMagic = 202021.25F;

FlowField decode_flo(std::span<const std::byte> bytes);
std::vector<std::byte> encode_flo(const FlowField& flow);

FlowField read_flo(const std::filesystem::path& path);
void write_flo(const std::filesystem::path& path, const FlowField& flow);

/// Per-pixel vector length quantized to 8 bits and replicated to 3 channels.
/// With no `fixed_scale` the frame maximum maps to 255 (an all-zero field
/// gives an all-zero image); otherwise magnitude `fixed_scale` maps to 255 and
/// larger values saturate. Rounding is half-up.
Image magnitude_image(const FlowField& flow, std::optional<double> fixed_scale = std::nullopt);

/// Per-pixel mean of the two branch scores.
ScoreMap fuse_scores(const ScoreMap& rgb, const ScoreMap& flow);

}  // namespace masktrack
