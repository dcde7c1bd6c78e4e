// SPDX-License-Identifier: Apache-2.0
//
// Core raster types shared by every stage of the pipeline.
//
// Coordinates: origin at the top-left pixel, x grows rightward, y grows
// downward. Pixel (x, y) lives at index y * width + x. Box bounds are
// inclusive on both ends.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace masktrack {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// 8-bit raster with 1 or 3 interleaved channels, row-major.
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels);
    Image(int width, int height, int channels, std::vector<std::uint8_t> data);

    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] int channels() const noexcept { return channels_; }
    [[nodiscard]] std::size_t pixel_count() const noexcept {
        return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
    }
    [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

    [[nodiscard]] std::uint8_t at(int x, int y, int c = 0) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    std::uint8_t& at(int x, int y, int c = 0) {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    [[nodiscard]] std::span<const std::uint8_t> data() const noexcept { return data_; }
    [[nodiscard]] std::span<std::uint8_t> data() noexcept { return data_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Foreground/background labeling. Stored one byte per pixel, values 0 or 1.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height);
    /// Any nonzero input byte is taken as foreground.
    BinaryMask(int width, int height, std::span<const std::uint8_t> values);

    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] std::size_t pixel_count() const noexcept { return data_.size(); }

    [[nodiscard]] bool at(int x, int y) const {
        return data_[static_cast<std::size_t>(y) * width_ + x] != 0;
    }
    void set(int x, int y, bool fg) {
        data_[static_cast<std::size_t>(y) * width_ + x] = fg ? 1 : 0;
    }
    [[nodiscard]] bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }

    [[nodiscard]] std::size_t count() const noexcept;
    [[nodiscard]] bool any() const noexcept;

    [[nodiscard]] std::span<const std::uint8_t> data() const noexcept { return data_; }
    [[nodiscard]] std::span<std::uint8_t> data() noexcept { return data_; }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

/// Per-pixel foreground probability. Construction rejects values outside [0, 1].
class ScoreMap {
public:
    ScoreMap() = default;
    ScoreMap(int width, int height, float fill = 0.0F);
    ScoreMap(int width, int height, std::vector<float> values);

    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] std::size_t pixel_count() const noexcept { return data_.size(); }

    [[nodiscard]] float at(int x, int y) const {
        return data_[static_cast<std::size_t>(y) * width_ + x];
    }
    [[nodiscard]] std::span<const float> data() const noexcept { return data_; }

    friend bool operator==(const ScoreMap&, const ScoreMap&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

struct BoundingBox {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    [[nodiscard]] int width() const noexcept { return x_max - x_min + 1; }
    [[nodiscard]] int height() const noexcept { return y_max - y_min + 1; }
    [[nodiscard]] bool fits(int width, int height) const noexcept {
        return x_min >= 0 && y_min >= 0 && x_min <= x_max && y_min <= y_max &&
               x_max < width && y_max < height;
    }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Mask with exactly the box's pixels set. Throws if the box is out of bounds.
BinaryMask mask_from_box(const BoundingBox& box, int width, int height);

/// Tight bounding box of the foreground. Throws on an empty mask.
BoundingBox tight_box(const BinaryMask& mask);

/// Throws DimensionMismatch naming `what` unless the sizes agree.
void require_same_size(int w0, int h0, int w1, int h1, const std::string& what);

}  // namespace masktrack
