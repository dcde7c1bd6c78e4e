// SPDX-License-Identifier: Apache-2.0

#include "masktrack/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace masktrack {

namespace {

std::size_t checked_area(int width, int height, const char* what) {
    if (width < 1 || height < 1) {
        throw Error(std::string(what) + ": dimensions must be positive, got " +
                    std::to_string(width) + "x" + std::to_string(height));
    }
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
}

}  // namespace

Image::Image(int width, int height, int channels)
    : Image(width, height, channels,
            std::vector<std::uint8_t>(checked_area(width, height, "Image") *
                                      static_cast<std::size_t>(channels > 0 ? channels : 1))) {}

Image::Image(int width, int height, int channels, std::vector<std::uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    const std::size_t area = checked_area(width, height, "Image");
    if (channels != 1 && channels != 3) {
        throw Error("Image: channels must be 1 or 3, got " + std::to_string(channels));
    }
    if (data_.size() != area * static_cast<std::size_t>(channels)) {
        throw Error("Image: data length " + std::to_string(data_.size()) + " does not match " +
                    std::to_string(width) + "x" + std::to_string(height) + "x" +
                    std::to_string(channels));
    }
}

BinaryMask::BinaryMask(int width, int height)
    : width_(width), height_(height), data_(checked_area(width, height, "BinaryMask"), 0) {}

BinaryMask::BinaryMask(int width, int height, std::span<const std::uint8_t> values)
    : BinaryMask(width, height) {
    if (values.size() != data_.size()) {
        throw Error("BinaryMask: expected " + std::to_string(data_.size()) + " values, got " +
                    std::to_string(values.size()));
    }
    std::transform(values.begin(), values.end(), data_.begin(),
                   [](std::uint8_t v) { return static_cast<std::uint8_t>(v != 0); });
}

std::size_t BinaryMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

bool BinaryMask::any() const noexcept {
    return std::find(data_.begin(), data_.end(), std::uint8_t{1}) != data_.end();
}

ScoreMap::ScoreMap(int width, int height, float fill)
    : ScoreMap(width, height, std::vector<float>(checked_area(width, height, "ScoreMap"), fill)) {}

ScoreMap::ScoreMap(int width, int height, std::vector<float> values)
    : width_(width), height_(height), data_(std::move(values)) {
    const std::size_t area = checked_area(width, height, "ScoreMap");
    if (data_.size() != area) {
        throw Error("ScoreMap: expected " + std::to_string(area) + " values, got " +
                    std::to_string(data_.size()));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        const float v = data_[i];
        if (!(v >= 0.0F && v <= 1.0F)) {
            throw Error("ScoreMap: value " + std::to_string(v) + " at index " + std::to_string(i) +
                        " outside [0,1]");
        }
    }
}

BinaryMask mask_from_box(const BoundingBox& box, int width, int height) {
    BinaryMask mask(width, height);
    if (!box.fits(width, height)) {
        throw Error("mask_from_box: box (" + std::to_string(box.x_min) + "," +
                    std::to_string(box.y_min) + "," + std::to_string(box.x_max) + "," +
                    std::to_string(box.y_max) + ") outside " + std::to_string(width) + "x" +
                    std::to_string(height));
    }
    for (int y = box.y_min; y <= box.y_max; ++y) {
        for (int x = box.x_min; x <= box.x_max; ++x) mask.set(x, y, true);
    }
    return mask;
}

BoundingBox tight_box(const BinaryMask& mask) {
    BoundingBox box{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), -1, -1};
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            box.x_min = std::min(box.x_min, x);
            box.y_min = std::min(box.y_min, y);
            box.x_max = std::max(box.x_max, x);
            box.y_max = std::max(box.y_max, y);
        }
    }
    if (box.x_max < 0) throw Error("tight_box: mask is empty");
    return box;
}

void require_same_size(int w0, int h0, int w1, int h1, const std::string& what) {
    if (w0 != w1 || h0 != h1) {
        throw DimensionMismatch(what + ": " + std::to_string(w0) + "x" + std::to_string(h0) +
                                " vs " + std::to_string(w1) + "x" + std::to_string(h1));
    }
}

}  // namespace masktrack
