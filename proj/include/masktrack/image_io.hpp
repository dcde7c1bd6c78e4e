// SPDX-License-Identifier: Apache-2.0
//
// PNG/JPEG reading and PNG writing. Masks are single-channel 8-bit PNGs with
// 0 = background and 255 = foreground; any nonzero sample reads as foreground.

#pragma once

#include <filesystem>

#include "masktrack/types.hpp"

namespace masktrack {

class IoError : public Error {
public:
    using Error::Error;
};

/// Reads an 8-bit PNG or JPEG as 3-channel RGB (grayscale inputs are replicated).
Image read_image(const std::filesystem::path& path);

/// Writes a 1- or 3-channel image as PNG.
void write_image(const std::filesystem::path& path, const Image& image);

BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// Size of an image file without decoding pixel data more than needed.
struct ImageSize {
    int width = 0;
    int height = 0;
};
ImageSize probe_image_size(const std::filesystem::path& path);

}  // namespace masktrack
