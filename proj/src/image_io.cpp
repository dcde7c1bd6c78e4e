// SPDX-License-Identifier: Apache-2.0

#include "masktrack/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <cstring>
#include <vector>

namespace masktrack {

namespace {

const std::vector<int> kPngParams{cv::IMWRITE_PNG_COMPRESSION, 6};

cv::Mat load(const std::filesystem::path& path, int flags) {
    if (!std::filesystem::exists(path)) {
        throw IoError("file not found: " + path.string());
    }
    cv::Mat m = cv::imread(path.string(), flags);
    if (m.empty()) throw IoError("cannot decode image: " + path.string());
    if (m.depth() != CV_8U) throw IoError("not an 8-bit image: " + path.string());
    return m;
}

void save(const std::filesystem::path& path, const cv::Mat& m) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), m, kPngParams)) {
        throw IoError("cannot write image: " + path.string());
    }
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
    cv::Mat bgr = load(path, cv::IMREAD_COLOR);
    Image image(bgr.cols, bgr.rows, 3);
    auto out = image.data();
    for (int y = 0; y < bgr.rows; ++y) {
        const auto* row = bgr.ptr<std::uint8_t>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            const std::size_t o = (static_cast<std::size_t>(y) * bgr.cols + x) * 3;
            out[o + 0] = row[3 * x + 2];
            out[o + 1] = row[3 * x + 1];
            out[o + 2] = row[3 * x + 0];
        }
    }
    return image;
}

void write_image(const std::filesystem::path& path, const Image& image) {
    if (image.channels() == 1) {
        cv::Mat m(image.height(), image.width(), CV_8UC1);
        std::memcpy(m.data, image.data().data(), image.data().size());
        save(path, m);
        return;
    }
    cv::Mat m(image.height(), image.width(), CV_8UC3);
    const auto in = image.data();
    for (int y = 0; y < image.height(); ++y) {
        auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < image.width(); ++x) {
            const std::size_t o = (static_cast<std::size_t>(y) * image.width() + x) * 3;
            row[3 * x + 0] = in[o + 2];
            row[3 * x + 1] = in[o + 1];
            row[3 * x + 2] = in[o + 0];
        }
    }
    save(path, m);
}

BinaryMask read_mask(const std::filesystem::path& path) {
    cv::Mat gray = load(path, cv::IMREAD_GRAYSCALE);
    if (!gray.isContinuous()) gray = gray.clone();
    return BinaryMask(gray.cols, gray.rows,
                      std::span<const std::uint8_t>(gray.data, gray.total()));
}

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
    cv::Mat m(mask.height(), mask.width(), CV_8UC1);
    const auto in = mask.data();
    for (std::size_t i = 0; i < in.size(); ++i) m.data[i] = in[i] ? 255 : 0;
    save(path, m);
}

ImageSize probe_image_size(const std::filesystem::path& path) {
    const cv::Mat m = load(path, cv::IMREAD_UNCHANGED);
    return {m.cols, m.rows};
}

}  // namespace masktrack
