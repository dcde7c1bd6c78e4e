// SPDX-License-Identifier: Apache-2.0
//
// Fixtures shared by the unit tests and the acceptance binary.

#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include "masktrack/dataset.hpp"
#include "masktrack/random.hpp"
#include "masktrack/types.hpp"

namespace testing {

namespace fs = std::filesystem;
using namespace masktrack;

/// Fresh empty directory under the build tree.
inline fs::path scratch(const std::string& name) {
    const fs::path p = fs::path(TEST_SCRATCH_DIR) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

inline std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

/// Relative path -> file bytes for every regular file below `root`.
inline std::map<std::string, std::vector<char>> tree(const fs::path& root) {
    std::map<std::string, std::vector<char>> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_bytes(e.path());
    }
    return out;
}

/// Each pixel set with probability `density`.
inline BinaryMask random_mask(int w, int h, double density, Rng& rng) {
    BinaryMask m(w, h);
    for (auto& v : m.data()) v = rng.uniform() < density ? 1 : 0;
    return m;
}

/// A few random rectangles and discs, so masks have solid regions.
inline BinaryMask random_blobs(int w, int h, Rng& rng) {
    BinaryMask m(w, h);
    const int shapes = 1 + static_cast<int>(rng.below(3));
    for (int s = 0; s < shapes; ++s) {
        const double cx = rng.uniform(0, w);
        const double cy = rng.uniform(0, h);
        const double r = rng.uniform(1, std::max(2, std::min(w, h) / 3));
        const bool disc = rng.below(2) == 0;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double dx = x - cx;
                const double dy = y - cy;
                if (disc ? dx * dx + dy * dy <= r * r : (std::abs(dx) <= r && std::abs(dy) <= r)) {
                    m.set(x, y, true);
                }
            }
        }
    }
    if (!m.any()) m.set(w / 2, h / 2, true);
    return m;
}

inline Image random_image(int w, int h, Rng& rng) {
    Image img(w, h, 3);
    for (auto& v : img.data()) v = static_cast<std::uint8_t>(rng.below(256));
    return img;
}

inline Image solid_image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    Image img(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(x, y, 0) = r;
            img.at(x, y, 1) = g;
            img.at(x, y, 2) = b;
        }
    return img;
}

inline BinaryMask disc(int w, int h, double cx, double cy, double r) {
    BinaryMask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.set(x, y, true);
    return m;
}

inline BinaryMask square(int w, int h, int x0, int y0, int side) {
    return mask_from_box({x0, y0, x0 + side - 1, y0 + side - 1}, w, h);
}

/// Sequence of plain frames with the given ground truth.
inline VideoSequence sequence_with_gt(const std::string& name, const std::vector<BinaryMask>& gt) {
    VideoSequence s;
    s.name = name;
    for (const auto& m : gt) {
        Image img(m.width(), m.height(), 3);
        for (int y = 0; y < m.height(); ++y)
            for (int x = 0; x < m.width(); ++x)
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = m.at(x, y) ? 200 : 30;
        s.frames.push_back(std::move(img));
    }
    s.ground_truth = gt;
    return s;
}

/// Square of side `side` sliding right by `speed` pixels per frame.
inline VideoSequence moving_square(int frames, int w, int h, int side, int speed) {
    std::vector<BinaryMask> gt;
    for (int t = 0; t < frames; ++t) gt.push_back(square(w, h, 2 + (t * speed) % (w - side - 2), h / 2 - side / 2, side));
    return sequence_with_gt("square", gt);
}

}  // namespace testing
