// SPDX-License-Identifier: Apache-2.0

#include "masktrack/morphology.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

#include "masktrack/simd/kernels.hpp"

namespace masktrack {

int isqrt(long long value) {
    auto h = static_cast<long long>(std::sqrt(static_cast<double>(value)));
    while (h * h > value) --h;
    while ((h + 1) * (h + 1) <= value) ++h;
    return static_cast<int>(h);
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
    if (radius < 0) throw Error("dilate: radius must be non-negative");
    if (radius == 0) return mask;
    const int w = mask.width();
    const int h = mask.height();
    constexpr std::int32_t kFar = std::numeric_limits<std::int32_t>::max();

    // Horizontal distance to the nearest foreground pixel in the same row.
    std::vector<std::int32_t> row_dist(static_cast<std::size_t>(w) * h, kFar);
    const auto in = mask.data();
    for (int y = 0; y < h; ++y) {
        std::int32_t* d = row_dist.data() + static_cast<std::size_t>(y) * w;
        const std::uint8_t* m = in.data() + static_cast<std::size_t>(y) * w;
        std::int32_t last = -1;
        for (int x = 0; x < w; ++x) {
            if (m[x]) last = x;
            if (last >= 0) d[x] = x - last;
        }
        last = -1;
        for (int x = w - 1; x >= 0; --x) {
            if (m[x]) last = x;
            if (last >= 0) d[x] = std::min(d[x], last - x);
        }
    }

    std::vector<int> half_width(2 * static_cast<std::size_t>(radius) + 1);
    for (int dy = -radius; dy <= radius; ++dy) {
        half_width[dy + radius] = isqrt(static_cast<long long>(radius) * radius -
                                        static_cast<long long>(dy) * dy);
    }

    const auto& kernels = simd::active();
    BinaryMask out(w, h);
    auto dst = out.data();
    for (int y = 0; y < h; ++y) {
        std::span<std::uint8_t> out_row = dst.subspan(static_cast<std::size_t>(y) * w, w);
        for (int dy = -radius; dy <= radius; ++dy) {
            const int sy = y + dy;
            if (sy < 0 || sy >= h) continue;
            kernels.mark_within(
                std::span<const std::int32_t>(row_dist.data() + static_cast<std::size_t>(sy) * w, w),
                half_width[dy + radius], out_row);
        }
    }
    return out;
}

namespace {

// 1-D squared distance transform of a sampled function (lower envelope of
// parabolas). Infinite samples contribute no parabola.
void distance_1d(const double* f, int n, double* d, std::vector<int>& v, std::vector<double>& z) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    auto intersect = [f](int q, int p) {
        return ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
    };
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        double s = intersect(q, v[k]);
        while (s <= z[k]) {
            --k;
            s = intersect(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        for (int q = 0; q < n; ++q) d[q] = kInf;
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q) ++j;
        const double diff = q - v[j];
        d[q] = diff * diff + f[v[j]];
    }
}

}  // namespace

std::vector<double> distance_to_foreground(const BinaryMask& mask) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    const int w = mask.width();
    const int h = mask.height();
    std::vector<double> grid(static_cast<std::size_t>(w) * h);
    const auto in = mask.data();
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = in[i] ? 0.0 : kInf;

    const int n = std::max(w, h);
    std::vector<double> f(n);
    std::vector<double> d(n);
    std::vector<int> v(n);
    std::vector<double> z(n + 1);

    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
        distance_1d(f.data(), h, d.data(), v, z);
        for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[y];
    }
    for (int y = 0; y < h; ++y) {
        double* row = grid.data() + static_cast<std::size_t>(y) * w;
        std::copy(row, row + w, f.begin());
        distance_1d(f.data(), w, d.data(), v, z);
        for (int x = 0; x < w; ++x) row[x] = std::sqrt(d[x]);
    }
    return grid;
}

}  // namespace masktrack
