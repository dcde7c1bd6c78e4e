// SPDX-License-Identifier: Apache-2.0

#include "masktrack/simd/kernels.hpp"

#include <cmath>

namespace masktrack::simd {
namespace {

void mark_within_scalar(std::span<const std::int32_t> dist, std::int32_t limit,
                        std::span<std::uint8_t> out) {
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] <= limit) out[i] = 1;
    }
}

OverlapCounts count_overlap_scalar(std::span<const std::uint8_t> a,
                                   std::span<const std::uint8_t> b) {
    OverlapCounts counts;
    for (std::size_t i = 0; i < a.size(); ++i) {
        counts.intersection += static_cast<std::uint64_t>(a[i] & b[i]);
        counts.union_ += static_cast<std::uint64_t>(a[i] | b[i]);
    }
    return counts;
}

void average_scalar(std::span<const float> a, std::span<const float> b, std::span<float> out) {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] + b[i]) * 0.5F;
}

void threshold_scalar(std::span<const float> scores, float tau, std::span<std::uint8_t> out) {
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > tau ? 1 : 0;
}

GaussianSums gaussian_row_scalar(const GaussianRow& row) {
    GaussianSums sums;
    for (std::size_t k = 0; k < row.count; ++k) {
        float exponent = row.spatial_log[k];
        if (row.color_scale != 0.0F) {
            const float dr = row.r[k] - row.center_r;
            const float dg = row.g[k] - row.center_g;
            const float db = row.b[k] - row.center_b;
            exponent -= row.color_scale * (dr * dr + dg * dg + db * db);
        }
        const float w = std::exp(exponent);
        sums.weight += w;
        sums.weighted_fg += static_cast<double>(w * row.fg[k]);
    }
    return sums;
}

}  // namespace

const KernelTable& scalar_kernels() noexcept {
    static const KernelTable table{
        "scalar",         &mark_within_scalar, &count_overlap_scalar,
        &average_scalar,  &threshold_scalar,   &gaussian_row_scalar,
    };
    return table;
}

}  // namespace masktrack::simd
