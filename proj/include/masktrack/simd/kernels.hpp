// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel inner loops. Each kernel has a scalar reference version and,
// on x86-64, an AVX2+FMA version. `active()` picks the best table the CPU
// supports at first use; MASKTRACK_SIMD=scalar forces the reference path.
//
// The integer and comparison kernels are bit-exact across variants. The
// Gaussian accumulation uses a polynomial exp in the vector path and agrees
// with the reference within a relative 1e-5.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace masktrack::simd {

struct OverlapCounts {
    std::uint64_t intersection = 0;
    std::uint64_t union_ = 0;

    friend bool operator==(const OverlapCounts&, const OverlapCounts&) = default;
};

struct GaussianSums {
    double weight = 0.0;      // sum of kernel values
    double weighted_fg = 0.0; // sum of kernel values times neighbor fg marginal
};

/// One contiguous row segment of neighbors for a dense-CRF message.
///
/// For k in [0, count): the kernel value is
///   exp(spatial_log[k] - color_scale * |center_rgb - (r[k], g[k], b[k])|^2)
/// and is accumulated together with its product with fg[k].
/// `color_scale` of zero skips the color term (r, g, b may then be empty).
struct GaussianRow {
    const float* r = nullptr;
    const float* g = nullptr;
    const float* b = nullptr;
    const float* fg = nullptr;
    const float* spatial_log = nullptr;
    std::size_t count = 0;
    float center_r = 0.0F;
    float center_g = 0.0F;
    float center_b = 0.0F;
    float color_scale = 0.0F;
};

struct KernelTable {
    std::string_view name;

    /// out[i] = 1 when dist[i] <= limit; out[i] is left untouched otherwise.
    void (*mark_within)(std::span<const std::int32_t> dist, std::int32_t limit,
                        std::span<std::uint8_t> out);

    /// Intersection and union sizes of two 0/1 byte masks.
    OverlapCounts (*count_overlap)(std::span<const std::uint8_t> a,
                                   std::span<const std::uint8_t> b);

    /// out[i] = (a[i] + b[i]) * 0.5
    void (*average)(std::span<const float> a, std::span<const float> b, std::span<float> out);

    /// out[i] = scores[i] > tau ? 1 : 0
    void (*threshold)(std::span<const float> scores, float tau, std::span<std::uint8_t> out);

    GaussianSums (*gaussian_row)(const GaussianRow& row);
};

const KernelTable& scalar_kernels() noexcept;

/// Null when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels() noexcept;

/// The table used by the library.
const KernelTable& active() noexcept;

}  // namespace masktrack::simd
