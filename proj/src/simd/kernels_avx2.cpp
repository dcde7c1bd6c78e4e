// SPDX-License-Identifier: Apache-2.0
//
// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the runtime check in dispatch.cpp.

#include "masktrack/simd/kernels.hpp"

#include <immintrin.h>

#include <array>
#include <cmath>
#include <cstring>

namespace masktrack::simd::detail {
namespace {

// Bit i of the index becomes byte i (0x00 or 0x01) of the value.
constexpr std::array<std::uint64_t, 256> make_bit_to_byte_lut() {
    std::array<std::uint64_t, 256> lut{};
    for (std::size_t m = 0; m < 256; ++m) {
        std::uint64_t v = 0;
        for (int bit = 0; bit < 8; ++bit) {
            if ((m >> bit) & 1U) v |= std::uint64_t{1} << (8 * bit);
        }
        lut[m] = v;
    }
    return lut;
}

constexpr auto kBitToByte = make_bit_to_byte_lut();

inline void store_mask_bytes(std::uint8_t* dst, int bits) {
    const std::uint64_t v = kBitToByte[static_cast<std::size_t>(bits) & 0xFFU];
    std::memcpy(dst, &v, sizeof v);
}

// Cephes-style expf: range reduction by ln2 then a degree-6 polynomial.
inline __m256 exp256(__m256 x) {
    const __m256 hi = _mm256_set1_ps(88.3762626647949F);
    const __m256 lo = _mm256_set1_ps(-87.3365478515625F);
    const __m256 log2e = _mm256_set1_ps(1.44269504088896341F);
    const __m256 c1 = _mm256_set1_ps(0.693359375F);
    const __m256 c2 = _mm256_set1_ps(-2.12194440e-4F);
    const __m256 half = _mm256_set1_ps(0.5F);
    const __m256 one = _mm256_set1_ps(1.0F);

    const __m256 below = _mm256_cmp_ps(x, lo, _CMP_LT_OQ);
    x = _mm256_min_ps(x, hi);
    x = _mm256_max_ps(x, lo);

    __m256 fx = _mm256_fmadd_ps(x, log2e, half);
    fx = _mm256_floor_ps(fx);
    x = _mm256_fnmadd_ps(fx, c1, x);
    x = _mm256_fnmadd_ps(fx, c2, x);

    const __m256 z = _mm256_mul_ps(x, x);
    __m256 y = _mm256_set1_ps(1.9875691500E-4F);
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507E-3F));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073E-3F));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894E-2F));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459E-1F));
    y = _mm256_fmadd_ps(y, x, half);
    y = _mm256_fmadd_ps(y, z, x);
    y = _mm256_add_ps(y, one);

    __m256i exponent = _mm256_cvttps_epi32(fx);
    exponent = _mm256_add_epi32(exponent, _mm256_set1_epi32(0x7F));
    exponent = _mm256_slli_epi32(exponent, 23);
    y = _mm256_mul_ps(y, _mm256_castsi256_ps(exponent));
    return _mm256_andnot_ps(below, y);
}

inline double hsum(__m256 v) {
    alignas(32) float lanes[8];
    _mm256_store_ps(lanes, v);
    double s = 0.0;
    for (float f : lanes) s += f;
    return s;
}

void mark_within_avx2(std::span<const std::int32_t> dist, std::int32_t limit,
                      std::span<std::uint8_t> out) {
    const std::size_t n = dist.size();
    const __m256i lim = _mm256_set1_epi32(limit);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256i d = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(dist.data() + i));
        const int over = _mm256_movemask_ps(_mm256_castsi256_ps(_mm256_cmpgt_epi32(d, lim)));
        const int within = ~over & 0xFF;
        if (within == 0) continue;
        std::uint64_t cur = 0;
        std::memcpy(&cur, out.data() + i, sizeof cur);
        const std::uint64_t ones = kBitToByte[static_cast<std::size_t>(within)];
        cur = (cur & ~(ones * 0xFF)) | ones;
        std::memcpy(out.data() + i, &cur, sizeof cur);
    }
    for (; i < n; ++i) {
        if (dist[i] <= limit) out[i] = 1;
    }
}

OverlapCounts count_overlap_avx2(std::span<const std::uint8_t> a,
                                 std::span<const std::uint8_t> b) {
    const std::size_t n = a.size();
    const __m256i zero = _mm256_setzero_si256();
    __m256i inter = zero;
    __m256i uni = zero;
    std::size_t i = 0;
    for (; i + 32 <= n; i += 32) {
        const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a.data() + i));
        const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b.data() + i));
        inter = _mm256_add_epi64(inter, _mm256_sad_epu8(_mm256_and_si256(va, vb), zero));
        uni = _mm256_add_epi64(uni, _mm256_sad_epu8(_mm256_or_si256(va, vb), zero));
    }
    alignas(32) std::uint64_t li[4];
    alignas(32) std::uint64_t lu[4];
    _mm256_store_si256(reinterpret_cast<__m256i*>(li), inter);
    _mm256_store_si256(reinterpret_cast<__m256i*>(lu), uni);
    OverlapCounts counts{li[0] + li[1] + li[2] + li[3], lu[0] + lu[1] + lu[2] + lu[3]};
    for (; i < n; ++i) {
        counts.intersection += static_cast<std::uint64_t>(a[i] & b[i]);
        counts.union_ += static_cast<std::uint64_t>(a[i] | b[i]);
    }
    return counts;
}

void average_avx2(std::span<const float> a, std::span<const float> b, std::span<float> out) {
    const std::size_t n = a.size();
    const __m256 half = _mm256_set1_ps(0.5F);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 s = _mm256_add_ps(_mm256_loadu_ps(a.data() + i), _mm256_loadu_ps(b.data() + i));
        _mm256_storeu_ps(out.data() + i, _mm256_mul_ps(s, half));
    }
    for (; i < n; ++i) out[i] = (a[i] + b[i]) * 0.5F;
}

void threshold_avx2(std::span<const float> scores, float tau, std::span<std::uint8_t> out) {
    const std::size_t n = scores.size();
    const __m256 t = _mm256_set1_ps(tau);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gt = _mm256_cmp_ps(_mm256_loadu_ps(scores.data() + i), t, _CMP_GT_OQ);
        store_mask_bytes(out.data() + i, _mm256_movemask_ps(gt));
    }
    for (; i < n; ++i) out[i] = scores[i] > tau ? 1 : 0;
}

GaussianSums gaussian_row_avx2(const GaussianRow& row) {
    const std::size_t n = row.count;
    const bool color = row.color_scale != 0.0F;
    const __m256 cr = _mm256_set1_ps(row.center_r);
    const __m256 cg = _mm256_set1_ps(row.center_g);
    const __m256 cb = _mm256_set1_ps(row.center_b);
    const __m256 scale = _mm256_set1_ps(row.color_scale);
    __m256 acc_w = _mm256_setzero_ps();
    __m256 acc_fg = _mm256_setzero_ps();
    std::size_t k = 0;
    for (; k + 8 <= n; k += 8) {
        __m256 e = _mm256_loadu_ps(row.spatial_log + k);
        if (color) {
            const __m256 dr = _mm256_sub_ps(_mm256_loadu_ps(row.r + k), cr);
            const __m256 dg = _mm256_sub_ps(_mm256_loadu_ps(row.g + k), cg);
            const __m256 db = _mm256_sub_ps(_mm256_loadu_ps(row.b + k), cb);
            __m256 d2 = _mm256_mul_ps(dr, dr);
            d2 = _mm256_fmadd_ps(dg, dg, d2);
            d2 = _mm256_fmadd_ps(db, db, d2);
            e = _mm256_fnmadd_ps(scale, d2, e);
        }
        const __m256 w = exp256(e);
        acc_w = _mm256_add_ps(acc_w, w);
        acc_fg = _mm256_fmadd_ps(w, _mm256_loadu_ps(row.fg + k), acc_fg);
    }
    if (k < n) {
        // Masked tail: inactive lanes load zeros and their weights are cleared.
        const __m256i lane = _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7);
        const __m256i mask = _mm256_cmpgt_epi32(_mm256_set1_epi32(static_cast<int>(n - k)), lane);
        const __m256 maskf = _mm256_castsi256_ps(mask);
        __m256 e = _mm256_maskload_ps(row.spatial_log + k, mask);
        if (color) {
            const __m256 dr = _mm256_sub_ps(_mm256_maskload_ps(row.r + k, mask), cr);
            const __m256 dg = _mm256_sub_ps(_mm256_maskload_ps(row.g + k, mask), cg);
            const __m256 db = _mm256_sub_ps(_mm256_maskload_ps(row.b + k, mask), cb);
            __m256 d2 = _mm256_mul_ps(dr, dr);
            d2 = _mm256_fmadd_ps(dg, dg, d2);
            d2 = _mm256_fmadd_ps(db, db, d2);
            e = _mm256_fnmadd_ps(scale, d2, e);
        }
        const __m256 w = _mm256_and_ps(exp256(e), maskf);
        acc_w = _mm256_add_ps(acc_w, w);
        acc_fg = _mm256_fmadd_ps(w, _mm256_maskload_ps(row.fg + k, mask), acc_fg);
    }
    GaussianSums sums{hsum(acc_w), hsum(acc_fg)};
    return sums;
}

}  // namespace

const KernelTable& avx2_table() noexcept {
    static const KernelTable table{
        "avx2",        &mark_within_avx2, &count_overlap_avx2,
        &average_avx2, &threshold_avx2,   &gaussian_row_avx2,
    };
    return table;
}

}  // namespace masktrack::simd::detail
