// SPDX-License-Identifier: Apache-2.0
//
// Straightforward reimplementations used as test oracles. They share no code
// with the library beyond the raster types.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "masktrack/crf.hpp"
#include "masktrack/types.hpp"

namespace oracle {

using masktrack::BinaryMask;
using masktrack::Image;
using masktrack::ScoreMap;

/// Pixel is set iff some input pixel lies within Euclidean distance r.
inline BinaryMask dilate(const BinaryMask& m, int r) {
    BinaryMask out(m.width(), m.height());
    std::vector<std::pair<int, int>> fg;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.at(x, y)) fg.emplace_back(x, y);
    for (int y = 0; y < m.height(); ++y) {
        for (int x = 0; x < m.width(); ++x) {
            for (const auto& [fx, fy] : fg) {
                if ((fx - x) * (fx - x) + (fy - y) * (fy - y) <= r * r) {
                    out.set(x, y, true);
                    break;
                }
            }
        }
    }
    return out;
}

inline double iou(const BinaryMask& a, const BinaryMask& b) {
    long inter = 0;
    long uni = 0;
    for (int y = 0; y < a.height(); ++y) {
        for (int x = 0; x < a.width(); ++x) {
            inter += a.at(x, y) && b.at(x, y);
            uni += a.at(x, y) || b.at(x, y);
        }
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Dense pairwise weights of the CRF energy for a window of frames.
struct DenseCrf {
    std::size_t n = 0;
    std::vector<double> psi_fg;
    std::vector<double> psi_bg;
    std::vector<double> k;  // n x n, zero diagonal

    DenseCrf(const std::vector<Image>& frames, const std::vector<ScoreMap>& unaries,
             const masktrack::CrfParams& p) {
        const int w = frames[0].width();
        const int h = frames[0].height();
        const std::size_t per = static_cast<std::size_t>(w) * h;
        n = per * frames.size();
        struct Px {
            double x, y, t, r, g, b;
        };
        std::vector<Px> px;
        for (std::size_t t = 0; t < frames.size(); ++t) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const Image& f = frames[t];
                    const int c1 = f.channels() == 3 ? 1 : 0;
                    const int c2 = f.channels() == 3 ? 2 : 0;
                    px.push_back({double(x), double(y), double(t), double(f.at(x, y, 0)),
                                  double(f.at(x, y, c1)), double(f.at(x, y, c2))});
                    double q = unaries[t].at(x, y);
                    q = std::min(std::max(q, 1e-5), 1.0 - 1e-5);
                    psi_fg.push_back(-std::log(q));
                    psi_bg.push_back(-std::log(1.0 - q));
                }
            }
        }
        k.assign(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const Px& a = px[i];
                const Px& b = px[j];
                const double d2 = (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                                  (a.t - b.t) * (a.t - b.t);
                const double c2 = (a.r - b.r) * (a.r - b.r) + (a.g - b.g) * (a.g - b.g) +
                                  (a.b - b.b) * (a.b - b.b);
                double v = 0.0;
                if (std::sqrt(d2) <= 3.0 * p.appearance_xyt_sigma) {
                    v += p.appearance_weight *
                         std::exp(-c2 / (2 * p.appearance_rgb_sigma * p.appearance_rgb_sigma) -
                                  d2 / (2 * p.appearance_xyt_sigma * p.appearance_xyt_sigma));
                }
                if (a.t == b.t && std::sqrt(d2) <= 3.0 * p.smoothness_xy_sigma) {
                    v += p.smoothness_weight *
                         std::exp(-d2 / (2 * p.smoothness_xy_sigma * p.smoothness_xy_sigma));
                }
                k[i * n + j] = v;
            }
        }
    }

    [[nodiscard]] double energy(const std::vector<int>& labels) const {
        double e = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            e += labels[i] ? psi_fg[i] : psi_bg[i];
            for (std::size_t j = i + 1; j < n; ++j)
                if (labels[i] != labels[j]) e += k[i * n + j];
        }
        return e;
    }

    /// Expected energy minus entropy of the factorized distribution q.
    [[nodiscard]] double free_energy(const std::vector<double>& q) const {
        double f = 0.0;
        auto xlogx = [](double v) { return v > 0.0 ? v * std::log(v) : 0.0; };
        for (std::size_t i = 0; i < n; ++i) {
            f += q[i] * psi_fg[i] + (1.0 - q[i]) * psi_bg[i] + xlogx(q[i]) + xlogx(1.0 - q[i]);
            for (std::size_t j = i + 1; j < n; ++j) {
                f += k[i * n + j] * (q[i] * (1.0 - q[j]) + q[j] * (1.0 - q[i]));
            }
        }
        return f;
    }

    /// All minimizing labelings by enumeration.
    [[nodiscard]] std::vector<std::vector<int>> map_labelings() const {
        std::vector<std::vector<int>> best;
        double best_e = std::numeric_limits<double>::infinity();
        for (std::uint32_t code = 0; code < (1U << n); ++code) {
            std::vector<int> l(n);
            for (std::size_t i = 0; i < n; ++i) l[i] = (code >> i) & 1U;
            const double e = energy(l);
            if (e < best_e - 1e-12) {
                best_e = e;
                best = {l};
            } else if (std::abs(e - best_e) <= 1e-12) {
                best.push_back(l);
            }
        }
        return best;
    }

    /// Exact marginals P(x_i = 1) under exp(-E), by enumeration.
    [[nodiscard]] std::vector<double> exact_marginals() const {
        std::vector<double> e(1U << n);
        for (std::uint32_t code = 0; code < e.size(); ++code) {
            std::vector<int> l(n);
            for (std::size_t i = 0; i < n; ++i) l[i] = (code >> i) & 1U;
            e[code] = energy(l);
        }
        const double lo = *std::min_element(e.begin(), e.end());
        std::vector<double> m(n, 0.0);
        double z = 0.0;
        for (std::uint32_t code = 0; code < e.size(); ++code) {
            const double w = std::exp(lo - e[code]);
            z += w;
            for (std::size_t i = 0; i < n; ++i)
                if ((code >> i) & 1U) m[i] += w;
        }
        for (double& v : m) v /= z;
        return m;
    }
};

/// Literal forward/backward formulation of multi-annotation propagation:
/// one full-length pass per direction, restarted at every annotated frame,
/// then each frame takes the pass whose source annotation is nearest
/// (ties to the forward pass). Segment annotations only.
struct MultiResult {
    std::vector<BinaryMask> masks;
    std::vector<int> source;
};

inline MultiResult two_pass_multi(int frames, const std::vector<std::pair<int, BinaryMask>>& anns,
                                  const std::function<ScoreMap(int, const BinaryMask&)>& scorer,
                                  int radius, float tau, bool fallback) {
    auto step = [&](const BinaryMask& prev, int t) {
        const BinaryMask guide = oracle::dilate(prev, radius);
        const ScoreMap s = scorer(t, guide);
        BinaryMask est(s.width(), s.height());
        bool any = false;
        for (int y = 0; y < s.height(); ++y)
            for (int x = 0; x < s.width(); ++x)
                if (s.at(x, y) > tau) {
                    est.set(x, y, true);
                    any = true;
                }
        return (!any && fallback) ? guide : est;
    };
    auto annotation_at = [&](int t) -> const BinaryMask* {
        for (const auto& [f, m] : anns)
            if (f == t) return &m;
        return nullptr;
    };
    std::vector<std::optional<BinaryMask>> fwd(frames), bwd(frames);
    std::vector<int> fsrc(frames, -1), bsrc(frames, -1);
    for (int t = 0; t < frames; ++t) {
        if (const auto* a = annotation_at(t)) {
            fwd[t] = *a;
            fsrc[t] = t;
        } else if (t > 0 && fwd[t - 1]) {
            fwd[t] = step(*fwd[t - 1], t);
            fsrc[t] = fsrc[t - 1];
        }
    }
    for (int t = frames - 1; t >= 0; --t) {
        if (const auto* a = annotation_at(t)) {
            bwd[t] = *a;
            bsrc[t] = t;
        } else if (t + 1 < frames && bwd[t + 1]) {
            bwd[t] = step(*bwd[t + 1], t);
            bsrc[t] = bsrc[t + 1];
        }
    }
    MultiResult r;
    for (int t = 0; t < frames; ++t) {
        const bool use_fwd = fwd[t] && (!bwd[t] || t - fsrc[t] <= bsrc[t] - t);
        r.masks.push_back(use_fwd ? *fwd[t] : *bwd[t]);
        r.source.push_back(use_fwd ? fsrc[t] : bsrc[t]);
    }
    return r;
}

/// Type-7 quantile written out from the definition h = (n - 1) p.
inline double quantile7(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - std::floor(h)) * (v[hi] - v[lo]);
}

}  // namespace oracle
