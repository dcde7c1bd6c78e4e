// SPDX-License-Identifier: Apache-2.0

#include "masktrack/crf.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <tuple>

#include "masktrack/parallel.hpp"
#include "masktrack/refiner.hpp"
#include "masktrack/simd/kernels.hpp"

namespace masktrack {

void CrfParams::validate() const {
    if (iterations < 1) throw Error("CrfParams: iterations must be at least 1");
    if (!(appearance_rgb_sigma > 0.0 && appearance_xyt_sigma > 0.0 && smoothness_xy_sigma > 0.0)) {
        throw Error("CrfParams: standard deviations must be positive");
    }
    if (appearance_weight < 0.0 || smoothness_weight < 0.0) {
        throw Error("CrfParams: weights must be non-negative");
    }
    if (temporal_window < 1 || temporal_window % 2 == 0) {
        throw Error("CrfParams: temporal_window must be odd and at least 1");
    }
}

namespace {

struct Window {
    int width = 0;
    int height = 0;
    int frames = 0;
    std::size_t frame_pixels = 0;
    std::vector<float> r, g, b;  // planar colors, all frames
    std::vector<double> unary_fg;  // psi(1)
    std::vector<double> unary_bg;  // psi(0)

    [[nodiscard]] std::size_t size() const noexcept { return frame_pixels * frames; }
};

Window make_window(std::span<const Image> frames, std::span<const ScoreMap> unaries) {
    if (frames.size() != unaries.size()) {
        throw DimensionMismatch("crf: " + std::to_string(frames.size()) + " frames but " +
                                std::to_string(unaries.size()) + " score maps");
    }
    if (frames.empty()) throw Error("crf: empty window");
    Window w;
    w.width = frames[0].width();
    w.height = frames[0].height();
    w.frames = static_cast<int>(frames.size());
    w.frame_pixels = frames[0].pixel_count();
    w.r.resize(w.size());
    w.g.resize(w.size());
    w.b.resize(w.size());
    w.unary_fg.resize(w.size());
    w.unary_bg.resize(w.size());
    for (std::size_t t = 0; t < frames.size(); ++t) {
        require_same_size(frames[t].width(), frames[t].height(), w.width, w.height,
                          "crf frame " + std::to_string(t));
        require_same_size(unaries[t].width(), unaries[t].height(), w.width, w.height,
                          "crf scores " + std::to_string(t));
        const auto px = frames[t].data();
        const int ch = frames[t].channels();
        const auto u = unaries[t].data();
        for (std::size_t i = 0; i < w.frame_pixels; ++i) {
            const std::size_t o = t * w.frame_pixels + i;
            w.r[o] = px[i * ch];
            w.g[o] = px[i * ch + (ch == 3 ? 1 : 0)];
            w.b[o] = px[i * ch + (ch == 3 ? 2 : 0)];
            const double p = std::clamp(static_cast<double>(u[i]), kUnaryClamp, 1.0 - kUnaryClamp);
            w.unary_fg[o] = -std::log(p);
            w.unary_bg[o] = -std::log1p(-p);
        }
    }
    return w;
}

// Precomputed neighbor rows for one kernel: for each (dt, dy) with a nonempty
// span, the half width and the spatial log-weights for dx in [-half, half].
struct OffsetRow {
    int dt = 0;
    int dy = 0;
    int half = 0;
    std::vector<float> spatial_log;
};

std::vector<OffsetRow> offset_rows(double sigma, int max_dt, int max_dy, int max_dx) {
    const double cutoff2 = 9.0 * sigma * sigma;
    const double inv = 1.0 / (2.0 * sigma * sigma);
    std::vector<OffsetRow> rows;
    for (int dt = -max_dt; dt <= max_dt; ++dt) {
        for (int dy = -max_dy; dy <= max_dy; ++dy) {
            const double rest = cutoff2 - double(dt) * dt - double(dy) * dy;
            if (rest < 0.0) continue;
            OffsetRow row;
            row.dt = dt;
            row.dy = dy;
            row.half = std::min(max_dx, static_cast<int>(std::floor(std::sqrt(rest))));
            while (double(row.half) * row.half > rest) --row.half;
            row.spatial_log.resize(2 * static_cast<std::size_t>(row.half) + 1);
            for (int dx = -row.half; dx <= row.half; ++dx) {
                row.spatial_log[dx + row.half] =
                    static_cast<float>(-(double(dx) * dx + double(dy) * dy + double(dt) * dt) * inv);
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

// Upper bound on the kernel mass any pixel loses to the cutoff.
double truncated_mass(const Window& w, const CrfParams& p) {
    auto dropped = [](double sigma, int max_dt, int max_dy, int max_dx) {
        const double cutoff2 = 9.0 * sigma * sigma;
        const double inv = 1.0 / (2.0 * sigma * sigma);
        double mass = 0.0;
        for (int dt = -max_dt; dt <= max_dt; ++dt) {
            for (int dy = -max_dy; dy <= max_dy; ++dy) {
                for (int dx = -max_dx; dx <= max_dx; ++dx) {
                    const double d2 = double(dx) * dx + double(dy) * dy + double(dt) * dt;
                    if (d2 > cutoff2) mass += std::exp(-d2 * inv);
                }
            }
        }
        return mass;
    };
    return p.appearance_weight * dropped(p.appearance_xyt_sigma, w.frames - 1, w.height - 1, w.width - 1) +
           p.smoothness_weight * dropped(p.smoothness_xy_sigma, 0, w.height - 1, w.width - 1);
}

// Solves logit(q) + 2 c q = rhs for q in (0, 1).
double solve_marginal(double rhs, double c) {
    if (c == 0.0) return 1.0 / (1.0 + std::exp(-rhs));
    // The root in logit space lies in [rhs - 2c, rhs].
    double lo = rhs - 2.0 * c;
    double hi = rhs;
    double z = 0.5 * (lo + hi);
    for (int it = 0; it < 100; ++it) {
        const double q = 1.0 / (1.0 + std::exp(-z));
        const double g = z + 2.0 * c * q - rhs;
        if (g > 0.0) hi = z; else lo = z;
        const double dg = 1.0 + 2.0 * c * q * (1.0 - q);
        double next = z - g / dg;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - z) < 1e-13 * (1.0 + std::abs(z))) {
            z = next;
            break;
        }
        z = next;
    }
    return 1.0 / (1.0 + std::exp(-z));
}

class MeanField {
public:
    MeanField(const Window& w, const CrfParams& p)
        : w_(w), p_(p),
          appearance_(offset_rows(p.appearance_xyt_sigma, w.frames - 1, w.height - 1, w.width - 1)),
          smoothness_(offset_rows(p.smoothness_xy_sigma, 0, w.height - 1, w.width - 1)),
          color_scale_(static_cast<float>(1.0 / (2.0 * p.appearance_rgb_sigma * p.appearance_rgb_sigma))),
          curvature_(p.appearance_weight + p.smoothness_weight + truncated_mass(w, p)),
          kernels_(simd::active()) {}

    std::vector<double> run(const SweepObserver& observer) {
        const std::size_t n = w_.size();
        std::vector<double> q(n);
        for (std::size_t i = 0; i < n; ++i) q[i] = 1.0 / (1.0 + std::exp(w_.unary_fg[i] - w_.unary_bg[i]));
        std::vector<float> qf(n);
        std::vector<double> total(n);
        std::vector<double> fg(n);
        double curvature = curvature_;
        for (int sweep = 0; sweep < p_.iterations; ++sweep) {
            for (std::size_t i = 0; i < n; ++i) qf[i] = static_cast<float>(q[i]);
            for (int t = 0; t < w_.frames; ++t) {
                for (int y = 0; y < w_.height; ++y) {
                    for (int x = 0; x < w_.width; ++x) {
                        const std::size_t i = index(t, x, y);
                        std::tie(total[i], fg[i]) = message(qf, t, x, y);
                    }
                }
            }
            if (sweep == 0) {
                // Row sums of the kernel bound its spectrum too (Gershgorin).
                curvature = std::min(curvature, *std::max_element(total.begin(), total.end()));
            }
            for (std::size_t i = 0; i < n; ++i) {
                const double m_fg = fg[i];
                const double m_bg = total[i] - fg[i];
                const double rhs =
                    (w_.unary_bg[i] - w_.unary_fg[i]) + (m_fg - m_bg) + 2.0 * curvature * q[i];
                q[i] = solve_marginal(rhs, curvature);
            }
            if (observer) observer(sweep, q);
        }
        return q;
    }

private:
    [[nodiscard]] std::size_t index(int t, int x, int y) const {
        return static_cast<std::size_t>(t) * w_.frame_pixels + static_cast<std::size_t>(y) * w_.width + x;
    }

    // Weighted sums over neighbors j != i: (sum k_ij, sum k_ij q_j).
    [[nodiscard]] std::pair<double, double> message(const std::vector<float>& qf, int t, int x, int y) const {
        const std::size_t i = index(t, x, y);
        double total = 0.0;
        double fg = 0.0;
        auto accumulate = [&](const std::vector<OffsetRow>& rows, double weight, bool color) {
            if (weight == 0.0) return;
            double row_total = 0.0;
            double row_fg = 0.0;
            for (const auto& row : rows) {
                const int tt = t + row.dt;
                const int yy = y + row.dy;
                if (tt < 0 || tt >= w_.frames || yy < 0 || yy >= w_.height) continue;
                const int x0 = std::max(0, x - row.half);
                const int x1 = std::min(w_.width - 1, x + row.half);
                const std::size_t base = index(tt, 0, yy);
                auto segment = [&](int a, int b) {
                    if (a > b) return;
                    simd::GaussianRow g;
                    g.count = static_cast<std::size_t>(b - a + 1);
                    g.fg = qf.data() + base + a;
                    g.spatial_log = row.spatial_log.data() + (a - x + row.half);
                    if (color) {
                        g.r = w_.r.data() + base + a;
                        g.g = w_.g.data() + base + a;
                        g.b = w_.b.data() + base + a;
                        g.center_r = w_.r[i];
                        g.center_g = w_.g[i];
                        g.center_b = w_.b[i];
                        g.color_scale = color_scale_;
                    }
                    const simd::GaussianSums s = kernels_.gaussian_row(g);
                    row_total += s.weight;
                    row_fg += s.weighted_fg;
                };
                if (row.dt == 0 && row.dy == 0) {
                    segment(x0, x - 1);
                    segment(x + 1, x1);
                } else {
                    segment(x0, x1);
                }
            }
            total += weight * row_total;
            fg += weight * row_fg;
        };
        accumulate(appearance_, p_.appearance_weight, true);
        accumulate(smoothness_, p_.smoothness_weight, false);
        return {total, fg};
    }

    const Window& w_;
    const CrfParams& p_;
    std::vector<OffsetRow> appearance_;
    std::vector<OffsetRow> smoothness_;
    float color_scale_;
    double curvature_;
    const simd::KernelTable& kernels_;
};

std::vector<ScoreMap> to_score_maps(const Window& w, const std::vector<double>& q) {
    std::vector<ScoreMap> out;
    out.reserve(static_cast<std::size_t>(w.frames));
    for (int t = 0; t < w.frames; ++t) {
        std::vector<float> v(w.frame_pixels);
        for (std::size_t i = 0; i < w.frame_pixels; ++i) {
            v[i] = std::clamp(static_cast<float>(q[t * w.frame_pixels + i]), 0.0F, 1.0F);
        }
        out.emplace_back(w.width, w.height, std::move(v));
    }
    return out;
}

}  // namespace

std::vector<ScoreMap> crf_refine(std::span<const Image> frames, std::span<const ScoreMap> unaries,
                                 const CrfParams& params, const SweepObserver& observer) {
    params.validate();
    if (static_cast<int>(frames.size()) != params.temporal_window) {
        throw Error("crf_refine: window holds " + std::to_string(frames.size()) +
                    " frames, temporal_window is " + std::to_string(params.temporal_window));
    }
    const Window w = make_window(frames, unaries);
    MeanField mf(w, params);
    return to_score_maps(w, mf.run(observer));
}

std::vector<BinaryMask> crf_exact_map(std::span<const Image> frames, std::span<const ScoreMap> unaries,
                                      const CrfParams& params) {
    params.validate();
    const Window w = make_window(frames, unaries);
    const std::size_t n = w.size();
    if (n > kExactMaxPixels) {
        throw Error("crf_exact_map: " + std::to_string(n) + " pixels exceeds the limit of " +
                    std::to_string(kExactMaxPixels));
    }

    // Dense pairwise weights, straight from the energy definition.
    std::vector<double> k(n * n, 0.0);
    const double app_cut = 9.0 * params.appearance_xyt_sigma * params.appearance_xyt_sigma;
    const double smooth_cut = 9.0 * params.smoothness_xy_sigma * params.smoothness_xy_sigma;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const auto ti = static_cast<double>(i / w.frame_pixels);
            const auto tj = static_cast<double>(j / w.frame_pixels);
            const auto xi = static_cast<double>((i % w.frame_pixels) % w.width);
            const auto yi = static_cast<double>((i % w.frame_pixels) / w.width);
            const auto xj = static_cast<double>((j % w.frame_pixels) % w.width);
            const auto yj = static_cast<double>((j % w.frame_pixels) / w.width);
            const double pos2 = (xi - xj) * (xi - xj) + (yi - yj) * (yi - yj) + (ti - tj) * (ti - tj);
            const double col2 = double(w.r[i] - w.r[j]) * (w.r[i] - w.r[j]) +
                                double(w.g[i] - w.g[j]) * (w.g[i] - w.g[j]) +
                                double(w.b[i] - w.b[j]) * (w.b[i] - w.b[j]);
            double v = 0.0;
            if (pos2 <= app_cut) {
                v += params.appearance_weight *
                     std::exp(-col2 / (2.0 * params.appearance_rgb_sigma * params.appearance_rgb_sigma) -
                              pos2 / (2.0 * params.appearance_xyt_sigma * params.appearance_xyt_sigma));
            }
            if (ti == tj && pos2 <= smooth_cut) {
                v += params.smoothness_weight *
                     std::exp(-pos2 / (2.0 * params.smoothness_xy_sigma * params.smoothness_xy_sigma));
            }
            k[i * n + j] = v;
        }
    }

    auto energy = [&](std::uint32_t labels) {
        double e = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const bool li = (labels >> i) & 1U;
            e += li ? w.unary_fg[i] : w.unary_bg[i];
            for (std::size_t j = i + 1; j < n; ++j) {
                if (li != (((labels >> j) & 1U) != 0)) e += k[i * n + j];
            }
        }
        return e;
    };

    std::uint32_t best = 0;
    double best_energy = energy(0);
    const std::uint32_t count = std::uint32_t{1} << n;
    for (std::uint32_t labels = 1; labels < count; ++labels) {
        const double e = energy(labels);
        if (e < best_energy) {
            best_energy = e;
            best = labels;
        }
    }

    std::vector<BinaryMask> out;
    for (int t = 0; t < w.frames; ++t) {
        BinaryMask m(w.width, w.height);
        for (std::size_t i = 0; i < w.frame_pixels; ++i) {
            m.data()[i] = static_cast<std::uint8_t>((best >> (t * w.frame_pixels + i)) & 1U);
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<BinaryMask> postprocess_sequence(std::span<const Image> frames,
                                             std::span<const ScoreMap> scores, const CrfParams& params,
                                             float tau, int jobs) {
    params.validate();
    if (frames.size() != scores.size()) {
        throw DimensionMismatch("postprocess_sequence: " + std::to_string(frames.size()) +
                                " frames but " + std::to_string(scores.size()) + " score maps");
    }
    const int n = static_cast<int>(frames.size());
    const int half = params.temporal_window / 2;
    std::vector<BinaryMask> out(frames.size());
    parallel_for(frames.size(), jobs, [&](std::size_t center) {
        const int t = static_cast<int>(center);
        std::vector<Image> window_frames;
        std::vector<ScoreMap> window_scores;
        for (int o = -half; o <= half; ++o) {
            const auto src = static_cast<std::size_t>(std::clamp(t + o, 0, n - 1));
            window_frames.push_back(frames[src]);
            window_scores.push_back(scores[src]);
        }
        const auto marginals = crf_refine(window_frames, window_scores, params);
        out[center] = threshold(marginals[static_cast<std::size_t>(half)], tau);
    });
    return out;
}

}  // namespace masktrack
