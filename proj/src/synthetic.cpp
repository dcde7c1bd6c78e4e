// SPDX-License-Identifier: Apache-2.0

#include "masktrack/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "masktrack/image_io.hpp"
#include "masktrack/random.hpp"

namespace masktrack {

void SyntheticOptions::validate() const {
    if (sequences < 1 || frames < 2) throw Error("SyntheticOptions: need at least one sequence of two frames");
    if (width < 48 || height < 48) throw Error("SyntheticOptions: frames must be at least 48x48");
    if (!(min_speed > 0.0 && max_speed >= min_speed)) throw Error("SyntheticOptions: bad speed range");
}

namespace {

using Rgb = std::array<int, 3>;

// Warm object colors and cool background colors keep the classes separable.
constexpr std::array<Rgb, 4> kObjectColors{{{220, 40, 40}, {235, 200, 30}, {225, 60, 190}, {240, 130, 20}}};
constexpr std::array<Rgb, 3> kBackgroundColors{{{40, 110, 60}, {50, 80, 140}, {70, 120, 120}}};
constexpr Rgb kOccluderColor{30, 40, 90};

struct Shape {
    bool square = false;
    double cx = 0.0;
    double cy = 0.0;
    double size = 0.0;  // radius or half side

    [[nodiscard]] bool covers(int x, int y) const {
        const double dx = x - cx;
        const double dy = y - cy;
        if (square) return std::abs(dx) <= size && std::abs(dy) <= size;
        return dx * dx + dy * dy <= size * size;
    }
};

std::uint8_t clamp_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

VideoSequence synthetic_sequence(int index, const SyntheticOptions& options) {
    options.validate();
    Rng rng(item_seed(options.seed, static_cast<std::uint64_t>(index)));
    const int w = options.width;
    const int h = options.height;
    const int n = options.frames;

    const bool square = index % 2 == 1;
    const bool occluded = index % 2 == 1;
    const bool scaling = index % 3 == 2;
    const Rgb object = kObjectColors[static_cast<std::size_t>(index) % kObjectColors.size()];
    const Rgb background = kBackgroundColors[static_cast<std::size_t>(index) % kBackgroundColors.size()];

    const double base_size = rng.uniform(9.0, 12.0);
    const double end_size = scaling ? base_size * rng.uniform(1.25, 1.4) : base_size;
    const double speed = rng.uniform(options.min_speed, options.max_speed);
    const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    double vx = speed * std::cos(angle);
    double vy = speed * std::sin(angle);
    const double margin = end_size + 1.0;
    double cx = rng.uniform(margin, w - 1 - margin);
    double cy = rng.uniform(margin, h - 1 - margin);

    // Texture phases.
    const double fx = rng.uniform(0.05, 0.15);
    const double fy = rng.uniform(0.05, 0.15);
    const double phase = rng.uniform(0.0, 6.28);

    // Occluding vertical bar sweeping horizontally.
    const int bar_width = 7;
    double bar_x = rng.uniform(0.0, w / 3.0);
    const double bar_v = 2.0;

    std::vector<Shape> shapes;
    std::vector<double> bars;
    for (int t = 0; t < n; ++t) {
        const double size = base_size + (end_size - base_size) * t / std::max(1, n - 1);
        shapes.push_back({square, cx, cy, size});
        bars.push_back(bar_x);
        // Advance with reflection at the walls.
        cx += vx;
        cy += vy;
        if (cx < margin) { cx = 2 * margin - cx; vx = -vx; }
        if (cx > w - 1 - margin) { cx = 2 * (w - 1 - margin) - cx; vx = -vx; }
        if (cy < margin) { cy = 2 * margin - cy; vy = -vy; }
        if (cy > h - 1 - margin) { cy = 2 * (h - 1 - margin) - cy; vy = -vy; }
        bar_x += bar_v;
        if (bar_x > w - bar_width) bar_x -= (w - bar_width);
    }
    auto in_bar = [&](int t, int x) {
        return occluded && x >= static_cast<int>(bars[static_cast<std::size_t>(t)]) &&
               x < static_cast<int>(bars[static_cast<std::size_t>(t)]) + bar_width;
    };

    VideoSequence seq;
    char name[32];
    std::snprintf(name, sizeof name, "synth%02d", index);
    seq.name = name;
    seq.category = square ? "square" : "disc";
    seq.ground_truth.emplace();
    seq.flow.emplace();
    bool overlap_seen = false;

    for (int t = 0; t < n; ++t) {
        const Shape& s = shapes[static_cast<std::size_t>(t)];
        Image img(w, h, 3);
        BinaryMask gt(w, h);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double tex = 18.0 * std::sin(fx * x + phase) * std::cos(fy * y - phase);
                Rgb c = background;
                double shade = tex;
                if (in_bar(t, x)) {
                    c = kOccluderColor;
                    shade = 0.0;
                    if (s.covers(x, y)) overlap_seen = true;
                } else if (s.covers(x, y)) {
                    c = object;
                    shade = 0.0;
                    gt.set(x, y, true);
                }
                for (int k = 0; k < 3; ++k) {
                    img.at(x, y, k) = clamp_byte(c[static_cast<std::size_t>(k)] + shade + rng.uniform(-6.0, 6.0));
                }
            }
        }
        seq.frames.push_back(std::move(img));
        seq.ground_truth->push_back(std::move(gt));
    }

    // Forward flow t -> t+1: the visible object moves with its center, the
    // bar with its own velocity, the background is static.
    for (int t = 0; t + 1 < n; ++t) {
        const Shape& a = shapes[static_cast<std::size_t>(t)];
        const Shape& b = shapes[static_cast<std::size_t>(t + 1)];
        const double scale = b.size / a.size;
        std::vector<float> uv(static_cast<std::size_t>(w) * h * 2, 0.0F);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 2;
                if (in_bar(t, x)) {
                    uv[i] = static_cast<float>(bars[static_cast<std::size_t>(t + 1)] - bars[static_cast<std::size_t>(t)]);
                } else if (a.covers(x, y)) {
                    uv[i] = static_cast<float>(b.cx + (x - a.cx) * scale - x);
                    uv[i + 1] = static_cast<float>(b.cy + (y - a.cy) * scale - y);
                }
            }
        }
        seq.flow->emplace_back(w, h, std::move(uv));
    }

    seq.attributes.push_back("fast-motion");
    if (overlap_seen) seq.attributes.push_back("occlusion");
    if (scaling) seq.attributes.push_back("scale-variation");
    return seq;
}

DatasetManifest write_synthetic_dataset(const std::filesystem::path& root, const SyntheticOptions& options) {
    options.validate();
    namespace fs = std::filesystem;
    DatasetManifest manifest;
    manifest.source = root / "manifest.json";
    for (int i = 0; i < options.sequences; ++i) {
        const VideoSequence seq = synthetic_sequence(i, options);
        SequenceDescriptor d;
        d.name = seq.name;
        d.attributes = seq.attributes;
        d.category = seq.category;
        d.width = options.width;
        d.height = options.height;
        d.gt_masks.emplace();
        d.flow.emplace();
        for (int t = 0; t < seq.frame_count(); ++t) {
            char file[32];
            std::snprintf(file, sizeof file, "%05d", t);
            const fs::path dir = root / seq.name;
            d.frames.push_back(dir / "frames" / (std::string(file) + ".png"));
            d.gt_masks->push_back(dir / "masks" / (std::string(file) + ".png"));
            write_image(d.frames.back(), seq.frames[static_cast<std::size_t>(t)]);
            write_mask(d.gt_masks->back(), (*seq.ground_truth)[static_cast<std::size_t>(t)]);
            if (t + 1 < seq.frame_count()) {
                d.flow->push_back(dir / "flow" / (std::string(file) + ".flo"));
                write_flo(d.flow->back(), (*seq.flow)[static_cast<std::size_t>(t)]);
            }
        }
        manifest.sequences.push_back(std::move(d));
    }
    save_manifest(manifest.source, manifest);
    return manifest;
}

double mean_object_motion(const VideoSequence& sequence) {
    if (!sequence.ground_truth || sequence.frame_count() < 2) return 0.0;
    auto centroid = [](const BinaryMask& m) {
        double sx = 0.0, sy = 0.0, c = 0.0;
        for (int y = 0; y < m.height(); ++y) {
            for (int x = 0; x < m.width(); ++x) {
                if (m.at(x, y)) { sx += x; sy += y; c += 1.0; }
            }
        }
        return std::array<double, 2>{c > 0 ? sx / c : 0.0, c > 0 ? sy / c : 0.0};
    };
    double total = 0.0;
    const auto& gt = *sequence.ground_truth;
    for (std::size_t t = 1; t < gt.size(); ++t) {
        const auto a = centroid(gt[t - 1]);
        const auto b = centroid(gt[t]);
        total += std::hypot(b[0] - a[0], b[1] - a[1]);
    }
    return total / static_cast<double>(gt.size() - 1);
}

}  // namespace masktrack
