// SPDX-License-Identifier: Apache-2.0

#include "masktrack/mask_synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "masktrack/morphology.hpp"

namespace masktrack {

namespace {

inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

void require_nonempty(const BinaryMask& mask, const char* what) {
    if (mask.pixel_count() == 0 || !mask.any()) throw Error(std::string(what) + ": empty input mask");
}

Point2 centroid(const BinaryMask& mask) {
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.at(x, y)) continue;
            sx += x;
            sy += y;
            ++n;
        }
    }
    return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

}  // namespace

void DeformationParams::validate() const {
    if (scale_jitter < 0.0 || translate_jitter < 0.0 || tps_point_jitter < 0.0) {
        throw Error("DeformationParams: jitters must be non-negative");
    }
    if (scale_jitter >= 1.0) throw Error("DeformationParams: scale_jitter must be below 1");
    if (enable_nonrigid && tps_control_points < 3) {
        throw Error("DeformationParams: at least 3 TPS control points are required");
    }
    if (dilation_radius < 0) throw Error("DeformationParams: dilation_radius must be non-negative");
}

DeformationParams DeformationParams::identity() {
    DeformationParams p;
    p.enable_affine = false;
    p.enable_nonrigid = false;
    p.enable_dilation = false;
    return p;
}

void AugmentationParams::validate() const {
    if (samples_target < 1) throw Error("AugmentationParams: samples_target must be at least 1");
    deformation.validate();
}

AffineDraw sample_affine(const BinaryMask& mask, const DeformationParams& params, Rng& rng) {
    require_nonempty(mask, "affine_deform");
    const BoundingBox box = tight_box(mask);
    AffineDraw draw;
    const double s = params.scale_jitter;
    draw.scale_x = rng.uniform(1.0 - s, 1.0 + s);
    draw.scale_y = params.anisotropic_scale ? rng.uniform(1.0 - s, 1.0 + s) : draw.scale_x;
    const double tx = params.translate_jitter * box.width();
    const double ty = params.translate_jitter * box.height();
    draw.translate_x = rng.uniform(-tx, tx);
    draw.translate_y = rng.uniform(-ty, ty);
    return draw;
}

BinaryMask apply_affine(const BinaryMask& mask, const AffineDraw& draw) {
    require_nonempty(mask, "affine_deform");
    const Point2 c = centroid(mask);
    BinaryMask out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            const int sx = round_half_up(c.x + (x - draw.translate_x - c.x) / draw.scale_x);
            const int sy = round_half_up(c.y + (y - draw.translate_y - c.y) / draw.scale_y);
            if (mask.contains(sx, sy) && mask.at(sx, sy)) out.set(x, y, true);
        }
    }
    return out;
}

BinaryMask affine_deform(const BinaryMask& mask, const DeformationParams& params, Rng& rng) {
    return apply_affine(mask, sample_affine(mask, params, rng));
}

TpsDraw sample_tps(const BinaryMask& mask, const DeformationParams& params, Rng& rng) {
    require_nonempty(mask, "tps_deform");
    if (params.tps_control_points < 3) throw Error("tps_deform: at least 3 control points required");
    const BoundingBox box = tight_box(mask);
    const double w = box.width();
    const double h = box.height();
    const double jx = params.tps_point_jitter * w;
    const double jy = params.tps_point_jitter * h;
    const auto n = static_cast<std::size_t>(params.tps_control_points);

    for (int attempt = 0; attempt < kTpsRetries; ++attempt) {
        TpsDraw draw;
        draw.controls.reserve(n);
        draw.displacements.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            draw.controls.push_back({rng.uniform(box.x_min - 0.5, box.x_max + 0.5),
                                     rng.uniform(box.y_min - 0.5, box.y_max + 0.5)});
        }
        for (std::size_t i = 0; i < n; ++i) {
            draw.displacements.push_back({rng.uniform(-jx, jx), rng.uniform(-jy, jy)});
        }
        std::vector<Point2> moved(n);
        for (std::size_t i = 0; i < n; ++i) {
            moved[i] = {draw.controls[i].x + draw.displacements[i].x,
                        draw.controls[i].y + draw.displacements[i].y};
        }
        if (!collinear(draw.controls, w * h) && !collinear(moved, w * h)) return draw;
    }
    throw DegenerateControlPoints("tps_deform: no non-collinear control configuration after " +
                                  std::to_string(kTpsRetries) + " draws");
}

BinaryMask apply_tps(const BinaryMask& mask, const TpsDraw& draw) {
    require_nonempty(mask, "tps_deform");
    const std::size_t n = draw.controls.size();
    std::vector<Point2> moved(n);
    std::vector<Point2> back(n);
    for (std::size_t i = 0; i < n; ++i) {
        moved[i] = {draw.controls[i].x + draw.displacements[i].x,
                    draw.controls[i].y + draw.displacements[i].y};
        back[i] = {-draw.displacements[i].x, -draw.displacements[i].y};
    }
    const ThinPlateSpline spline = ThinPlateSpline::fit(moved, back);
    BinaryMask out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            const Point2 offset = spline({double(x), double(y)});
            const int sx = round_half_up(x + offset.x);
            const int sy = round_half_up(y + offset.y);
            if (mask.contains(sx, sy) && mask.at(sx, sy)) out.set(x, y, true);
        }
    }
    return out;
}

BinaryMask tps_deform(const BinaryMask& mask, const DeformationParams& params, Rng& rng) {
    return apply_tps(mask, sample_tps(mask, params, rng));
}

BinaryMask synthesize_input_mask(const BinaryMask& annotation, const DeformationParams& params,
                                 Rng& rng) {
    params.validate();
    require_nonempty(annotation, "synthesize_input_mask");
    BinaryMask mask = annotation;
    if (params.enable_affine) {
        BinaryMask next = affine_deform(mask, params, rng);
        if (next.any()) mask = std::move(next);
    }
    if (params.enable_nonrigid) {
        BinaryMask next = tps_deform(mask, params, rng);
        if (next.any()) mask = std::move(next);
    }
    if (params.enable_dilation) mask = dilate(mask, params.dilation_radius);
    return mask;
}

CorpusStats build_offline_corpus(std::span<const CorpusItem> items, const DeformationParams& params,
                                 int masks_per_image,
                                 const std::function<void(TrainingSample&&)>& sink) {
    params.validate();
    if (masks_per_image < 1) throw Error("build_offline_corpus: masks_per_image must be at least 1");
    CorpusStats stats;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const CorpusItem& item = items[i];
        if (item.mask.pixel_count() == 0 || !item.mask.any()) {
            ++stats.skipped;
            continue;
        }
        require_same_size(item.image.width(), item.image.height(), item.mask.width(),
                          item.mask.height(), "corpus item '" + item.id + "'");
        Rng rng(item_seed(params.rng_seed, i));
        for (int k = 0; k < masks_per_image; ++k) {
            TrainingSample sample;
            sample.id = item.id + "_" + std::to_string(k);
            sample.image = item.image;
            sample.input_mask = synthesize_input_mask(item.mask, params, rng);
            sample.target_mask = item.mask;
            sink(std::move(sample));
            ++stats.samples;
        }
    }
    return stats;
}

std::vector<TrainingSample> build_offline_corpus(std::span<const CorpusItem> items,
                                                 const DeformationParams& params,
                                                 int masks_per_image, CorpusStats* stats) {
    std::vector<TrainingSample> out;
    const CorpusStats s = build_offline_corpus(items, params, masks_per_image,
                                               [&out](TrainingSample&& t) { out.push_back(std::move(t)); });
    if (stats != nullptr) *stats = s;
    return out;
}

namespace {

// Source coordinate (nearest) of output pixel (x, y) under `t`.
struct ViewMap {
    double cos_a = 1.0;
    double sin_a = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    bool flip = false;
    int width = 0;

    ViewMap(const ViewTransform& t, int w, int h)
        : cos_a(std::cos(t.degrees * std::numbers::pi / 180.0)),
          sin_a(std::sin(t.degrees * std::numbers::pi / 180.0)),
          cx(0.5 * (w - 1)),
          cy(0.5 * (h - 1)),
          flip(t.flip),
          width(w) {}

    [[nodiscard]] std::pair<int, int> source(int x, int y) const {
        const double fx = flip ? double(width - 1 - x) : double(x);
        const double dx = fx - cx;
        const double dy = y - cy;
        // Inverse rotation.
        const double sx = cx + cos_a * dx + sin_a * dy;
        const double sy = cy - sin_a * dx + cos_a * dy;
        return {round_half_up(sx), round_half_up(sy)};
    }
};

}  // namespace

Image transform_image(const Image& image, const ViewTransform& t) {
    if (!t.flip && t.degrees == 0.0) return image;
    const ViewMap map(t, image.width(), image.height());
    Image out(image.width(), image.height(), image.channels());
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            auto [sx, sy] = map.source(x, y);
            sx = std::clamp(sx, 0, image.width() - 1);
            sy = std::clamp(sy, 0, image.height() - 1);
            for (int c = 0; c < image.channels(); ++c) out.at(x, y, c) = image.at(sx, sy, c);
        }
    }
    return out;
}

BinaryMask transform_mask(const BinaryMask& mask, const ViewTransform& t) {
    if (!t.flip && t.degrees == 0.0) return mask;
    const ViewMap map(t, mask.width(), mask.height());
    BinaryMask out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            const auto [sx, sy] = map.source(x, y);
            if (mask.contains(sx, sy) && mask.at(sx, sy)) out.set(x, y, true);
        }
    }
    return out;
}

void build_online_set(const Image& first_frame, const BinaryMask& annotation,
                      const AugmentationParams& params,
                      const std::function<void(TrainingSample&&)>& sink) {
    params.validate();
    require_nonempty(annotation, "build_online_set");
    require_same_size(first_frame.width(), first_frame.height(), annotation.width(),
                      annotation.height(), "build_online_set");

    std::vector<ViewTransform> views;
    const std::vector<double> rotations =
        params.rotations.empty() ? std::vector<double>{0.0} : params.rotations;
    for (const bool flip : params.flips ? std::vector<bool>{false, true} : std::vector<bool>{false}) {
        for (const double deg : rotations) views.push_back({flip, deg});
    }

    // Transformed views are shared across deformation draws.
    std::vector<std::pair<Image, BinaryMask>> rendered;
    rendered.reserve(views.size());
    for (const auto& v : views) {
        rendered.emplace_back(transform_image(first_frame, v), transform_mask(annotation, v));
    }
    bool any_usable = false;
    for (const auto& r : rendered) any_usable = any_usable || r.second.any();
    if (!any_usable) throw Error("build_online_set: every view removes the object from the canvas");

    const auto target = static_cast<std::size_t>(params.samples_target);
    std::size_t emitted = 0;
    for (std::size_t i = 0; emitted < target; ++i) {
        const auto& [image, mask] = rendered[i % views.size()];
        if (!mask.any()) continue;
        Rng rng(item_seed(params.deformation.rng_seed, i));
        TrainingSample sample;
        sample.id = "online_" + std::to_string(emitted);
        sample.image = image;
        sample.input_mask = synthesize_input_mask(mask, params.deformation, rng);
        sample.target_mask = mask;
        sink(std::move(sample));
        ++emitted;
    }
}

std::vector<TrainingSample> build_online_set(const Image& first_frame, const BinaryMask& annotation,
                                             const AugmentationParams& params) {
    std::vector<TrainingSample> out;
    build_online_set(first_frame, annotation, params,
                     [&out](TrainingSample&& t) { out.push_back(std::move(t)); });
    return out;
}

}  // namespace masktrack
