// SPDX-License-Identifier: Apache-2.0
//
// Synthesis of rough input masks from clean annotations: a random affine
// jitter, a random thin-plate-spline warp and a disc dilation, applied in that
// order. Used to build offline training corpora and the per-video online
// augmentation set.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "masktrack/random.hpp"
#include "masktrack/tps.hpp"
#include "masktrack/types.hpp"

namespace masktrack {

struct DeformationParams {
    double scale_jitter = 0.05;      // fraction of object size
    double translate_jitter = 0.10;  // fraction of object bounding-box width/height
    int tps_control_points = 5;
    double tps_point_jitter = 0.10;  // fraction of object bounding-box width/height
    int dilation_radius = 5;
    bool enable_affine = true;
    bool enable_nonrigid = true;
    bool enable_dilation = true;
    bool anisotropic_scale = false;
    std::uint64_t rng_seed = 0;

    /// Throws on negative jitters/radius or too few control points.
    void validate() const;

    /// Every stage off.
    static DeformationParams identity();
};

struct AugmentationParams {
    bool flips = true;
    std::vector<double> rotations{0.0, 10.0, -10.0, 20.0, -20.0};  // degrees
    int samples_target = 1000;
    DeformationParams deformation;

    void validate() const;
};

struct TrainingSample {
    std::string id;
    Image image;
    BinaryMask input_mask;
    BinaryMask target_mask;
};

/// One sampled affine jitter: scaling about the foreground centroid, then translation.
struct AffineDraw {
    double scale_x = 1.0;
    double scale_y = 1.0;
    double translate_x = 0.0;
    double translate_y = 0.0;
};

AffineDraw sample_affine(const BinaryMask& mask, const DeformationParams& params, Rng& rng);

/// Backward nearest-neighbor warp; pixels leaving the canvas are dropped.
BinaryMask apply_affine(const BinaryMask& mask, const AffineDraw& draw);

BinaryMask affine_deform(const BinaryMask& mask, const DeformationParams& params, Rng& rng);

/// Control points and their forward displacements.
struct TpsDraw {
    std::vector<Point2> controls;
    std::vector<Point2> displacements;
};

/// Samples control points inside the foreground bounding box and displaces
/// each within +-jitter of the box width (x) and height (y). Collinear draws
/// are resampled up to `kTpsRetries` times.
TpsDraw sample_tps(const BinaryMask& mask, const DeformationParams& params, Rng& rng);

/// Moves each control point by its displacement: the spline is fitted on the
/// displaced points with the negated displacements and used as a backward map
/// with nearest-neighbor (round half up) sampling.
BinaryMask apply_tps(const BinaryMask& mask, const TpsDraw& draw);

BinaryMask tps_deform(const BinaryMask& mask, const DeformationParams& params, Rng& rng);

inline constexpr int kTpsRetries = 16;

/// affine -> TPS -> dilation, each stage only when enabled. A deformation
/// stage that would erase the whole mask is skipped.
BinaryMask synthesize_input_mask(const BinaryMask& annotation, const DeformationParams& params,
                                 Rng& rng);

/// A source image with its instance annotation.
struct CorpusItem {
    std::string id;
    Image image;
    BinaryMask mask;
};

struct CorpusStats {
    std::size_t samples = 0;
    std::size_t skipped = 0;  // items without a usable (nonempty) mask
};

/// Emits `masks_per_image` samples per item in item order, each with its own
/// synthesized input mask. Item i draws from item_seed(params.rng_seed, i).
CorpusStats build_offline_corpus(std::span<const CorpusItem> items, const DeformationParams& params,
                                 int masks_per_image,
                                 const std::function<void(TrainingSample&&)>& sink);

std::vector<TrainingSample> build_offline_corpus(std::span<const CorpusItem> items,
                                                 const DeformationParams& params,
                                                 int masks_per_image, CorpusStats* stats = nullptr);

/// Rotation about the image center followed by an optional horizontal flip.
struct ViewTransform {
    bool flip = false;
    double degrees = 0.0;
};

Image transform_image(const Image& image, const ViewTransform& t);
BinaryMask transform_mask(const BinaryMask& mask, const ViewTransform& t);

/// Cycles through {flip states} x {rotations}; sample i uses view i mod V and
/// deformation draw seeded by item_seed(seed, i). Views that push the whole
/// object off the canvas are skipped.
std::vector<TrainingSample> build_online_set(const Image& first_frame, const BinaryMask& annotation,
                                             const AugmentationParams& params);

/// Streaming form of build_online_set.
void build_online_set(const Image& first_frame, const BinaryMask& annotation,
                      const AugmentationParams& params,
                      const std::function<void(TrainingSample&&)>& sink);

}  // namespace masktrack
