// SPDX-License-Identifier: Apache-2.0
//
// Fully connected two-label CRF over a short temporal window of frames.
//
// Energy of a labeling x (1 = foreground):
//   E(x) = sum_i psi_i(x_i) + sum_{i<j} k(i,j) [x_i != x_j]
//   psi_i(1) = -log p_i, psi_i(0) = -log(1 - p_i), p_i clamped to [1e-5, 1-1e-5]
//   k(i,j) = w_a exp(-|I_i-I_j|^2 / 2 s_rgb^2 - |P_i-P_j|^2 / 2 s_xyt^2)   if |P_i-P_j| <= 3 s_xyt
//          + w_s exp(-|P_i-P_j|^2 / 2 s_xy^2)  if same frame and |P_i-P_j| <= 3 s_xy
// where P = (x, y, t) in pixels and frame index.
//
// Inference is parallel mean field written as a concave-convex step: the
// pairwise term is linearized around the previous sweep with a per-pixel
// quadratic correction, which keeps the mean-field free energy monotone even
// where plain synchronous updates oscillate.

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "masktrack/types.hpp"

namespace masktrack {

struct CrfParams {
    int iterations = 10;
    double appearance_weight = 5.0;
    double appearance_rgb_sigma = 10.0;
    double appearance_xyt_sigma = 5.0;
    double smoothness_weight = 1.0;
    double smoothness_xy_sigma = 1.0;
    int temporal_window = 3;

    void validate() const;
};

inline constexpr double kUnaryClamp = 1e-5;

/// Observer called after every sweep with the foreground marginals of all
/// window pixels (frame-major, then row-major).
using SweepObserver = std::function<void(int sweep, std::span<const double> foreground)>;

/// Runs mean field on one window. |frames| must equal params.temporal_window.
/// Returns the foreground marginals of every frame in the window.
std::vector<ScoreMap> crf_refine(std::span<const Image> frames, std::span<const ScoreMap> unaries,
                                 const CrfParams& params, const SweepObserver& observer = {});

/// Exhaustive minimizer of the same energy for at most kExactMaxPixels pixels.
std::vector<BinaryMask> crf_exact_map(std::span<const Image> frames, std::span<const ScoreMap> unaries,
                                      const CrfParams& params);

inline constexpr std::size_t kExactMaxPixels = 20;

/// Slides the window over the sequence (replicating the end frames), refines
/// each window and thresholds its center frame at `tau`. Windows are spread
/// over `jobs` threads.
std::vector<BinaryMask> postprocess_sequence(std::span<const Image> frames,
                                             std::span<const ScoreMap> scores, const CrfParams& params,
                                             float tau = 0.5F, int jobs = 1);

}  // namespace masktrack
