// SPDX-License-Identifier: Apache-2.0
//
// Frame-by-frame guided propagation. Each step dilates the previous estimate,
// asks a scorer for the current frame given that rough mask, and thresholds.
// Annotated frames are fixed points.

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "masktrack/dataset.hpp"
#include "masktrack/refiner.hpp"

namespace masktrack {

enum class EmptyMaskPolicy { FallbackToDilatedPrevious, PropagateEmpty };
enum class Direction { Forward, Backward };

enum class Provenance {
    Annotated,
    BoxInitialized,  // estimated from a box annotation used as guidance
    PropagatedForward,
    PropagatedBackward,
    Fallback,        // estimate was empty; the dilated previous mask was carried
    Unreached,       // no annotation in the propagation direction
};

std::string_view provenance_name(Provenance p) noexcept;

struct PropagationConfig {
    int test_dilation_radius = 5;
    float tau = 0.5F;
    EmptyMaskPolicy empty_mask_policy = EmptyMaskPolicy::FallbackToDilatedPrevious;
    Direction direction = Direction::Forward;
    /// Keep the per-frame score maps (needed for post-processing).
    bool keep_scores = false;

    void validate() const;
};

struct PropagationResult {
    std::vector<BinaryMask> masks;
    std::vector<ScoreMap> scores;  // empty unless keep_scores
    std::vector<Provenance> provenance;
    /// Annotated frame each estimate descends from (-1 when unreached).
    std::vector<int> source_frame;
};

/// Scores frame `frame` given the guidance mask (null for no guidance).
using FrameScorer = std::function<ScoreMap(int frame, const BinaryMask* guidance)>;

/// Scorer backed by a refiner on the RGB frames. With `flow_branch`, and flow
/// present in the sequence, the refiner output is averaged with `flow_branch`
/// run on the flow-magnitude image of the frame (flow t -> t+1; the last frame
/// reuses the last field).
FrameScorer make_frame_scorer(const VideoSequence& sequence, Refiner& rgb,
                              Refiner* flow_branch = nullptr);

/// Annotations sorted by frame; duplicates and out-of-range frames rejected.
std::vector<Annotation> sorted_annotations(const VideoSequence& sequence,
                                           std::span<const Annotation> annotations);

/// Runs from every annotated frame in `config.direction` until the next
/// annotated frame or the sequence end. Frames no run reaches are Unreached
/// with an empty mask. A box annotation seeds its run with the estimate
/// obtained from the filled box as guidance.
PropagationResult propagate(const VideoSequence& sequence, std::span<const Annotation> annotations,
                            const FrameScorer& scorer, const PropagationConfig& config);

PropagationResult propagate(const VideoSequence& sequence, std::span<const Annotation> annotations,
                            Refiner& refiner, const PropagationConfig& config);

/// Forward and backward runs; each frame keeps the result generated from the
/// nearest annotated frame, ties going to the forward run. Box annotations are
/// first converted to segments. Runs are limited to the frames they win.
PropagationResult propagate_multi(const VideoSequence& sequence,
                                  std::span<const Annotation> annotations,
                                  const FrameScorer& scorer, const PropagationConfig& config);

PropagationResult propagate_multi(const VideoSequence& sequence,
                                  std::span<const Annotation> annotations, Refiner& refiner,
                                  const PropagationConfig& config);

/// Each frame receives the nearest annotation (filled box for boxes), ties
/// going to the earlier annotation.
PropagationResult copy_baseline(const VideoSequence& sequence, std::span<const Annotation> annotations);

class PropagationError : public Error {
public:
    PropagationError(const std::string& what, int frame) : Error(what), frame_(frame) {}
    [[nodiscard]] int frame() const noexcept { return frame_; }

private:
    int frame_;
};

}  // namespace masktrack
