// SPDX-License-Identifier: Apache-2.0

#include "masktrack/propagation.hpp"

#include <algorithm>

#include "masktrack/flow.hpp"
#include "masktrack/morphology.hpp"

namespace masktrack {

std::string_view provenance_name(Provenance p) noexcept {
    switch (p) {
        case Provenance::Annotated: return "annotated";
        case Provenance::BoxInitialized: return "box-initialized";
        case Provenance::PropagatedForward: return "propagated-forward";
        case Provenance::PropagatedBackward: return "propagated-backward";
        case Provenance::Fallback: return "fallback";
        case Provenance::Unreached: return "unreached";
    }
    return "unknown";
}

void PropagationConfig::validate() const {
    if (test_dilation_radius < 0) throw Error("PropagationConfig: radius must be non-negative");
    if (!(tau >= 0.0F && tau <= 1.0F)) throw Error("PropagationConfig: tau must lie in [0,1]");
}

FrameScorer make_frame_scorer(const VideoSequence& sequence, Refiner& rgb, Refiner* flow_branch) {
    if (flow_branch == nullptr || !sequence.flow || sequence.flow->empty()) {
        return [&sequence, &rgb](int frame, const BinaryMask* guidance) {
            return rgb.refine({sequence.frames.at(static_cast<std::size_t>(frame)), guidance, frame});
        };
    }
    return [&sequence, &rgb, flow_branch](int frame, const BinaryMask* guidance) {
        const auto& fields = *sequence.flow;
        const std::size_t pair = std::min(static_cast<std::size_t>(frame), fields.size() - 1);
        const Image magnitude = magnitude_image(fields[pair]);
        const ScoreMap a = rgb.refine({sequence.frames.at(static_cast<std::size_t>(frame)), guidance, frame});
        const ScoreMap b = flow_branch->refine({magnitude, guidance, frame});
        return fuse_scores(a, b);
    };
}

std::vector<Annotation> sorted_annotations(const VideoSequence& sequence,
                                           std::span<const Annotation> annotations) {
    if (annotations.empty()) throw Error("sequence '" + sequence.name + "': at least one annotation required");
    std::vector<Annotation> sorted(annotations.begin(), annotations.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const Annotation& a, const Annotation& b) { return a.frame_index < b.frame_index; });
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const int f = sorted[i].frame_index;
        if (f < 0 || f >= sequence.frame_count()) {
            throw PropagationError("sequence '" + sequence.name + "': annotation on frame " +
                                   std::to_string(f) + " outside " + std::to_string(sequence.frame_count()) +
                                   " frames", f);
        }
        if (i > 0 && sorted[i - 1].frame_index == f) {
            throw PropagationError("sequence '" + sequence.name + "': two annotations on frame " +
                                   std::to_string(f), f);
        }
    }
    return sorted;
}

namespace {

ScoreMap mask_scores(const BinaryMask& mask) {
    std::vector<float> v(mask.pixel_count());
    const auto m = mask.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m[i] ? 1.0F : 0.0F;
    return ScoreMap(mask.width(), mask.height(), std::move(v));
}

class Runner {
public:
    Runner(const VideoSequence& sequence, const FrameScorer& scorer, const PropagationConfig& config)
        : seq_(sequence), scorer_(scorer), config_(config) {
        config.validate();
        const auto n = static_cast<std::size_t>(sequence.frame_count());
        result_.masks.assign(n, BinaryMask(sequence.width(), sequence.height()));
        if (config.keep_scores) result_.scores.assign(n, ScoreMap(sequence.width(), sequence.height()));
        result_.provenance.assign(n, Provenance::Unreached);
        result_.source_frame.assign(n, -1);
    }

    ScoreMap score(int frame, const BinaryMask* guidance) {
        try {
            return scorer_(frame, guidance);
        } catch (const PropagationError&) {
            throw;
        } catch (const std::exception& e) {
            throw PropagationError("sequence '" + seq_.name + "' frame " + std::to_string(frame) +
                                   ": " + e.what(), frame);
        }
    }

    /// Segment for an annotation: the mask itself, or the box-guided estimate.
    BinaryMask seed(const Annotation& a, Provenance& provenance, ScoreMap* scores) {
        const BinaryMask given = a.as_mask(seq_.width(), seq_.height());
        if (!a.is_box()) {
            provenance = Provenance::Annotated;
            if (scores != nullptr) *scores = mask_scores(given);
            return given;
        }
        provenance = Provenance::BoxInitialized;
        ScoreMap s = score(a.frame_index, &given);
        BinaryMask estimate = threshold(s, config_.tau);
        if (!estimate.any()) {
            provenance = Provenance::Fallback;
            estimate = given;
            s = mask_scores(given);
        }
        if (scores != nullptr) *scores = std::move(s);
        return estimate;
    }

    void place(int frame, BinaryMask mask, ScoreMap scores, Provenance p, int source) {
        const auto i = static_cast<std::size_t>(frame);
        result_.masks[i] = std::move(mask);
        if (config_.keep_scores) result_.scores[i] = std::move(scores);
        result_.provenance[i] = p;
        result_.source_frame[i] = source;
    }

    /// Propagates from `start` (already placed) through frames start+step ... end inclusive.
    void run(int start, int end, int step) {
        const Provenance moving = step > 0 ? Provenance::PropagatedForward : Provenance::PropagatedBackward;
        BinaryMask previous = result_.masks[static_cast<std::size_t>(start)];
        for (int t = start + step; step > 0 ? t <= end : t >= end; t += step) {
            BinaryMask guidance = dilate(previous, config_.test_dilation_radius);
            ScoreMap s = score(t, &guidance);
            BinaryMask estimate = threshold(s, config_.tau);
            Provenance p = moving;
            if (!estimate.any() && config_.empty_mask_policy == EmptyMaskPolicy::FallbackToDilatedPrevious) {
                estimate = guidance;
                s = mask_scores(guidance);
                p = Provenance::Fallback;
            }
            previous = estimate;
            place(t, std::move(estimate), config_.keep_scores ? std::move(s) : ScoreMap(), p, start);
        }
    }

    void place_seed(const Annotation& a) {
        Provenance p{};
        ScoreMap s;
        BinaryMask m = seed(a, p, config_.keep_scores ? &s : nullptr);
        place(a.frame_index, std::move(m), std::move(s), p, a.frame_index);
    }

    PropagationResult take() { return std::move(result_); }

private:
    const VideoSequence& seq_;
    const FrameScorer& scorer_;
    const PropagationConfig& config_;
    PropagationResult result_;
};

}  // namespace

PropagationResult propagate(const VideoSequence& sequence, std::span<const Annotation> annotations,
                            const FrameScorer& scorer, const PropagationConfig& config) {
    const std::vector<Annotation> anns = sorted_annotations(sequence, annotations);
    Runner runner(sequence, scorer, config);
    const int last = sequence.frame_count() - 1;
    if (config.direction == Direction::Forward) {
        for (std::size_t i = 0; i < anns.size(); ++i) {
            runner.place_seed(anns[i]);
            const int stop = i + 1 < anns.size() ? anns[i + 1].frame_index - 1 : last;
            runner.run(anns[i].frame_index, stop, +1);
        }
    } else {
        for (std::size_t k = anns.size(); k-- > 0;) {
            runner.place_seed(anns[k]);
            const int stop = k > 0 ? anns[k - 1].frame_index + 1 : 0;
            runner.run(anns[k].frame_index, stop, -1);
        }
    }
    return runner.take();
}

PropagationResult propagate(const VideoSequence& sequence, std::span<const Annotation> annotations,
                            Refiner& refiner, const PropagationConfig& config) {
    return propagate(sequence, annotations, make_frame_scorer(sequence, refiner), config);
}

PropagationResult propagate_multi(const VideoSequence& sequence,
                                  std::span<const Annotation> annotations,
                                  const FrameScorer& scorer, const PropagationConfig& config) {
    const std::vector<Annotation> anns = sorted_annotations(sequence, annotations);
    const bool boxes = anns.front().is_box();
    for (const auto& a : anns) {
        if (a.is_box() != boxes) {
            throw PropagationError("sequence '" + sequence.name +
                                   "': annotations must be all segments or all boxes", a.frame_index);
        }
    }
    Runner runner(sequence, scorer, config);
    for (const auto& a : anns) runner.place_seed(a);

    const int last = sequence.frame_count() - 1;
    runner.run(anns.front().frame_index, 0, -1);
    for (std::size_t i = 0; i + 1 < anns.size(); ++i) {
        const int a = anns[i].frame_index;
        const int b = anns[i + 1].frame_index;
        const int mid = a + (b - a) / 2;  // frames up to mid are at least as close to a
        runner.run(a, mid, +1);
        runner.run(b, mid + 1, -1);
    }
    runner.run(anns.back().frame_index, last, +1);
    return runner.take();
}

PropagationResult propagate_multi(const VideoSequence& sequence,
                                  std::span<const Annotation> annotations, Refiner& refiner,
                                  const PropagationConfig& config) {
    return propagate_multi(sequence, annotations, make_frame_scorer(sequence, refiner), config);
}

PropagationResult copy_baseline(const VideoSequence& sequence, std::span<const Annotation> annotations) {
    const std::vector<Annotation> anns = sorted_annotations(sequence, annotations);
    const auto n = static_cast<std::size_t>(sequence.frame_count());
    std::vector<BinaryMask> masks;
    masks.reserve(anns.size());
    for (const auto& a : anns) masks.push_back(a.as_mask(sequence.width(), sequence.height()));

    PropagationResult result;
    result.masks.resize(n);
    result.provenance.resize(n);
    result.source_frame.resize(n);
    std::size_t k = 0;  // first annotation at or after t
    for (std::size_t t = 0; t < n; ++t) {
        while (k < anns.size() && static_cast<std::size_t>(anns[k].frame_index) < t) ++k;
        std::size_t pick = 0;
        if (k == anns.size()) {
            pick = anns.size() - 1;
        } else if (k == 0) {
            pick = 0;
        } else {
            const auto after = static_cast<std::size_t>(anns[k].frame_index) - t;
            const auto before = t - static_cast<std::size_t>(anns[k - 1].frame_index);
            pick = before <= after ? k - 1 : k;
        }
        const auto src = static_cast<std::size_t>(anns[pick].frame_index);
        result.masks[t] = masks[pick];
        result.source_frame[t] = static_cast<int>(src);
        result.provenance[t] = src == t   ? Provenance::Annotated
                               : src < t ? Provenance::PropagatedForward
                                         : Provenance::PropagatedBackward;
    }
    return result;
}

}  // namespace masktrack
