#include "doctest.h"

#include <algorithm>

#include "masktrack/morphology.hpp"
#include "masktrack/propagation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace masktrack;

namespace {

PropagationConfig config(int radius) {
    PropagationConfig c;
    c.test_dilation_radius = radius;
    return c;
}

Annotation segment(int frame, const BinaryMask& m) { return {frame, m}; }

// Refiner that erodes the guidance a little and drifts right, so runs are
// sensitive to the order in which frames are visited.
FrameScorer drifting_scorer(const VideoSequence& seq) {
    return [&seq](int frame, const BinaryMask* g) {
        std::vector<float> v(g->pixel_count(), 0.0F);
        const int w = g->width();
        for (int y = 0; y < g->height(); ++y)
            for (int x = 1; x + 1 < w; ++x)
                if (g->at(x - 1, y) && g->at(x, y) && g->at(x + 1, y) && (frame + x + y) % 7 != 0)
                    v[static_cast<std::size_t>(y) * w + x] = 0.9F;
        (void)seq;
        return ScoreMap(w, g->height(), std::move(v));
    };
}

}  // namespace

TEST_CASE("oracle refiner reproduces ground truth") {
    const VideoSequence seq = testing::moving_square(12, 40, 30, 8, 3);
    OracleRefiner oracle(*seq.ground_truth);
    const std::vector<Annotation> first{segment(0, seq.ground_truth->front())};
    const auto r = propagate(seq, first, oracle, config(5));
    CHECK(r.masks == *seq.ground_truth);
    CHECK(r.provenance[0] == Provenance::Annotated);
    CHECK(r.provenance[5] == Provenance::PropagatedForward);

    std::vector<Annotation> ends{segment(0, seq.ground_truth->at(0)), segment(11, seq.ground_truth->at(11))};
    CHECK(propagate_multi(seq, ends, oracle, config(5)).masks == *seq.ground_truth);
}

TEST_CASE("identity refiner without dilation copies the annotation") {
    const VideoSequence seq = testing::moving_square(6, 30, 20, 6, 2);
    IdentityRefiner id;
    const std::vector<Annotation> first{segment(0, seq.ground_truth->front())};
    const auto r = propagate(seq, first, id, config(0));
    for (const auto& m : r.masks) CHECK(m == seq.ground_truth->front());
}

TEST_CASE("identity refiner with dilation grows by the radius each frame") {
    BinaryMask dot(25, 25);
    dot.set(12, 12, true);
    dot.set(13, 12, true);
    const VideoSequence seq = testing::sequence_with_gt("s", {dot, dot, dot});
    IdentityRefiner id;
    const std::vector<Annotation> first{segment(0, dot)};
    const auto r = propagate(seq, first, id, config(5));
    BinaryMask expect = dot;
    for (int k = 0; k < 3; ++k) {
        CHECK(r.masks[static_cast<std::size_t>(k)] == expect);
        expect = oracle::dilate(expect, 5);
    }
}

TEST_CASE("annotated frames are fixed points") {
    Rng rng(1);
    const VideoSequence seq = testing::moving_square(10, 30, 20, 6, 2);
    IdentityRefiner id;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Annotation> anns;
        for (int t = 0; t < 10; ++t)
            if (t == 0 || rng.uniform() < 0.3) anns.push_back(segment(t, testing::random_blobs(30, 20, rng)));
        for (const auto dir : {Direction::Forward, Direction::Backward}) {
            PropagationConfig c = config(static_cast<int>(rng.below(4)));
            c.direction = dir;
            const auto r = propagate(seq, anns, id, c);
            for (const auto& a : anns) CHECK(r.masks[static_cast<std::size_t>(a.frame_index)] == std::get<BinaryMask>(a.kind));
        }
        const auto m = propagate_multi(seq, anns, id, config(2));
        for (const auto& a : anns) {
            CHECK(m.masks[static_cast<std::size_t>(a.frame_index)] == std::get<BinaryMask>(a.kind));
            CHECK(m.provenance[static_cast<std::size_t>(a.frame_index)] == Provenance::Annotated);
        }
    }
}

TEST_CASE("multi propagation with identity picks the nearest annotation") {
    BinaryMask a(20, 20), b(20, 20);
    a.set(2, 2, true);
    b.set(15, 15, true);
    std::vector<BinaryMask> gt(11, BinaryMask(20, 20));
    const VideoSequence seq = testing::sequence_with_gt("s", gt);
    IdentityRefiner id;
    const std::vector<Annotation> anns{segment(0, a), segment(10, b)};
    const auto r = propagate_multi(seq, anns, id, config(0));
    for (int t = 0; t <= 5; ++t) CHECK(r.masks[static_cast<std::size_t>(t)] == a);
    for (int t = 6; t <= 10; ++t) CHECK(r.masks[static_cast<std::size_t>(t)] == b);
    CHECK(r.provenance[5] == Provenance::PropagatedForward);
    CHECK(r.provenance[6] == Provenance::PropagatedBackward);
    CHECK(r.source_frame[5] == 0);
    CHECK(r.source_frame[6] == 10);
}

TEST_CASE("annotations on every frame are returned verbatim") {
    Rng rng(2);
    std::vector<BinaryMask> gt;
    for (int t = 0; t < 7; ++t) gt.push_back(testing::random_blobs(16, 16, rng));
    const VideoSequence seq = testing::sequence_with_gt("s", gt);
    std::vector<Annotation> anns;
    for (int t = 0; t < 7; ++t) anns.push_back(segment(t, gt[static_cast<std::size_t>(t)]));
    IdentityRefiner id;
    CHECK(propagate_multi(seq, anns, id, config(5)).masks == gt);
}

TEST_CASE("interval runs equal the literal two-pass formulation") {
    Rng rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        const int frames = 2 + static_cast<int>(rng.below(14));
        std::vector<BinaryMask> gt(static_cast<std::size_t>(frames), BinaryMask(18, 14));
        const VideoSequence seq = testing::sequence_with_gt("s", gt);
        std::vector<Annotation> anns;
        std::vector<std::pair<int, BinaryMask>> literal;
        for (int t = 0; t < frames; ++t) {
            if (rng.uniform() < 0.25 || (t == frames - 1 && anns.empty())) {
                const BinaryMask m = testing::random_blobs(18, 14, rng);
                anns.push_back(segment(t, m));
                literal.emplace_back(t, m);
            }
        }
        const int radius = static_cast<int>(rng.below(3));
        const bool fallback = rng.below(2) == 0;
        PropagationConfig c = config(radius);
        c.empty_mask_policy = fallback ? EmptyMaskPolicy::FallbackToDilatedPrevious : EmptyMaskPolicy::PropagateEmpty;
        const FrameScorer scorer = drifting_scorer(seq);
        const auto fast = propagate_multi(seq, anns, scorer, c);
        const auto slow = oracle::two_pass_multi(
            frames, literal, [&](int t, const BinaryMask& g) { return scorer(t, &g); }, radius, c.tau, fallback);
        CAPTURE(trial);
        REQUIRE(fast.masks == slow.masks);
        CHECK(fast.source_frame == slow.source);
    }
}

TEST_CASE("backward on the reversed sequence mirrors forward") {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const int frames = 3 + static_cast<int>(rng.below(8));
        std::vector<BinaryMask> gt;
        for (int t = 0; t < frames; ++t) gt.push_back(testing::random_blobs(20, 16, rng));
        const VideoSequence fwd_seq = testing::sequence_with_gt("f", gt);
        std::vector<BinaryMask> rev_gt(gt.rbegin(), gt.rend());
        const VideoSequence rev_seq = testing::sequence_with_gt("r", rev_gt);

        const FrameScorer fwd_scorer = drifting_scorer(fwd_seq);
        // Frame t of the reversed sequence is frame n-1-t of the original.
        const FrameScorer rev_scorer = [&](int t, const BinaryMask* g) { return fwd_scorer(frames - 1 - t, g); };

        const std::vector<Annotation> first{segment(0, gt.front())};
        const std::vector<Annotation> last{segment(frames - 1, gt.front())};
        PropagationConfig c = config(2);
        const auto forward = propagate(fwd_seq, first, fwd_scorer, c);
        c.direction = Direction::Backward;
        const auto backward = propagate(rev_seq, last, rev_scorer, c);
        for (int t = 0; t < frames; ++t) {
            REQUIRE(backward.masks[static_cast<std::size_t>(frames - 1 - t)] == forward.masks[static_cast<std::size_t>(t)]);
        }
    }
}

TEST_CASE("empty estimates follow the configured policy") {
    const VideoSequence seq = testing::moving_square(4, 20, 20, 4, 1);
    const FrameScorer nothing = [](int, const BinaryMask* g) { return ScoreMap(g->width(), g->height(), 0.0F); };
    const std::vector<Annotation> first{segment(0, seq.ground_truth->front())};
    PropagationConfig c = config(1);
    const auto fb = propagate(seq, first, nothing, c);
    CHECK(fb.provenance[1] == Provenance::Fallback);
    CHECK(fb.masks[1] == dilate(seq.ground_truth->front(), 1));
    CHECK(fb.masks[2] == dilate(fb.masks[1], 1));
    c.empty_mask_policy = EmptyMaskPolicy::PropagateEmpty;
    const auto empty = propagate(seq, first, nothing, c);
    CHECK_FALSE(empty.masks[1].any());
    CHECK(empty.provenance[1] == Provenance::PropagatedForward);
}

TEST_CASE("frames before the first annotation stay unreached in a forward run") {
    const VideoSequence seq = testing::moving_square(5, 20, 20, 4, 1);
    IdentityRefiner id;
    const std::vector<Annotation> mid{segment(2, seq.ground_truth->at(2))};
    const auto r = propagate(seq, mid, id, config(0));
    CHECK(r.provenance[0] == Provenance::Unreached);
    CHECK_FALSE(r.masks[0].any());
    CHECK(r.source_frame[0] == -1);
    CHECK(r.masks[4] == seq.ground_truth->at(2));
}

TEST_CASE("box annotations seed with the box-guided estimate") {
    const VideoSequence seq = testing::moving_square(4, 30, 30, 8, 0);
    OracleRefiner oracle(*seq.ground_truth);
    const BoundingBox box{5, 5, 20, 20};
    const std::vector<Annotation> anns{{0, box}};
    const auto r = propagate(seq, anns, oracle, config(3));
    CHECK(r.provenance[0] == Provenance::BoxInitialized);
    CHECK(r.masks == *seq.ground_truth);
    const auto multi = propagate_multi(seq, anns, oracle, config(3));
    CHECK(multi.masks == *seq.ground_truth);
    std::vector<Annotation> mixed{{0, box}, segment(2, seq.ground_truth->at(2))};
    CHECK_THROWS_AS(propagate_multi(seq, mixed, oracle, config(3)), PropagationError);
}

TEST_CASE("refiner failures name the frame") {
    const VideoSequence seq = testing::moving_square(5, 20, 20, 4, 1);
    const FrameScorer broken = [](int frame, const BinaryMask* g) {
        if (frame == 3) throw Error("backend down");
        return ScoreMap(g->width(), g->height(), 1.0F);
    };
    const std::vector<Annotation> first{segment(0, seq.ground_truth->front())};
    try {
        (void)propagate(seq, first, broken, config(1));
        FAIL("expected an error");
    } catch (const PropagationError& e) {
        CHECK(e.frame() == 3);
        CHECK(std::string(e.what()).find("backend down") != std::string::npos);
    }
}

TEST_CASE("annotation list validation") {
    const VideoSequence seq = testing::moving_square(3, 20, 20, 4, 1);
    IdentityRefiner id;
    CHECK_THROWS_AS(propagate(seq, std::vector<Annotation>{}, id, config(1)), Error);
    const std::vector<Annotation> out_of_range{segment(3, seq.ground_truth->front())};
    CHECK_THROWS_AS(propagate(seq, out_of_range, id, config(1)), PropagationError);
    const std::vector<Annotation> dup{segment(1, seq.ground_truth->front()), segment(1, seq.ground_truth->front())};
    CHECK_THROWS_AS(propagate(seq, dup, id, config(1)), PropagationError);
    PropagationConfig bad = config(-1);
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("copy baseline assignment") {
    Rng rng(5);
    std::vector<BinaryMask> gt;
    for (int t = 0; t < 5; ++t) gt.push_back(testing::random_blobs(12, 12, rng));
    const VideoSequence seq = testing::sequence_with_gt("s", gt);
    const std::vector<Annotation> single{segment(2, gt[2])};
    for (const auto& m : copy_baseline(seq, single).masks) CHECK(m == gt[2]);

    const std::vector<Annotation> ends{segment(0, gt[0]), segment(4, gt[4])};
    const auto r = copy_baseline(seq, ends);
    for (int t = 0; t <= 2; ++t) CHECK(r.masks[static_cast<std::size_t>(t)] == gt[0]);
    for (int t = 3; t <= 4; ++t) CHECK(r.masks[static_cast<std::size_t>(t)] == gt[4]);

    const std::vector<Annotation> boxes{{1, BoundingBox{1, 1, 3, 3}}};
    CHECK(copy_baseline(seq, boxes).masks[4].count() == 9);
}

TEST_CASE("propagation is deterministic") {
    const VideoSequence seq = testing::moving_square(8, 30, 20, 6, 2);
    const FrameScorer s = drifting_scorer(seq);
    const std::vector<Annotation> first{segment(0, seq.ground_truth->front())};
    const auto a = propagate(seq, first, s, config(2));
    const auto b = propagate(seq, first, s, config(2));
    CHECK(a.masks == b.masks);
    CHECK(a.provenance == b.provenance);
}
