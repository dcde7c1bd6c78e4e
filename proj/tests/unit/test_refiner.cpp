#include "doctest.h"

#include "masktrack/eval.hpp"
#include "masktrack/refiner.hpp"
#include "masktrack/synthetic.hpp"
#include "support.hpp"

using namespace masktrack;

TEST_CASE("threshold is strict") {
    CHECK_FALSE(threshold(ScoreMap(4, 4, 0.5F), 0.5F).any());
    const BinaryMask m = threshold(ScoreMap(2, 1, std::vector<float>{0.2F, 0.8F}), 0.5F);
    CHECK_FALSE(m.at(0, 0));
    CHECK(m.at(1, 0));
    CHECK(threshold(ScoreMap(2, 1, 1.0F), 1.0F).count() == 0);
    CHECK(threshold(ScoreMap(2, 1, 0.1F), 0.0F).count() == 2);
    CHECK_THROWS_AS(threshold(ScoreMap(1, 1), 1.5F), Error);
}

TEST_CASE("identity refiner round trips every mask") {
    Rng rng(1);
    IdentityRefiner id;
    const Image img(13, 7, 3);
    for (int i = 0; i < 100; ++i) {
        const BinaryMask m = testing::random_mask(13, 7, rng.uniform(), rng);
        const ScoreMap s = id.refine({img, &m, 0});
        for (float v : s.data()) CHECK((v == 0.0F || v == 1.0F));
        REQUIRE(threshold(s, 0.5F) == m);
    }
    CHECK_THROWS_AS(id.refine({img, nullptr, 0}), RefinerError);
    const BinaryMask small(3, 3);
    CHECK_THROWS_AS(id.refine({img, &small, 0}), DimensionMismatch);
}

TEST_CASE("oracle refiner returns the requested frame's ground truth") {
    Rng rng(2);
    std::vector<BinaryMask> gt;
    for (int t = 0; t < 4; ++t) gt.push_back(testing::random_mask(9, 9, 0.3, rng));
    OracleRefiner oracle(gt);
    const Image img(9, 9, 3);
    for (int t = 0; t < 4; ++t) CHECK(threshold(oracle.refine({img, nullptr, t})) == gt[static_cast<std::size_t>(t)]);
    CHECK_THROWS_AS(oracle.refine({img, nullptr, 4}), RefinerError);
    CHECK_THROWS_AS(OracleRefiner({}), RefinerError);
}

TEST_CASE("color model separates a red square from a green background") {
    Image img(64, 64, 3);
    BinaryMask gt(64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const bool f = x >= 20 && x < 40 && y >= 16 && y < 36;
            gt.set(x, y, f);
            img.at(x, y, 0) = f ? 220 : 30;
            img.at(x, y, 1) = f ? 30 : 200;
            img.at(x, y, 2) = 30;
        }
    const std::vector<TrainingSample> samples{{"a", img, gt, gt}};
    ColorModelRefiner cm(std::make_shared<const OnlineColorModelState>(fit_online(samples)));
    CHECK(iou(threshold(cm.refine({img, &gt, 0})), gt) >= 0.95);
    CHECK(iou(threshold(cm.refine({img, nullptr, 0})), gt) >= 0.95);
}

TEST_CASE("color model fitting rules") {
    Rng rng(3);
    const Image img = testing::random_image(10, 10, rng);
    BinaryMask all(10, 10);
    for (auto& v : all.data()) v = 1;
    const std::vector<TrainingSample> one{{"a", img, all, all}};
    ColorModelOptions opt;
    opt.lambda = 1.0;
    const auto state = fit_online(one, opt);
    // The background never observed anything: uniform fallback.
    const auto bg = state.background();
    CHECK(bg.front() == doctest::Approx(1.0 / static_cast<double>(bg.size())));
    CHECK(std::all_of(bg.begin(), bg.end(), [&](double v) { return v == bg.front(); }));
    ColorModelRefiner cm(std::make_shared<const OnlineColorModelState>(state));
    const ScoreMap guided = cm.refine({img, &all, 0});
    const ScoreMap unguided = cm.refine({img, nullptr, 0});
    for (float v : guided.data()) CHECK(v == 1.0F);
    for (float v : unguided.data()) CHECK(v == 1.0F);

    // Distributions are normalized.
    const auto mixed_target = testing::random_blobs(10, 10, rng);
    const std::vector<TrainingSample> two{{"b", img, mixed_target, mixed_target}};
    const auto s2 = fit_online(two);
    double fg = 0.0, bgs = 0.0;
    for (double v : s2.foreground()) fg += v;
    for (double v : s2.background()) bgs += v;
    CHECK(fg == doctest::Approx(1.0));
    CHECK(bgs == doctest::Approx(1.0));
    CHECK(fit_online(two) == s2);

    const std::vector<TrainingSample> empty{{"c", img, BinaryMask(10, 10), BinaryMask(10, 10)}};
    CHECK_THROWS_AS(fit_online(empty), RefinerError);
    CHECK_THROWS_AS(fit_online(std::vector<TrainingSample>{}), RefinerError);
    ColorModelRefiner unfitted;
    CHECK_THROWS_AS(unfitted.refine({img, nullptr, 0}), RefinerError);
}

TEST_CASE("color model refine is deterministic and bounded") {
    Rng rng(4);
    const Image img = testing::random_image(20, 16, rng);
    const BinaryMask m = testing::random_blobs(20, 16, rng);
    const std::vector<TrainingSample> s{{"a", img, m, m}};
    ColorModelRefiner cm(std::make_shared<const OnlineColorModelState>(fit_online(s)));
    const ScoreMap a = cm.refine({img, &m, 0});
    CHECK(a == cm.refine({img, &m, 0}));
    for (float v : a.data()) CHECK((v >= 0.0F && v <= 1.0F));
}

TEST_CASE("online fit on a synthetic scene recovers its first frame") {
    const auto seq = synthetic_sequence(0, SyntheticOptions{});
    const BinaryMask& gt = seq.ground_truth->front();
    const auto set = build_online_set(seq.frames[0], gt, AugmentationParams{});
    REQUIRE(set.size() == 1000);
    ColorModelRefiner cm(std::make_shared<const OnlineColorModelState>(fit_online(set)));
    CHECK(iou(threshold(cm.refine({seq.frames[0], &gt, 0})), gt) >= 0.9);
}

TEST_CASE("feature index layout") {
    Image img(8, 8, 3);
    img.at(7, 7, 0) = 255;
    img.at(7, 7, 1) = 16;
    img.at(7, 7, 2) = 0;
    const ColorModelOptions opt;
    const BoundingBox whole{0, 0, 7, 7};
    // color (15, 1, 0), cell (3, 3)
    CHECK(color_model_feature(img, 7, 7, whole, opt) == ((15 * 16 + 1) * 16 + 0) * 16 + 15);
    // positions outside the reference box clamp to border cells
    CHECK(color_model_feature(img, 0, 0, BoundingBox{4, 4, 7, 7}, opt) == 0);
}
