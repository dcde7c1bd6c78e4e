#include "doctest.h"

#include <cmath>

#include "masktrack/crf.hpp"
#include "masktrack/refiner.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace masktrack;

namespace {

CrfParams single_frame() {
    CrfParams p;
    p.temporal_window = 1;
    return p;
}

ScoreMap random_scores(int w, int h, Rng& rng) {
    std::vector<float> v(static_cast<std::size_t>(w) * h);
    for (auto& x : v) x = static_cast<float>(rng.uniform());
    return ScoreMap(w, h, std::move(v));
}

std::vector<double> flatten(const std::vector<ScoreMap>& maps) {
    std::vector<double> out;
    for (const auto& m : maps)
        for (float v : m.data()) out.push_back(v);
    return out;
}

std::vector<double> initial_marginals(const std::vector<ScoreMap>& unaries) {
    std::vector<double> q;
    for (const auto& m : unaries)
        for (float v : m.data()) q.push_back(std::clamp(static_cast<double>(v), kUnaryClamp, 1.0 - kUnaryClamp));
    return q;
}

// Image whose pixels take a handful of colors in blocks, plus noise.
Image blocky_image(int w, int h, Rng& rng) {
    Image img(w, h, 3);
    const int split = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(w - 3)));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const int base = x < split ? 60 + 40 * c : 180 - 30 * c;
                img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(base + static_cast<int>(rng.below(21)) - 10, 0, 255));
            }
    return img;
}

}  // namespace

TEST_CASE("parameter validation") {
    CrfParams p;
    CHECK_NOTHROW(p.validate());
    p.temporal_window = 2;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.iterations = 0;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.appearance_rgb_sigma = 0.0;
    CHECK_THROWS_AS(p.validate(), Error);
    p = {};
    p.smoothness_weight = -1.0;
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("defaults are the published settings") {
    const CrfParams p;
    CHECK(p.iterations == 10);
    CHECK(p.appearance_weight == 5.0);
    CHECK(p.appearance_rgb_sigma == 10.0);
    CHECK(p.appearance_xyt_sigma == 5.0);
    CHECK(p.smoothness_weight == 1.0);
    CHECK(p.smoothness_xy_sigma == 1.0);
    CHECK(p.temporal_window == 3);
}

TEST_CASE("window shape errors") {
    const std::vector<Image> two{Image(4, 4, 3), Image(4, 4, 3)};
    const std::vector<ScoreMap> two_s{ScoreMap(4, 4), ScoreMap(4, 4)};
    CHECK_THROWS_AS(crf_refine(two, two_s, CrfParams{}), Error);
    const std::vector<Image> one{Image(4, 4, 3)};
    const std::vector<ScoreMap> wrong{ScoreMap(4, 3)};
    CHECK_THROWS_AS(crf_refine(one, wrong, single_frame()), DimensionMismatch);
    const std::vector<Image> big{Image(5, 5, 3)};
    const std::vector<ScoreMap> big_s{ScoreMap(5, 5)};
    CHECK_THROWS_AS(crf_exact_map(big, big_s, single_frame()), Error);
}

TEST_CASE("without pairwise weights the marginals are the clamped unaries") {
    Rng rng(1);
    CrfParams p;
    p.appearance_weight = 0.0;
    p.smoothness_weight = 0.0;
    std::vector<Image> frames;
    std::vector<ScoreMap> unaries;
    for (int t = 0; t < 3; ++t) {
        frames.push_back(testing::random_image(9, 7, rng));
        unaries.push_back(random_scores(9, 7, rng));
    }
    unaries[1] = ScoreMap(9, 7, 1.0F);
    const auto out = crf_refine(frames, unaries, p);
    const auto expect = initial_marginals(unaries);
    const auto got = flatten(out);
    for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(got[i] == doctest::Approx(expect[i]).epsilon(1e-6));
    for (int t = 0; t < 3; ++t) CHECK(postprocess_sequence(frames, unaries, p)[static_cast<std::size_t>(t)] == threshold(unaries[static_cast<std::size_t>(t)]));
}

TEST_CASE("agreement with uniform evidence is a fixed point") {
    const Image img = testing::solid_image(10, 10, 90, 90, 90);
    const std::vector<Image> frames(3, img);
    const std::vector<ScoreMap> unaries(3, ScoreMap(10, 10, 1.0F));
    for (const auto& m : crf_refine(frames, unaries, CrfParams{}))
        for (float v : m.data()) CHECK(v > 0.99F);
}

TEST_CASE("exact MAP examples") {
    const std::vector<Image> one{Image(1, 1, 3)};
    CHECK(crf_exact_map(one, std::vector<ScoreMap>{ScoreMap(1, 1, 0.9F)}, single_frame())[0].at(0, 0));
    CHECK_FALSE(crf_exact_map(one, std::vector<ScoreMap>{ScoreMap(1, 1, 0.1F)}, single_frame())[0].at(0, 0));

    // Identical colors, scores 0.6 and 0.45, strong appearance weight.
    CrfParams strong = single_frame();
    strong.appearance_weight = 10.0;
    const std::vector<Image> pair{testing::solid_image(2, 1, 50, 50, 50)};
    const std::vector<ScoreMap> u{ScoreMap(2, 1, std::vector<float>{0.6F, 0.45F})};
    const auto m = crf_exact_map(pair, u, strong);
    CHECK(m[0].at(0, 0));
    CHECK(m[0].at(1, 0));
    // By hand: agreeing on foreground costs -log 0.6 - log 0.45, disagreeing adds the pair weight.
    const oracle::DenseCrf dense({pair[0]}, u, strong);
    CHECK(dense.energy({1, 1}) == doctest::Approx(-std::log(0.6) - std::log(0.45)));
    CHECK(dense.energy({1, 1}) < dense.energy({0, 0}));
    CHECK(dense.energy({1, 1}) < dense.energy({1, 0}));

    CrfParams none = single_frame();
    none.appearance_weight = 0.0;
    none.smoothness_weight = 0.0;
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
        const std::vector<Image> f{testing::random_image(4, 4, rng)};
        const std::vector<ScoreMap> s{random_scores(4, 4, rng)};
        CHECK(crf_exact_map(f, s, none)[0] == threshold(s[0]));
    }
}

TEST_CASE("exact MAP matches an independent enumeration") {
    Rng rng(3);
    for (int i = 0; i < 30; ++i) {
        CrfParams p;
        p.temporal_window = i % 2 == 0 ? 1 : 3;
        const int w = 2;
        const int h = p.temporal_window == 1 ? 3 : 2;
        std::vector<Image> frames;
        std::vector<ScoreMap> unaries;
        for (int t = 0; t < p.temporal_window; ++t) {
            frames.push_back(testing::random_image(w, h, rng));
            unaries.push_back(random_scores(w, h, rng));
        }
        const oracle::DenseCrf dense(frames, unaries, p);
        const auto best = dense.map_labelings();
        const auto got = flatten([&] {
            std::vector<ScoreMap> maps;
            for (const auto& m : crf_exact_map(frames, unaries, p)) {
                std::vector<float> v;
                for (auto b : m.data()) v.push_back(b);
                maps.emplace_back(w, h, v);
            }
            return maps;
        }());
        std::vector<int> labels(got.begin(), got.end());
        CHECK(std::find(best.begin(), best.end(), labels) != best.end());
    }
}

TEST_CASE("mean field agrees with exact MAP on 2x2 instances") {
    // Uniform image, random unaries: 191 of 200 seeded trials agree.
    const CrfParams p = single_frame();
    const std::vector<Image> frames{testing::solid_image(2, 2, 128, 128, 128)};
    int agree = 0;
    for (int i = 0; i < 200; ++i) {
        Rng rng(item_seed(7, static_cast<std::uint64_t>(i)));
        const std::vector<ScoreMap> u{random_scores(2, 2, rng)};
        agree += threshold(crf_refine(frames, u, p)[0]) == crf_exact_map(frames, u, p)[0];
    }
    CHECK(agree >= 190);
    CHECK(agree == 191);
}

TEST_CASE("converged marginals satisfy the mean-field equations") {
    Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        CrfParams p;
        p.iterations = 200;
        std::vector<Image> frames;
        std::vector<ScoreMap> unaries;
        for (int t = 0; t < 3; ++t) {
            frames.push_back(blocky_image(6, 5, rng));
            unaries.push_back(random_scores(6, 5, rng));
        }
        const auto q = flatten(crf_refine(frames, unaries, p));
        const oracle::DenseCrf dense(frames, unaries, p);
        for (std::size_t i = 0; i < dense.n; ++i) {
            double m = 0.0;  // m_fg - m_bg
            for (std::size_t j = 0; j < dense.n; ++j) m += dense.k[i * dense.n + j] * (2.0 * q[j] - 1.0);
            const double fixed = 1.0 / (1.0 + std::exp(-(dense.psi_bg[i] - dense.psi_fg[i] + m)));
            REQUIRE(q[i] == doctest::Approx(fixed).epsilon(1e-3));
        }
    }
}

TEST_CASE("marginals stay normalized after every sweep") {
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Image> frames;
        std::vector<ScoreMap> unaries;
        for (int t = 0; t < 3; ++t) {
            frames.push_back(blocky_image(12, 10, rng));
            unaries.push_back(random_scores(12, 10, rng));
        }
        int sweeps = 0;
        (void)crf_refine(frames, unaries, CrfParams{}, [&](int sweep, std::span<const double> q) {
            CHECK(sweep == sweeps++);
            for (double fg : q) {
                const double bg = 1.0 - fg;
                REQUIRE(std::isfinite(fg));
                REQUIRE(fg >= 0.0);
                REQUIRE(bg >= 0.0);
                REQUIRE(std::abs(fg + bg - 1.0) <= 1e-6);
            }
        });
        CHECK(sweeps == 10);
    }
}

TEST_CASE("free energy never increases across sweeps") {
    Rng rng(6);
    for (int trial = 0; trial < 6; ++trial) {
        CrfParams p;
        p.temporal_window = trial < 3 ? 1 : 3;
        p.iterations = 15;
        if (trial % 3 == 2) p.appearance_weight = 20.0;  // strongly coupled
        const int side = p.temporal_window == 1 ? 16 : 8;
        std::vector<Image> frames;
        std::vector<ScoreMap> unaries;
        for (int t = 0; t < p.temporal_window; ++t) {
            frames.push_back(trial % 2 == 0 ? blocky_image(side, side, rng) : testing::random_image(side, side, rng));
            unaries.push_back(random_scores(side, side, rng));
        }
        const oracle::DenseCrf dense(frames, unaries, p);
        double previous = dense.free_energy(initial_marginals(unaries));
        (void)crf_refine(frames, unaries, p, [&](int sweep, std::span<const double> q) {
            const double f = dense.free_energy(std::vector<double>(q.begin(), q.end()));
            CAPTURE(trial);
            CAPTURE(sweep);
            REQUIRE(f <= previous + 1e-9 * std::abs(previous));
            previous = f;
        });
    }
}

TEST_CASE("swapping the labels complements the result") {
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Image> frames;
        std::vector<ScoreMap> unaries;
        std::vector<ScoreMap> swapped;
        for (int t = 0; t < 3; ++t) {
            frames.push_back(blocky_image(10, 8, rng));
            unaries.push_back(random_scores(10, 8, rng));
            std::vector<float> v;
            for (float x : unaries.back().data()) v.push_back(1.0F - x);
            swapped.emplace_back(10, 8, v);
        }
        const auto a = flatten(crf_refine(frames, unaries, CrfParams{}));
        const auto b = flatten(crf_refine(frames, swapped, CrfParams{}));
        for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == doctest::Approx(1.0 - b[i]).epsilon(1e-4));
    }
}

TEST_CASE("salt noise on a constant image is removed") {
    Rng rng(8);
    const Image img = testing::solid_image(8, 8, 100, 150, 200);
    for (const bool majority : {true, false}) {
        std::vector<Image> frames(4, img);
        std::vector<ScoreMap> scores;
        for (int t = 0; t < 4; ++t) {
            std::vector<float> v(64);
            for (auto& x : v) {
                const bool flip = rng.uniform() < 0.1;
                x = (majority != flip) ? 0.8F : 0.2F;
            }
            scores.emplace_back(8, 8, v);
        }
        for (const auto& m : postprocess_sequence(frames, scores, CrfParams{})) {
            CHECK(m.count() == (majority ? 64U : 0U));
        }
    }
}

TEST_CASE("a single frame is padded by replication") {
    Rng rng(9);
    const Image img = blocky_image(9, 9, rng);
    const ScoreMap s = random_scores(9, 9, rng);
    const std::vector<Image> one{img};
    const std::vector<ScoreMap> one_s{s};
    const auto out = postprocess_sequence(one, one_s, CrfParams{});
    REQUIRE(out.size() == 1);
    const std::vector<Image> three(3, img);
    const std::vector<ScoreMap> three_s(3, s);
    CHECK(out[0] == threshold(crf_refine(three, three_s, CrfParams{})[1]));
}

TEST_CASE("post-processing does not depend on the job count") {
    Rng rng(10);
    std::vector<Image> frames;
    std::vector<ScoreMap> scores;
    for (int t = 0; t < 5; ++t) {
        frames.push_back(blocky_image(10, 8, rng));
        scores.push_back(random_scores(10, 8, rng));
    }
    CHECK(postprocess_sequence(frames, scores, CrfParams{}, 0.5F, 1) ==
          postprocess_sequence(frames, scores, CrfParams{}, 0.5F, 3));
}
