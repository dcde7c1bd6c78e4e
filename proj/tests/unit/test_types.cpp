#include "doctest.h"

#include "masktrack/types.hpp"
#include "support.hpp"

using namespace masktrack;

TEST_CASE("image data length must match its shape") {
    CHECK_NOTHROW(Image(4, 3, 3));
    CHECK(Image(4, 3, 3).data().size() == 36);
    CHECK_THROWS_AS(Image(0, 3, 1), Error);
    CHECK_THROWS_AS(Image(2, 2, 2), Error);
    CHECK_THROWS_AS(Image(2, 2, 1, std::vector<std::uint8_t>(5)), Error);
}

TEST_CASE("binary mask normalizes nonzero bytes") {
    const std::vector<std::uint8_t> v{0, 7, 255, 0};
    const BinaryMask m(2, 2, v);
    CHECK(m.count() == 2);
    CHECK(m.at(1, 0));
    CHECK(m.data()[2] == 1);
    CHECK_THROWS_AS(BinaryMask(2, 2, std::span<const std::uint8_t>(v).first(3)), Error);
}

TEST_CASE("score map rejects values outside the unit interval") {
    CHECK_NOTHROW(ScoreMap(2, 1, std::vector<float>{0.0F, 1.0F}));
    CHECK_THROWS_AS(ScoreMap(2, 1, std::vector<float>{0.5F, 1.0001F}), Error);
    CHECK_THROWS_AS(ScoreMap(2, 1, std::vector<float>{-0.0001F, 0.5F}), Error);
    CHECK_THROWS_AS(ScoreMap(1, 1, std::vector<float>{std::numeric_limits<float>::quiet_NaN()}), Error);
    CHECK_THROWS_AS(ScoreMap(1, 1, 2.0F), Error);
}

TEST_CASE("mask_from_box examples") {
    CHECK(mask_from_box({0, 0, 1, 1}, 4, 4).count() == 4);
    CHECK(mask_from_box({0, 0, 3, 3}, 4, 4).count() == 16);
    const BinaryMask m = mask_from_box({2, 1, 5, 3}, 8, 8);
    int n = 0;
    for (int y = 1; y <= 3; ++y)
        for (int x = 2; x <= 5; ++x) n += m.at(x, y);
    CHECK(n == 12);
    CHECK(m.count() == 12);
    CHECK_THROWS_AS(mask_from_box({0, 0, 4, 1}, 4, 4), Error);
    CHECK_THROWS_AS(mask_from_box({2, 0, 1, 1}, 4, 4), Error);
    CHECK_THROWS_AS(mask_from_box({-1, 0, 1, 1}, 4, 4), Error);
}

TEST_CASE("mask_from_box area property over random boxes") {
    Rng rng(11);
    for (int i = 0; i < 500; ++i) {
        const int w = 1 + static_cast<int>(rng.below(40));
        const int h = 1 + static_cast<int>(rng.below(40));
        int x0 = static_cast<int>(rng.below(w));
        int x1 = static_cast<int>(rng.below(w));
        int y0 = static_cast<int>(rng.below(h));
        int y1 = static_cast<int>(rng.below(h));
        if (x0 > x1) std::swap(x0, x1);
        if (y0 > y1) std::swap(y0, y1);
        const BoundingBox box{x0, y0, x1, y1};
        const BinaryMask m = mask_from_box(box, w, h);
        REQUIRE(m.count() == static_cast<std::size_t>((x1 - x0 + 1) * (y1 - y0 + 1)));
        CHECK(tight_box(m) == box);
    }
}

TEST_CASE("tight box of an empty mask throws") {
    CHECK_THROWS_AS(tight_box(BinaryMask(3, 3)), Error);
}
