#include <cmath>

#include "doctest.h"
#include "frdl/hog.hpp"
#include "oracles.hpp"

using namespace frdl;

namespace {

Image8 random_gray(int rows, int cols, Rng& rng) {
    Image8 img(rows, cols, 1);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(uniform_index(rng, 256));
    return img;
}

}  // namespace

TEST_SUITE("hog") {

TEST_CASE("gradients follow the [+1 0 -1] taps with replicated borders") {
    SUBCASE("constant image has zero gradients") {
        const Image8 img(8, 8, 1, 50);
        const GradientField g = gradients(img);
        for (double v : g.ix) CHECK(v == 0.0);
        for (double v : g.iy) CHECK(v == 0.0);
    }
    SUBCASE("horizontal ramp gives IX = -2 inside, IY = 0") {
        Image8 img(6, 6, 1);
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < 6; ++c) img.at(r, c) = static_cast<std::uint8_t>(c);
        const GradientField g = gradients(img);
        for (int r = 0; r < 6; ++r) {
            for (int c = 1; c < 5; ++c) CHECK(g.IX(r, c) == -2.0);
            CHECK(g.IY(r, 2) == 0.0);
        }
    }
    SUBCASE("random 5x5 image matches a per-pixel loop") {
        Rng rng(9);
        const Image8 img = random_gray(5, 5, rng);
        const GradientField g = gradients(img);
        auto px = [&](int r, int c) {
            r = std::clamp(r, 0, 4);
            c = std::clamp(c, 0, 4);
            return static_cast<double>(img.at(r, c));
        };
        for (int r = 0; r < 5; ++r) {
            for (int c = 0; c < 5; ++c) {
                CHECK(g.IX(r, c) == px(r, c - 1) - px(r, c + 1));
                CHECK(g.IY(r, c) == px(r - 1, c) - px(r + 1, c));
            }
        }
    }
    SUBCASE("too-small images are rejected") {
        CHECK_THROWS_AS(gradients(Image8(2, 8, 1, 0)), DataError);
        CHECK_THROWS_AS(gradients(Image8(8, 8, 3, 0)), DataError);
    }
}

TEST_CASE("magnitude_angle") {
    GradientField g;
    g.rows = 1;
    g.cols = 3;
    g.ix = {3.0, 0.0, 1.0};
    g.iy = {4.0, 0.0, 1.0};
    const MagnitudeAngle ma = magnitude_angle(g);
    CHECK(ma.magnitude[0] == doctest::Approx(5.0));
    CHECK(ma.magnitude[1] == 0.0);
    CHECK(ma.angle_deg[1] == 0.0);  // zero-magnitude convention
    CHECK(ma.angle_deg[2] == doctest::Approx(45.0));
}

TEST_CASE("hog_descriptor layout and values") {
    SUBCASE("uniform image gives an all-zero descriptor") {
        const Image8 img(32, 32, 1, 77);
        const HogDescriptor d = hog_descriptor(img, HogParams{});
        for (double v : d.values) CHECK(v == 0.0);
    }
    SUBCASE("64x64 with the defaults has length 1764") {
        const HogLayout layout = hog_layout(64, 64, HogParams{});
        CHECK(layout.length() == 1764);
        Rng rng(4);
        const Image8 img = random_gray(64, 64, rng);
        CHECK(hog_descriptor(img, HogParams{}).values.size() == 1764);
    }
    SUBCASE("length formula holds across parameter combinations") {
        struct Case {
            int rows, cols, cell, block, stride, bins;
        };
        const Case cases[] = {
            {64, 64, 8, 2, 1, 9}, {32, 32, 8, 2, 1, 9}, {32, 32, 4, 2, 2, 6},
            {48, 64, 8, 3, 1, 12}, {24, 24, 8, 1, 1, 5},
        };
        for (const Case& c : cases) {
            HogParams p;
            p.cell_size = c.cell;
            p.block_size = c.block;
            p.block_stride = c.stride;
            p.bins = c.bins;
            const HogLayout layout = hog_layout(c.rows, c.cols, p);
            const int cy = c.rows / c.cell, cx = c.cols / c.cell;
            const int by = (cy - c.block) / c.stride + 1, bx = (cx - c.block) / c.stride + 1;
            CHECK(layout.length() == bx * by * c.block * c.block * c.bins);
            Rng rng(c.rows + c.bins);
            const Image8 img = random_gray(c.rows, c.cols, rng);
            CHECK(hog_descriptor(img, p).values.size() ==
                  static_cast<std::size_t>(layout.length()));
        }
    }
    SUBCASE("incompatible dims are rejected") {
        CHECK_THROWS_AS(hog_layout(60, 64, HogParams{}), ConfigError);
    }
    SUBCASE("matches the brute-force voting loop on random 32x32 images") {
        Rng rng(123);
        for (int trial = 0; trial < 10; ++trial) {
            const Image8 img = random_gray(32, 32, rng);
            const HogParams p;
            const HogDescriptor d = hog_descriptor(img, p);
            const std::vector<double> ref = oracle::hog_reference(
                img, p.cell_size, p.block_size, p.block_stride, p.bins, p.epsilon);
            REQUIRE(d.values.size() == ref.size());
            for (std::size_t i = 0; i < ref.size(); ++i)
                CHECK(std::abs(d.values[i] - ref[i]) <= 1e-6);
        }
    }
}

TEST_CASE("180-degree rotation preserves each cell's vote mass") {
    Rng rng(77);
    const Image8 img = random_gray(32, 32, rng);
    HogParams p;
    const std::vector<double> hist = cell_histograms(img, p);

    Image8 rotated(32, 32, 1);
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) rotated.at(r, c) = img.at(31 - r, 31 - c);
    const std::vector<double> rhist = cell_histograms(rotated, p);

    const int cells = 32 / p.cell_size;
    for (int cy = 0; cy < cells; ++cy) {
        for (int cx = 0; cx < cells; ++cx) {
            auto mass = [&](const std::vector<double>& h, int y, int x) {
                double sum = 0;
                for (int b = 0; b < p.bins; ++b)
                    sum += h[(static_cast<std::size_t>(y) * cells + x) * p.bins + b];
                return sum;
            };
            CHECK(mass(hist, cy, cx) ==
                  doctest::Approx(mass(rhist, cells - 1 - cy, cells - 1 - cx)).epsilon(1e-9));
        }
    }
}

TEST_CASE("intensity scaling leaves the normalized descriptor unchanged") {
    Rng rng(99);
    Image8 img(32, 32, 1);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(uniform_index(rng, 120));
    Image8 doubled(32, 32, 1);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        doubled.data[i] = static_cast<std::uint8_t>(img.data[i] * 2);

    const HogParams p;
    const HogDescriptor a = hog_descriptor(img, p);
    const HogDescriptor b = hog_descriptor(doubled, p);

    // pre-normalization histograms scale linearly
    const std::vector<double> ha = cell_histograms(img, p);
    const std::vector<double> hb = cell_histograms(doubled, p);
    for (std::size_t i = 0; i < ha.size(); ++i)
        CHECK(hb[i] == doctest::Approx(2.0 * ha[i]).epsilon(1e-9));

    for (std::size_t i = 0; i < a.values.size(); ++i)
        CHECK(std::abs(a.values[i] - b.values[i]) <= 1e-4);
}

}  // TEST_SUITE
