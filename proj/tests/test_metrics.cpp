#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fewfont/attnviz.hpp"
#include "fewfont/dataset.hpp"
#include "fewfont/metrics.hpp"
#include "fewfont/rng.hpp"

using namespace fewfont;

namespace {
Tensor<float> random_image(int size, uint64_t seed) {
    Tensor<float> t({1, size, size});
    Rng rng(seed);
    for (std::size_t i = 0; i < t.size(); i++) t[i] = float(rng.uniform());
    return t;
}
}  // namespace

TEST_CASE("pixel metrics: identity, constant offset, Jensen inequality") {
    Tensor<float> x = random_image(16, 1);
    PixelMetrics same = pixel_metrics(x, x);
    CHECK(same.l1 == 0.0);
    CHECK(same.rmse == 0.0);

    Tensor<float> half = Tensor<float>::zeros({1, 8, 8});
    Tensor<float> zero = Tensor<float>::zeros({1, 8, 8});
    for (std::size_t i = 0; i < half.size(); i++) half[i] = 0.5f;
    PixelMetrics pm = pixel_metrics(half, zero);
    CHECK(pm.l1 == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(pm.rmse == doctest::Approx(0.5).epsilon(1e-12));

    for (uint64_t seed = 0; seed < 1000; seed++) {
        Tensor<float> a = random_image(8, 2 * seed);
        Tensor<float> b = random_image(8, 2 * seed + 1);
        PixelMetrics m = pixel_metrics(a, b);
        CHECK(m.rmse >= m.l1 - 1e-12);
    }

    CHECK_THROWS_AS((void)pixel_metrics(x, half), ShapeError);
}

TEST_CASE("ssim: exact self-identity, inversion, symmetry") {
    DecompositionTable t = load_table(FEWFONT_DATA_DIR "/sample_table.tsv");
    GlyphImage g = render_glyph(t, "g24", neutral_style(), 32);
    Tensor<float> x({1, 32, 32});
    for (std::size_t i = 0; i < x.size(); i++) x[i] = g.pixels[i];

    CHECK(ssim(x, x) == 1.0);  // exact

    Tensor<float> inv = x.clone();
    for (std::size_t i = 0; i < inv.size(); i++) inv[i] = 1.0f - inv[i];
    CHECK(ssim(x, inv) < 0.0);

    Tensor<float> y = random_image(32, 7);
    CHECK(std::fabs(ssim(x, y) - ssim(y, x)) < 1e-9);

    Tensor<float> tiny = random_image(8, 8);
    CHECK_THROWS_AS((void)ssim(tiny, tiny), ShapeError);
}

TEST_CASE("attention_map: uniform case, normalization, additivity") {
    int h = 4, w = 4, k = 3;
    int hw = h * w, khw = k * hw;
    Tensor<float> rows({hw, khw});
    for (std::size_t i = 0; i < rows.size(); i++) rows[i] = 1.0f / float(khw);

    auto single = attention_map(rows, point_probe(1, 2), h, w, k);
    CHECK(single.shape == Shape{h, k * w});
    double sum = 0;
    for (std::size_t i = 0; i < single.size(); i++) {
        CHECK(single[i] == doctest::Approx(1.0 / khw));
        sum += single[i];
    }
    CHECK(sum == doctest::Approx(1.0));

    // n queries -> total mass n
    AttentionProbe probe = stroke_probe(0, 0, 3, 3);
    auto multi = attention_map(rows, probe, h, w, k);
    double total = 0;
    for (std::size_t i = 0; i < multi.size(); i++) total += multi[i];
    CHECK(total == doctest::Approx(double(probe.positions.size())));

    // non-uniform rows: block layout matches the reference index
    Tensor<float> peaky = Tensor<float>::zeros({hw, khw});
    peaky[std::size_t(5) * khw + 2 * hw + 7] = 1.0f;  // query (1,1), ref 2, pos (1,3)
    auto pm = attention_map(peaky, point_probe(1, 1), h, w, k);
    CHECK(pm[std::size_t(1) * (k * w) + 2 * w + 3] == doctest::Approx(1.0));

    CHECK_THROWS_AS((void)attention_map(rows, point_probe(4, 0), h, w, k), ValueError);
    AttentionProbe empty;
    CHECK_THROWS_AS((void)attention_map(rows, empty, h, w, k), ValueError);
}

TEST_CASE("localization score: uniform baseline and perfect focus") {
    int h = 4, w = 4, k = 2;
    int hw = h * w, khw = k * hw;
    std::vector<std::vector<uint8_t>> grids(2, std::vector<uint8_t>(std::size_t(hw), 0));
    grids[0][0] = grids[0][1] = 3;  // 2 matching cells in ref 0
    grids[1][5] = 3;                // 1 in ref 1

    double base = uniform_localization_baseline(grids, 3);
    CHECK(base == doctest::Approx(3.0 / khw));

    Tensor<float> uniform({hw, khw});
    for (std::size_t i = 0; i < uniform.size(); i++) uniform[i] = 1.0f / float(khw);
    double s_uniform = localization_score(uniform, point_probe(2, 2), grids, 3, h, w);
    CHECK(s_uniform == doctest::Approx(base));

    // all mass inside the component region scores 1
    Tensor<float> focused = Tensor<float>::zeros({hw, khw});
    focused[std::size_t(10) * khw + 0] = 0.5f;       // ref 0 cell 0 (label 3)
    focused[std::size_t(10) * khw + hw + 5] = 0.5f;  // ref 1 cell 5 (label 3)
    CHECK(localization_score(focused, point_probe(2, 2), grids, 3, h, w) ==
          doctest::Approx(1.0));

    CHECK_THROWS_AS((void)localization_score(uniform, point_probe(0, 0), grids, 0, h, w),
                    ValueError);
}

TEST_CASE("mask downsampling: ink-majority labels per cell") {
    GrayImage mask;
    mask.width = mask.height = 8;
    mask.pixels.assign(64, 0);
    // top-left 4x4 cell: 3 pixels of label 2, 5 of label 1
    mask.at(0, 0) = 2;
    mask.at(0, 1) = 2;
    mask.at(1, 0) = 2;
    mask.at(2, 2) = 1;
    mask.at(2, 3) = 1;
    mask.at(3, 1) = 1;
    mask.at(3, 2) = 1;
    mask.at(3, 3) = 1;
    // bottom-right cell: single pixel of label 7
    mask.at(6, 6) = 7;
    auto grid = downsample_mask(mask, 2);
    CHECK(grid.size() == 4);
    CHECK(grid[0] == 1);  // majority among ink
    CHECK(grid[1] == 0);  // no ink
    CHECK(grid[2] == 0);
    CHECK(grid[3] == 7);  // background never outvotes ink

    auto probe = component_probe(grid, 2, 7);
    REQUIRE(probe.positions.size() == 1);
    CHECK(probe.positions[0] == std::make_pair(1, 1));

    auto missing = component_probe(grid, 2, 9);
    CHECK(missing.positions.empty());
}

TEST_CASE("attention map PNG export normalizes to the max") {
    Tensor<float> map({2, 3}, {0.0f, 0.1f, 0.2f, 0.3f, 0.4f, 0.5f});
    GrayImage g = attention_map_to_gray(map);
    CHECK(g.width == 3);
    CHECK(g.height == 2);
    CHECK(g.pixels[5] == 255);
    CHECK(g.pixels[0] == 0);
}
