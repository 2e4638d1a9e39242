#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "fewfont/dataset.hpp"

using namespace fewfont;

namespace {
DecompositionTable sample_table() {
    return load_table(FEWFONT_DATA_DIR "/sample_table.tsv");
}
}  // namespace

TEST_CASE("render_glyph: determinism and value range") {
    DecompositionTable t = sample_table();
    StyleParams st = neutral_style();
    GlyphImage a = render_glyph(t, "g17", st, 32);
    GlyphImage b = render_glyph(t, "g17", st, 32);
    CHECK(a.pixels == b.pixels);
    CHECK(a.mask == b.mask);
    int ink = 0;
    for (std::size_t i = 0; i < a.pixels.size(); i++) {
        CHECK(a.pixels[i] >= 0.0f);
        CHECK(a.pixels[i] <= 1.0f);
        if (a.pixels[i] > 0) ink++;
    }
    CHECK(ink > 20);  // the glyph is actually drawn

    StyleParams jit = st;
    jit.jitter_seed = 42;
    GlyphImage c = render_glyph(t, "g17", jit, 32);
    GlyphImage d = render_glyph(t, "g17", jit, 32);
    CHECK(c.pixels == d.pixels);

    CHECK_THROWS_AS((void)render_glyph(t, "zz", st, 32), DataError);
    CHECK_THROWS_AS((void)render_glyph(t, "g1", st, 17), ValueError);
    StyleParams bad = st;
    bad.slant = 1.0;
    CHECK_THROWS_AS((void)render_glyph(t, "g1", bad, 32), ValueError);
}

TEST_CASE("left-right layout keeps component masks in their halves") {
    DecompositionTable t = parse_table("x\tLR\ta,b\na\tatom\nb\tatom\n");
    auto labels = component_labels(t);
    GlyphImage g = render_glyph(t, "x", neutral_style(), 32);
    for (int y = 0; y < 32; y++)
        for (int x = 0; x < 32; x++) {
            uint8_t l = g.mask[std::size_t(y) * 32 + x];
            if (l == labels.at("a")) CHECK(x < 16);
            if (l == labels.at("b")) CHECK(x >= 16);
        }
}

TEST_CASE("ink fraction grows monotonically with stroke width") {
    DecompositionTable t = sample_table();
    double prev = -1;
    for (double w : {1.5, 2.0, 2.5, 3.0, 3.5, 4.0}) {
        StyleParams st = neutral_style();
        st.stroke_width = w;
        GlyphImage g = render_glyph(t, "g24", st, 32);
        double ink = 0;
        for (float v : g.pixels) ink += v;
        CHECK(ink > prev);
        prev = ink;
    }
}

TEST_CASE("masks partition ink pixels") {
    DecompositionTable t = sample_table();
    StyleParams st = neutral_style();
    st.stroke_width = 2.6;
    for (const char* glyph : {"g1", "g8", "g25", "g35", "a"}) {
        GlyphImage g = render_glyph(t, glyph, st, 32);
        for (std::size_t i = 0; i < g.pixels.size(); i++) {
            CHECK((g.pixels[i] > 0) == (g.mask[i] != 0));
        }
    }
}

TEST_CASE("component labels are stable and 1-based") {
    DecompositionTable t = sample_table();
    auto labels = component_labels(t);
    CHECK(labels.size() == 12);
    CHECK(labels.at("a") == 1);
    CHECK(labels.at("l") == 12);
}

TEST_CASE("dataset: product size, shared content font, reference lengths") {
    DecompositionTable t = sample_table();
    DatasetConfig cfg;
    cfg.seed = 3;
    Dataset ds = build_dataset(t, cfg);

    CHECK(ds.images.size() == 8);
    for (const auto& row : ds.images) CHECK(row.size() == ds.chars.size());
    std::size_t total = 0;
    for (Split s : {Split::Train, Split::NovelChar, Split::NovelStyle, Split::NovelBoth})
        total += ds.pairs(s).size();
    CHECK(total == ds.chars.size() * ds.styles.size());
    for (Split s : {Split::Train, Split::NovelChar, Split::NovelStyle, Split::NovelBoth})
        CHECK(!ds.pairs(s).empty());

    // every reference list has length k and indexes into the char list
    for (std::size_t c = 0; c < ds.chars.size(); c++) {
        auto refs = ds.ref_char_ids(int(c));
        CHECK(refs.size() == 3);
        auto imgs = ds.refs_for(0, int(c));
        CHECK(imgs.size() == 3);
    }

    // pixels quantized to the 8-bit scale, in range
    for (const auto& img : ds.content_images)
        for (std::size_t i = 0; i < img.size(); i++) {
            CHECK(img[i] >= 0.0f);
            CHECK(img[i] <= 1.0f);
            float q = std::round(img[i] * 255.0f) / 255.0f;
            CHECK(img[i] == q);
        }
}

TEST_CASE("dataset write/load round trip is exact") {
    DecompositionTable t = sample_table();
    DatasetConfig cfg;
    cfg.seed = 11;
    Dataset ds = build_dataset(t, cfg);
    std::string dir = "/tmp/fewfont_test_ds_rt";
    std::filesystem::remove_all(dir);
    write_dataset(dir, ds);
    Dataset back = load_dataset(dir);

    CHECK(back.chars == ds.chars);
    CHECK(back.char_seen == ds.char_seen);
    CHECK(back.refs.glyphs == ds.refs.glyphs);
    REQUIRE(back.styles.size() == ds.styles.size());
    for (std::size_t s = 0; s < ds.styles.size(); s++) {
        CHECK(back.styles[s].name == ds.styles[s].name);
        CHECK(back.styles[s].seen == ds.styles[s].seen);
        for (std::size_t c = 0; c < ds.chars.size(); c++) {
            const auto& a = ds.images[s][c];
            const auto& b = back.images[s][c];
            REQUIRE(a.size() == b.size());
            for (std::size_t i = 0; i < a.size(); i++) CHECK(a[i] == b[i]);
            CHECK(ds.masks[s][c].pixels == back.masks[s][c].pixels);
        }
    }
    for (const auto& c : ds.mapping.contents)
        CHECK(back.mapping.entries.at(c) == ds.mapping.entries.at(c));
    std::filesystem::remove_all(dir);

    CHECK_THROWS_AS((void)load_dataset("/tmp/fewfont_no_such_dataset"), DataError);
}

TEST_CASE("png codec: round trip and golden-stable bytes") {
    GrayImage img;
    img.width = 13;
    img.height = 7;
    img.pixels.resize(91);
    for (std::size_t i = 0; i < img.pixels.size(); i++) img.pixels[i] = uint8_t((i * 37) % 256);
    auto bytes = encode_png(img);
    GrayImage back = decode_png(bytes);
    CHECK(back.width == 13);
    CHECK(back.height == 7);
    CHECK(back.pixels == img.pixels);
    CHECK(encode_png(img) == bytes);  // stable encoding

    bytes[20] ^= 0xFF;  // corrupt IHDR payload
    CHECK_THROWS_AS((void)decode_png(bytes), ParseError);
    CHECK_THROWS_AS((void)decode_png(std::vector<uint8_t>{1, 2, 3}), ParseError);
}
