#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "fewfont/checkpoint.hpp"
#include "fewfont/fontnet.hpp"
#include "fewfont/gradcheck.hpp"

using namespace fewfont;
using D = double;
using TapeD = Tape<double>;

namespace {
template <typename T>
Tensor<T> random_image(int size, uint64_t seed) {
    Tensor<T> t({1, size, size});
    Rng rng(seed);
    for (std::size_t i = 0; i < t.size(); i++) t[i] = T(rng.uniform());
    return t;
}

NetConfig tiny_cfg(int image_size = 16) {
    NetConfig c;
    c.image_size = image_size;
    c.width_mult = 0.125;  // channel ladder 4/8/16/32/64
    c.heads = 2;
    c.k = 2;
    c.num_styles = 3;
    c.num_chars = 5;
    return c;
}
}  // namespace

TEST_CASE("content encoder: paper and desk geometries, non-square error") {
    {
        NetConfig c;
        c.image_size = 128;
        Rng rng(1);
        Generator<D> g;
        g.build(c, rng);
        TapeD t;
        auto p = bind_params(t, g.params, false);
        auto f = g.encode_content(t, p, t.leaf(random_image<D>(128, 2)));
        CHECK(t.val(f).shape == Shape{256, 16, 16});
    }
    {
        NetConfig c;
        c.image_size = 32;
        c.width_mult = 0.25;
        Rng rng(3);
        Generator<D> g;
        g.build(c, rng);
        TapeD t;
        auto p = bind_params(t, g.params, false);
        auto f = g.encode_content(t, p, t.leaf(random_image<D>(32, 4)));
        CHECK(t.val(f).shape == Shape{64, 4, 4});

        Tensor<D> rect({1, 32, 16});
        CHECK_THROWS_AS((void)g.encode_content(t, p, t.leaf(rect)), ShapeError);
    }
}

TEST_CASE("reference encoder: k maps, sigmoid range, k=1 path") {
    NetConfig c = tiny_cfg(32);
    c.width_mult = 0.25;
    Rng rng(5);
    Generator<D> g;
    g.build(c, rng);
    TapeD t;
    auto p = bind_params(t, g.params, false);
    std::vector<TapeD::Id> refs = {t.leaf(random_image<D>(32, 6)),
                                   t.leaf(random_image<D>(32, 7)),
                                   t.leaf(random_image<D>(32, 8))};
    auto maps = g.encode_references(t, p, refs);
    REQUIRE(maps.size() == 3);
    for (auto m : maps) {
        CHECK(t.val(m).shape == Shape{64, 4, 4});
        for (std::size_t i = 0; i < t.val(m).size(); i++) {
            CHECK(t.val(m)[i] > 0.0);
            CHECK(t.val(m)[i] < 1.0);
        }
    }
    auto one = g.encode_references(t, p, {refs[0]});
    CHECK(one.size() == 1);
    CHECK_THROWS_AS((void)g.encode_references(t, p, {}), ValueError);

    // duplicated reference storage is encoded once and shared
    auto dup = g.encode_references(t, p, {refs[0], refs[0], refs[1]});
    CHECK(dup[0] == dup[1]);
    CHECK(dup[0] != dup[2]);
}

TEST_CASE("reference encoder channel ladder matches the table") {
    NetConfig c;
    c.image_size = 128;  // width_mult 1: 32/64/128/128/128/256/256
    Rng rng(9);
    Generator<D> g;
    g.build(c, rng);
    CHECK(g.er1.spec.out_ch == 32);
    CHECK(g.er2.spec.out_ch == 64);
    CHECK(g.er3.spec.out_ch == 128);
    CHECK(g.er4.rspec.out_ch == 128);
    CHECK(g.er5.rspec.out_ch == 128);
    CHECK(g.er6.rspec.out_ch == 256);
    CHECK(g.er7.rspec.out_ch == 256);
    CHECK(g.ec2.spec.stride == 2);
    CHECK(g.ec3.spec.stride == 2);
    CHECK(g.ec4.spec.stride == 2);
    CHECK(g.d4.spec.resample == Resample::Nearest);
    CHECK(g.d5.spec.resample == Resample::Nearest);
    CHECK(g.d6.spec.resample == Resample::Nearest);
}

TEST_CASE("decoder: geometry, range, channel mismatch") {
    NetConfig c = tiny_cfg(32);
    c.width_mult = 0.25;
    Rng rng(10);
    Generator<D> g;
    g.build(c, rng);
    TapeD t;
    auto p = bind_params(t, g.params, false);
    Tensor<D> fcr({128, 4, 4});
    Rng r2(11);
    for (std::size_t i = 0; i < fcr.size(); i++) fcr[i] = r2.normal() * 0.3;
    auto y = g.decode(t, p, t.leaf(fcr));
    CHECK(t.val(y).shape == Shape{1, 32, 32});
    for (std::size_t i = 0; i < t.val(y).size(); i++) {
        CHECK(t.val(y)[i] > 0.0);
        CHECK(t.val(y)[i] < 1.0);
    }
    CHECK_THROWS_AS((void)g.decode(t, p, t.leaf(Tensor<D>({64, 4, 4}))), ShapeError);
}

TEST_CASE("decoder upsamples 512x16x16 to 1x128x128") {
    NetConfig c;
    c.image_size = 128;
    Rng rng(12);
    Generator<D> g;
    g.build(c, rng);
    TapeD t;
    auto p = bind_params(t, g.params, false);
    Tensor<D> fcr({512, 16, 16});
    Rng r2(13);
    for (std::size_t i = 0; i < fcr.size(); i++) fcr[i] = r2.normal() * 0.1;
    auto y = g.decode(t, p, t.leaf(fcr));
    CHECK(t.val(y).shape == Shape{1, 128, 128});
}

TEST_CASE("generate: geometry, reference permutation, determinism") {
    NetConfig c = tiny_cfg(16);
    Rng rng(20);
    Generator<D> g;
    g.build(c, rng);
    Tensor<D> x = random_image<D>(16, 21);
    std::vector<Tensor<D>> refs = {random_image<D>(16, 22), random_image<D>(16, 23)};

    Tensor<D> out = g.generate(x, refs);
    CHECK(out.shape == Shape{1, 16, 16});

    Tensor<D> swapped = g.generate(x, {refs[1], refs[0]});
    for (std::size_t i = 0; i < out.size(); i++)
        CHECK(std::fabs(out[i] - swapped[i]) < 1e-5);

    Tensor<D> again = g.generate(x, refs);
    for (std::size_t i = 0; i < out.size(); i++) CHECK(out[i] == again[i]);  // bit-identical

    // same seed, fresh build: identical parameters and outputs
    Rng rng2(20);
    Generator<D> g2;
    g2.build(c, rng2);
    Tensor<D> out2 = g2.generate(x, refs);
    for (std::size_t i = 0; i < out.size(); i++) CHECK(out[i] == out2[i]);
}

TEST_CASE("averaging ablation produces a constant broadcast style") {
    NetConfig c = tiny_cfg(16);
    Rng rng(30);
    Generator<D> g;
    g.build(c, rng);
    TapeD t;
    auto p = bind_params(t, g.params, false);
    auto f_c = g.encode_content(t, p, t.leaf(random_image<D>(16, 31)));
    auto f_r = g.encode_references(
        t, p, {t.leaf(random_image<D>(16, 32)), t.leaf(random_image<D>(16, 33))});
    auto fused = g.fuse_features(t, p, f_c, f_r, false);
    int cc = c.feat_channels(), hw = c.feat_size() * c.feat_size();
    CHECK(t.val(fused).shape == Shape{2 * cc, c.feat_size(), c.feat_size()});
    // second half: per channel constant equal to the mean over both maps
    for (int ch = 0; ch < cc; ch++) {
        double mean = 0;
        for (auto m : f_r) {
            const auto& v = t.val(m);
            for (int i = 0; i < hw; i++) mean += v[std::size_t(ch) * hw + i];
        }
        mean /= double(2 * hw);
        for (int i = 0; i < hw; i++) {
            double got = t.val(fused)[std::size_t(cc + ch) * hw + i];
            CHECK(got == doctest::Approx(mean).epsilon(1e-9));
        }
    }
}

TEST_CASE("discriminator: zero embeddings, linearity, geometry") {
    NetConfig c = tiny_cfg(16);
    Rng rng(40);
    Discriminator<D> d;
    d.build(c, rng);
    Tensor<D> img = random_image<D>(16, 41);

    {
        ParamSet<D> zeroed = d.params;
        for (auto& prm : zeroed.items)
            if (prm.name.starts_with("disc.emb"))
                for (std::size_t i = 0; i < prm.value.size(); i++) prm.value[i] = 0;
        TapeD t;
        auto p = bind_params(t, zeroed, false);
        auto l = d.logit(t, p, t.leaf(img), 1, 2);
        CHECK(t.val(l)[0] == 0.0);
    }
    {
        // zero the char row; doubling the style row doubles the logit
        ParamSet<D> ps = d.params;
        int fe = c.disc_feat();
        Tensor<D>& ec = ps[d.emb_char].value;
        for (int i = 0; i < fe; i++) ec[std::size_t(2) * fe + i] = 0;
        TapeD t;
        auto p = bind_params(t, ps, false);
        auto l1 = d.logit(t, p, t.leaf(img), 1, 2);

        Tensor<D>& es = ps[d.emb_style].value;
        for (int i = 0; i < fe; i++) es[std::size_t(1) * fe + i] *= 2.0;
        TapeD t2;
        auto p2 = bind_params(t2, ps, false);
        auto l2 = d.logit(t2, p2, t2.leaf(img), 1, 2);
        CHECK(t2.val(l2)[0] == doctest::Approx(2.0 * t.val(l1)[0]).epsilon(1e-9));
    }
    {
        TapeD t;
        auto p = bind_params(t, d.params, false);
        auto phi = d.feature(t, p, t.leaf(img));
        CHECK(t.val(phi).shape == Shape{c.disc_feat()});
        CHECK_THROWS_AS((void)d.logit(t, p, t.leaf(img), 7, 0), ValueError);
        CHECK_THROWS_AS((void)d.logit(t, p, t.leaf(img), 0, 9), ValueError);
    }
}

TEST_CASE("discriminator gradient at desk geometry") {
    NetConfig c = tiny_cfg(16);
    Rng rng(50);
    Discriminator<D> d;
    d.build(c, rng);
    d.power_iterate();
    auto f = [&](TapeD& t, TapeD::Id img) {
        auto p = bind_params(t, d.params, false);
        return d.logit(t, p, img, 0, 1);
    };
    CHECK(grad_check<D>(f, random_image<D>(16, 51), 1e-6) < 1e-4);
}

TEST_CASE("full generator gradient w.r.t. content image") {
    NetConfig c = tiny_cfg(16);
    Rng rng(60);
    Generator<D> g;
    g.build(c, rng);
    std::vector<Tensor<D>> refs = {random_image<D>(16, 61), random_image<D>(16, 62)};
    auto f = [&](TapeD& t, TapeD::Id x) {
        auto p = bind_params(t, g.params, false);
        std::vector<TapeD::Id> r = {t.leaf(refs[0]), t.leaf(refs[1])};
        return t.mean_all(t.abs(g.forward(t, p, x, r)));
    };
    CHECK(grad_check<D>(f, random_image<D>(16, 63), 1e-6) < 1e-4);
}

TEST_CASE("checkpoint: bit-exact round trip and error paths") {
    NetConfig c = tiny_cfg(16);
    Rng rng(70);
    Generator<float> g;
    g.build(c, rng);
    Rng rng2(71);
    Discriminator<float> d;
    d.build(c, rng2);

    CheckpointMeta meta;
    meta.net = c;
    meta.style_names = {"neutral", "s0", "s1"};
    meta.char_names = {"g1", "g2", "g3", "g4", "g5"};

    std::string path = "/tmp/fewfont_test_ck.bin";
    save_checkpoint(path, meta, g.params, d.params);
    Checkpoint ck = load_checkpoint(path);
    CHECK(ck.meta.net.image_size == 16);
    CHECK(ck.meta.net.width_mult == c.width_mult);
    CHECK(ck.meta.style_names == meta.style_names);
    CHECK(ck.meta.char_names == meta.char_names);

    Rng rng3(999);  // different init, then restore from checkpoint
    Generator<float> g2;
    g2.build(c, rng3);
    fill_params(g2.params, ck, "g.");
    for (std::size_t i = 0; i < g.params.size(); i++) {
        const auto& a = g.params[int(i)].value;
        const auto& b = g2.params[int(i)].value;
        REQUIRE(a.shape == b.shape);
        for (std::size_t j = 0; j < a.size(); j++) CHECK(a[j] == b[j]);
    }

    // identical inference after reload
    Tensor<float> x = random_image<float>(16, 72);
    std::vector<Tensor<float>> refs = {random_image<float>(16, 73), random_image<float>(16, 74)};
    Tensor<float> o1 = g.generate(x, refs), o2 = g2.generate(x, refs);
    for (std::size_t i = 0; i < o1.size(); i++) CHECK(o1[i] == o2[i]);

    // save twice -> identical bytes
    std::string path2 = "/tmp/fewfont_test_ck2.bin";
    save_checkpoint(path2, meta, g.params, d.params);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);

    CHECK_THROWS_AS((void)load_checkpoint("/tmp/fewfont_does_not_exist.bin"), DataError);
    std::ofstream bad("/tmp/fewfont_bad_ck.bin", std::ios::binary);
    bad << "not a checkpoint";
    bad.close();
    CHECK_THROWS_AS((void)load_checkpoint("/tmp/fewfont_bad_ck.bin"), ParseError);

    std::remove(path.c_str());
    std::remove(path2.c_str());
    std::remove("/tmp/fewfont_bad_ck.bin");
}
