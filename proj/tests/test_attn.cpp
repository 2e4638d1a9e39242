#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fewfont/gradcheck.hpp"
#include "fewfont/style_attn.hpp"

using namespace fewfont;
using D = double;
using TapeD = Tape<double>;

namespace {
Tensor<D> random_tensor(Shape s, uint64_t seed, double scale = 1.0) {
    Tensor<D> t(std::move(s));
    Rng rng(seed);
    for (std::size_t i = 0; i < t.size(); i++) t[i] = rng.normal() * scale;
    return t;
}

StyleAttnConfig small_cfg(int k = 2) {
    StyleAttnConfig cfg;
    cfg.channels = 8;
    cfg.heads = 2;
    cfg.head_dim = 4;
    cfg.k = k;
    cfg.h = cfg.w = 4;
    return cfg;
}
}  // namespace

TEST_CASE("flatten_content: paper and desk geometries, round trip") {
    StyleAttnConfig cfg;
    cfg.channels = 256;
    cfg.h = cfg.w = 16;
    TapeD t;
    auto f = t.leaf(random_tensor({256, 16, 16}, 1));
    auto seq = flatten_content(t, cfg, f);
    CHECK(t.val(seq).shape == Shape{256, 256});
    auto back = t.reshape(seq, {256, 16, 16});
    for (std::size_t i = 0; i < t.val(f).size(); i++) CHECK(t.val(back)[i] == t.val(f)[i]);

    cfg.h = cfg.w = 4;
    auto g = t.leaf(random_tensor({256, 4, 4}, 2));
    CHECK(t.val(flatten_content(t, cfg, g)).shape == Shape{256, 16});

    CHECK_THROWS_AS((void)flatten_content(t, cfg, f), ShapeError);
}

TEST_CASE("flatten_references: order, k=1 case, block structure") {
    auto cfg = small_cfg(3);
    TapeD t;
    std::vector<TapeD::Id> refs;
    for (uint64_t i = 0; i < 3; i++) refs.push_back(t.leaf(random_tensor({8, 4, 4}, 10 + i)));
    auto seq = flatten_references(t, cfg, refs);
    CHECK(t.val(seq).shape == Shape{8, 48});

    auto cfg1 = small_cfg(1);
    auto one = flatten_references(t, cfg1, {refs[0]});
    auto direct = flatten_content(t, cfg1, refs[0]);
    for (std::size_t i = 0; i < t.val(one).size(); i++)
        CHECK(t.val(one)[i] == t.val(direct)[i]);

    // permuting reference order permutes 16-column blocks
    auto seq2 = flatten_references(t, cfg, {refs[2], refs[0], refs[1]});
    for (int c = 0; c < 8; c++)
        for (int i = 0; i < 16; i++) {
            CHECK(t.val(seq2)[std::size_t(c) * 48 + i] ==
                  t.val(seq)[std::size_t(c) * 48 + 32 + i]);
            CHECK(t.val(seq2)[std::size_t(c) * 48 + 16 + i] ==
                  t.val(seq)[std::size_t(c) * 48 + i]);
        }

    refs.push_back(t.leaf(random_tensor({8, 2, 2}, 99)));
    StyleAttnConfig cfg4 = small_cfg(4);
    CHECK_THROWS_AS((void)flatten_references(t, cfg4, refs), ShapeError);
}

TEST_CASE("project_qkv: zero, identity, paper shapes, bad head") {
    auto cfg = small_cfg(2);
    Rng rng(20);
    ParamSet<D> ps;
    StyleAttnParams<D> prm;
    prm.build(ps, "attn", cfg, rng);

    // zero projections -> zero Q,K,V
    for (auto& p : ps.items)
        for (std::size_t i = 0; i < p.value.size(); i++) p.value[i] = 0;
    TapeD t;
    auto p = bind_params(t, ps, false);
    auto fc = flatten_content(t, cfg, t.leaf(random_tensor({8, 4, 4}, 21)));
    std::vector<TapeD::Id> refs = {t.leaf(random_tensor({8, 4, 4}, 22)),
                                   t.leaf(random_tensor({8, 4, 4}, 23))};
    auto fr = flatten_references(t, cfg, refs);
    auto qkv = project_qkv(t, cfg, prm, p, fc, fr, 0);
    for (std::size_t i = 0; i < t.val(qkv.q).size(); i++) CHECK(t.val(qkv.q)[i] == 0.0);
    for (std::size_t i = 0; i < t.val(qkv.k).size(); i++) CHECK(t.val(qkv.k)[i] == 0.0);
    CHECK(t.val(qkv.q).shape == Shape{4, 16});
    CHECK(t.val(qkv.k).shape == Shape{4, 32});
    CHECK(t.val(qkv.v).shape == Shape{4, 32});

    CHECK_THROWS_AS((void)project_qkv(t, cfg, prm, p, fc, fr, 2), ValueError);

    // identity-like projection with head_dim == channels reproduces the input
    StyleAttnConfig icfg = cfg;
    icfg.heads = 1;
    icfg.k = 1;
    icfg.head_dim = icfg.channels;
    ParamSet<D> ps2;
    StyleAttnParams<D> prm2;
    Rng rng2(24);
    prm2.build(ps2, "attn", icfg, rng2);
    Tensor<D>& wq = ps2[prm2.wq[0]].value;
    for (std::size_t i = 0; i < wq.size(); i++) wq[i] = 0;
    for (int i = 0; i < 8; i++) wq[std::size_t(i) * 8 + i] = 1;
    TapeD t2;
    auto p2 = bind_params(t2, ps2, false);
    auto fc2 = flatten_content(t2, icfg, t2.leaf(random_tensor({8, 4, 4}, 25)));
    auto fr2 = flatten_references(t2, icfg, {t2.leaf(random_tensor({8, 4, 4}, 26))});
    auto qkv2 = project_qkv(t2, icfg, prm2, p2, fc2, fr2, 0);
    for (std::size_t i = 0; i < t2.val(fc2).size(); i++)
        CHECK(t2.val(qkv2.q)[i] == doctest::Approx(t2.val(fc2)[i]));
}

TEST_CASE("correspondence: zero query, scalar oracle, paper shape") {
    TapeD t;
    auto q0 = t.leaf(Tensor<D>::zeros({4, 16}));
    auto k0 = t.leaf(random_tensor({4, 32}, 30));
    auto a0 = correspondence(t, q0, k0);
    for (std::size_t i = 0; i < t.val(a0).size(); i++) CHECK(t.val(a0)[i] == 0.0);

    // all-ones 4-vectors at one position pair: dot 4, scaled by 1/sqrt(4) -> 2
    Tensor<D> q({4, 1}, {1, 1, 1, 1});
    Tensor<D> k({4, 1}, {1, 1, 1, 1});
    auto a = correspondence(t, t.leaf(q), t.leaf(k));
    CHECK(t.val(a)[0] == doctest::Approx(2.0));

    auto qp = t.leaf(random_tensor({32, 256}, 31));
    auto kp = t.leaf(random_tensor({32, 768}, 32));
    CHECK(t.val(correspondence(t, qp, kp)).shape == Shape{256, 768});

    auto bad = t.leaf(random_tensor({5, 16}, 33));
    CHECK_THROWS_AS((void)correspondence(t, bad, k0), ShapeError);
}

TEST_CASE("aggregate: uniform attention, dominant logit, convex hull") {
    TapeD t;
    Tensor<D> v = random_tensor({3, 12}, 40);
    auto vid = t.leaf(v);

    auto a_uniform = t.leaf(Tensor<D>::zeros({5, 12}));
    auto s = aggregate(t, a_uniform, vid);
    CHECK(t.val(s).shape == Shape{5, 3});
    for (int r = 0; r < 5; r++)
        for (int c = 0; c < 3; c++) {
            double mean = 0;
            for (int j = 0; j < 12; j++) mean += v[std::size_t(c) * 12 + j];
            mean /= 12;
            CHECK(t.val(s)[std::size_t(r) * 3 + c] == doctest::Approx(mean));
        }

    // one dominant logit pins the row to that value column
    Tensor<D> a1 = Tensor<D>::zeros({1, 12});
    a1[7] = 60.0;
    auto s1 = aggregate(t, t.leaf(a1), vid);
    for (int c = 0; c < 3; c++)
        CHECK(t.val(s1)[std::size_t(c)] ==
              doctest::Approx(v[std::size_t(c) * 12 + 7]).epsilon(1e-9));

    // convexity: every output coordinate within [min, max] of value columns
    auto ar = t.leaf(random_tensor({9, 12}, 41, 2.0));
    auto sr = aggregate(t, ar, vid);
    for (int c = 0; c < 3; c++) {
        double lo = v[std::size_t(c) * 12], hi = lo;
        for (int j = 1; j < 12; j++) {
            lo = std::min(lo, v[std::size_t(c) * 12 + j]);
            hi = std::max(hi, v[std::size_t(c) * 12 + j]);
        }
        for (int r = 0; r < 9; r++) {
            CHECK(t.val(sr)[std::size_t(r) * 3 + c] >= lo - 1e-12);
            CHECK(t.val(sr)[std::size_t(r) * 3 + c] <= hi + 1e-12);
        }
    }
}

TEST_CASE("fuse: geometry, zero projection") {
    auto cfg = small_cfg(2);
    Rng rng(50);
    ParamSet<D> ps;
    StyleAttnParams<D> prm;
    prm.build(ps, "attn", cfg, rng);
    Tensor<D>& ws = ps[prm.ws].value;
    for (std::size_t i = 0; i < ws.size(); i++) ws[i] = 0;

    TapeD t;
    auto p = bind_params(t, ps, false);
    Tensor<D> fc = random_tensor({8, 4, 4}, 51);
    std::vector<TapeD::Id> styles = {t.leaf(random_tensor({16, 4}, 52)),
                                     t.leaf(random_tensor({16, 4}, 53))};
    auto fcr = fuse(t, cfg, prm, p, styles, t.leaf(fc));
    CHECK(t.val(fcr).shape == Shape{16, 4, 4});
    for (std::size_t i = 0; i < fc.size(); i++) CHECK(t.val(fcr)[i] == fc[i]);  // content half
    for (std::size_t i = fc.size(); i < t.val(fcr).size(); i++) CHECK(t.val(fcr)[i] == 0.0);

    CHECK_THROWS_AS((void)fuse(t, cfg, prm, p, {styles[0]}, t.leaf(fc)), ShapeError);
}

TEST_CASE("full forward: reference permutation invariance within 1e-6") {
    auto cfg = small_cfg(3);
    Rng rng(60);
    ParamSet<D> ps;
    StyleAttnParams<D> prm;
    prm.build(ps, "attn", cfg, rng);

    Tensor<D> fc = random_tensor({8, 4, 4}, 61);
    std::vector<Tensor<D>> refs;
    for (uint64_t i = 0; i < 3; i++) refs.push_back(random_tensor({8, 4, 4}, 62 + i));

    auto run = [&](std::vector<int> order) {
        TapeD t;
        auto p = bind_params(t, ps, false);
        std::vector<TapeD::Id> r;
        for (int i : order) r.push_back(t.leaf(refs[std::size_t(i)]));
        auto out = style_attn_forward(t, cfg, prm, p, t.leaf(fc), r);
        return t.val(out).clone();
    };
    Tensor<D> a = run({0, 1, 2});
    Tensor<D> b = run({2, 0, 1});
    Tensor<D> c = run({1, 2, 0});
    for (std::size_t i = 0; i < a.size(); i++) {
        CHECK(std::fabs(a[i] - b[i]) < 1e-6);
        CHECK(std::fabs(a[i] - c[i]) < 1e-6);
    }
}

TEST_CASE("full forward: duplicating every reference d times is a no-op") {
    auto base = small_cfg(2);
    Rng rng(70);
    ParamSet<D> ps;
    StyleAttnParams<D> prm;
    prm.build(ps, "attn", base, rng);

    Tensor<D> fc = random_tensor({8, 4, 4}, 71);
    std::vector<Tensor<D>> refs = {random_tensor({8, 4, 4}, 72), random_tensor({8, 4, 4}, 73)};

    TapeD t;
    auto p = bind_params(t, ps, false);
    std::vector<TapeD::Id> r2 = {t.leaf(refs[0]), t.leaf(refs[1])};
    auto out2 = style_attn_forward(t, base, prm, p, t.leaf(fc), r2);

    auto dup = small_cfg(6);  // every reference appears 3 times
    std::vector<TapeD::Id> r6;
    for (int d = 0; d < 3; d++) {
        r6.push_back(t.leaf(refs[0]));
        r6.push_back(t.leaf(refs[1]));
    }
    auto out6 = style_attn_forward(t, dup, prm, p, t.leaf(fc), r6);
    for (std::size_t i = 0; i < t.val(out2).size(); i++)
        CHECK(std::fabs(t.val(out2)[i] - t.val(out6)[i]) < 1e-6);
}

TEST_CASE("full forward: self-reconstruction configuration (k=1, own map)") {
    auto cfg = small_cfg(1);
    Rng rng(80);
    ParamSet<D> ps;
    StyleAttnParams<D> prm;
    prm.build(ps, "attn", cfg, rng);
    TapeD t;
    t.check_finite = true;
    auto p = bind_params(t, ps, false);
    Tensor<D> fc = random_tensor({8, 4, 4}, 81);
    auto out = style_attn_forward(t, cfg, prm, p, t.leaf(fc), {t.leaf(fc)});
    CHECK(t.val(out).shape == Shape{16, 4, 4});
    CHECK(all_finite(t.val(out)));
}

TEST_CASE("attention rows sum to one") {
    auto cfg = small_cfg(3);
    Rng rng(90);
    ParamSet<D> ps;
    StyleAttnParams<D> prm;
    prm.build(ps, "attn", cfg, rng);
    TapeD t;
    auto p = bind_params(t, ps, false);
    std::vector<TapeD::Id> refs;
    for (uint64_t i = 0; i < 3; i++) refs.push_back(t.leaf(random_tensor({8, 4, 4}, 91 + i)));
    AttnCapture<D> cap;
    (void)style_attn_forward(t, cfg, prm, p, t.leaf(random_tensor({8, 4, 4}, 94)), refs, &cap);
    REQUIRE(cap.rows.size() == 2);
    for (const auto& m : cap.rows) {
        REQUIRE(m.shape == Shape{16, 48});
        for (int r = 0; r < 16; r++) {
            double sum = 0;
            for (int c = 0; c < 48; c++) sum += m[std::size_t(r) * 48 + c];
            CHECK(std::fabs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("full forward gradient vs finite differences at 4x4 maps") {
    auto cfg = small_cfg(2);
    Rng rng(100);
    ParamSet<D> ps;
    StyleAttnParams<D> prm;
    prm.build(ps, "attn", cfg, rng);
    Tensor<D> fc = random_tensor({8, 4, 4}, 101);
    std::vector<Tensor<D>> refs = {random_tensor({8, 4, 4}, 102), random_tensor({8, 4, 4}, 103)};

    auto through_content = [&](TapeD& t, TapeD::Id x) {
        auto p = bind_params(t, ps, false);
        return t.sum_all(
            style_attn_forward(t, cfg, prm, p, x, {t.leaf(refs[0]), t.leaf(refs[1])}));
    };
    CHECK(grad_check<D>(through_content, fc, 1e-6) < 1e-4);

    auto through_ref = [&](TapeD& t, TapeD::Id r0) {
        auto p = bind_params(t, ps, false);
        auto out = style_attn_forward(t, cfg, prm, p, t.leaf(fc), {r0, t.leaf(refs[1])});
        return t.mean_all(t.abs(out));
    };
    CHECK(grad_check<D>(through_ref, refs[0], 1e-6) < 1e-4);

    for (int h : {prm.wq[0], prm.wk[1], prm.wv[0], prm.ws}) {
        auto through_param = [&](TapeD& t, TapeD::Id cand) {
            std::vector<TapeD::Id> p;
            for (int i = 0; i < int(ps.size()); i++)
                p.push_back(i == h ? cand : t.leaf(ps[i].value));
            auto out = style_attn_forward(t, cfg, prm, p, t.leaf(fc),
                                          {t.leaf(refs[0]), t.leaf(refs[1])});
            return t.sum_all(t.mul(out, out));
        };
        CHECK(grad_check<D>(through_param, ps[h].value, 1e-6) < 1e-4);
    }
}
