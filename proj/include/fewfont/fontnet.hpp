#pragma once

// Generator and discriminator assembly.
//
// Reference encoder: conv 32 / conv 64 (pool) / conv 128 (pool) /
//   res 128 / res 128 / res 256 (pool) / res 256 / sigmoid.
// Content encoder: conv 32 / conv 64 s2 / conv 128 s2 / conv 256 s2 /
//   conv 256. Both map 1xHxW to c x H/8 x W/8.
// Decoder: res 256 x3 / conv 128 up / conv 64 up / conv 32 up /
//   conv 1 + sigmoid. Its input is the 2c-channel fused map, so the first
//   residual block projects 2c -> c on the shortcut.
// Discriminator: conv 32 s2 (no act) / res 64 pool / res 128 pool /
//   res 256 pool / res 256 / res 512 global pool, every weight spectrally
//   normalized, then style and character embeddings score the pooled
//   feature by inner product (projection discriminator).
//
// width_mult scales all channel widths; the block topology never changes.

#include <string>
#include <unordered_map>
#include <vector>

#include "fewfont/nn.hpp"
#include "fewfont/style_attn.hpp"

namespace fewfont {

struct NetConfig {
    int image_size = 32;      // square, divisible by 8
    double width_mult = 1.0;  // scales the 32/64/128/256/512 channel ladder
    int heads = 8;
    int k = 3;
    int num_styles = 8;
    int num_chars = 40;

    int ch(int base) const {
        int c = int(std::lround(base * width_mult));
        return c < 1 ? 1 : c;
    }
    int feat_channels() const { return ch(256); }
    int feat_size() const { return image_size / 8; }
    int disc_feat() const { return ch(512); }

    void validate() const {
        if (image_size < 8 || image_size % 8 != 0)
            throw ValueError("image_size must be a positive multiple of 8");
        if (heads < 1 || k < 1 || num_styles < 1 || num_chars < 1 || width_mult <= 0)
            throw ValueError("bad network configuration");
    }

    StyleAttnConfig attn_config(int k_refs) const {
        StyleAttnConfig a;
        a.channels = feat_channels();
        a.heads = heads;
        a.head_dim = std::max(1, feat_channels() / heads);
        a.k = k_refs;
        a.h = a.w = feat_size();
        return a;
    }
};

template <typename T>
class Generator {
  public:
    using Id = typename Tape<T>::Id;

    NetConfig cfg;
    ParamSet<T> params;

    ConvBlock<T> er1, er2, er3;
    ResidualBlock<T> er4, er5, er6, er7;
    ConvBlock<T> ec1, ec2, ec3, ec4, ec5;
    StyleAttnParams<T> attn;
    ResidualBlock<T> d1, d2, d3;
    ConvBlock<T> d4, d5, d6;
    int out_w = -1, out_b = -1;

    void build(const NetConfig& c, Rng& rng) {
        cfg = c;
        cfg.validate();
        int c32 = c.ch(32), c64 = c.ch(64), c128 = c.ch(128), c256 = c.ch(256);

        er1.build(params, "er.c1", {.in_ch = 1, .out_ch = c32}, rng);
        er2.build(params, "er.c2",
                  {.in_ch = c32, .out_ch = c64, .resample = Resample::AvgPool}, rng);
        er3.build(params, "er.c3",
                  {.in_ch = c64, .out_ch = c128, .resample = Resample::AvgPool}, rng);
        er4.build(params, "er.r4", {.in_ch = c128, .out_ch = c128}, rng);
        er5.build(params, "er.r5", {.in_ch = c128, .out_ch = c128}, rng);
        er6.build(params, "er.r6",
                  {.in_ch = c128, .out_ch = c256, .resample = Resample::AvgPool}, rng);
        er7.build(params, "er.r7", {.in_ch = c256, .out_ch = c256}, rng);

        ec1.build(params, "ec.c1", {.in_ch = 1, .out_ch = c32}, rng);
        ec2.build(params, "ec.c2", {.in_ch = c32, .out_ch = c64, .stride = 2}, rng);
        ec3.build(params, "ec.c3", {.in_ch = c64, .out_ch = c128, .stride = 2}, rng);
        ec4.build(params, "ec.c4", {.in_ch = c128, .out_ch = c256, .stride = 2}, rng);
        ec5.build(params, "ec.c5", {.in_ch = c256, .out_ch = c256}, rng);

        attn.build(params, "attn", cfg.attn_config(cfg.k), rng);

        d1.build(params, "de.r1", {.in_ch = 2 * c256, .out_ch = c256}, rng);
        d2.build(params, "de.r2", {.in_ch = c256, .out_ch = c256}, rng);
        d3.build(params, "de.r3", {.in_ch = c256, .out_ch = c256}, rng);
        d4.build(params, "de.c4",
                 {.in_ch = c256, .out_ch = c128, .resample = Resample::Nearest}, rng);
        d5.build(params, "de.c5",
                 {.in_ch = c128, .out_ch = c64, .resample = Resample::Nearest}, rng);
        d6.build(params, "de.c6",
                 {.in_ch = c64, .out_ch = c32, .resample = Resample::Nearest}, rng);
        out_w = params.add("de.out.w", kaiming_init<T>({1, c32, 3, 3}, rng));
        out_b = params.add("de.out.b", Tensor<T>::zeros({1}));
    }

    // [1,H,W] -> [c, H/8, W/8]
    Id encode_content(Tape<T>& t, const std::vector<Id>& p, Id x) const {
        check_image(t.val(x));
        Id y = ec1.forward(t, p, x);
        y = ec2.forward(t, p, y);
        y = ec3.forward(t, p, y);
        y = ec4.forward(t, p, y);
        return ec5.forward(t, p, y);
    }

    // One reference map; sigmoid output layer keeps values in (0,1).
    Id encode_reference(Tape<T>& t, const std::vector<Id>& p, Id y) const {
        check_image(t.val(y));
        Id f = er1.forward(t, p, y);
        f = er2.forward(t, p, f);
        f = er3.forward(t, p, f);
        f = er4.forward(t, p, f);
        f = er5.forward(t, p, f);
        f = er6.forward(t, p, f);
        f = er7.forward(t, p, f);
        return t.sigmoid(f);
    }

    // Duplicated reference images (k-padding) are encoded once and reused.
    std::vector<Id> encode_references(Tape<T>& t, const std::vector<Id>& p,
                                      const std::vector<Id>& refs) const {
        if (refs.empty()) throw ValueError("encode_references: empty reference list");
        std::unordered_map<const void*, Id> seen;
        std::vector<Id> maps;
        for (Id r : refs) {
            const void* key = t.val(r).ptr();
            auto it = seen.find(key);
            if (it != seen.end()) {
                maps.push_back(it->second);
                continue;
            }
            Id m = encode_reference(t, p, r);
            seen.emplace(key, m);
            maps.push_back(m);
        }
        return maps;
    }

    // [2c, h, w] -> [1, 8h, 8w] in (0,1)
    Id decode(Tape<T>& t, const std::vector<Id>& p, Id f_cr) const {
        if (t.val(f_cr).dim(0) != 2 * cfg.feat_channels())
            throw ShapeError("decode: expected " + std::to_string(2 * cfg.feat_channels()) +
                             " channels, got " + std::to_string(t.val(f_cr).dim(0)));
        Id y = d1.forward(t, p, f_cr);
        y = d2.forward(t, p, y);
        y = d3.forward(t, p, y);
        y = d4.forward(t, p, y);
        y = d5.forward(t, p, y);
        y = d6.forward(t, p, y);
        y = t.conv2d(y, p[std::size_t(out_w)], p[std::size_t(out_b)], 1, 1);
        return t.sigmoid(y);
    }

    // Fused map from already-encoded features. use_attn=false replaces the
    // aggregated style with the spatial mean of the reference maps broadcast
    // over all positions (the averaging ablation).
    Id fuse_features(Tape<T>& t, const std::vector<Id>& p, Id f_c, const std::vector<Id>& f_r,
                     bool use_attn, AttnCapture<T>* capture = nullptr) const {
        if (use_attn)
            return style_attn_forward(t, cfg.attn_config(int(f_r.size())), attn, p, f_c, f_r,
                                      capture);
        Id acc = t.spatial_mean(f_r[0]);
        for (std::size_t i = 1; i < f_r.size(); i++)
            acc = t.add(acc, t.spatial_mean(f_r[i]));
        acc = t.scale(acc, T(1) / T(f_r.size()));
        Id s = t.broadcast_chw(acc, cfg.feat_size(), cfg.feat_size());
        return t.concat({f_c, s}, 0);
    }

    Id forward(Tape<T>& t, const std::vector<Id>& p, Id x_c, const std::vector<Id>& refs,
               bool use_attn = true, AttnCapture<T>* capture = nullptr) const {
        Id f_c = encode_content(t, p, x_c);
        auto f_r = encode_references(t, p, refs);
        Id f_cr = fuse_features(t, p, f_c, f_r, use_attn, capture);
        return decode(t, p, f_cr);
    }

    // Inference entry point: fresh tape, no gradients.
    Tensor<T> generate(const Tensor<T>& x_c, const std::vector<Tensor<T>>& refs,
                       bool use_attn = true, AttnCapture<T>* capture = nullptr) const {
        Tape<T> t;
        auto p = bind_params(t, params, false);
        std::vector<Id> r;
        for (const auto& img : refs) r.push_back(t.leaf(img));
        return t.val(forward(t, p, t.leaf(x_c), r, use_attn, capture)).clone();
    }

  private:
    void check_image(const Tensor<T>& img) const {
        if (img.rank() != 3 || img.dim(0) != 1)
            throw ShapeError("expected a single-channel image, got " + shape_str(img.shape));
        if (img.dim(1) != img.dim(2))
            throw ShapeError("expected a square image, got " + shape_str(img.shape));
        if (img.dim(1) != cfg.image_size)
            throw ShapeError("expected image size " + std::to_string(cfg.image_size) +
                             ", got " + std::to_string(img.dim(1)));
    }
};

template <typename T>
class Discriminator {
  public:
    using Id = typename Tape<T>::Id;

    NetConfig cfg;
    ParamSet<T> params;

    ConvBlock<T> b1;
    ResidualBlock<T> b2, b3, b4, b5, b6;
    int emb_style = -1, emb_char = -1;

    void build(const NetConfig& c, Rng& rng) {
        cfg = c;
        cfg.validate();
        int c32 = c.ch(32), c64 = c.ch(64), c128 = c.ch(128), c256 = c.ch(256),
            c512 = c.ch(512);
        b1.build(params, "disc.c1",
                 {.in_ch = 1, .out_ch = c32, .stride = 2, .relu = false, .spectral = true}, rng);
        b2.build(params, "disc.r2",
                 {.in_ch = c32, .out_ch = c64, .resample = Resample::AvgPool, .spectral = true},
                 rng);
        b3.build(params, "disc.r3",
                 {.in_ch = c64, .out_ch = c128, .resample = Resample::AvgPool, .spectral = true},
                 rng);
        b4.build(params, "disc.r4",
                 {.in_ch = c128, .out_ch = c256, .resample = Resample::AvgPool, .spectral = true},
                 rng);
        b5.build(params, "disc.r5", {.in_ch = c256, .out_ch = c256, .spectral = true}, rng);
        b6.build(params, "disc.r6",
                 {.in_ch = c256, .out_ch = c512, .resample = Resample::GlobalPool,
                  .spectral = true},
                 rng);
        emb_style = params.add("disc.emb_style",
                               kaiming_normal<T>({c.num_styles, c512}, c512, rng));
        emb_char = params.add("disc.emb_char", kaiming_normal<T>({c.num_chars, c512}, c512, rng));
    }

    // Pooled backbone feature, [disc_feat()].
    Id feature(Tape<T>& t, const std::vector<Id>& p, Id img) const {
        Id y = b1.forward(t, p, img);
        y = b2.forward(t, p, y);
        y = b3.forward(t, p, y);
        y = b4.forward(t, p, y);
        y = b5.forward(t, p, y);
        y = b6.forward(t, p, y);
        return t.reshape(y, {cfg.disc_feat()});
    }

    // D_{s,c}(img) = <phi, e_style[s]> + <phi, e_char[c]>, a 1-element tensor.
    Id logit(Tape<T>& t, const std::vector<Id>& p, Id img, int style_id, int char_id) const {
        if (style_id < 0 || style_id >= cfg.num_styles) throw ValueError("style id out of range");
        if (char_id < 0 || char_id >= cfg.num_chars) throw ValueError("character id out of range");
        Id phi = feature(t, p, img);
        Id es = t.row(p[std::size_t(emb_style)], style_id);
        Id ec = t.row(p[std::size_t(emb_char)], char_id);
        return t.add(t.sum_all(t.mul(phi, es)), t.sum_all(t.mul(phi, ec)));
    }

    // One power iteration on every spectrally normalized weight.
    void power_iterate() {
        b1.power_iterate(params);
        b2.power_iterate(params);
        b3.power_iterate(params);
        b4.power_iterate(params);
        b5.power_iterate(params);
        b6.power_iterate(params);
    }
};

}  // namespace fewfont
