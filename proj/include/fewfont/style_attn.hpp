#pragma once

// Multi-head cross attention that matches every spatial position of the
// content feature map against all positions of the k reference maps and
// aggregates the matched local styles. Queries come from the content
// features, keys and values from the references concatenated along the
// spatial dimension; per head
//
//   A = Q^T K / sqrt(head_dim)          [hw x khw]
//   S = softmax_rows(A) V^T             [hw x head_dim]
//
// Head outputs are concatenated channel-wise, projected back to `channels`,
// and stacked onto the content features, doubling the channel count.

#include <vector>

#include "fewfont/nn.hpp"
#include "fewfont/params.hpp"
#include "fewfont/tape.hpp"

namespace fewfont {

struct StyleAttnConfig {
    int channels = 256;  // c: content/reference feature channels
    int heads = 8;       // M
    int head_dim = 32;   // c^m; channels/heads unless overridden
    int k = 3;           // reference count
    int h = 16, w = 16;  // feature resolution

    int hw() const { return h * w; }
    int khw() const { return k * h * w; }

    void validate() const {
        if (channels < 1 || heads < 1 || head_dim < 1 || k < 1 || h < 1 || w < 1)
            throw ValueError("style attention: all config fields must be positive");
    }
};

template <typename T>
struct StyleAttnParams {
    std::vector<int> wq, wk, wv;  // per head [head_dim, channels]
    int ws = -1;                  // output projection [channels, head_dim*heads]

    void build(ParamSet<T>& ps, const std::string& name, const StyleAttnConfig& cfg, Rng& rng) {
        cfg.validate();
        for (int m = 0; m < cfg.heads; m++) {
            std::string h = name + ".h" + std::to_string(m);
            wq.push_back(ps.add(h + ".wq", kaiming_init<T>({cfg.head_dim, cfg.channels}, rng)));
            wk.push_back(ps.add(h + ".wk", kaiming_init<T>({cfg.head_dim, cfg.channels}, rng)));
            wv.push_back(ps.add(h + ".wv", kaiming_init<T>({cfg.head_dim, cfg.channels}, rng)));
        }
        ws = ps.add(name + ".ws",
                    kaiming_init<T>({cfg.channels, cfg.head_dim * cfg.heads}, rng));
    }
};

// [c,h,w] -> [c, h*w], row-major spatial flattening.
template <typename T>
typename Tape<T>::Id flatten_content(Tape<T>& t, const StyleAttnConfig& cfg,
                                     typename Tape<T>::Id f_c) {
    const auto& v = t.val(f_c);
    if (v.shape != Shape{cfg.channels, cfg.h, cfg.w})
        throw ShapeError("flatten_content: got " + shape_str(v.shape) + ", config wants " +
                         shape_str({cfg.channels, cfg.h, cfg.w}));
    return t.reshape(f_c, {cfg.channels, cfg.hw()});
}

// k maps -> [c, k*h*w], concatenated in reference order.
template <typename T>
typename Tape<T>::Id flatten_references(Tape<T>& t, const StyleAttnConfig& cfg,
                                        const std::vector<typename Tape<T>::Id>& f_r) {
    if (int(f_r.size()) != cfg.k)
        throw ShapeError("flatten_references: expected " + std::to_string(cfg.k) + " maps");
    std::vector<typename Tape<T>::Id> seqs;
    for (auto id : f_r) {
        const auto& v = t.val(id);
        if (v.shape != Shape{cfg.channels, cfg.h, cfg.w})
            throw ShapeError("flatten_references: inconsistent map shape " + shape_str(v.shape));
        seqs.push_back(t.reshape(id, {cfg.channels, cfg.hw()}));
    }
    return t.concat(seqs, 1);
}

template <typename T>
struct QkvIds {
    typename Tape<T>::Id q, k, v;
};

// Head projections: Q [head_dim, hw], K/V [head_dim, khw].
template <typename T>
QkvIds<T> project_qkv(Tape<T>& t, const StyleAttnConfig& cfg, const StyleAttnParams<T>& prm,
                      const std::vector<typename Tape<T>::Id>& p, typename Tape<T>::Id fc_seq,
                      typename Tape<T>::Id fr_seq, int head) {
    if (head < 0 || head >= cfg.heads) throw ValueError("project_qkv: head index out of range");
    QkvIds<T> out;
    out.q = t.matmul(p[std::size_t(prm.wq[std::size_t(head)])], fc_seq);
    out.k = t.matmul(p[std::size_t(prm.wk[std::size_t(head)])], fr_seq);
    out.v = t.matmul(p[std::size_t(prm.wv[std::size_t(head)])], fr_seq);
    return out;
}

// A = Q^T K / sqrt(head_dim), [hw x khw].
template <typename T>
typename Tape<T>::Id correspondence(Tape<T>& t, typename Tape<T>::Id q, typename Tape<T>::Id k) {
    int head_dim = t.val(q).dim(0);
    if (head_dim != t.val(k).dim(0)) throw ShapeError("correspondence: head dims disagree");
    auto a = t.matmul(t.permute(q, {1, 0}), k);
    return t.scale(a, T(1) / T(std::sqrt(double(head_dim))));
}

// S = softmax_rows(A) V^T, [hw x head_dim]. Rows are convex combinations of
// value columns.
template <typename T>
typename Tape<T>::Id aggregate(Tape<T>& t, typename Tape<T>::Id a, typename Tape<T>::Id v) {
    auto sm = t.softmax_rows(a);
    return t.matmul(sm, t.permute(v, {1, 0}));
}

// Concatenate per-head styles, project with L_s, stack onto the content map:
// f_cr = concat(f_c, S) with S [c,h,w]. Output [2c, h, w].
template <typename T>
typename Tape<T>::Id fuse(Tape<T>& t, const StyleAttnConfig& cfg, const StyleAttnParams<T>& prm,
                          const std::vector<typename Tape<T>::Id>& p,
                          const std::vector<typename Tape<T>::Id>& head_styles,
                          typename Tape<T>::Id f_c) {
    if (int(head_styles.size()) != cfg.heads) throw ShapeError("fuse: head count mismatch");
    std::vector<typename Tape<T>::Id> stacked;  // [head_dim, hw] each
    for (auto s : head_styles) stacked.push_back(t.permute(s, {1, 0}));
    auto cat = t.concat(stacked, 0);                        // [M*head_dim, hw]
    auto s2d = t.matmul(p[std::size_t(prm.ws)], cat);       // [c, hw]
    auto s3d = t.reshape(s2d, {cfg.channels, cfg.h, cfg.w});
    return t.concat({f_c, s3d}, 0);
}

// Softmaxed per-head attention snapshots for visualization/analysis.
template <typename T>
struct AttnCapture {
    std::vector<Tensor<T>> rows;  // per head, [hw x khw]
};

template <typename T>
typename Tape<T>::Id style_attn_forward(Tape<T>& t, const StyleAttnConfig& cfg,
                                        const StyleAttnParams<T>& prm,
                                        const std::vector<typename Tape<T>::Id>& p,
                                        typename Tape<T>::Id f_c,
                                        const std::vector<typename Tape<T>::Id>& f_r,
                                        AttnCapture<T>* capture = nullptr) {
    auto fc_seq = flatten_content(t, cfg, f_c);
    auto fr_seq = flatten_references(t, cfg, f_r);
    std::vector<typename Tape<T>::Id> styles;
    for (int m = 0; m < cfg.heads; m++) {
        auto qkv = project_qkv(t, cfg, prm, p, fc_seq, fr_seq, m);
        auto a = correspondence(t, qkv.q, qkv.k);
        auto sm = t.softmax_rows(a);
        if (capture) capture->rows.push_back(t.val(sm).clone());
        styles.push_back(t.matmul(sm, t.permute(qkv.v, {1, 0})));
    }
    return fuse(t, cfg, prm, p, styles, f_c);
}

}  // namespace fewfont
