#pragma once

// Convolution block and Residual block, the two building blocks of every
// network here: 3x3 conv (pad 1) -> instance norm -> ReLU -> optional
// resample. A residual block is two such blocks (resampling stripped) plus
// a shortcut, with its own downsampling applied to both paths and a 1x1
// projection when the channel count changes. Discriminator blocks wrap
// their conv weights in spectral normalization (one power iteration per
// training step; the estimate enters the tape so gradients see 1/sigma).

#include <string>

#include "fewfont/params.hpp"
#include "fewfont/tape.hpp"

namespace fewfont {

constexpr double kInstanceNormEps = 1e-5;
constexpr double kSpectralNormEps = 1e-12;

enum class Resample { None, AvgPool, GlobalPool, Nearest };

template <typename T>
Tensor<T> unit_normal_vec(int n, Rng& rng) {
    Tensor<T> t({n});
    double s = 0;
    for (std::size_t i = 0; i < t.size(); i++) {
        t[i] = T(rng.normal());
        s += double(t[i]) * double(t[i]);
    }
    T inv = T(1.0 / std::sqrt(std::max(s, 1e-30)));
    for (std::size_t i = 0; i < t.size(); i++) t[i] *= inv;
    return t;
}

template <typename T>
void l2_normalize(Tensor<T>& x) {
    double s = 0;
    for (std::size_t i = 0; i < x.size(); i++) s += double(x[i]) * double(x[i]);
    T inv = T(1.0 / std::sqrt(std::max(s, 1e-30)));
    for (std::size_t i = 0; i < x.size(); i++) x[i] *= inv;
}

// One power iteration: v <- normalize(W^T u), u <- normalize(W v).
// W is treated as [rows, numel/rows].
template <typename T>
void sn_power_iterate(ParamSet<T>& ps, int w, int uh, int vh) {
    Tensor<T>& W = ps[w].value;
    Tensor<T>& u = ps[uh].value;
    Tensor<T>& v = ps[vh].value;
    int rows = W.dim(0);
    int cols = int(W.size()) / rows;
    for (int c = 0; c < cols; c++) {
        T acc = 0;
        for (int r = 0; r < rows; r++) acc += W[std::size_t(r) * cols + c] * u[std::size_t(r)];
        v[std::size_t(c)] = acc;
    }
    l2_normalize(v);
    for (int r = 0; r < rows; r++) {
        T acc = 0;
        for (int c = 0; c < cols; c++) acc += W[std::size_t(r) * cols + c] * v[std::size_t(c)];
        u[std::size_t(r)] = acc;
    }
    l2_normalize(u);
}

// W / sigma with sigma = u^T W v built on the tape so d(sigma)/dW flows.
template <typename T>
typename Tape<T>::Id sn_scale_weight(Tape<T>& t, const std::vector<typename Tape<T>::Id>& p,
                                     typename Tape<T>::Id weight, int uh, int vh) {
    const Tensor<T>& W = t.val(weight);
    int rows = W.dim(0);
    int cols = int(W.size()) / rows;
    auto w2d = t.reshape(weight, {rows, cols});
    auto u = t.reshape(p[std::size_t(uh)], {1, rows});
    auto v = t.reshape(p[std::size_t(vh)], {cols, 1});
    auto sigma = t.reshape(t.matmul(u, t.matmul(w2d, v)), {1});
    return t.scale_by(weight, t.recip(t.add_const(sigma, T(kSpectralNormEps))));
}

struct ConvBlockSpec {
    int in_ch = 0;
    int out_ch = 0;
    int stride = 1;
    bool norm = true;
    bool relu = true;
    Resample resample = Resample::None;  // applied after activation
    bool spectral = false;
};

template <typename T>
class ConvBlock {
  public:
    using Id = typename Tape<T>::Id;

    ConvBlockSpec spec;
    int w = -1, gamma = -1, beta = -1;
    int sn_u = -1, sn_v = -1;

    void build(ParamSet<T>& ps, const std::string& name, const ConvBlockSpec& s, Rng& rng) {
        spec = s;
        w = ps.add(name + ".w", kaiming_init<T>({s.out_ch, s.in_ch, 3, 3}, rng));
        if (s.norm) {
            gamma = ps.add(name + ".gamma", Tensor<T>::full({s.out_ch}, T(1)));
            beta = ps.add(name + ".beta", Tensor<T>::zeros({s.out_ch}));
        }
        if (s.spectral) {
            sn_u = ps.add(name + ".sn_u", unit_normal_vec<T>(s.out_ch, rng), false);
            sn_v = ps.add(name + ".sn_v", unit_normal_vec<T>(s.in_ch * 9, rng), false);
        }
    }

    Id forward(Tape<T>& t, const std::vector<Id>& p, Id x) const {
        Id weight = p[std::size_t(w)];
        if (spec.spectral) weight = sn_scale_weight(t, p, weight, sn_u, sn_v);
        Id y = t.conv2d(x, weight, -1, spec.stride, 1);
        if (spec.norm)
            y = t.instance_norm(y, p[std::size_t(gamma)], p[std::size_t(beta)],
                                T(kInstanceNormEps));
        if (spec.relu) y = t.relu(y);
        return resample(t, y, spec.resample, spec.out_ch);
    }

    void power_iterate(ParamSet<T>& ps) const {
        if (spec.spectral) sn_power_iterate(ps, w, sn_u, sn_v);
    }

    static Id resample(Tape<T>& t, Id y, Resample mode, int channels) {
        switch (mode) {
            case Resample::AvgPool: return t.avgpool2x2(y);
            case Resample::Nearest: return t.upsample_nearest2x(y);
            case Resample::GlobalPool: return t.reshape(t.spatial_mean(y), {channels, 1, 1});
            case Resample::None: break;
        }
        return y;
    }
};

struct ResidualBlockSpec {
    int in_ch = 0;
    int out_ch = 0;
    Resample resample = Resample::None;  // block-level, applied to both paths
    bool spectral = false;
};

// Two identical convolution blocks (no internal resampling) plus a shortcut.
template <typename T>
class ResidualBlock {
  public:
    using Id = typename Tape<T>::Id;

    ResidualBlockSpec rspec;
    ConvBlock<T> c1, c2;
    int proj = -1;  // 1x1 shortcut projection when channels change
    int proj_u = -1, proj_v = -1;

    void build(ParamSet<T>& ps, const std::string& name, const ResidualBlockSpec& s, Rng& rng) {
        rspec = s;
        ConvBlockSpec cs;
        cs.in_ch = s.in_ch;
        cs.out_ch = s.out_ch;
        cs.spectral = s.spectral;
        c1.build(ps, name + ".c1", cs, rng);
        cs.in_ch = s.out_ch;
        c2.build(ps, name + ".c2", cs, rng);
        if (s.in_ch != s.out_ch) {
            proj = ps.add(name + ".proj", kaiming_init<T>({s.out_ch, s.in_ch, 1, 1}, rng));
            if (s.spectral) {
                proj_u = ps.add(name + ".proj.sn_u", unit_normal_vec<T>(s.out_ch, rng), false);
                proj_v = ps.add(name + ".proj.sn_v", unit_normal_vec<T>(s.in_ch, rng), false);
            }
        }
    }

    Id forward(Tape<T>& t, const std::vector<Id>& p, Id x) const {
        Id body = c2.forward(t, p, c1.forward(t, p, x));
        body = ConvBlock<T>::resample(t, body, rspec.resample, rspec.out_ch);
        Id sc = ConvBlock<T>::resample(t, x, rspec.resample, rspec.in_ch);
        if (proj >= 0) {
            Id pw = p[std::size_t(proj)];
            if (rspec.spectral) pw = sn_scale_weight(t, p, pw, proj_u, proj_v);
            sc = t.conv2d(sc, pw, -1, 1, 0);
        }
        return t.add(sc, body);
    }

    void power_iterate(ParamSet<T>& ps) const {
        if (!rspec.spectral) return;
        c1.power_iterate(ps);
        c2.power_iterate(ps);
        if (proj >= 0) sn_power_iterate(ps, proj, proj_u, proj_v);
    }
};

// Bias-free linear map y = W x for [out,in] weights and [in,cols] inputs.
template <typename T>
typename Tape<T>::Id linear(Tape<T>& t, typename Tape<T>::Id w, typename Tape<T>::Id x) {
    return t.matmul(w, x);
}

}  // namespace fewfont
