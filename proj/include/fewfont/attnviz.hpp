#pragma once

// Attention-map extraction and the localization proxy. A probe is a set of
// query positions in the content feature grid: a single point (granular),
// a sampled line (stroke) or the cells of one component (component level).
// attention_map sums the softmaxed rows of the selected queries and lays
// the k reference blocks out side by side as an h x (k*w) map; a single
// query's map sums to 1 per head. localization_score is the fraction of
// attention mass landing on reference cells whose mask label matches the
// probed component; uniform attention scores the component's area fraction.

#include <vector>

#include "fewfont/png_io.hpp"
#include "fewfont/tensor.hpp"

namespace fewfont {

struct AttentionProbe {
    enum class Level { Granular, Stroke, Component };
    Level level = Level::Granular;
    std::vector<std::pair<int, int>> positions;  // (row, col) in the h x w grid
};

inline AttentionProbe point_probe(int row, int col) {
    return {AttentionProbe::Level::Granular, {{row, col}}};
}

inline AttentionProbe stroke_probe(int r0, int c0, int r1, int c1) {
    AttentionProbe p;
    p.level = AttentionProbe::Level::Stroke;
    int steps = std::max(std::abs(r1 - r0), std::abs(c1 - c0));
    for (int i = 0; i <= steps; i++) {
        int r = steps ? r0 + (r1 - r0) * i / steps : r0;
        int c = steps ? c0 + (c1 - c0) * i / steps : c0;
        if (p.positions.empty() || p.positions.back() != std::make_pair(r, c))
            p.positions.push_back({r, c});
    }
    return p;
}

// Majority component label per feature cell, counted over ink pixels only
// (background never outvotes ink); 0 where the cell holds no ink.
std::vector<uint8_t> downsample_mask(const GrayImage& mask, int feat_size);

// Cells of `label` in a downsampled content mask, as a component probe.
AttentionProbe component_probe(const std::vector<uint8_t>& content_grid, int feat_size,
                               uint8_t label);

template <typename T>
void check_probe(const AttentionProbe& probe, int h, int w) {
    if (probe.positions.empty()) throw ValueError("attention probe has no positions");
    for (auto [r, c] : probe.positions)
        if (r < 0 || r >= h || c < 0 || c >= w)
            throw ValueError("attention probe position out of range");
}

// rows: softmaxed attention [h*w x k*h*w]. Returns [h, k*w], the sum of the
// probed query rows with the k reference blocks side by side.
template <typename T>
Tensor<T> attention_map(const Tensor<T>& rows, const AttentionProbe& probe, int h, int w,
                        int k) {
    if (rows.rank() != 2 || rows.dim(0) != h * w || rows.dim(1) != k * h * w)
        throw ShapeError("attention_map: rows shape does not match geometry");
    check_probe<T>(probe, h, w);
    Tensor<T> out({h, k * w});
    for (auto [qr, qc] : probe.positions) {
        const T* row = rows.ptr() + (std::size_t(qr) * w + qc) * std::size_t(k) * h * w;
        for (int ref = 0; ref < k; ref++)
            for (int y = 0; y < h; y++)
                for (int x = 0; x < w; x++)
                    out[std::size_t(y) * (k * w) + ref * w + x] +=
                        row[std::size_t(ref) * h * w + std::size_t(y) * w + x];
    }
    return out;
}

// ref_grids: one downsampled label grid per reference, h*w each.
template <typename T>
double localization_score(const Tensor<T>& rows, const AttentionProbe& probe,
                          const std::vector<std::vector<uint8_t>>& ref_grids, uint8_t label,
                          int h, int w) {
    int k = int(ref_grids.size());
    if (rows.rank() != 2 || rows.dim(0) != h * w || rows.dim(1) != k * h * w)
        throw ShapeError("localization_score: rows shape does not match geometry");
    check_probe<T>(probe, h, w);
    if (label == 0) throw ValueError("localization_score: background is not a component");
    double on_target = 0, total = 0;
    for (auto [qr, qc] : probe.positions) {
        const T* row = rows.ptr() + (std::size_t(qr) * w + qc) * std::size_t(k) * h * w;
        for (int ref = 0; ref < k; ref++)
            for (int i = 0; i < h * w; i++) {
                double v = double(row[std::size_t(ref) * h * w + i]);
                total += v;
                if (ref_grids[std::size_t(ref)][std::size_t(i)] == label) on_target += v;
            }
    }
    return total > 0 ? on_target / total : 0.0;
}

// Expected score under uniform attention: matching cells / (k*h*w).
double uniform_localization_baseline(const std::vector<std::vector<uint8_t>>& ref_grids,
                                     uint8_t label);

// 8-bit export with per-map max normalization (black when the map is empty).
GrayImage attention_map_to_gray(const Tensor<float>& map);

}  // namespace fewfont
