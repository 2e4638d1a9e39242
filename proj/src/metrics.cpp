#include "fewfont/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "fewfont/attnviz.hpp"

namespace fewfont {

PixelMetrics pixel_metrics(const Tensor<float>& a, const Tensor<float>& b) {
    if (a.shape != b.shape)
        throw ShapeError("pixel_metrics: shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    double l1 = 0, l2 = 0;
    for (std::size_t i = 0; i < a.size(); i++) {
        double d = double(a[i]) - double(b[i]);
        l1 += std::fabs(d);
        l2 += d * d;
    }
    double n = double(a.size());
    return {l1 / n, std::sqrt(l2 / n)};
}

double ssim(const Tensor<float>& a, const Tensor<float>& b, int window, double k1, double k2,
            double sigma) {
    if (a.shape != b.shape)
        throw ShapeError("ssim: shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    if (a.rank() != 3 || a.dim(0) != 1) throw ShapeError("ssim: expected [1,H,W] images");
    int H = a.dim(1), W = a.dim(2);
    if (H < window || W < window) throw ShapeError("ssim: image smaller than the window");

    std::vector<double> g(std::size_t(window), 0.0);
    double gsum = 0;
    for (int i = 0; i < window; i++) {
        double d = i - (window - 1) / 2.0;
        g[std::size_t(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        gsum += g[std::size_t(i)];
    }
    for (auto& v : g) v /= gsum;

    const double c1 = (k1 * 1.0) * (k1 * 1.0);
    const double c2 = (k2 * 1.0) * (k2 * 1.0);

    double total = 0;
    int count = 0;
    int half = window / 2;
    for (int cy = half; cy < H - half; cy++) {
        for (int cx = half; cx < W - half; cx++) {
            double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
            for (int wy = 0; wy < window; wy++) {
                for (int wx = 0; wx < window; wx++) {
                    double wgt = g[std::size_t(wy)] * g[std::size_t(wx)];
                    double va = a[std::size_t(cy - half + wy) * W + (cx - half + wx)];
                    double vb = b[std::size_t(cy - half + wy) * W + (cx - half + wx)];
                    mu_a += wgt * va;
                    mu_b += wgt * vb;
                    aa += wgt * va * va;
                    bb += wgt * vb * vb;
                    ab += wgt * va * vb;
                }
            }
            double var_a = aa - mu_a * mu_a;
            double var_b = bb - mu_b * mu_b;
            double cov = ab - mu_a * mu_b;
            double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            count++;
        }
    }
    return total / count;
}

std::vector<uint8_t> downsample_mask(const GrayImage& mask, int feat_size) {
    if (mask.width != mask.height) throw ShapeError("downsample_mask: mask must be square");
    if (feat_size < 1 || mask.width % feat_size != 0)
        throw ShapeError("downsample_mask: size must divide the mask");
    int cell = mask.width / feat_size;
    std::vector<uint8_t> out(std::size_t(feat_size) * feat_size, 0);
    for (int fy = 0; fy < feat_size; fy++)
        for (int fx = 0; fx < feat_size; fx++) {
            std::map<uint8_t, int> votes;
            for (int y = fy * cell; y < (fy + 1) * cell; y++)
                for (int x = fx * cell; x < (fx + 1) * cell; x++) {
                    uint8_t l = mask.at(y, x);
                    if (l) votes[l]++;
                }
            uint8_t best = 0;
            int best_n = 0;
            for (auto [l, n] : votes)
                if (n > best_n) {  // ties resolved toward the smaller label
                    best = l;
                    best_n = n;
                }
            out[std::size_t(fy) * feat_size + fx] = best;
        }
    return out;
}

AttentionProbe component_probe(const std::vector<uint8_t>& content_grid, int feat_size,
                               uint8_t label) {
    if (int(content_grid.size()) != feat_size * feat_size)
        throw ShapeError("component_probe: grid size mismatch");
    // bounding box of the component's cells
    int r0 = feat_size, c0 = feat_size, r1 = -1, c1 = -1;
    for (int r = 0; r < feat_size; r++)
        for (int c = 0; c < feat_size; c++)
            if (content_grid[std::size_t(r) * feat_size + c] == label) {
                r0 = std::min(r0, r);
                c0 = std::min(c0, c);
                r1 = std::max(r1, r);
                c1 = std::max(c1, c);
            }
    AttentionProbe p;
    p.level = AttentionProbe::Level::Component;
    if (r1 < 0) return p;  // component not visible at feature resolution
    for (int r = r0; r <= r1; r++)
        for (int c = c0; c <= c1; c++) p.positions.push_back({r, c});
    return p;
}

double uniform_localization_baseline(const std::vector<std::vector<uint8_t>>& ref_grids,
                                     uint8_t label) {
    std::size_t matching = 0, total = 0;
    for (const auto& g : ref_grids) {
        total += g.size();
        for (uint8_t l : g)
            if (l == label) matching++;
    }
    return total ? double(matching) / double(total) : 0.0;
}

GrayImage attention_map_to_gray(const Tensor<float>& map) {
    if (map.rank() != 2) throw ShapeError("attention_map_to_gray: expected a 2-d map");
    GrayImage g;
    g.height = map.dim(0);
    g.width = map.dim(1);
    g.pixels.resize(map.size());
    float mx = 0;
    for (std::size_t i = 0; i < map.size(); i++) mx = std::max(mx, map[i]);
    for (std::size_t i = 0; i < map.size(); i++)
        g.pixels[i] = mx > 0 ? uint8_t(std::lround(map[i] / mx * 255.0f)) : 0;
    return g;
}

}  // namespace fewfont
