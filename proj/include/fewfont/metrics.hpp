#pragma once

// Image similarity metrics over unit-range single-channel images.
// SSIM uses the standard 11x11 Gaussian window (sigma 1.5), K1=0.01,
// K2=0.03, dynamic range 1, averaged over valid window centers.

#include "fewfont/tensor.hpp"

namespace fewfont {

struct PixelMetrics {
    double l1 = 0;
    double rmse = 0;
};

PixelMetrics pixel_metrics(const Tensor<float>& a, const Tensor<float>& b);

double ssim(const Tensor<float>& a, const Tensor<float>& b, int window = 11, double k1 = 0.01,
            double k2 = 0.03, double sigma = 1.5);

}  // namespace fewfont
