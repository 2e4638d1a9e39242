#pragma once

// Minimal 8-bit grayscale PNG reader/writer over zlib. The writer always
// emits one IDAT with filter type 0 rows at a fixed compression level, so
// identical pixels produce identical bytes.

#include <cstdint>
#include <string>
#include <vector>

#include "fewfont/errors.hpp"

namespace fewfont {

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // row-major, width*height

    uint8_t at(int y, int x) const { return pixels[std::size_t(y) * width + x]; }
    uint8_t& at(int y, int x) { return pixels[std::size_t(y) * width + x]; }
};

std::vector<uint8_t> encode_png(const GrayImage& img);
GrayImage decode_png(const std::vector<uint8_t>& bytes);

void write_png(const std::string& path, const GrayImage& img);
GrayImage read_png(const std::string& path);

}  // namespace fewfont
