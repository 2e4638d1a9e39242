#pragma once

// Procedural compositional glyph renderer. Atoms are small sets of exact
// distance-field primitives (segments, box outlines, circles) in the unit
// square; structure ops lay children out recursively (LR splits columns,
// TB rows, ENC draws the first child as a frame around the rest, OTHER
// overlays). A style shears the glyph, sets stroke width, rounds box
// corners, scales ink and adds a tiny per-atom jitter. Rendering is 2x
// supersampled and fully deterministic; every ink pixel carries the label
// of its nearest component.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fewfont/decomp.hpp"
#include "fewfont/png_io.hpp"
#include "fewfont/tensor.hpp"

namespace fewfont {

struct StyleParams {
    double stroke_width = 2.2;   // px at the 32-unit glyph box, scaled with size
    double slant = 0.0;          // radians, |slant| < pi/4
    double corner_radius = 0.0;  // px at the 32-unit box, rounds box primitives
    double ink_level = 1.0;      // (0,1], multiplies ink intensity
    uint64_t jitter_seed = 0;    // 0 = no jitter

    void validate() const {
        if (stroke_width < 1.0) throw ValueError("style: stroke_width must be >= 1");
        if (!(std::fabs(slant) < 0.785398163397448)) throw ValueError("style: |slant| < pi/4");
        if (!(ink_level > 0.0) || ink_level > 1.0) throw ValueError("style: ink_level in (0,1]");
        if (corner_radius < 0.0) throw ValueError("style: corner_radius must be >= 0");
    }
};

struct GlyphImage {
    int size = 0;
    std::string content_id;
    std::string style_id;
    std::vector<float> pixels;   // size*size, in [0,1], ink = 1 convention
    std::vector<uint8_t> mask;   // size*size component labels, 0 = background
};

// Stable mask labels: atoms in sorted order get 1,2,3,...
std::map<std::string, uint8_t> component_labels(const DecompositionTable& table);

GlyphImage render_glyph(const DecompositionTable& table, const std::string& glyph,
                        const StyleParams& style, int size);

// Quantize to the 8-bit scale used on disk (round(v*255)/255).
Tensor<float> quantized_pixels(const GlyphImage& img);

GrayImage to_gray(const GlyphImage& img);        // pixel plane
GrayImage mask_to_gray(const GlyphImage& img);   // label plane

}  // namespace fewfont
