#pragma once

// Versioned binary checkpoint container.
//
// Layout (all integers little-endian):
//   0   : magic "FFCK"
//   4   : u32 version (currently 1)
//   8   : u64 header length in bytes
//   16  : header, UTF-8 JSON:
//         { "net":    {image_size, width_mult, heads, k, num_styles, num_chars},
//           "styles": [style names in embedding-row order],
//           "chars":  [character names in embedding-row order],
//           "flags":  {use_sam, use_sr, use_rs},
//           "tensors":[{ "name", "shape", "offset", "count" }, ...] }
//   16+H: payload, float32 little-endian, tensors at their stated offsets
//         (offsets count floats from the payload start).
//
// Generator tensors are prefixed "g.", discriminator tensors "d.".
// Save/load round-trips bit-exactly.

#include <map>
#include <string>
#include <vector>

#include "fewfont/fontnet.hpp"

namespace fewfont {

struct CheckpointMeta {
    int version = 1;
    NetConfig net;
    // training-time switches; use_sam decides the fusion path at inference
    bool use_sam = true;
    bool use_sr = true;
    bool use_rs = true;
    std::vector<std::string> style_names;
    std::vector<std::string> char_names;
};

struct Checkpoint {
    CheckpointMeta meta;
    std::map<std::string, Tensor<float>> tensors;
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamSet<float>& gen, const ParamSet<float>& disc);

Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint tensors into an existing ParamSet by prefixed name.
// Missing tensors or shape mismatches raise DataError.
void fill_params(ParamSet<float>& ps, const Checkpoint& ck, const std::string& prefix);

}  // namespace fewfont
