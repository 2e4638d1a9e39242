#pragma once

// Paired glyph dataset: every content character rendered in a neutral
// content style plus every target style, with masks, a fixed reference
// mapping and seen/unseen splits over both characters and styles.
//
// On disk:
//   images/{style}/{char}.png   8-bit grayscale, style "neutral" = content font
//   masks/{style}/{char}.png    8-bit component labels
//   table.tsv mapping.tsv components.tsv styles.tsv meta.tsv manifest.json
//
// In memory the pixel planes are already quantized to the 8-bit scale, so
// training from a built dataset and from a written-then-loaded one sees
// bit-identical values.

#include <string>
#include <vector>

#include "fewfont/glyphsynth.hpp"
#include "fewfont/refsel.hpp"
#include "fewfont/tensor.hpp"

namespace fewfont {

struct DatasetConfig {
    int size = 32;
    int num_styles = 8;
    int k = 3;
    int n_ref = 10;
    int min_new = 2;
    uint64_t seed = 0;
    double char_seen_frac = 0.8;
    double style_seen_frac = 0.75;
};

struct StyleDef {
    std::string name;
    StyleParams params;
    bool seen = true;
};

enum class Split { Train, NovelChar, NovelStyle, NovelBoth };

const char* split_name(Split s);
Split parse_split(const std::string& name);

struct Dataset {
    DatasetConfig cfg;
    DecompositionTable table;
    std::vector<std::string> chars;  // table order
    std::vector<bool> char_seen;
    std::vector<StyleDef> styles;
    StyleParams neutral;
    ReferenceSet refs;
    ReferenceMapping mapping;
    std::map<std::string, uint8_t> labels;

    std::vector<Tensor<float>> content_images;          // [char]
    std::vector<GrayImage> content_masks;               // [char]
    std::vector<std::vector<Tensor<float>>> images;     // [style][char]
    std::vector<std::vector<GrayImage>> masks;          // [style][char]

    int char_index(const std::string& c) const;
    int style_index(const std::string& s) const;
    std::vector<std::pair<int, int>> pairs(Split split) const;  // (style, char)
    std::vector<Tensor<float>> refs_for(int style, int chr) const;
    std::vector<int> ref_char_ids(int chr) const;
};

StyleParams neutral_style();

Dataset build_dataset(const DecompositionTable& table, const DatasetConfig& cfg);
void write_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

}  // namespace fewfont
