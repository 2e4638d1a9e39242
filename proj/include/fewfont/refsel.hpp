#pragma once

// Reference set selection and content-reference mapping.
//
// Selection scans the glyph list in frequency order and adds a glyph when
// it covers at least min_new components not yet covered, stopping at
// capacity. Mapping runs k greedy rounds per content glyph: each round
// picks the remaining reference sharing the most components, ties broken
// by the number of shared components whose structure context matches, then
// by reference-set order. An exhausted pool is padded by duplicating the
// first pick.

#include <map>
#include <string>
#include <vector>

#include "fewfont/decomp.hpp"

namespace fewfont {

struct ReferenceSet {
    std::vector<std::string> glyphs;   // selection order
    std::set<std::string> covered;     // component ids covered by the set
    int capacity = 0;
    int min_new = 2;
};

// components may be empty, in which case table.components is the universe.
ReferenceSet select_reference_set(const DecompositionTable& table,
                                  const std::set<std::string>& components, int n_ref,
                                  int min_new);

std::vector<std::string> map_references(const DecompositionTable& table,
                                        const ReferenceSet& refs, const std::string& content,
                                        int k);

struct ReferenceMapping {
    std::vector<std::string> contents;                         // insertion order
    std::map<std::string, std::vector<std::string>> entries;   // content -> k refs
};

ReferenceMapping build_full_mapping(const DecompositionTable& table, const ReferenceSet& refs,
                                    const std::vector<std::string>& contents, int k);

// One line per content: content<TAB>ref1,ref2,...,refk
std::string serialize_mapping(const ReferenceMapping& m);
ReferenceMapping parse_mapping(const std::string& text);
void write_mapping(const std::string& path, const ReferenceMapping& m);
ReferenceMapping load_mapping(const std::string& path);

}  // namespace fewfont
