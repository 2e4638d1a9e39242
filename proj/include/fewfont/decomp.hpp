#pragma once

// Glyph decomposition tables and component trees.
//
// Table file format, UTF-8, one glyph per line:
//   glyph <TAB> structure_op <TAB> child[,child...]
//   glyph <TAB> atom
// '#' starts a comment line. Structure ops are LR, TB, ENC, ATOM, OTHER
// (case-insensitive); the ideographic description characters map onto them
// (left-right family -> LR, above-below -> TB, surrounds -> ENC, overlaid
// -> OTHER). Line order is the glyph frequency order used for reference
// selection. Every child must itself be declared; the graph must be acyclic.
//
// The component universe defaults to the atom-declared glyphs and can be
// overridden (compound components are allowed in the universe).

#include <map>
#include <set>
#include <string>
#include <vector>

#include "fewfont/errors.hpp"

namespace fewfont {

enum class StructOp { LR, TB, Enc, Atom, Other };

const char* struct_op_name(StructOp op);

struct GlyphEntry {
    std::string glyph;
    StructOp op = StructOp::Atom;
    std::vector<std::string> children;  // empty for atoms
};

struct DecompositionTable {
    std::vector<std::string> order;            // glyphs in file (frequency) order
    std::map<std::string, GlyphEntry> entries;
    std::set<std::string> components;          // component universe C
    int max_depth = 3;                         // levels 0..max_depth-1 are conspicuous

    bool contains(const std::string& g) const { return entries.count(g) != 0; }
    const GlyphEntry& at(const std::string& g) const;
};

DecompositionTable parse_table(const std::string& text);
DecompositionTable load_table(const std::string& path);
std::string serialize_table(const DecompositionTable& table);

// One component id per line, '#' comments. Overrides table.components.
std::set<std::string> load_component_set(const std::string& path);

struct ComponentTree {
    std::string glyph;
    StructOp op = StructOp::Atom;
    int level = 0;
    std::vector<ComponentTree> children;
};

// Recursive expansion; nodes at level max_depth are not expanded further.
ComponentTree build_component_tree(const DecompositionTable& table, const std::string& glyph);

// A component together with the structure op it appears under (the parent's
// op; for the root, its own op).
struct ComponentContext {
    std::string component;
    StructOp context;
    bool operator<(const ComponentContext& o) const {
        return component != o.component ? component < o.component : context < o.context;
    }
    bool operator==(const ComponentContext& o) const {
        return component == o.component && context == o.context;
    }
};

using ComponentContextSet = std::set<ComponentContext>;

// Breadth-first walk over levels 0..max_depth-1 collecting members of the
// component universe with their structure context.
ComponentContextSet search_components(const DecompositionTable& table, const std::string& glyph);

std::set<std::string> component_ids(const ComponentContextSet& s);

}  // namespace fewfont
