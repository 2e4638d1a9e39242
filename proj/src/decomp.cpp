#include "fewfont/decomp.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace fewfont {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string lower(std::string s) {
    for (char& c : s) c = char(std::tolower((unsigned char)c));
    return s;
}

// Ideographic description characters U+2FF0..U+2FFB.
bool parse_idc(const std::string& tok, StructOp& out) {
    if (tok.size() != 3 || (unsigned char)tok[0] != 0xE2 || (unsigned char)tok[1] != 0xBF)
        return false;
    unsigned char b = (unsigned char)tok[2];
    if (b < 0xB0 || b > 0xBB) return false;
    int cp = b - 0xB0;  // 0 = U+2FF0
    switch (cp) {
        case 0x0:
        case 0x2: out = StructOp::LR; return true;   // left-right families
        case 0x1:
        case 0x3: out = StructOp::TB; return true;   // above-below families
        case 0xB: out = StructOp::Other; return true;  // overlaid
        default: out = StructOp::Enc; return true;   // surround forms
    }
}

bool parse_op(const std::string& tok, StructOp& out) {
    if (parse_idc(tok, out)) return true;
    std::string t = lower(tok);
    if (t == "lr") out = StructOp::LR;
    else if (t == "tb") out = StructOp::TB;
    else if (t == "enc") out = StructOp::Enc;
    else if (t == "atom") out = StructOp::Atom;
    else if (t == "other") out = StructOp::Other;
    else return false;
    return true;
}

[[noreturn]] void fail_line(int line_no, const std::string& what) {
    throw ParseError("decomposition table line " + std::to_string(line_no) + ": " + what);
}

void check_acyclic(const DecompositionTable& t) {
    // 0 = unvisited, 1 = on stack, 2 = done
    std::map<std::string, int> state;
    std::vector<std::pair<std::string, std::size_t>> stack;
    for (const auto& root : t.order) {
        if (state[root]) continue;
        stack.push_back({root, 0});
        state[root] = 1;
        while (!stack.empty()) {
            auto& [g, idx] = stack.back();
            const auto& entry = t.at(g);
            if (idx >= entry.children.size()) {
                state[g] = 2;
                stack.pop_back();
                continue;
            }
            const std::string& child = entry.children[idx++];
            int st = state[child];
            if (st == 1) throw ParseError("decomposition cycle involving '" + child + "'");
            if (st == 0) {
                state[child] = 1;
                stack.push_back({child, 0});
            }
        }
    }
}

}  // namespace

const char* struct_op_name(StructOp op) {
    switch (op) {
        case StructOp::LR: return "LR";
        case StructOp::TB: return "TB";
        case StructOp::Enc: return "ENC";
        case StructOp::Atom: return "ATOM";
        case StructOp::Other: return "OTHER";
    }
    return "?";
}

const GlyphEntry& DecompositionTable::at(const std::string& g) const {
    auto it = entries.find(g);
    if (it == entries.end()) throw DataError("unknown glyph '" + g + "'");
    return it->second;
}

DecompositionTable parse_table(const std::string& text) {
    DecompositionTable t;
    int line_no = 0;
    for (const std::string& raw : split(text, '\n')) {
        line_no++;
        std::string line = raw;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string trimmed = trim(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;

        std::vector<std::string> fields = split(line, '\t');
        if (fields.size() < 2 || fields.size() > 3)
            fail_line(line_no, "expected 2 or 3 tab-separated fields");
        std::string glyph = trim(fields[0]);
        if (glyph.empty()) fail_line(line_no, "empty glyph name");
        GlyphEntry e;
        e.glyph = glyph;
        if (!parse_op(trim(fields[1]), e.op))
            fail_line(line_no, "unknown structure op '" + trim(fields[1]) + "'");

        if (e.op == StructOp::Atom) {
            if (fields.size() == 3 && !trim(fields[2]).empty())
                fail_line(line_no, "atom glyph '" + glyph + "' must not list children");
        } else {
            if (fields.size() < 3 || trim(fields[2]).empty())
                fail_line(line_no, "glyph '" + glyph + "' lists no children");
            for (const std::string& c : split(fields[2], ',')) {
                std::string child = trim(c);
                if (child.empty()) fail_line(line_no, "empty child name");
                e.children.push_back(child);
            }
        }
        if (t.entries.count(glyph)) fail_line(line_no, "duplicate glyph '" + glyph + "'");
        t.order.push_back(glyph);
        t.entries.emplace(glyph, std::move(e));
    }

    for (const auto& g : t.order)
        for (const auto& child : t.at(g).children)
            if (!t.contains(child))
                throw ParseError("glyph '" + g + "' references unknown child '" + child + "'");

    check_acyclic(t);

    for (const auto& g : t.order)
        if (t.at(g).op == StructOp::Atom) t.components.insert(g);
    return t;
}

DecompositionTable load_table(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open decomposition table: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_table(ss.str());
}

std::string serialize_table(const DecompositionTable& table) {
    std::ostringstream os;
    for (const auto& g : table.order) {
        const GlyphEntry& e = table.at(g);
        os << g << '\t' << struct_op_name(e.op);
        if (!e.children.empty()) {
            os << '\t';
            for (std::size_t i = 0; i < e.children.size(); i++)
                os << (i ? "," : "") << e.children[i];
        }
        os << '\n';
    }
    return os.str();
}

std::set<std::string> load_component_set(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open component list: " + path);
    std::set<std::string> out;
    std::string line;
    while (std::getline(is, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        out.insert(t);
    }
    return out;
}

namespace {
void expand(const DecompositionTable& table, ComponentTree& node, int max_depth) {
    if (node.level >= max_depth) return;
    const GlyphEntry& e = table.at(node.glyph);
    for (const auto& child : e.children) {
        ComponentTree c;
        c.glyph = child;
        c.op = table.at(child).op;
        c.level = node.level + 1;
        expand(table, c, max_depth);
        node.children.push_back(std::move(c));
    }
}
}  // namespace

ComponentTree build_component_tree(const DecompositionTable& table, const std::string& glyph) {
    ComponentTree root;
    root.glyph = glyph;
    root.op = table.at(glyph).op;
    root.level = 0;
    expand(table, root, table.max_depth);
    return root;
}

ComponentContextSet search_components(const DecompositionTable& table, const std::string& glyph) {
    ComponentContextSet out;
    const GlyphEntry& root = table.at(glyph);
    // breadth-first over (entry, level, context); a node's context is its
    // parent's structure op, the root's context its own op
    std::vector<std::pair<const GlyphEntry*, std::pair<int, StructOp>>> queue;
    queue.push_back({&root, {0, root.op}});
    for (std::size_t i = 0; i < queue.size(); i++) {
        const GlyphEntry* e = queue[i].first;
        int level = queue[i].second.first;
        StructOp ctx = queue[i].second.second;
        if (level >= table.max_depth) continue;
        if (table.components.count(e->glyph)) out.insert({e->glyph, ctx});
        for (const auto& child : e->children)
            queue.push_back({&table.at(child), {level + 1, e->op}});
    }
    return out;
}

std::set<std::string> component_ids(const ComponentContextSet& s) {
    std::set<std::string> out;
    for (const auto& cc : s) out.insert(cc.component);
    return out;
}

}  // namespace fewfont
