#include "fewfont/refsel.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace fewfont {

ReferenceSet select_reference_set(const DecompositionTable& table,
                                  const std::set<std::string>& components, int n_ref,
                                  int min_new) {
    if (n_ref < 1) throw ValueError("select_reference_set: n_ref must be >= 1");
    if (min_new < 1) throw ValueError("select_reference_set: min_new must be >= 1");

    DecompositionTable scoped = table;
    if (!components.empty()) scoped.components = components;

    ReferenceSet out;
    out.capacity = n_ref;
    out.min_new = min_new;
    for (const auto& glyph : scoped.order) {
        auto ids = component_ids(search_components(scoped, glyph));
        int fresh = 0;
        for (const auto& c : ids)
            if (!out.covered.count(c)) fresh++;
        if (fresh >= min_new) {
            out.glyphs.push_back(glyph);
            out.covered.insert(ids.begin(), ids.end());
        }
        if (int(out.glyphs.size()) >= n_ref) break;
    }
    return out;
}

namespace {

struct Scored {
    int shared = 0;
    int context_matches = 0;
};

Scored score(const ComponentContextSet& content, const ComponentContextSet& ref) {
    Scored s;
    auto cids = component_ids(content);
    auto rids = component_ids(ref);
    for (const auto& id : cids) {
        if (!rids.count(id)) continue;
        s.shared++;
        bool match = false;
        for (const auto& cc : content) {
            if (cc.component != id) continue;
            if (ref.count({id, cc.context})) {
                match = true;
                break;
            }
        }
        if (match) s.context_matches++;
    }
    return s;
}

}  // namespace

std::vector<std::string> map_references(const DecompositionTable& table,
                                        const ReferenceSet& refs, const std::string& content,
                                        int k) {
    if (refs.glyphs.empty()) throw ValueError("map_references: empty reference set");
    if (k < 1) throw ValueError("map_references: k must be >= 1");
    ComponentContextSet content_set = search_components(table, content);

    std::vector<std::string> pool = refs.glyphs;
    std::vector<ComponentContextSet> pool_sets;
    pool_sets.reserve(pool.size());
    for (const auto& g : pool) pool_sets.push_back(search_components(table, g));

    std::vector<std::string> picks;
    for (int round = 0; round < k && !pool.empty(); round++) {
        std::size_t best = 0;
        Scored best_score = score(content_set, pool_sets[0]);
        for (std::size_t i = 1; i < pool.size(); i++) {
            Scored s = score(content_set, pool_sets[i]);
            if (s.shared > best_score.shared ||
                (s.shared == best_score.shared &&
                 s.context_matches > best_score.context_matches)) {
                best = i;
                best_score = s;
            }
            // remaining ties: keep the earliest (reference-set order)
        }
        picks.push_back(pool[best]);
        pool.erase(pool.begin() + std::ptrdiff_t(best));
        pool_sets.erase(pool_sets.begin() + std::ptrdiff_t(best));
    }
    while (int(picks.size()) < k) picks.push_back(picks.front());
    return picks;
}

ReferenceMapping build_full_mapping(const DecompositionTable& table, const ReferenceSet& refs,
                                    const std::vector<std::string>& contents, int k) {
    ReferenceMapping m;
    for (const auto& c : contents) {
        m.contents.push_back(c);
        m.entries[c] = map_references(table, refs, c, k);
    }
    return m;
}

std::string serialize_mapping(const ReferenceMapping& m) {
    std::ostringstream os;
    for (const auto& c : m.contents) {
        os << c << '\t';
        const auto& refs = m.entries.at(c);
        for (std::size_t i = 0; i < refs.size(); i++) os << (i ? "," : "") << refs[i];
        os << '\n';
    }
    return os.str();
}

ReferenceMapping parse_mapping(const std::string& text) {
    ReferenceMapping m;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        line_no++;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("mapping line " + std::to_string(line_no) + ": missing tab");
        std::string content = line.substr(0, tab);
        std::vector<std::string> refs;
        std::string rest = line.substr(tab + 1);
        std::size_t start = 0;
        while (true) {
            auto pos = rest.find(',', start);
            refs.push_back(rest.substr(start, pos == std::string::npos ? pos : pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (content.empty() || refs.empty() || refs.front().empty())
            throw ParseError("mapping line " + std::to_string(line_no) + ": malformed entry");
        if (m.entries.count(content))
            throw ParseError("mapping line " + std::to_string(line_no) + ": duplicate content '" +
                             content + "'");
        m.contents.push_back(content);
        m.entries.emplace(std::move(content), std::move(refs));
    }
    return m;
}

void write_mapping(const std::string& path, const ReferenceMapping& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write mapping: " + path);
    os << serialize_mapping(m);
}

ReferenceMapping load_mapping(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open mapping: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_mapping(ss.str());
}

}  // namespace fewfont
