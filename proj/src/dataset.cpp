#include "fewfont/dataset.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fewfont/rng.hpp"

namespace fewfont {

namespace fs = std::filesystem;
using nlohmann::json;

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::NovelChar: return "novel-char";
        case Split::NovelStyle: return "novel-style";
        case Split::NovelBoth: return "novel-both";
    }
    return "?";
}

Split parse_split(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "novel-char") return Split::NovelChar;
    if (name == "novel-style") return Split::NovelStyle;
    if (name == "novel-both") return Split::NovelBoth;
    throw ValueError("unknown split '" + name + "' (train, novel-char, novel-style, novel-both)");
}

int Dataset::char_index(const std::string& c) const {
    for (std::size_t i = 0; i < chars.size(); i++)
        if (chars[i] == c) return int(i);
    throw DataError("unknown content glyph '" + c + "'");
}

int Dataset::style_index(const std::string& s) const {
    for (std::size_t i = 0; i < styles.size(); i++)
        if (styles[i].name == s) return int(i);
    throw DataError("unknown style '" + s + "'");
}

std::vector<std::pair<int, int>> Dataset::pairs(Split split) const {
    std::vector<std::pair<int, int>> out;
    for (std::size_t s = 0; s < styles.size(); s++)
        for (std::size_t c = 0; c < chars.size(); c++) {
            bool ss = styles[s].seen, cs = char_seen[c];
            bool want = (split == Split::Train && ss && cs) ||
                        (split == Split::NovelChar && ss && !cs) ||
                        (split == Split::NovelStyle && !ss && cs) ||
                        (split == Split::NovelBoth && !ss && !cs);
            if (want) out.push_back({int(s), int(c)});
        }
    return out;
}

std::vector<int> Dataset::ref_char_ids(int chr) const {
    auto it = mapping.entries.find(chars[std::size_t(chr)]);
    if (it == mapping.entries.end())
        throw DataError("mapping is missing content '" + chars[std::size_t(chr)] + "'");
    std::vector<int> out;
    for (const auto& r : it->second) out.push_back(char_index(r));
    return out;
}

std::vector<Tensor<float>> Dataset::refs_for(int style, int chr) const {
    std::vector<Tensor<float>> out;
    for (int rc : ref_char_ids(chr)) out.push_back(images[std::size_t(style)][std::size_t(rc)]);
    return out;
}

StyleParams neutral_style() {
    StyleParams p;
    p.stroke_width = 2.2;
    p.slant = 0.0;
    p.corner_radius = 0.0;
    p.ink_level = 1.0;
    p.jitter_seed = 0;
    return p;
}

namespace {

std::vector<StyleDef> make_styles(const DatasetConfig& cfg) {
    std::vector<StyleDef> out;
    int seen = std::max(1, int(std::lround(cfg.num_styles * cfg.style_seen_frac)));
    for (int i = 0; i < cfg.num_styles; i++) {
        Rng rng(Rng::fold(cfg.seed, 0x5745ull, uint64_t(i)));
        StyleDef s;
        s.name = "s" + std::to_string(i);
        // stratified stroke widths, random everything else
        s.params.stroke_width = 1.3 + 2.4 * ((i + rng.uniform()) / cfg.num_styles);
        s.params.slant = (rng.uniform() - 0.5) * 0.6;
        s.params.corner_radius = rng.uniform() * 3.0;
        s.params.ink_level = 0.8 + 0.2 * rng.uniform();
        s.params.jitter_seed = rng.next() | 1;
        s.seen = i < seen;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<bool> make_char_split(std::size_t n, const DatasetConfig& cfg) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; i++) idx[i] = i;
    Rng rng(Rng::fold(cfg.seed, 0x53504cull));
    for (std::size_t i = n; i > 1; i--) std::swap(idx[i - 1], idx[rng.below(i)]);
    std::size_t seen = std::max<std::size_t>(1, std::size_t(std::lround(double(n) * cfg.char_seen_frac)));
    std::vector<bool> out(n, false);
    for (std::size_t i = 0; i < seen && i < n; i++) out[idx[i]] = true;
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

Dataset build_dataset(const DecompositionTable& table, const DatasetConfig& cfg) {
    if (cfg.size != 32 && cfg.size != 64 && cfg.size != 128)
        throw ValueError("dataset size must be 32, 64 or 128");
    if (cfg.num_styles < 2) throw ValueError("need at least 2 styles");

    Dataset ds;
    ds.cfg = cfg;
    ds.table = table;
    ds.chars = table.order;
    ds.char_seen = make_char_split(ds.chars.size(), cfg);
    ds.styles = make_styles(cfg);
    ds.neutral = neutral_style();
    ds.labels = component_labels(table);

    ds.refs = select_reference_set(table, {}, cfg.n_ref, cfg.min_new);
    if (ds.refs.glyphs.empty())
        throw DataError("reference selection produced an empty set; table too small");
    ds.mapping = build_full_mapping(table, ds.refs, ds.chars, cfg.k);

    for (const auto& c : ds.chars) {
        GlyphImage g = render_glyph(table, c, ds.neutral, cfg.size);
        g.style_id = "neutral";
        ds.content_images.push_back(quantized_pixels(g));
        ds.content_masks.push_back(mask_to_gray(g));
    }
    for (const auto& st : ds.styles) {
        std::vector<Tensor<float>> imgs;
        std::vector<GrayImage> msks;
        for (const auto& c : ds.chars) {
            GlyphImage g = render_glyph(table, c, st.params, cfg.size);
            g.style_id = st.name;
            imgs.push_back(quantized_pixels(g));
            msks.push_back(mask_to_gray(g));
        }
        ds.images.push_back(std::move(imgs));
        ds.masks.push_back(std::move(msks));
    }
    return ds;
}

namespace {

GrayImage float_plane_to_gray(const Tensor<float>& t) {
    GrayImage g;
    g.height = t.dim(1);
    g.width = t.dim(2);
    g.pixels.resize(std::size_t(g.width) * g.height);
    for (std::size_t i = 0; i < g.pixels.size(); i++)
        g.pixels[i] = uint8_t(std::lround(t[i] * 255.0f));
    return g;
}

Tensor<float> gray_to_float_plane(const GrayImage& g) {
    Tensor<float> t({1, g.height, g.width});
    for (std::size_t i = 0; i < g.pixels.size(); i++) t[i] = float(g.pixels[i]) / 255.0f;
    return t;
}

}  // namespace

void write_dataset(const std::string& dir, const Dataset& ds) {
    fs::create_directories(fs::path(dir) / "images" / "neutral");
    fs::create_directories(fs::path(dir) / "masks" / "neutral");
    for (const auto& st : ds.styles) {
        fs::create_directories(fs::path(dir) / "images" / st.name);
        fs::create_directories(fs::path(dir) / "masks" / st.name);
    }

    std::ofstream tbl(fs::path(dir) / "table.tsv", std::ios::binary);
    tbl << serialize_table(ds.table);
    write_mapping((fs::path(dir) / "mapping.tsv").string(), ds.mapping);

    std::ofstream comp(fs::path(dir) / "components.tsv", std::ios::binary);
    for (const auto& [atom, label] : ds.labels) comp << atom << '\t' << int(label) << '\n';

    std::ofstream sty(fs::path(dir) / "styles.tsv", std::ios::binary);
    auto style_row = [&](const std::string& name, const StyleParams& p, bool seen) {
        sty << name << '\t' << fmt_double(p.stroke_width) << '\t' << fmt_double(p.slant) << '\t'
            << fmt_double(p.corner_radius) << '\t' << fmt_double(p.ink_level) << '\t'
            << p.jitter_seed << '\t' << (seen ? 1 : 0) << '\n';
    };
    style_row("neutral", ds.neutral, true);
    for (const auto& st : ds.styles) style_row(st.name, st.params, st.seen);

    std::ofstream meta(fs::path(dir) / "meta.tsv", std::ios::binary);
    meta << "style\tcontent\tstyle_seen\tcontent_seen\timage\tmask\n";
    auto img_path = [](const std::string& s, const std::string& c) {
        return "images/" + s + "/" + c + ".png";
    };
    auto mask_path = [](const std::string& s, const std::string& c) {
        return "masks/" + s + "/" + c + ".png";
    };
    for (std::size_t ci = 0; ci < ds.chars.size(); ci++) {
        const auto& c = ds.chars[ci];
        write_png((fs::path(dir) / img_path("neutral", c)).string(),
                  float_plane_to_gray(ds.content_images[ci]));
        write_png((fs::path(dir) / mask_path("neutral", c)).string(), ds.content_masks[ci]);
    }
    for (std::size_t si = 0; si < ds.styles.size(); si++) {
        const auto& s = ds.styles[si];
        for (std::size_t ci = 0; ci < ds.chars.size(); ci++) {
            const auto& c = ds.chars[ci];
            write_png((fs::path(dir) / img_path(s.name, c)).string(),
                      float_plane_to_gray(ds.images[si][ci]));
            write_png((fs::path(dir) / mask_path(s.name, c)).string(), ds.masks[si][ci]);
            meta << s.name << '\t' << c << '\t' << (s.seen ? 1 : 0) << '\t'
                 << (ds.char_seen[ci] ? 1 : 0) << '\t' << img_path(s.name, c) << '\t'
                 << mask_path(s.name, c) << '\n';
        }
    }

    json manifest{{"size", ds.cfg.size},
                  {"num_styles", ds.cfg.num_styles},
                  {"k", ds.cfg.k},
                  {"n_ref", ds.cfg.n_ref},
                  {"min_new", ds.cfg.min_new},
                  {"seed", ds.cfg.seed},
                  {"char_seen_frac", ds.cfg.char_seen_frac},
                  {"style_seen_frac", ds.cfg.style_seen_frac},
                  {"reference_set", ds.refs.glyphs},
                  {"covered_components", std::vector<std::string>(ds.refs.covered.begin(),
                                                                  ds.refs.covered.end())},
                  {"chars", ds.chars}};
    std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::binary);
    mf << manifest.dump(2) << '\n';
}

Dataset load_dataset(const std::string& dir) {
    fs::path root(dir);
    if (!fs::exists(root / "manifest.json"))
        throw DataError("not a dataset directory (missing manifest.json): " + dir);

    std::ifstream mf(root / "manifest.json");
    json manifest = json::parse(mf, nullptr, false);
    if (manifest.is_discarded()) throw ParseError("malformed manifest.json in " + dir);

    Dataset ds;
    ds.cfg.size = manifest.at("size").get<int>();
    ds.cfg.num_styles = manifest.at("num_styles").get<int>();
    ds.cfg.k = manifest.at("k").get<int>();
    ds.cfg.n_ref = manifest.at("n_ref").get<int>();
    ds.cfg.min_new = manifest.at("min_new").get<int>();
    ds.cfg.seed = manifest.at("seed").get<uint64_t>();
    ds.cfg.char_seen_frac = manifest.at("char_seen_frac").get<double>();
    ds.cfg.style_seen_frac = manifest.at("style_seen_frac").get<double>();

    ds.table = load_table((root / "table.tsv").string());
    ds.mapping = load_mapping((root / "mapping.tsv").string());
    ds.labels = component_labels(ds.table);
    ds.chars = manifest.at("chars").get<std::vector<std::string>>();
    ds.refs.glyphs = manifest.at("reference_set").get<std::vector<std::string>>();
    auto cov = manifest.at("covered_components").get<std::vector<std::string>>();
    ds.refs.covered.insert(cov.begin(), cov.end());
    ds.refs.capacity = ds.cfg.n_ref;
    ds.refs.min_new = ds.cfg.min_new;

    std::ifstream sty(root / "styles.tsv");
    if (!sty) throw DataError("missing styles.tsv in " + dir);
    std::string line;
    std::map<std::string, bool> style_seen_by_name;
    while (std::getline(sty, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string name;
        StyleParams p;
        uint64_t jitter;
        int seen;
        ls >> name >> p.stroke_width >> p.slant >> p.corner_radius >> p.ink_level >> jitter >>
            seen;
        if (!ls) throw ParseError("malformed styles.tsv row: " + line);
        p.jitter_seed = jitter;
        if (name == "neutral") {
            ds.neutral = p;
        } else {
            ds.styles.push_back({name, p, seen != 0});
        }
    }
    if (int(ds.styles.size()) != ds.cfg.num_styles)
        throw DataError("styles.tsv does not match manifest style count");

    // meta.tsv carries the char split
    std::ifstream meta(root / "meta.tsv");
    if (!meta) throw DataError("missing meta.tsv in " + dir);
    std::map<std::string, bool> char_seen_by_name;
    std::getline(meta, line);  // header
    while (std::getline(meta, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string style, content, img, msk;
        int ss, cs;
        ls >> style >> content >> ss >> cs >> img >> msk;
        if (!ls) throw ParseError("malformed meta.tsv row: " + line);
        char_seen_by_name[content] = cs != 0;
        style_seen_by_name[style] = ss != 0;
    }
    ds.char_seen.resize(ds.chars.size());
    for (std::size_t i = 0; i < ds.chars.size(); i++) {
        auto it = char_seen_by_name.find(ds.chars[i]);
        if (it == char_seen_by_name.end())
            throw DataError("meta.tsv is missing content '" + ds.chars[i] + "'");
        ds.char_seen[i] = it->second;
    }

    for (const auto& c : ds.chars) {
        ds.content_images.push_back(
            gray_to_float_plane(read_png((root / "images" / "neutral" / (c + ".png")).string())));
        ds.content_masks.push_back(read_png((root / "masks" / "neutral" / (c + ".png")).string()));
    }
    for (const auto& st : ds.styles) {
        std::vector<Tensor<float>> imgs;
        std::vector<GrayImage> msks;
        for (const auto& c : ds.chars) {
            imgs.push_back(gray_to_float_plane(
                read_png((root / "images" / st.name / (c + ".png")).string())));
            msks.push_back(read_png((root / "masks" / st.name / (c + ".png")).string()));
        }
        ds.images.push_back(std::move(imgs));
        ds.masks.push_back(std::move(msks));
    }
    return ds;
}

}  // namespace fewfont
