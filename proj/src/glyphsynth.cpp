#include "fewfont/glyphsynth.hpp"

#include <algorithm>
#include <cmath>

#include "fewfont/rng.hpp"

namespace fewfont {

namespace {

struct Prim {
    enum Kind { Segment, Box, Circle } kind = Segment;
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // segment endpoints / box corners
    double cx = 0, cy = 0, r = 0;            // circle
};

std::vector<Prim> segment(double x0, double y0, double x1, double y1) {
    Prim p;
    p.kind = Prim::Segment;
    p.x0 = x0; p.y0 = y0; p.x1 = x1; p.y1 = y1;
    return {p};
}

void add_segment(std::vector<Prim>& v, double x0, double y0, double x1, double y1) {
    v.push_back(segment(x0, y0, x1, y1)[0]);
}

// Atom shapes in the unit square. Unknown atoms get a hash-derived polyline.
std::vector<Prim> atom_prims(const std::string& name) {
    std::vector<Prim> v;
    if (name == "a") {  // horizontal bar
        add_segment(v, 0.10, 0.50, 0.90, 0.50);
    } else if (name == "b") {  // vertical bar
        add_segment(v, 0.50, 0.10, 0.50, 0.90);
    } else if (name == "c") {  // falling diagonal
        add_segment(v, 0.15, 0.85, 0.85, 0.15);
    } else if (name == "d") {  // cross
        add_segment(v, 0.50, 0.10, 0.50, 0.90);
        add_segment(v, 0.10, 0.50, 0.90, 0.50);
    } else if (name == "e") {  // box
        Prim p;
        p.kind = Prim::Box;
        p.x0 = 0.17; p.y0 = 0.17; p.x1 = 0.83; p.y1 = 0.83;
        v.push_back(p);
    } else if (name == "f") {  // circle
        Prim p;
        p.kind = Prim::Circle;
        p.cx = 0.5; p.cy = 0.5; p.r = 0.32;
        v.push_back(p);
    } else if (name == "g") {  // corner hook
        add_segment(v, 0.22, 0.15, 0.22, 0.80);
        add_segment(v, 0.22, 0.80, 0.82, 0.80);
    } else if (name == "h") {  // T
        add_segment(v, 0.12, 0.22, 0.88, 0.22);
        add_segment(v, 0.50, 0.22, 0.50, 0.86);
    } else if (name == "i") {  // Z
        add_segment(v, 0.15, 0.20, 0.85, 0.20);
        add_segment(v, 0.85, 0.20, 0.15, 0.80);
        add_segment(v, 0.15, 0.80, 0.85, 0.80);
    } else if (name == "j") {  // two dots over a base
        add_segment(v, 0.32, 0.28, 0.32, 0.28);
        add_segment(v, 0.68, 0.28, 0.68, 0.28);
        add_segment(v, 0.25, 0.72, 0.75, 0.72);
    } else if (name == "k") {  // U
        add_segment(v, 0.22, 0.15, 0.22, 0.75);
        add_segment(v, 0.22, 0.75, 0.78, 0.75);
        add_segment(v, 0.78, 0.15, 0.78, 0.75);
    } else if (name == "l") {  // X
        add_segment(v, 0.15, 0.15, 0.85, 0.85);
        add_segment(v, 0.85, 0.15, 0.15, 0.85);
    } else {
        Rng rng(Rng::fold(0x676c797068ull, std::hash<std::string>{}(name)));
        double px = 0.15 + 0.7 * rng.uniform(), py = 0.15 + 0.7 * rng.uniform();
        for (int i = 0; i < 3; i++) {
            double nx = 0.15 + 0.7 * rng.uniform(), ny = 0.15 + 0.7 * rng.uniform();
            add_segment(v, px, py, nx, ny);
            px = nx;
            py = ny;
        }
    }
    return v;
}

struct Rect {
    double x0, y0, x1, y1;
    double w() const { return x1 - x0; }
    double h() const { return y1 - y0; }
    Rect inset(double fx, double fy) const {
        return {x0 + fx * w(), y0 + fy * h(), x1 - fx * w(), y1 - fy * h()};
    }
};

struct PlacedPrim {
    Prim prim;      // control points in glyph space [0,1]^2
    uint8_t label;  // component label of the owning atom
    double width_mult = 1.0;
    double ink_mult = 1.0;
};

// Styles with a nonzero jitter seed render each component type with its own
// stroke-width and ink modulation (identical wherever that component appears
// in the style). This carries the style's local detail: the look of one
// component in a style cannot be predicted from the others.
void component_modulation(uint64_t jitter_seed, const std::string& atom, double& width_mult,
                          double& ink_mult) {
    if (!jitter_seed) {
        width_mult = ink_mult = 1.0;
        return;
    }
    Rng rng(Rng::fold(jitter_seed, std::hash<std::string>{}(atom), 0xC0310Dull));
    width_mult = 0.70 + 0.75 * rng.uniform();
    ink_mult = 0.85 + 0.15 * rng.uniform();
}

void place_atom(const std::string& atom, Rect r, uint8_t label, uint64_t jitter_seed,
                uint64_t path, std::vector<PlacedPrim>& out) {
    double jx = 0, jy = 0;
    if (jitter_seed) {
        Rng rng(Rng::fold(jitter_seed, path));
        double amp = 0.02 * std::min(r.w(), r.h());
        jx = (rng.uniform() - 0.5) * 2.0 * amp;
        jy = (rng.uniform() - 0.5) * 2.0 * amp;
    }
    double wm, im;
    component_modulation(jitter_seed, atom, wm, im);
    for (Prim p : atom_prims(atom)) {
        auto mx = [&](double u) { return r.x0 + u * r.w() + jx; };
        auto my = [&](double u) { return r.y0 + u * r.h() + jy; };
        if (p.kind == Prim::Circle) {
            p.cx = mx(p.cx);
            p.cy = my(p.cy);
            p.r = p.r * std::min(r.w(), r.h());
        } else {
            p.x0 = mx(p.x0);
            p.y0 = my(p.y0);
            p.x1 = mx(p.x1);
            p.y1 = my(p.y1);
        }
        out.push_back({p, label, wm, im});
    }
}

void layout(const DecompositionTable& table, const std::string& glyph, Rect r,
            const std::map<std::string, uint8_t>& labels, uint64_t jitter_seed, uint64_t path,
            std::vector<PlacedPrim>& out) {
    const GlyphEntry& e = table.at(glyph);
    switch (e.op) {
        case StructOp::Atom: {
            auto it = labels.find(glyph);
            uint8_t label = it == labels.end() ? 255 : it->second;
            place_atom(glyph, r.inset(0.06, 0.06), label, jitter_seed, path, out);
            break;
        }
        case StructOp::LR: {
            int n = int(e.children.size());
            double gut = 0.03 * r.w();
            double cw = (r.w() - gut * (n - 1)) / n;
            for (int i = 0; i < n; i++) {
                Rect cr{r.x0 + i * (cw + gut), r.y0, r.x0 + i * (cw + gut) + cw, r.y1};
                layout(table, e.children[std::size_t(i)], cr, labels, jitter_seed,
                       Rng::fold(path, uint64_t(i) + 1), out);
            }
            break;
        }
        case StructOp::TB: {
            int n = int(e.children.size());
            double gut = 0.03 * r.h();
            double ch = (r.h() - gut * (n - 1)) / n;
            for (int i = 0; i < n; i++) {
                Rect cr{r.x0, r.y0 + i * (ch + gut), r.x1, r.y0 + i * (ch + gut) + ch};
                layout(table, e.children[std::size_t(i)], cr, labels, jitter_seed,
                       Rng::fold(path, uint64_t(i) + 101), out);
            }
            break;
        }
        case StructOp::Enc: {
            layout(table, e.children[0], r, labels, jitter_seed, Rng::fold(path, 201), out);
            Rect inner = r.inset(0.26, 0.26);
            for (std::size_t i = 1; i < e.children.size(); i++)
                layout(table, e.children[i], inner, labels, jitter_seed,
                       Rng::fold(path, uint64_t(i) + 301), out);
            break;
        }
        case StructOp::Other: {
            for (std::size_t i = 0; i < e.children.size(); i++)
                layout(table, e.children[i], r, labels, jitter_seed,
                       Rng::fold(path, uint64_t(i) + 401), out);
            break;
        }
    }
}

double seg_dist(double px, double py, const Prim& p) {
    double dx = p.x1 - p.x0, dy = p.y1 - p.y0;
    double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - p.x0) * dx + (py - p.y0) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    double ex = px - (p.x0 + t * dx), ey = py - (p.y0 + t * dy);
    return std::sqrt(ex * ex + ey * ey);
}

// Distance to the outline of a (rounded) axis-aligned box.
double box_dist(double px, double py, const Prim& p, double round_r) {
    double cx = 0.5 * (p.x0 + p.x1), cy = 0.5 * (p.y0 + p.y1);
    double hx = 0.5 * (p.x1 - p.x0) - round_r, hy = 0.5 * (p.y1 - p.y0) - round_r;
    hx = std::max(hx, 1e-6);
    hy = std::max(hy, 1e-6);
    double qx = std::fabs(px - cx) - hx, qy = std::fabs(py - cy) - hy;
    double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0);
    double sd = std::sqrt(ox * ox + oy * oy) + std::min(std::max(qx, qy), 0.0) - round_r;
    return std::fabs(sd);
}

double circle_dist(double px, double py, const Prim& p) {
    double dx = px - p.cx, dy = py - p.cy;
    return std::fabs(std::sqrt(dx * dx + dy * dy) - p.r);
}

}  // namespace

std::map<std::string, uint8_t> component_labels(const DecompositionTable& table) {
    std::map<std::string, uint8_t> out;  // sorted keys: stable labels regardless of file order
    for (const auto& g : table.order)
        if (table.at(g).op == StructOp::Atom) out[g] = 0;
    if (out.size() > 254) throw ValueError("too many atoms for 8-bit mask labels");
    uint8_t next = 1;
    for (auto& [name, label] : out) {
        (void)name;
        label = next++;
    }
    return out;
}

GlyphImage render_glyph(const DecompositionTable& table, const std::string& glyph,
                        const StyleParams& style, int size) {
    style.validate();
    if (size != 32 && size != 64 && size != 128)
        throw ValueError("render size must be 32, 64 or 128");
    if (!table.contains(glyph)) throw DataError("unknown glyph '" + glyph + "'");

    auto labels = component_labels(table);
    std::vector<PlacedPrim> prims;
    layout(table, glyph, Rect{0.04, 0.04, 0.96, 0.96}, labels, style.jitter_seed, 0x9e37ull,
           prims);

    double half_w = 0.5 * style.stroke_width / 32.0;  // stroke in 1/32-box units
    double round_r = style.corner_radius / 32.0;
    double shear = std::tan(style.slant);

    GlyphImage img;
    img.size = size;
    img.content_id = glyph;
    img.pixels.assign(std::size_t(size) * size, 0.0f);
    img.mask.assign(std::size_t(size) * size, 0);

    int ss = 2 * size;
    for (int y = 0; y < size; y++) {
        for (int x = 0; x < size; x++) {
            int covered = 0;
            double best_margin = -1e9;
            uint8_t best_label = 0;
            double best_ink = 1.0;
            for (int sy = 0; sy < 2; sy++)
                for (int sx = 0; sx < 2; sx++) {
                    double py = (2 * y + sy + 0.5) / double(ss);
                    double px = (2 * x + sx + 0.5) / double(ss);
                    // inverse shear around the vertical center
                    double gx = px - shear * (0.5 - py);
                    double gy = py;
                    bool hit = false;
                    for (const auto& pp : prims) {
                        double d;
                        switch (pp.prim.kind) {
                            case Prim::Segment: d = seg_dist(gx, gy, pp.prim); break;
                            case Prim::Box: d = box_dist(gx, gy, pp.prim, round_r); break;
                            default: d = circle_dist(gx, gy, pp.prim); break;
                        }
                        double margin = half_w * pp.width_mult - d;
                        if (margin >= 0) {
                            hit = true;
                            if (margin > best_margin) {
                                best_margin = margin;
                                best_label = pp.label;
                                best_ink = pp.ink_mult;
                            }
                        }
                    }
                    if (hit) covered++;
                }
            if (covered) {
                img.pixels[std::size_t(y) * size + x] =
                    float(style.ink_level * best_ink * covered / 4.0);
                img.mask[std::size_t(y) * size + x] = best_label;
            }
        }
    }
    return img;
}

Tensor<float> quantized_pixels(const GlyphImage& img) {
    Tensor<float> t({1, img.size, img.size});
    for (std::size_t i = 0; i < img.pixels.size(); i++)
        t[i] = float(std::lround(img.pixels[i] * 255.0f)) / 255.0f;
    return t;
}

GrayImage to_gray(const GlyphImage& img) {
    GrayImage g;
    g.width = g.height = img.size;
    g.pixels.resize(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); i++)
        g.pixels[i] = uint8_t(std::lround(img.pixels[i] * 255.0f));
    return g;
}

GrayImage mask_to_gray(const GlyphImage& img) {
    GrayImage g;
    g.width = g.height = img.size;
    g.pixels = img.mask;
    return g;
}

}  // namespace fewfont
