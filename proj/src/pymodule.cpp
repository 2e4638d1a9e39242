// Python bindings for the main operations: tensor ops, decomposition and
// reference selection, glyph rendering, metrics, and the end-to-end
// dataset/train/generate pipeline.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>

#include "fewfont/attnviz.hpp"
#include "fewfont/dataset.hpp"
#include "fewfont/gradcheck.hpp"
#include "fewfont/trainer.hpp"

namespace py = pybind11;
using namespace fewfont;

namespace {

Tensor<double> from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    Shape shape;
    for (py::ssize_t i = 0; i < a.ndim(); i++) shape.push_back(int(a.shape(i)));
    Tensor<double> t(shape);
    std::memcpy(t.ptr(), a.data(), t.size() * sizeof(double));
    return t;
}

py::array_t<double> to_numpy(const Tensor<double>& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<double> a(shape);
    std::memcpy(a.mutable_data(), t.ptr(), t.size() * sizeof(double));
    return a;
}

py::array_t<float> to_numpy_f32(const Tensor<float>& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<float> a(shape);
    std::memcpy(a.mutable_data(), t.ptr(), t.size() * sizeof(float));
    return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "few-shot font generation core";

    py::register_exception<ShapeError>(m, "ShapeError");
    py::register_exception<ValueError>(m, "ValidationError");
    py::register_exception<ParseError>(m, "ParseFailure");
    py::register_exception<DataError>(m, "DataError");
    py::register_exception<TrainingError>(m, "TrainingDiverged");

    m.def("matmul", [](py::array_t<double> a, py::array_t<double> b) {
        Tape<double> t;
        t.check_finite = true;
        auto out = t.matmul(t.leaf(from_numpy(a)), t.leaf(from_numpy(b)));
        return to_numpy(t.val(out));
    });

    m.def("softmax_rows", [](py::array_t<double> x) {
        Tape<double> t;
        t.check_finite = true;
        auto out = t.softmax_rows(t.leaf(from_numpy(x)));
        return to_numpy(t.val(out));
    });

    m.def(
        "conv2d",
        [](py::array_t<double> x, py::array_t<double> w, int stride, int pad) {
            Tape<double> t;
            t.check_finite = true;
            auto out = t.conv2d(t.leaf(from_numpy(x)), t.leaf(from_numpy(w)), -1, stride, pad);
            return to_numpy(t.val(out));
        },
        py::arg("x"), py::arg("w"), py::arg("stride") = 1, py::arg("pad") = 1);

    m.def("grad_check_sum_squares", [](py::array_t<double> x, double eps) {
        auto f = [](Tape<double>& t, Tape<double>::Id id) {
            return t.sum_all(t.mul(id, id));
        };
        return double(grad_check<double>(f, from_numpy(x), eps));
    }, py::arg("x"), py::arg("eps") = 1e-5);

    m.def("select_refs", [](const std::string& table_text, int n_ref, int min_new) {
        DecompositionTable t = parse_table(table_text);
        return select_reference_set(t, {}, n_ref, min_new).glyphs;
    });

    m.def("map_refs",
          [](const std::string& table_text, const std::string& content, int k, int n_ref,
             int min_new) {
              DecompositionTable t = parse_table(table_text);
              ReferenceSet rs = select_reference_set(t, {}, n_ref, min_new);
              return map_references(t, rs, content, k);
          });

    m.def("search_components", [](const std::string& table_text, const std::string& glyph) {
        DecompositionTable t = parse_table(table_text);
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& cc : search_components(t, glyph))
            out.push_back({cc.component, struct_op_name(cc.context)});
        return out;
    });

    m.def(
        "render_glyph",
        [](const std::string& table_text, const std::string& glyph, int size,
           double stroke_width, double slant, double corner_radius, double ink_level,
           uint64_t jitter_seed) {
            DecompositionTable t = parse_table(table_text);
            StyleParams sp;
            sp.stroke_width = stroke_width;
            sp.slant = slant;
            sp.corner_radius = corner_radius;
            sp.ink_level = ink_level;
            sp.jitter_seed = jitter_seed;
            GlyphImage g = render_glyph(t, glyph, sp, size);
            py::array_t<float> img({size, size});
            std::memcpy(img.mutable_data(), g.pixels.data(), g.pixels.size() * sizeof(float));
            py::array_t<uint8_t> mask({size, size});
            std::memcpy(mask.mutable_data(), g.mask.data(), g.mask.size());
            return py::make_tuple(img, mask);
        },
        py::arg("table"), py::arg("glyph"), py::arg("size") = 32,
        py::arg("stroke_width") = 2.2, py::arg("slant") = 0.0, py::arg("corner_radius") = 0.0,
        py::arg("ink_level") = 1.0, py::arg("jitter_seed") = 0);

    m.def("pixel_metrics", [](py::array_t<float, py::array::c_style | py::array::forcecast> a,
                              py::array_t<float, py::array::c_style | py::array::forcecast> b) {
        auto mk = [](const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
            Shape shape;
            for (py::ssize_t i = 0; i < arr.ndim(); i++) shape.push_back(int(arr.shape(i)));
            Tensor<float> t(shape);
            std::memcpy(t.ptr(), arr.data(), t.size() * sizeof(float));
            return t;
        };
        PixelMetrics pm = pixel_metrics(mk(a), mk(b));
        return py::make_tuple(pm.l1, pm.rmse);
    });

    m.def("ssim", [](py::array_t<float, py::array::c_style | py::array::forcecast> a,
                     py::array_t<float, py::array::c_style | py::array::forcecast> b) {
        auto mk = [](const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
            if (arr.ndim() != 2) throw ShapeError("ssim expects 2-d images");
            Shape shape = {1, int(arr.shape(0)), int(arr.shape(1))};
            Tensor<float> t(shape);
            std::memcpy(t.ptr(), arr.data(), t.size() * sizeof(float));
            return t;
        };
        return ssim(mk(a), mk(b));
    });

    m.def(
        "synth_dataset",
        [](const std::string& table_path, const std::string& out_dir, int size, int styles,
           int k, int n_ref, int min_new, uint64_t seed) {
            DatasetConfig cfg;
            cfg.size = size;
            cfg.num_styles = styles;
            cfg.k = k;
            cfg.n_ref = n_ref;
            cfg.min_new = min_new;
            cfg.seed = seed;
            Dataset ds = build_dataset(load_table(table_path), cfg);
            write_dataset(out_dir, ds);
            return py::make_tuple(ds.chars.size(), ds.styles.size(), ds.refs.glyphs);
        },
        py::arg("table_path"), py::arg("out_dir"), py::arg("size") = 32,
        py::arg("styles") = 8, py::arg("k") = 3, py::arg("n_ref") = 10,
        py::arg("min_new") = 2, py::arg("seed") = 0);

    m.def(
        "train",
        [](const std::string& data_dir, const std::string& checkpoint_out, int iterations,
           uint64_t seed, double width_mult, int batch_size, int heads, bool use_sam,
           bool use_sr, bool use_rs) {
            Dataset ds = load_dataset(data_dir);
            TrainConfig cfg;
            cfg.iterations = iterations;
            cfg.seed = seed;
            cfg.width_mult = width_mult;
            cfg.batch_size = batch_size;
            cfg.heads = heads;
            cfg.use_sam = use_sam;
            cfg.use_sr = use_sr;
            cfg.use_rs = use_rs;
            Trainer trainer(ds, cfg);
            double l1_before = trainer.eval_l1(Split::Train);
            trainer.run(nullptr);
            if (!checkpoint_out.empty()) trainer.save(checkpoint_out);
            double l1_after = trainer.eval_l1(Split::Train);
            py::dict out;
            out["train_l1_before"] = l1_before;
            out["train_l1_after"] = l1_after;
            return out;
        },
        py::arg("data_dir"), py::arg("checkpoint_out") = "", py::arg("iterations") = 50,
        py::arg("seed") = 0, py::arg("width_mult") = 0.25, py::arg("batch_size") = 4,
        py::arg("heads") = 8, py::arg("use_sam") = true, py::arg("use_sr") = true,
        py::arg("use_rs") = true);

    m.def("generate", [](const std::string& checkpoint, const std::string& data_dir,
                         const std::string& content, const std::string& style) {
        Checkpoint ck = load_checkpoint(checkpoint);
        Generator<float> gen;
        Rng rng(0);
        gen.build(ck.meta.net, rng);
        fill_params(gen.params, ck, "g.");
        Dataset ds = load_dataset(data_dir);
        int ci = ds.char_index(content);
        int si = ds.style_index(style);
        Tensor<float> out = gen.generate(ds.content_images[std::size_t(ci)],
                                         ds.refs_for(si, ci), ck.meta.use_sam);
        return to_numpy_f32(out);
    });
}
