// fewfont: few-shot font generation pipeline in one binary.
//
// Subcommands: decompose, select-refs, map-refs, synth-data, train,
// generate, eval, attn-viz. Exit codes: 0 success, 1 usage error,
// 2 data/validation error, 3 training divergence. All randomness flows
// from --seed; repeated runs write byte-identical outputs.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fewfont/attnviz.hpp"
#include "fewfont/checkpoint.hpp"
#include "fewfont/dataset.hpp"
#include "fewfont/trainer.hpp"

namespace fs = std::filesystem;
using namespace fewfont;
using nlohmann::json;

namespace {

void require_path(const std::string& path, const char* what) {
    if (!fs::exists(path))
        throw DataError(std::string(what) + " does not exist: " + path);
}

void print_tree(const ComponentTree& node, std::ostream& os) {
    for (int i = 0; i < node.level; i++) os << "  ";
    os << node.glyph << " [" << struct_op_name(node.op) << "] level " << node.level << "\n";
    for (const auto& c : node.children) print_tree(c, os);
}

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const json& config, const std::vector<std::string>& outputs) {
    json m{{"command", command}, {"config", config}, {"outputs", outputs}};
    std::ofstream os(fs::path(out_dir) / "manifest.json", std::ios::binary);
    os << m.dump(2) << '\n';
}

// Reconstructs a generator (and optionally discriminator) from a checkpoint.
struct LoadedModel {
    CheckpointMeta meta;
    Generator<float> gen;
};

LoadedModel load_generator(const std::string& ck_path) {
    require_path(ck_path, "checkpoint");
    Checkpoint ck = load_checkpoint(ck_path);
    LoadedModel m;
    m.meta = ck.meta;
    Rng rng(0);
    m.gen.build(ck.meta.net, rng);
    fill_params(m.gen.params, ck, "g.");
    return m;
}

Tensor<float> dataset_refs_generate(const LoadedModel& model, const Dataset& ds,
                                    const std::string& content, const std::string& style,
                                    AttnCapture<float>* capture = nullptr) {
    int ci = ds.char_index(content);
    int si = ds.style_index(style);
    return model.gen.generate(ds.content_images[std::size_t(ci)], ds.refs_for(si, ci),
                              model.meta.use_sam, capture);
}

int run_cli(int argc, char** argv) {
    CLI::App app{"few-shot font generation pipeline"};
    app.require_subcommand(1);
    app.set_config("--config", "", "config file (ini format, flags win)");
    app.get_formatter()->column_width(34);

    // decompose
    auto* dec = app.add_subcommand("decompose", "print a glyph's component tree");
    std::string dec_table, dec_glyph;
    int dec_depth = 3;
    dec->add_option("--table", dec_table, "decomposition table path")->required();
    dec->add_option("--glyph", dec_glyph, "glyph to decompose")->required();
    dec->add_option("--depth", dec_depth, "max tree depth")->capture_default_str();
    dec->callback([&] {
        require_path(dec_table, "table");
        DecompositionTable t = load_table(dec_table);
        t.max_depth = dec_depth;
        print_tree(build_component_tree(t, dec_glyph), std::cout);
        std::cout << "components:";
        for (const auto& cc : search_components(t, dec_glyph))
            std::cout << " " << cc.component << "@" << struct_op_name(cc.context);
        std::cout << "\n";
    });

    // select-refs
    auto* sel = app.add_subcommand("select-refs", "select the style reference set");
    std::string sel_table, sel_components, sel_out;
    int sel_nref = 10, sel_min_new = 2, sel_depth = 3;
    sel->add_option("--table", sel_table, "decomposition table path")->required();
    sel->add_option("--components", sel_components, "component universe file (default: atoms)");
    sel->add_option("--n-ref", sel_nref, "reference set capacity")->capture_default_str();
    sel->add_option("--min-new", sel_min_new, "new components required per added glyph")
        ->capture_default_str();
    sel->add_option("--depth", sel_depth, "max component tree depth")->capture_default_str();
    sel->add_option("--out", sel_out, "also write the set to this file");
    sel->callback([&] {
        require_path(sel_table, "table");
        DecompositionTable t = load_table(sel_table);
        t.max_depth = sel_depth;
        std::set<std::string> comps;
        if (!sel_components.empty()) comps = load_component_set(sel_components);
        ReferenceSet rs = select_reference_set(t, comps, sel_nref, sel_min_new);
        for (const auto& g : rs.glyphs) std::cout << g << "\n";
        if (!sel_out.empty()) {
            std::ofstream os(sel_out, std::ios::binary);
            for (const auto& g : rs.glyphs) os << g << "\n";
        }
    });

    // map-refs
    auto* mr = app.add_subcommand("map-refs", "build the content-reference mapping");
    std::string mr_table, mr_components, mr_out;
    int mr_nref = 10, mr_min_new = 2, mr_k = 3, mr_depth = 3;
    mr->add_option("--table", mr_table, "decomposition table path")->required();
    mr->add_option("--components", mr_components, "component universe file (default: atoms)");
    mr->add_option("--n-ref", mr_nref, "reference set capacity")->capture_default_str();
    mr->add_option("--min-new", mr_min_new, "new components required per added glyph")
        ->capture_default_str();
    mr->add_option("--k", mr_k, "references per content glyph")->capture_default_str();
    mr->add_option("--depth", mr_depth, "max component tree depth")->capture_default_str();
    mr->add_option("--out", mr_out, "mapping output path")->required();
    mr->callback([&] {
        require_path(mr_table, "table");
        DecompositionTable t = load_table(mr_table);
        t.max_depth = mr_depth;
        std::set<std::string> comps;
        if (!mr_components.empty()) comps = load_component_set(mr_components);
        ReferenceSet rs = select_reference_set(t, comps, mr_nref, mr_min_new);
        ReferenceMapping m = build_full_mapping(t, rs, t.order, mr_k);
        write_mapping(mr_out, m);
        std::cout << "wrote " << m.contents.size() << " mappings to " << mr_out << "\n";
    });

    // synth-data
    auto* sd = app.add_subcommand("synth-data", "render the paired glyph dataset");
    std::string sd_table, sd_out;
    DatasetConfig sd_cfg;
    sd->add_option("--table", sd_table, "decomposition table path")->required();
    sd->add_option("--out-dir", sd_out, "dataset output directory")->required();
    sd->add_option("--size", sd_cfg.size, "image size (32, 64 or 128)")->capture_default_str();
    sd->add_option("--styles", sd_cfg.num_styles, "number of target styles")
        ->capture_default_str();
    sd->add_option("--k", sd_cfg.k, "references per content glyph")->capture_default_str();
    sd->add_option("--n-ref", sd_cfg.n_ref, "reference set capacity")->capture_default_str();
    sd->add_option("--min-new", sd_cfg.min_new, "new components per added reference")
        ->capture_default_str();
    sd->add_option("--seed", sd_cfg.seed, "dataset seed")->capture_default_str();
    sd->callback([&] {
        require_path(sd_table, "table");
        Dataset ds = build_dataset(load_table(sd_table), sd_cfg);
        write_dataset(sd_out, ds);
        std::cout << "dataset: " << ds.chars.size() << " glyphs x " << ds.styles.size()
                  << " styles at " << sd_cfg.size << "px, " << ds.refs.glyphs.size()
                  << " references covering " << ds.refs.covered.size() << " components\n";
    });

    // train
    auto* tr = app.add_subcommand("train", "train the generator");
    std::string tr_data, tr_out;
    TrainConfig tr_cfg;
    bool no_sam = false, no_sr = false, no_rs = false;
    tr->add_option("--data-dir", tr_data, "dataset directory")->required();
    tr->add_option("--out-dir", tr_out, "output directory")->required();
    tr->add_option("--iterations", tr_cfg.iterations, "training iterations")
        ->capture_default_str();
    tr->add_option("--batch-size", tr_cfg.batch_size, "batch size")->capture_default_str();
    tr->add_option("--seed", tr_cfg.seed, "training seed")->capture_default_str();
    tr->add_option("--width-mult", tr_cfg.width_mult, "channel width multiplier")
        ->capture_default_str();
    tr->add_option("--heads", tr_cfg.heads, "attention heads")->capture_default_str();
    tr->add_option("--lr-g", tr_cfg.lr_g, "generator learning rate")->capture_default_str();
    tr->add_option("--lr-d", tr_cfg.lr_d, "discriminator learning rate")
        ->capture_default_str();
    tr->add_option("--lambda-adv", tr_cfg.lambda_adv, "adversarial loss weight")
        ->capture_default_str();
    tr->add_option("--lambda-l1", tr_cfg.lambda_l1, "pixel L1 loss weight")
        ->capture_default_str();
    tr->add_option("--report-every", tr_cfg.report_every, "log row interval")
        ->capture_default_str();
    tr->add_flag("--no-sam", no_sam, "replace attention with reference averaging");
    tr->add_flag("--no-sr", no_sr, "disable the self-reconstruction branch");
    tr->add_flag("--no-rs", no_rs, "random references instead of the fixed mapping");
    tr->callback([&] {
        require_path(tr_data, "data directory");
        tr_cfg.use_sam = !no_sam;
        tr_cfg.use_sr = !no_sr;
        tr_cfg.use_rs = !no_rs;
        Dataset ds = load_dataset(tr_data);
        Trainer trainer(ds, tr_cfg);
        fs::create_directories(tr_out);
        std::ofstream log(fs::path(tr_out) / "log.tsv", std::ios::binary);
        trainer.run(&log);
        std::string ck = (fs::path(tr_out) / "checkpoint.bin").string();
        trainer.save(ck);
        json cfg{{"iterations", tr_cfg.iterations}, {"batch_size", tr_cfg.batch_size},
                 {"seed", tr_cfg.seed},             {"width_mult", tr_cfg.width_mult},
                 {"heads", tr_cfg.heads},           {"lr_g", tr_cfg.lr_g},
                 {"lr_d", tr_cfg.lr_d},             {"lambda_adv", tr_cfg.lambda_adv},
                 {"lambda_l1", tr_cfg.lambda_l1},   {"use_sam", tr_cfg.use_sam},
                 {"use_sr", tr_cfg.use_sr},         {"use_rs", tr_cfg.use_rs}};
        write_run_manifest(tr_out, "train", cfg, {"log.tsv", "checkpoint.bin"});
        double train_l1 = trainer.eval_l1(Split::Train);
        std::cout << "trained " << tr_cfg.iterations << " iterations; train split L1 "
                  << train_l1 << "\n";
    });

    // generate
    auto* gen = app.add_subcommand("generate", "generate one styled glyph");
    std::string gen_ck, gen_data, gen_content, gen_style, gen_out_dir = ".", gen_out;
    gen->add_option("--checkpoint", gen_ck, "checkpoint path")->required();
    gen->add_option("--data-dir", gen_data, "dataset directory (for references)")->required();
    gen->add_option("--content", gen_content, "content glyph")->required();
    gen->add_option("--style", gen_style, "target style")->required();
    gen->add_option("--out-dir", gen_out_dir, "output directory")->capture_default_str();
    gen->add_option("--out", gen_out, "explicit output file (overrides --out-dir)");
    gen->callback([&] {
        require_path(gen_data, "data directory");
        LoadedModel model = load_generator(gen_ck);
        Dataset ds = load_dataset(gen_data);
        Tensor<float> img = dataset_refs_generate(model, ds, gen_content, gen_style);
        GrayImage g;
        g.width = img.dim(2);
        g.height = img.dim(1);
        g.pixels.resize(img.size());
        for (std::size_t i = 0; i < img.size(); i++)
            g.pixels[i] = uint8_t(std::lround(std::clamp(img[i], 0.0f, 1.0f) * 255.0f));
        std::string out = gen_out;
        if (out.empty()) {
            fs::create_directories(gen_out_dir);
            out = (fs::path(gen_out_dir) / ("gen_" + gen_style + "_" + gen_content + ".png"))
                      .string();
        }
        write_png(out, g);
        std::cout << "wrote " << out << "\n";
    });

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate pixel metrics over a split");
    std::string ev_ck, ev_data, ev_split = "novel-style", ev_out_dir;
    ev->add_option("--checkpoint", ev_ck, "checkpoint path")->required();
    ev->add_option("--data-dir", ev_data, "dataset directory")->required();
    ev->add_option("--split", ev_split,
                   "train, novel-char, novel-style, novel-both or all")
        ->capture_default_str();
    ev->add_option("--out-dir", ev_out_dir, "also write metrics.tsv here");
    ev->callback([&] {
        require_path(ev_data, "data directory");
        LoadedModel model = load_generator(ev_ck);
        Dataset ds = load_dataset(ev_data);

        std::vector<Split> splits;
        if (ev_split == "all")
            splits = {Split::Train, Split::NovelChar, Split::NovelStyle, Split::NovelBoth};
        else
            splits = {parse_split(ev_split)};

        std::ostringstream table;
        table << "split\tstyle\tn\tl1\trmse\tssim\n";
        for (Split split : splits) {
            std::map<int, StyleMetrics> by_style;
            for (auto [st, ch] : ds.pairs(split)) {
                Tensor<float> out = model.gen.generate(ds.content_images[std::size_t(ch)],
                                                       ds.refs_for(st, ch), model.meta.use_sam);
                const Tensor<float>& y = ds.images[std::size_t(st)][std::size_t(ch)];
                PixelMetrics pm = pixel_metrics(out, y);
                double sv = ssim(out, y);
                auto& sm = by_style[st];
                sm.style = ds.styles[std::size_t(st)].name;
                sm.count++;
                sm.l1 += pm.l1;
                sm.rmse += pm.rmse;
                sm.ssim_v += sv;
            }
            double l1m = 0, rmsem = 0, ssimm = 0;
            int n_styles = 0, n_total = 0;
            for (auto& [st, sm] : by_style) {
                sm.l1 /= sm.count;
                sm.rmse /= sm.count;
                sm.ssim_v /= sm.count;
                char buf[160];
                std::snprintf(buf, sizeof buf, "%s\t%s\t%d\t%.6f\t%.6f\t%.6f\n",
                              split_name(split), sm.style.c_str(), sm.count, sm.l1, sm.rmse,
                              sm.ssim_v);
                table << buf;
                l1m += sm.l1;
                rmsem += sm.rmse;
                ssimm += sm.ssim_v;
                n_styles++;
                n_total += sm.count;
            }
            if (n_styles) {
                char buf[160];
                std::snprintf(buf, sizeof buf, "%s\tmean\t%d\t%.6f\t%.6f\t%.6f\n",
                              split_name(split), n_total, l1m / n_styles, rmsem / n_styles,
                              ssimm / n_styles);
                table << buf;
            }
        }
        std::cout << table.str();
        if (!ev_out_dir.empty()) {
            fs::create_directories(ev_out_dir);
            std::ofstream os(fs::path(ev_out_dir) / "metrics.tsv", std::ios::binary);
            os << table.str();
            write_run_manifest(ev_out_dir, "eval", json{{"split", ev_split}},
                               {"metrics.tsv"});
        }
    });

    // attn-viz
    auto* av = app.add_subcommand("attn-viz", "export attention maps for a glyph");
    std::string av_ck, av_data, av_content, av_style, av_out_dir, av_level = "component";
    std::string av_component;
    int av_head = -1;
    std::vector<int> av_query, av_from, av_to;
    av->add_option("--checkpoint", av_ck, "checkpoint path")->required();
    av->add_option("--data-dir", av_data, "dataset directory")->required();
    av->add_option("--content", av_content, "content glyph")->required();
    av->add_option("--style", av_style, "target style")->required();
    av->add_option("--out-dir", av_out_dir, "output directory")->required();
    av->add_option("--level", av_level, "granular, stroke or component")
        ->capture_default_str();
    av->add_option("--head", av_head, "head index, -1 = sum over heads")
        ->capture_default_str();
    av->add_option("--query", av_query, "granular query row,col")->expected(2);
    av->add_option("--from", av_from, "stroke start row,col")->expected(2);
    av->add_option("--to", av_to, "stroke end row,col")->expected(2);
    av->add_option("--component", av_component, "component id for component level");
    av->callback([&] {
        require_path(av_data, "data directory");
        LoadedModel model = load_generator(av_ck);
        if (!model.meta.use_sam)
            throw DataError("checkpoint was trained without the attention module");
        Dataset ds = load_dataset(av_data);

        AttnCapture<float> capture;
        (void)dataset_refs_generate(model, ds, av_content, av_style, &capture);
        if (capture.rows.empty()) throw DataError("no attention maps captured");
        int h = model.meta.net.feat_size(), w = h;
        int k = int(ds.ref_char_ids(ds.char_index(av_content)).size());

        AttentionProbe probe;
        if (av_level == "granular") {
            if (av_query.size() != 2)
                throw ValueError("granular level needs --query row,col");
            probe = point_probe(av_query[0], av_query[1]);
        } else if (av_level == "stroke") {
            if (av_from.size() != 2 || av_to.size() != 2)
                throw ValueError("stroke level needs --from and --to");
            probe = stroke_probe(av_from[0], av_from[1], av_to[0], av_to[1]);
        } else if (av_level == "component") {
            if (av_component.empty()) throw ValueError("component level needs --component");
            auto it = ds.labels.find(av_component);
            if (it == ds.labels.end())
                throw DataError("unknown component '" + av_component + "'");
            int ci = ds.char_index(av_content);
            auto grid = downsample_mask(ds.content_masks[std::size_t(ci)], h);
            probe = component_probe(grid, h, it->second);
            if (probe.positions.empty())
                throw DataError("component '" + av_component +
                                "' is not visible in the content glyph at feature resolution");
        } else {
            throw ValueError("unknown probe level '" + av_level + "'");
        }

        Tensor<float> map;
        if (av_head >= 0) {
            if (av_head >= int(capture.rows.size()))
                throw ValueError("head index out of range");
            map = attention_map(capture.rows[std::size_t(av_head)], probe, h, w, k);
        } else {
            map = attention_map(capture.rows[0], probe, h, w, k);
            for (std::size_t m = 1; m < capture.rows.size(); m++) {
                Tensor<float> hm = attention_map(capture.rows[m], probe, h, w, k);
                for (std::size_t i = 0; i < map.size(); i++) map[i] += hm[i];
            }
        }

        fs::create_directories(av_out_dir);
        std::string stem = "attn_" + av_style + "_" + av_content + "_" + av_level +
                           (av_head >= 0 ? "_h" + std::to_string(av_head) : "_sum");
        write_png((fs::path(av_out_dir) / (stem + ".png")).string(),
                  attention_map_to_gray(map));
        std::ofstream raw(fs::path(av_out_dir) / (stem + ".tsv"), std::ios::binary);
        for (int y = 0; y < map.dim(0); y++) {
            for (int x = 0; x < map.dim(1); x++) {
                char buf[40];
                std::snprintf(buf, sizeof buf, "%.9g", double(map[std::size_t(y) * map.dim(1) + x]));
                raw << (x ? "\t" : "") << buf;
            }
            raw << "\n";
        }
        write_run_manifest(av_out_dir, "attn-viz",
                           json{{"content", av_content},
                                {"style", av_style},
                                {"level", av_level},
                                {"head", av_head}},
                           {stem + ".png", stem + ".tsv"});
        std::cout << "wrote " << stem << ".png\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        (void)app.exit(e);
        std::cerr << "\n" << app.help();
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const TrainingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
