#include "fewfont/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fewfont/rng.hpp"

namespace fewfont {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void require_finite(double v, const char* what, int iteration) {
    if (!std::isfinite(v))
        throw TrainingError(std::string("non-finite ") + what + " at iteration " +
                            std::to_string(iteration));
}

}  // namespace

Tensor<float> self_reconstruct(const Generator<float>& gen, const Tensor<float>& x_c,
                               const Tensor<float>& y_c, bool use_attn) {
    return gen.generate(x_c, {y_c}, use_attn);
}

Trainer::Trainer(const Dataset& ds, const TrainConfig& cfg) : ds_(ds), cfg_(cfg) {
    if (cfg.batch_size < 1 || cfg.iterations < 0) throw ValueError("bad train configuration");
    if (cfg.lambda_adv < 0 || cfg.lambda_l1 < 0) throw ValueError("loss weights must be >= 0");
    if (cfg.lr_g <= 0 || cfg.lr_d <= 0) throw ValueError("learning rates must be positive");

    net_.image_size = ds.cfg.size;
    net_.width_mult = cfg.width_mult;
    net_.heads = cfg.heads;
    net_.k = ds.cfg.k;
    net_.num_styles = int(ds.styles.size());
    net_.num_chars = int(ds.chars.size());

    Rng g_rng(Rng::fold(cfg.seed, 0x47454Eull));
    gen_.build(net_, g_rng);
    Rng d_rng(Rng::fold(cfg.seed, 0x44495343ull));
    disc_.build(net_, d_rng);

    opt_g_ = Adam<float>(float(cfg.lr_g), float(cfg.beta1), float(cfg.beta2),
                         float(cfg.adam_eps));
    opt_d_ = Adam<float>(float(cfg.lr_d), float(cfg.beta1), float(cfg.beta2),
                         float(cfg.adam_eps));
    opt_g_.attach(gen_.params);
    opt_d_.attach(disc_.params);

    train_pairs_ = ds.pairs(Split::Train);
    if (train_pairs_.empty()) throw DataError("training split is empty");

    // random-reference pools (the use_rs=false baseline): seen characters
    // sharing at least one component, the character itself excluded
    std::vector<std::set<std::string>> comp_ids;
    for (const auto& c : ds.chars)
        comp_ids.push_back(component_ids(search_components(ds.table, c)));
    random_ref_pool_.resize(ds.chars.size());
    for (std::size_t c = 0; c < ds.chars.size(); c++) {
        for (std::size_t r = 0; r < ds.chars.size(); r++) {
            if (r == c || !ds.char_seen[r]) continue;
            bool shares = false;
            for (const auto& id : comp_ids[c])
                if (comp_ids[r].count(id)) {
                    shares = true;
                    break;
                }
            if (shares) random_ref_pool_[c].push_back(int(r));
        }
        if (random_ref_pool_[c].empty())
            for (std::size_t r = 0; r < ds.chars.size(); r++)
                if (r != c && ds.char_seen[r]) random_ref_pool_[c].push_back(int(r));
    }
}

std::vector<Trainer::Sample> Trainer::draw_batch(int iteration) const {
    Rng rng(Rng::fold(cfg_.seed, 0xBA7C4ull, uint64_t(iteration)));
    std::vector<Sample> batch;
    for (int j = 0; j < cfg_.batch_size; j++) {
        Sample s;
        auto [st, ch] = train_pairs_[rng.below(train_pairs_.size())];
        s.style = st;
        s.chr = ch;
        if (cfg_.use_rs) {
            s.ref_chars = ds_.ref_char_ids(ch);
        } else {
            std::vector<int> pool = random_ref_pool_[std::size_t(ch)];
            while (int(s.ref_chars.size()) < ds_.cfg.k && !pool.empty()) {
                std::size_t pick = rng.below(pool.size());
                s.ref_chars.push_back(pool[pick]);
                pool.erase(pool.begin() + std::ptrdiff_t(pick));
            }
            if (s.ref_chars.empty()) throw DataError("empty random reference pool");
            while (int(s.ref_chars.size()) < ds_.cfg.k)
                s.ref_chars.push_back(s.ref_chars.front());
        }
        batch.push_back(std::move(s));
    }
    return batch;
}

StepReport Trainer::step() {
    iter_++;
    auto batch = draw_batch(iter_);
    disc_.power_iterate();
    StepReport rep;
    rep.iteration = iter_;
    DStats d = discriminator_step(batch);
    rep.loss_d = d.loss;
    rep.grad_norm_d = d.grad_norm;
    GStats g = generator_step(batch);
    rep.loss_g_adv = g.adv;
    rep.loss_l1_main = g.l1_main;
    rep.loss_l1_sr = g.l1_sr;
    rep.grad_norm_g = g.grad_norm;
    return rep;
}

Trainer::DStats Trainer::discriminator_step(const std::vector<Sample>& batch) {
    const int B = int(batch.size());
    const std::size_t bs = std::size_t(B);
    std::vector<std::vector<Tensor<float>>> d_grads(bs);
    std::vector<double> d_losses(bs, 0.0);
    {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int j = 0; j < B; j++) {
            const Sample& s = batch[std::size_t(j)];
            Tape<float> t;
            auto gp = bind_params(t, gen_.params, false);
            auto dp = bind_params(t, disc_.params, true);

            auto x = t.leaf(ds_.content_images[std::size_t(s.chr)]);
            auto y = t.leaf(ds_.images[std::size_t(s.style)][std::size_t(s.chr)]);
            std::vector<Tape<float>::Id> refs;
            for (int rc : s.ref_chars)
                refs.push_back(t.leaf(ds_.images[std::size_t(s.style)][std::size_t(rc)]));

            // generator params are bound without grad, so these act detached
            std::vector<Tape<float>::Id> fake_logits;
            auto fake_main = gen_.forward(t, gp, x, refs, cfg_.use_sam);
            fake_logits.push_back(disc_.logit(t, dp, fake_main, s.style, s.chr));
            if (cfg_.use_sr) {
                auto fake_sr = gen_.forward(t, gp, x, {y}, cfg_.use_sam);
                fake_logits.push_back(disc_.logit(t, dp, fake_sr, s.style, s.chr));
            }
            auto logit_real = disc_.logit(t, dp, y, s.style, s.chr);
            auto loss = t.scale(adv_loss_d(t, logit_real, fake_logits),
                                float(cfg_.lambda_adv));
            t.backward(loss);
            d_losses[std::size_t(j)] = double(t.val(loss)[0]);

            std::vector<Tensor<float>> grads(disc_.params.size());
            for (std::size_t i = 0; i < disc_.params.size(); i++)
                if (disc_.params[int(i)].trainable && !t.grad_of(dp[i]).empty())
                    grads[i] = t.grad_of(dp[i]).clone();
            d_grads[std::size_t(j)] = std::move(grads);
        }
    }
    std::vector<Tensor<float>> d_merged(disc_.params.size());
    double d_norm2 = 0;
    for (std::size_t i = 0; i < disc_.params.size(); i++) {
        if (!disc_.params[int(i)].trainable) continue;
        Tensor<float> acc = Tensor<float>::zeros(disc_.params[int(i)].value.shape);
        for (int j = 0; j < B; j++) {
            const Tensor<float>& g = d_grads[std::size_t(j)][i];
            if (g.empty()) continue;
            for (std::size_t e = 0; e < acc.size(); e++) acc[e] += g[e] / float(B);
        }
        for (std::size_t e = 0; e < acc.size(); e++) d_norm2 += double(acc[e]) * double(acc[e]);
        d_merged[i] = std::move(acc);
    }
    opt_d_.step(disc_.params, d_merged);
    DStats out;
    for (double v : d_losses) out.loss += v / B;
    require_finite(out.loss, "discriminator loss", iter_);
    out.grad_norm = std::sqrt(d_norm2);
    return out;
}

Trainer::GStats Trainer::generator_step(const std::vector<Sample>& batch) {
    const int B = int(batch.size());
    const std::size_t bs = std::size_t(B);
    std::vector<std::vector<Tensor<float>>> g_grads(bs);
    std::vector<double> adv_vals(bs, 0.0), l1_main_vals(bs, 0.0), l1_sr_vals(bs, 0.0);
    {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int j = 0; j < B; j++) {
            const Sample& s = batch[std::size_t(j)];
            Tape<float> t;
            auto gp = bind_params(t, gen_.params, true);
            auto dp = bind_params(t, disc_.params, false);

            auto x = t.leaf(ds_.content_images[std::size_t(s.chr)]);
            auto y = t.leaf(ds_.images[std::size_t(s.style)][std::size_t(s.chr)]);
            std::vector<Tape<float>::Id> refs;
            for (int rc : s.ref_chars)
                refs.push_back(t.leaf(ds_.images[std::size_t(s.style)][std::size_t(rc)]));

            auto fake_main = gen_.forward(t, gp, x, refs, cfg_.use_sam);
            std::vector<Tape<float>::Id> fake_logits = {
                disc_.logit(t, dp, fake_main, s.style, s.chr)};

            auto l1_main = t.mean_all(t.abs(t.sub(fake_main, y)));
            Tape<float>::Id l1_total = l1_main;
            if (cfg_.use_sr) {
                auto fake_sr = gen_.forward(t, gp, x, {y}, cfg_.use_sam);
                fake_logits.push_back(disc_.logit(t, dp, fake_sr, s.style, s.chr));
                auto l1_sr = t.mean_all(t.abs(t.sub(fake_sr, y)));
                l1_sr_vals[std::size_t(j)] = double(t.val(l1_sr)[0]);
                l1_total = t.add(l1_main, l1_sr);
            }
            auto adv = adv_loss_g(t, fake_logits);
            auto loss = t.add(t.scale(adv, float(cfg_.lambda_adv)),
                              t.scale(l1_total, float(cfg_.lambda_l1)));
            t.backward(loss);

            adv_vals[std::size_t(j)] = double(t.val(adv)[0]);
            l1_main_vals[std::size_t(j)] = double(t.val(l1_main)[0]);

            std::vector<Tensor<float>> grads(gen_.params.size());
            for (std::size_t i = 0; i < gen_.params.size(); i++)
                if (gen_.params[int(i)].trainable && !t.grad_of(gp[i]).empty())
                    grads[i] = t.grad_of(gp[i]).clone();
            g_grads[std::size_t(j)] = std::move(grads);
        }
    }
    std::vector<Tensor<float>> g_merged(gen_.params.size());
    double g_norm2 = 0;
    for (std::size_t i = 0; i < gen_.params.size(); i++) {
        if (!gen_.params[int(i)].trainable) continue;
        Tensor<float> acc = Tensor<float>::zeros(gen_.params[int(i)].value.shape);
        for (int j = 0; j < B; j++) {
            const Tensor<float>& g = g_grads[std::size_t(j)][i];
            if (g.empty()) continue;
            for (std::size_t e = 0; e < acc.size(); e++) acc[e] += g[e] / float(B);
        }
        for (std::size_t e = 0; e < acc.size(); e++) g_norm2 += double(acc[e]) * double(acc[e]);
        g_merged[i] = std::move(acc);
    }
    opt_g_.step(gen_.params, g_merged);

    GStats out;
    for (int j = 0; j < B; j++) {
        out.adv += adv_vals[std::size_t(j)] / B;
        out.l1_main += l1_main_vals[std::size_t(j)] / B;
        out.l1_sr += l1_sr_vals[std::size_t(j)] / B;
    }
    out.grad_norm = std::sqrt(g_norm2);
    require_finite(out.adv, "generator adversarial loss", iter_);
    require_finite(out.l1_main, "generator L1 loss", iter_);
    require_finite(out.grad_norm, "generator gradient norm", iter_);
    return out;
}

void Trainer::run(std::ostream* log, const std::function<void(const StepReport&)>& callback) {
    if (log) write_log_header(*log);
    for (int i = 0; i < cfg_.iterations; i++) {
        StepReport r = step();
        if (log && (r.iteration % cfg_.report_every == 0 || r.iteration == cfg_.iterations))
            write_log_row(*log, r);
        if (callback) callback(r);
    }
}

void Trainer::write_log_header(std::ostream& os) {
    os << "iteration\tloss_g_adv\tloss_d\tloss_l1_main\tloss_l1_sr\tgrad_norm_g\tgrad_norm_d\n";
}

void Trainer::write_log_row(std::ostream& os, const StepReport& r) {
    os << r.iteration << '\t' << fmt(r.loss_g_adv) << '\t' << fmt(r.loss_d) << '\t'
       << fmt(r.loss_l1_main) << '\t' << fmt(r.loss_l1_sr) << '\t' << fmt(r.grad_norm_g) << '\t'
       << fmt(r.grad_norm_d) << '\n';
}

double Trainer::eval_l1(Split split) const {
    auto pairs = ds_.pairs(split);
    if (pairs.empty()) throw DataError("evaluation split is empty");
    double total = 0;
    for (auto [st, ch] : pairs) {
        Tensor<float> out =
            gen_.generate(ds_.content_images[std::size_t(ch)], ds_.refs_for(st, ch),
                          cfg_.use_sam);
        total += pixel_metrics(out, ds_.images[std::size_t(st)][std::size_t(ch)]).l1;
    }
    return total / double(pairs.size());
}

double Trainer::eval_sr_l1(Split split) const {
    auto pairs = ds_.pairs(split);
    if (pairs.empty()) throw DataError("evaluation split is empty");
    double total = 0;
    for (auto [st, ch] : pairs) {
        const Tensor<float>& y = ds_.images[std::size_t(st)][std::size_t(ch)];
        Tensor<float> out =
            self_reconstruct(gen_, ds_.content_images[std::size_t(ch)], y, cfg_.use_sam);
        total += pixel_metrics(out, y).l1;
    }
    return total / double(pairs.size());
}

MetricSummary Trainer::eval_metrics(Split split) const {
    auto pairs = ds_.pairs(split);
    if (pairs.empty()) throw DataError("evaluation split is empty");
    std::map<int, StyleMetrics> by_style;
    for (auto [st, ch] : pairs) {
        Tensor<float> out =
            gen_.generate(ds_.content_images[std::size_t(ch)], ds_.refs_for(st, ch),
                          cfg_.use_sam);
        const Tensor<float>& y = ds_.images[std::size_t(st)][std::size_t(ch)];
        PixelMetrics pm = pixel_metrics(out, y);
        double sv = ssim(out, y);
        auto& sm = by_style[st];
        sm.style = ds_.styles[std::size_t(st)].name;
        sm.count++;
        sm.l1 += pm.l1;
        sm.rmse += pm.rmse;
        sm.ssim_v += sv;
    }
    MetricSummary out;
    for (auto& [st, sm] : by_style) {
        sm.l1 /= sm.count;
        sm.rmse /= sm.count;
        sm.ssim_v /= sm.count;
        out.per_style.push_back(sm);
    }
    auto mean_std = [&](auto get, double& mean, double& std) {
        double m = 0;
        for (const auto& sm : out.per_style) m += get(sm);
        m /= double(out.per_style.size());
        double v = 0;
        for (const auto& sm : out.per_style) v += (get(sm) - m) * (get(sm) - m);
        v /= double(out.per_style.size());
        mean = m;
        std = std::sqrt(v);
    };
    mean_std([](const StyleMetrics& s) { return s.l1; }, out.l1_mean, out.l1_std);
    mean_std([](const StyleMetrics& s) { return s.rmse; }, out.rmse_mean, out.rmse_std);
    mean_std([](const StyleMetrics& s) { return s.ssim_v; }, out.ssim_mean, out.ssim_std);
    return out;
}

CheckpointMeta Trainer::checkpoint_meta() const {
    CheckpointMeta meta;
    meta.net = net_;
    meta.use_sam = cfg_.use_sam;
    meta.use_sr = cfg_.use_sr;
    meta.use_rs = cfg_.use_rs;
    for (const auto& s : ds_.styles) meta.style_names.push_back(s.name);
    meta.char_names = ds_.chars;
    return meta;
}

void Trainer::save(const std::string& path) const {
    save_checkpoint(path, checkpoint_meta(), gen_.params, disc_.params);
}

void Trainer::load(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    fill_params(gen_.params, ck, "g.");
    fill_params(disc_.params, ck, "d.");
}

}  // namespace fewfont
