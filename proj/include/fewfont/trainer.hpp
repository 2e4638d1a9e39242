#pragma once

// Alternating GAN training over the paired glyph dataset.
//
// Each iteration draws a batch of (seen style, seen char) pairs, then
//   1) discriminator step: hinge loss on the real image and the detached
//      main/self-reconstruction outputs,
//   2) generator step: adversarial loss through the freshly updated
//      discriminator plus the weighted pixel L1.
// Ablation switches: use_sam replaces attention with reference averaging,
// use_sr drops the self-reconstruction branch and its loss terms, use_rs
// replaces the fixed mapping with uniformly drawn references sharing at
// least one component (the random-reference baseline). Evaluation always
// uses the fixed mapping so ablations stay comparable.
//
// Batch samples run in parallel; gradients merge in sample order, so runs
// are bit-reproducible for a fixed seed regardless of thread count.

#include <functional>
#include <iosfwd>
#include <optional>

#include "fewfont/adam.hpp"
#include "fewfont/checkpoint.hpp"
#include "fewfont/dataset.hpp"
#include "fewfont/fontnet.hpp"
#include "fewfont/losses.hpp"
#include "fewfont/metrics.hpp"

namespace fewfont {

struct TrainConfig {
    double lambda_adv = 1.0;
    double lambda_l1 = 0.1;
    double lr_g = 0.0002;
    double lr_d = 0.0008;
    double beta1 = 0.0;
    double beta2 = 0.9;
    double adam_eps = 1e-8;
    int batch_size = 4;
    int iterations = 2000;
    int heads = 8;
    double width_mult = 0.25;
    uint64_t seed = 0;
    bool use_sam = true;
    bool use_sr = true;
    bool use_rs = true;
    int report_every = 50;
};

struct StepReport {
    int iteration = 0;
    double loss_g_adv = 0;
    double loss_d = 0;
    double loss_l1_main = 0;
    double loss_l1_sr = 0;
    double grad_norm_g = 0;
    double grad_norm_d = 0;
};

struct StyleMetrics {
    std::string style;
    int count = 0;
    double l1 = 0, rmse = 0, ssim_v = 0;
};

struct MetricSummary {
    std::vector<StyleMetrics> per_style;
    double l1_mean = 0, l1_std = 0;
    double rmse_mean = 0, rmse_std = 0;
    double ssim_mean = 0, ssim_std = 0;
};

// The self-reconstruction branch: the target itself is the one reference,
// run through the very same parameter set as the main branch.
Tensor<float> self_reconstruct(const Generator<float>& gen, const Tensor<float>& x_c,
                               const Tensor<float>& y_c, bool use_attn = true);

class Trainer {
  public:
    struct Sample {
        int style = 0, chr = 0;
        std::vector<int> ref_chars;
    };
    struct DStats {
        double loss = 0, grad_norm = 0;
    };
    struct GStats {
        double adv = 0, l1_main = 0, l1_sr = 0, grad_norm = 0;
    };

    Trainer(const Dataset& ds, const TrainConfig& cfg);

    // One alternating update: spectral-norm power iteration, then the
    // discriminator phase, then the generator phase on the same batch.
    StepReport step();

    // The two phases separately: each updates only its own network.
    std::vector<Sample> draw_batch(int iteration) const;
    DStats discriminator_step(const std::vector<Sample>& batch);
    GStats generator_step(const std::vector<Sample>& batch);

    void run(std::ostream* log,
             const std::function<void(const StepReport&)>& callback = {});

    double eval_l1(Split split) const;     // main branch, fixed mapping references
    double eval_sr_l1(Split split) const;  // self-reconstruction branch
    MetricSummary eval_metrics(Split split) const;

    Generator<float>& generator() { return gen_; }
    const Generator<float>& generator() const { return gen_; }
    Discriminator<float>& discriminator() { return disc_; }
    const Dataset& dataset() const { return ds_; }
    const TrainConfig& config() const { return cfg_; }
    int iteration() const { return iter_; }

    CheckpointMeta checkpoint_meta() const;
    void save(const std::string& path) const;
    void load(const std::string& path);

    static void write_log_header(std::ostream& os);
    static void write_log_row(std::ostream& os, const StepReport& r);

  private:
    const Dataset& ds_;
    TrainConfig cfg_;
    NetConfig net_;
    Generator<float> gen_;
    Discriminator<float> disc_;
    Adam<float> opt_g_, opt_d_;
    std::vector<std::pair<int, int>> train_pairs_;
    std::vector<std::vector<int>> random_ref_pool_;  // per char: seen chars sharing a component
    int iter_ = 0;
};

}  // namespace fewfont
