#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "awr/data.hpp"
#include "awr/losses.hpp"
#include "awr/model.hpp"
#include "awr/rng.hpp"

namespace awr::train {

// Which loss drives the severity branch (the type branch always uses the
// contrastive loss when more than one kind is present).
enum class SeverityRegime { mqrl, mrl, direct, none };
std::string to_string(SeverityRegime r);
SeverityRegime regime_from_string(const std::string& s);

struct TrainConfig {
    // data
    int crop_size = 256;
    int batch_size = 2;  // anchors per step; each anchor brings a same-kind partner
    // schedule
    int stage1_epochs = 40;
    int stage2_epochs = 30;
    int steps_per_epoch = 0;  // 0: ceil(rows / batch_size)
    double lr = 1e-4;
    int decay_start_epoch = 18;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    // losses
    loss::LossWeights weights;
    double margin = 0.05;  // ranking interval margin
    double tau = 0.25;     // contrastive temperature
    SeverityRegime regime = SeverityRegime::mqrl;
    uint64_t pyramid_seed = 17;
    // model dims
    ModelConfig model;

    void validate() const;
    KvMap to_kv() const;
    static TrainConfig from_kv(const KvMap& kv);  // missing keys fall back to defaults
};

// Constant through decay_start (inclusive), then linear to zero at
// stage_epochs. Stages shorter than the decay start never decay.
double lr_at(int epoch, int stage_epochs, int decay_start, double base_lr);

// Two distinct row indices of the given kind. Throws DataError when the
// kind has fewer than two rows.
std::pair<int, int> sample_rank_pair(const Manifest& m, const std::string& kind, RandomStream& rng);

struct BatchSample {
    int row_a = -1, row_b = -1;  // same-kind pair; a is the restored anchor
    std::string kind;
    Tensor degraded_a, clean_a;  // aligned crops
    Tensor degraded_b, clean_b;
    double gt_a = 0.0, gt_b = 0.0;  // ground-truth quality on the crops
    int crop_ya = 0, crop_xa = 0, crop_yb = 0, crop_xb = 0;
};

struct Batch {
    std::vector<BatchSample> samples;
    bool cl_enabled = false;  // false for single-kind manifests
};

struct StepStats {
    uint64_t step = 0;
    int epoch = 0;
    int stage = 1;
    double lr = 0.0;
    double mqrl = 0.0, cl = 0.0, l1 = 0.0, ssim = 0.0, perceptual = 0.0, total = 0.0;
};

class Trainer {
public:
    Trainer(TrainConfig cfg, Manifest manifest);

    // Decoded images are cached; batches depend only on (seed, step).
    Batch build_batch(uint64_t step) const;

    // One optimizer step; stage is 1 (full loss) or 2 (pixel fidelity only,
    // lr/10). Throws NumericError on a non-finite loss after dumping the
    // offending batch description to the log.
    StepStats step_once(int stage, int epoch, std::ostream* log);

    // Full stages. Log lines are line-delimited JSON, one per step.
    void run_stage1(std::ostream* log);
    void run_stage2(std::ostream* log);

    int steps_per_epoch() const;

    Model& model() { return *model_; }
    const Model& model() const { return *model_; }
    const TrainConfig& config() const { return cfg_; }
    const Manifest& manifest() const { return manifest_; }
    uint64_t global_step() const { return global_step_; }
    int epochs_done(int stage) const { return stage == 1 ? stage1_epochs_done_ : stage2_epochs_done_; }

    void save_checkpoint(const std::string& path) const;
    static Trainer load_checkpoint(const std::string& path, Manifest manifest);

    // Write/read just the model (architecture config + weights + optimizer
    // state + counters); used by both save_checkpoint and tools.
    static void save_checkpoint_file(const std::string& path, const TrainConfig& cfg,
                                     const Model& model, uint64_t global_step,
                                     int stage1_done, int stage2_done, uint64_t adam_t);

    uint64_t adam_t() const { return adam_t_; }

private:
    void apply_adamw(Model::Ctx& ctx, nn::Tape& t, double lr);
    void check_ranks() const;

    TrainConfig cfg_;
    Manifest manifest_;
    std::unique_ptr<Model> model_;
    loss::FeaturePyramid pyramid_;
    std::vector<Tensor> degraded_cache_, clean_cache_;
    uint64_t global_step_ = 0;
    uint64_t adam_t_ = 0;
    int stage1_epochs_done_ = 0;
    int stage2_epochs_done_ = 0;
    bool cl_possible_ = false;
    bool warned_single_kind_ = false;
};

struct CheckpointInfo {
    TrainConfig config;
    uint64_t global_step = 0;
    int stage1_epochs_done = 0;
    int stage2_epochs_done = 0;
    uint64_t adam_t = 0;
};

// Loads config + weights without a manifest (for inference tools).
std::pair<CheckpointInfo, std::unique_ptr<Model>> load_model_checkpoint(const std::string& path);

}  // namespace awr::train
