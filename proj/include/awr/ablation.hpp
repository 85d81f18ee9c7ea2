#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "awr/trainer.hpp"

namespace awr::train {

struct AblationOptions {
    std::vector<SeverityRegime> regimes = {SeverityRegime::direct, SeverityRegime::mrl,
                                           SeverityRegime::mqrl};
    TrainConfig base;      // regime is overwritten per run; seed shared
    int ladder_steps = 9;   // severity ladder resolution for ranker metrics
    int ladder_size = 64;   // ladder image side (divisible by downsample)
    int ladder_scenes = 3;  // ladders per kind, averaged
    uint64_t ladder_seed = 424242;
};

struct RegimeResult {
    std::string regime;
    double ordering_accuracy = 0.0;  // sign agreement of score differences
    double interval_error = 0.0;     // mean |gt diff - pred diff| after min-max normalization
    double mean_psnr_after = 0.0;
    double mean_ssim_after = 0.0;
    std::string checkpoint_path;
};

struct AblationReport {
    std::vector<RegimeResult> results;  // in run order
    std::string json;                   // fixed key order
};

// Trains one stage-1 model per regime with identical seeds and data,
// then scores the severity ranker on synthetic severity ladders and the
// restoration quality on the manifest.
AblationReport run_ablation(const Manifest& manifest, const AblationOptions& opt,
                            const std::string& out_dir, std::ostream* log);

// Ranker metrics for one already-trained model (exposed for tests).
struct RankerScore {
    double ordering_accuracy = 0.0;
    double interval_error = 0.0;
};
RankerScore score_ranker_on_ladders(const Model& model, const std::vector<std::string>& kinds,
                                    int ladder_steps, int ladder_size, uint64_t ladder_seed,
                                    int ladder_scenes = 3);

}  // namespace awr::train
