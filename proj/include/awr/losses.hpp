#pragma once

#include <cstdint>
#include <vector>

#include "awr/graph.hpp"
#include "awr/rng.hpp"
#include "awr/tensor.hpp"

namespace awr::loss {

using nn::Tape;
using nn::Var;

struct LossWeights {
    double cl = 0.2;
    double l1 = 1.0;
    double ssim = 0.5;
    double perceptual = 0.04;

    void validate() const {
        if (cl < 0 || l1 < 0 || ssim < 0 || perceptual < 0)
            throw ConfigError("loss weights must be nonnegative");
    }
};

// Quality ranking loss with an interval margin. Given predicted scores for
// an image pair of the same weather kind and their ground-truth qualities:
//   diff_in = pred_a - pred_b, diff_gt = gt_a - gt_b, diff = |diff_gt - diff_in|
// returns diff when the two differences disagree in sign, otherwise
// max(0, diff - margin). Differences below 1e-6 in magnitude are treated
// as sign-compatible with anything.
Var mqrl(Tape& t, Var pred_a, Var pred_b, double gt_a, double gt_b, double margin);

// Standard margin ranking loss: max(0, -y*(pred_a - pred_b) + margin) with
// y = sgn(gt_a - gt_b). Ordering-only; blind to the interval.
Var mrl(Tape& t, Var pred_a, Var pred_b, double gt_a, double gt_b, double margin);

// Plain squared-error regression onto the ground-truth quality.
Var direct_iqa(Tape& t, Var pred, double gt);

// InfoNCE over cosine similarity: anchor vs one positive and N negatives,
// temperature tau. Throws on zero-norm inputs.
Var contrastive(Tape& t, Var anchor, Var positive, const std::vector<Var>& negatives, double tau);

// Mean absolute error.
Var l1(Tape& t, Var restored, Var target);

// 1 - mean SSIM (same window/constants as metrics::ssim).
Var ssim_loss(Tape& t, Var restored, Var target);

// Frozen conv pyramid standing in for a pretrained feature extractor.
// Weights are generated from the seed and never trained; gradients flow
// only to the images.
class FeaturePyramid {
public:
    explicit FeaturePyramid(uint64_t seed = 17, int stages = 3);
    std::vector<Var> forward(Tape& t, Var image) const;
    int stages() const { return static_cast<int>(weights_.size()); }
    const Tensor& weight(int stage) const { return weights_.at(static_cast<size_t>(stage)); }
    const Tensor& bias(int stage) const { return biases_.at(static_cast<size_t>(stage)); }

private:
    std::vector<Tensor> weights_;  // (k,k,cin,cout) per stage
    std::vector<Tensor> biases_;
};

// Sum over stages of mean squared feature distance.
Var perceptual(Tape& t, Var restored, Var target, const FeaturePyramid& pyramid);

struct LossTerms {
    Var mqrl{};        // unweighted
    Var cl{};          // weighted by w.cl
    Var l1{};          // weighted by w.l1
    Var ssim{};        // weighted by w.ssim
    Var perceptual{};  // weighted by w.perceptual
};

// Weighted total; invalid handles contribute nothing.
Var total_loss(Tape& t, const LossTerms& terms, const LossWeights& w);

}  // namespace awr::loss
