#include "awr/losses.hpp"

#include <cmath>

#include "awr/metrics.hpp"

namespace awr::loss {

namespace {

constexpr double kSignDeadZone = 1e-6;

bool signs_compatible(double gt_diff, double in_diff) {
    if (std::fabs(gt_diff) < kSignDeadZone || std::fabs(in_diff) < kSignDeadZone) return true;
    return (gt_diff > 0.0) == (in_diff > 0.0);
}

Var cosine(Tape& t, Var a, Var b) {
    double na = 0.0, nb = 0.0;
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    require_same_shape(av, bv, "cosine");
    for (int64_t i = 0; i < av.size(); ++i) {
        na += av[i] * av[i];
        nb += bv[i] * bv[i];
    }
    if (na < 1e-24 || nb < 1e-24) throw NumericError("cosine similarity of a zero-norm vector");
    Var num = nn::dot(t, a, b);
    Var den = nn::mul(t, nn::sqrt_v(t, nn::dot(t, a, a)), nn::sqrt_v(t, nn::dot(t, b, b)));
    return nn::div(t, num, den);
}

}  // namespace

Var mqrl(Tape& t, Var pred_a, Var pred_b, double gt_a, double gt_b, double margin) {
    if (margin < 0.0) throw ConfigError("mqrl: margin must be nonnegative");
    Var diff_in = nn::sub(t, pred_a, pred_b);
    double diff_gt = gt_a - gt_b;
    // |diff_gt - diff_in|
    Var diff = nn::abs_v(t, nn::add_scalar(t, nn::neg(t, diff_in), diff_gt));
    if (!signs_compatible(diff_gt, t.scalar(diff_in))) return diff;
    return nn::relu(t, nn::add_scalar(t, diff, -margin));
}

Var mrl(Tape& t, Var pred_a, Var pred_b, double gt_a, double gt_b, double margin) {
    if (margin < 0.0) throw ConfigError("mrl: margin must be nonnegative");
    double d = gt_a - gt_b;
    double y = std::fabs(d) < kSignDeadZone ? 0.0 : (d > 0.0 ? 1.0 : -1.0);
    Var scored = nn::scale(t, nn::sub(t, pred_a, pred_b), -y);
    return nn::relu(t, nn::add_scalar(t, scored, margin));
}

Var direct_iqa(Tape& t, Var pred, double gt) {
    Var e = nn::add_scalar(t, pred, -gt);
    return nn::mul(t, e, e);
}

Var contrastive(Tape& t, Var anchor, Var positive, const std::vector<Var>& negatives, double tau) {
    if (tau <= 0.0) throw ConfigError("contrastive: tau must be positive");
    if (negatives.empty()) throw ConfigError("contrastive: at least one negative required");
    Var sim_pos = cosine(t, anchor, positive);
    // -log softmax == log(1 + sum_j exp((s_j - s_p)/tau))
    Var acc = t.constant(1.0);
    for (Var n : negatives) {
        Var sim_neg = cosine(t, anchor, n);
        Var z = nn::scale(t, nn::sub(t, sim_neg, sim_pos), 1.0 / tau);
        acc = nn::add(t, acc, nn::exp_v(t, z));
    }
    return nn::log_v(t, acc);
}

Var l1(Tape& t, Var restored, Var target) {
    return nn::mean(t, nn::abs_v(t, nn::sub(t, restored, target)));
}

Var ssim_loss(Tape& t, Var restored, Var target) {
    const Tensor win = metrics::ssim_window();
    constexpr double C1 = 0.01 * 0.01;
    constexpr double C2 = 0.03 * 0.03;
    Var mu_x = nn::blur_valid(t, restored, win);
    Var mu_y = nn::blur_valid(t, target, win);
    Var s_xx = nn::sub(t, nn::blur_valid(t, nn::mul(t, restored, restored), win), nn::mul(t, mu_x, mu_x));
    Var s_yy = nn::sub(t, nn::blur_valid(t, nn::mul(t, target, target), win), nn::mul(t, mu_y, mu_y));
    Var s_xy = nn::sub(t, nn::blur_valid(t, nn::mul(t, restored, target), win), nn::mul(t, mu_x, mu_y));
    Var mu_xy = nn::mul(t, mu_x, mu_y);
    Var num = nn::mul(t, nn::add_scalar(t, nn::scale(t, mu_xy, 2.0), C1),
                      nn::add_scalar(t, nn::scale(t, s_xy, 2.0), C2));
    Var den = nn::mul(t,
                      nn::add_scalar(t, nn::add(t, nn::mul(t, mu_x, mu_x), nn::mul(t, mu_y, mu_y)), C1),
                      nn::add_scalar(t, nn::add(t, s_xx, s_yy), C2));
    Var mean_ssim = nn::mean(t, nn::div(t, num, den));
    return nn::add_scalar(t, nn::neg(t, mean_ssim), 1.0);
}

FeaturePyramid::FeaturePyramid(uint64_t seed, int stages) {
    int cin = 3;
    int cout = 8;
    for (int s = 0; s < stages; ++s) {
        RandomStream rs = RandomStream::keyed(seed, "feature-pyramid", static_cast<uint64_t>(s));
        Tensor w({3, 3, cin, cout});
        double std = std::sqrt(2.0 / (9.0 * cin));
        for (int64_t i = 0; i < w.size(); ++i) w[i] = snap_f32(rs.normal() * std);
        weights_.push_back(std::move(w));
        biases_.push_back(Tensor({cout}));
        cin = cout;
        cout *= 2;
    }
}

std::vector<Var> FeaturePyramid::forward(Tape& t, Var image) const {
    std::vector<Var> stages;
    Var x = image;
    for (size_t s = 0; s < weights_.size(); ++s) {
        Var w = t.input(weights_[s]);
        Var b = t.input(biases_[s]);
        x = nn::lrelu(t, nn::conv2d(t, x, w, b, 2, 1), 0.2);
        stages.push_back(x);
    }
    return stages;
}

Var perceptual(Tape& t, Var restored, Var target, const FeaturePyramid& pyramid) {
    std::vector<Var> fr = pyramid.forward(t, restored);
    std::vector<Var> ft = pyramid.forward(t, target);
    Var total{};
    for (size_t s = 0; s < fr.size(); ++s) {
        Var d = nn::sub(t, fr[s], ft[s]);
        Var stage = nn::mean(t, nn::mul(t, d, d));
        total = total.valid() ? nn::add(t, total, stage) : stage;
    }
    return total;
}

Var total_loss(Tape& t, const LossTerms& terms, const LossWeights& w) {
    w.validate();
    Var total = t.constant(0.0);
    if (terms.mqrl.valid()) total = nn::add(t, total, terms.mqrl);
    if (terms.cl.valid()) total = nn::add(t, total, nn::scale(t, terms.cl, w.cl));
    if (terms.l1.valid()) total = nn::add(t, total, nn::scale(t, terms.l1, w.l1));
    if (terms.ssim.valid()) total = nn::add(t, total, nn::scale(t, terms.ssim, w.ssim));
    if (terms.perceptual.valid()) total = nn::add(t, total, nn::scale(t, terms.perceptual, w.perceptual));
    return total;
}

}  // namespace awr::loss
