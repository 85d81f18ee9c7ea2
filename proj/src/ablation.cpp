#include "awr/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "awr/inference.hpp"
#include "awr/metrics.hpp"
#include "awr/synth.hpp"

namespace fs = std::filesystem;

namespace awr::train {

namespace {

std::vector<double> minmax_normalize(const std::vector<double>& v) {
    double lo = *std::min_element(v.begin(), v.end());
    double hi = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size(), 0.5);
    if (hi - lo < 1e-12) return out;  // constant scores carry no interval information
    for (size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / (hi - lo);
    return out;
}

}  // namespace

RankerScore score_ranker_on_ladders(const Model& model, const std::vector<std::string>& kinds,
                                    int ladder_steps, int ladder_size, uint64_t ladder_seed,
                                    int ladder_scenes) {
    if (ladder_steps < 2) throw ConfigError("ladder_steps must be >= 2");
    if (ladder_scenes < 1) throw ConfigError("ladder_scenes must be >= 1");
    double ord_hits = 0.0, ord_total = 0.0;
    double interval_sum = 0.0, interval_total = 0.0;

    for (size_t ki = 0; ki < kinds.size(); ++ki) {
        synth::Kind kind = synth::kind_from_string(kinds[ki]);
        for (int sc = 0; sc < ladder_scenes; ++sc) {
            Tensor scene = synth::make_scene(ladder_seed + ki * 101 + static_cast<uint64_t>(sc) * 13,
                                             ladder_size, ladder_size);
            std::vector<double> preds, gts;
            for (int s = 0; s < ladder_steps; ++s) {
                synth::DegradationSpec spec;
                spec.kind = kind;
                spec.severity = 0.1 + 0.8 * static_cast<double>(s) / (ladder_steps - 1);
                spec.seed = ladder_seed ^ (ki * 1315423911ULL) ^ (static_cast<uint64_t>(sc) << 8);
                Tensor degraded = synth::apply_degradation(scene, spec);
                auto [tm, sev] = model.encode_image(degraded);
                (void)tm;
                preds.push_back(model.predict_iqa_value(sev));
                gts.push_back(metrics::gt_quality(degraded, scene));
            }
            std::vector<double> pn = minmax_normalize(preds);
            std::vector<double> gn = minmax_normalize(gts);
            for (size_t i = 0; i < preds.size(); ++i)
                for (size_t j = i + 1; j < preds.size(); ++j) {
                    double dg = gts[i] - gts[j];
                    double dp = preds[i] - preds[j];
                    if (std::fabs(dg) > 1e-9) {
                        ord_total += 1.0;
                        if ((dg > 0) == (dp > 0) && std::fabs(dp) > 0.0) ord_hits += 1.0;
                    }
                    interval_sum += std::fabs((gn[i] - gn[j]) - (pn[i] - pn[j]));
                    interval_total += 1.0;
                }
        }
    }
    RankerScore score;
    score.ordering_accuracy = ord_total > 0 ? ord_hits / ord_total : 0.0;
    score.interval_error = interval_total > 0 ? interval_sum / interval_total : 0.0;
    return score;
}

AblationReport run_ablation(const Manifest& manifest, const AblationOptions& opt,
                            const std::string& out_dir, std::ostream* log) {
    if (opt.regimes.empty()) throw ConfigError("ablation: no regimes requested");
    fs::create_directories(out_dir);
    std::vector<std::string> kinds = manifest.kinds();

    AblationReport report;
    nlohmann::ordered_json jregimes;
    for (SeverityRegime regime : opt.regimes) {
        TrainConfig cfg = opt.base;
        cfg.regime = regime;
        cfg.validate();

        Trainer trainer(cfg, manifest);
        trainer.run_stage1(log);

        RegimeResult res;
        res.regime = to_string(regime);
        res.checkpoint_path = (fs::path(out_dir) / ("ablate_" + res.regime + ".ckpt")).string();
        trainer.save_checkpoint(res.checkpoint_path);

        RankerScore rs = score_ranker_on_ladders(trainer.model(), kinds, opt.ladder_steps,
                                                 opt.ladder_size, opt.ladder_seed,
                                                 opt.ladder_scenes);
        res.ordering_accuracy = rs.ordering_accuracy;
        res.interval_error = rs.interval_error;

        metrics::EvalReport ev = metrics::evaluate(manifest, [&](const Tensor& img) {
            return infer::restore_any(trainer.model(), img);
        });
        res.mean_psnr_after = ev.mean_psnr_after;
        res.mean_ssim_after = ev.mean_ssim_after;

        nlohmann::ordered_json jr;
        jr["ordering_accuracy"] = res.ordering_accuracy;
        jr["interval_error"] = res.interval_error;
        jr["mean_psnr_after"] = res.mean_psnr_after;
        jr["mean_ssim_after"] = res.mean_ssim_after;
        jr["checkpoint"] = fs::path(res.checkpoint_path).filename().string();
        jr["eval"] = nlohmann::ordered_json::parse(ev.json);
        jregimes[res.regime] = jr;
        report.results.push_back(std::move(res));
    }

    // regimes ranked by interval error, best first
    std::vector<const RegimeResult*> ranked;
    for (const auto& r : report.results) ranked.push_back(&r);
    std::stable_sort(ranked.begin(), ranked.end(), [](const RegimeResult* a, const RegimeResult* b) {
        return a->interval_error < b->interval_error;
    });
    nlohmann::ordered_json jrank = nlohmann::ordered_json::array();
    for (const auto* r : ranked) jrank.push_back(r->regime);

    nlohmann::ordered_json j;
    j["regimes"] = jregimes;
    j["interval_error_ranking"] = jrank;
    report.json = j.dump(2) + "\n";

    std::ofstream f(fs::path(out_dir) / "ablation_report.json", std::ios::binary);
    if (!f) throw DataError("cannot write ablation report");
    f << report.json;
    return report;
}

}  // namespace awr::train
