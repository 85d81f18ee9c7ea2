// awr: synthesize weather-degraded corpora, train the conditioned
// restoration model, evaluate, restore, modulate and run loss ablations.
//
// Exit codes: 0 success, 2 bad arguments/config, 3 data error, 4 numeric
// failure (non-finite loss).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "awr/ablation.hpp"
#include "awr/data.hpp"
#include "awr/inference.hpp"
#include "awr/metrics.hpp"
#include "awr/png_io.hpp"
#include "awr/synth.hpp"
#include "awr/trainer.hpp"

namespace fs = std::filesystem;
using namespace awr;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path.string());
    f << text;
}

// defaults <- config file <- --set overrides <- dedicated flags
struct ConfigLayers {
    std::string config_path;
    std::vector<std::string> sets;

    KvMap merged(const KvMap& flag_overrides) const {
        KvMap kv;
        if (!config_path.empty()) kv = load_kv_file(config_path);
        for (const std::string& s : sets) {
            KvMap one = parse_kv_text(s);
            if (one.empty()) throw ConfigError("bad --set '" + s + "', expected key=value");
            for (auto& [k, v] : one) kv[k] = v;
        }
        for (const auto& [k, v] : flag_overrides) kv[k] = v;
        return kv;
    }
};

struct TrainFlags {
    ConfigLayers layers;
    bool has_seed = false;
    uint64_t seed = 0;
    std::string regime;

    train::TrainConfig resolve() const {
        KvMap overrides;
        if (has_seed) overrides["seed"] = std::to_string(seed);
        if (!regime.empty()) overrides["regime"] = regime;
        return train::TrainConfig::from_kv(layers.merged(overrides));
    }
};

Manifest load_validated_manifest(const std::string& path) {
    Manifest m = load_manifest(path);
    validate_manifest(m);
    return m;
}

int cmd_synth(const std::string& clean_dir, const std::string& out_dir,
              const std::string& kinds_csv, int per_kind, double sev_lo, double sev_hi,
              uint64_t seed, int make_clean, int clean_size) {
    if (make_clean > 0) {
        fs::create_directories(clean_dir);
        for (int i = 0; i < make_clean; ++i)
            write_png((fs::path(clean_dir) / ("scene" + std::to_string(i) + ".png")).string(),
                      synth::make_scene(seed * 1000 + static_cast<uint64_t>(i), clean_size, clean_size));
    }
    synth::CorpusOptions opt;
    opt.kinds.clear();
    for (const std::string& k : split_list(kinds_csv)) opt.kinds.push_back(synth::kind_from_string(k));
    opt.per_kind = per_kind;
    opt.severity_lo = sev_lo;
    opt.severity_hi = sev_hi;
    opt.seed = seed;
    Manifest m = synth::generate_corpus(clean_dir, out_dir, opt);

    KvMap echo;
    echo["clean_dir"] = clean_dir;
    echo["kinds"] = kinds_csv;
    echo["per_kind"] = std::to_string(per_kind);
    echo["severity_lo"] = std::to_string(sev_lo);
    echo["severity_hi"] = std::to_string(sev_hi);
    echo["seed"] = std::to_string(seed);
    write_text(fs::path(out_dir) / "config_effective.txt", kv_to_text(echo));
    std::cout << "wrote " << m.rows.size() << " rows to " << out_dir << "/manifest.csv\n";
    return 0;
}

int cmd_train(const TrainFlags& flags, const std::string& manifest_path,
              const std::string& out_dir, const std::string& resume, int stage) {
    train::TrainConfig cfg = flags.resolve();  // argument errors surface before data access
    Manifest manifest = load_validated_manifest(manifest_path);
    fs::create_directories(out_dir);

    std::unique_ptr<train::Trainer> trainer;
    if (resume.empty()) {
        trainer = std::make_unique<train::Trainer>(cfg, std::move(manifest));
    } else {
        trainer = std::make_unique<train::Trainer>(
            train::Trainer::load_checkpoint(resume, std::move(manifest)));
    }
    write_text(fs::path(out_dir) / "config_effective.txt", kv_to_text(trainer->config().to_kv()));

    std::ofstream log(fs::path(out_dir) / "train_log.jsonl", std::ios::binary);
    if (!log) throw DataError("cannot write training log in " + out_dir);
    if (stage == 1 || stage == 0) {
        trainer->run_stage1(&log);
        trainer->save_checkpoint((fs::path(out_dir) / "stage1.ckpt").string());
    }
    if (stage == 2 || stage == 0) {
        trainer->run_stage2(&log);
    }
    trainer->save_checkpoint((fs::path(out_dir) / "model.ckpt").string());
    std::cout << "trained " << trainer->global_step() << " steps; checkpoint at " << out_dir
              << "/model.ckpt\n";
    std::cout << trainer->model().summary();
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest_path, const std::string& out_dir) {
    Manifest manifest = load_validated_manifest(manifest_path);
    auto [info, model] = train::load_model_checkpoint(ckpt);
    metrics::EvalReport report = metrics::evaluate(
        manifest, [&](const Tensor& img) { return infer::restore_any(*model, img); });
    if (!out_dir.empty()) write_text(fs::path(out_dir) / "eval_report.json", report.json);
    std::cout << report.json;
    return 0;
}

int cmd_restore(const std::string& ckpt, const std::string& input, const std::string& out_dir,
                int iters) {
    auto [info, model] = train::load_model_checkpoint(ckpt);
    std::vector<fs::path> inputs;
    if (fs::is_directory(input)) {
        for (const auto& e : fs::directory_iterator(input))
            if (e.is_regular_file() && e.path().extension() == ".png") inputs.push_back(e.path());
        std::sort(inputs.begin(), inputs.end());
        if (inputs.empty()) throw DataError("no .png files in " + input);
    } else if (fs::is_regular_file(input)) {
        inputs.push_back(input);
    } else {
        throw DataError("input not found: " + input);
    }
    fs::create_directories(out_dir);
    for (const fs::path& p : inputs) {
        Tensor img = read_png(p.string());
        Tensor current = img;
        for (int i = 0; i < iters; ++i) {
            current = infer::restore_any(*model, current);
            std::string name = p.stem().string() +
                               (iters > 1 ? "_iter" + std::to_string(i + 1) : "_restored");
            write_png((fs::path(out_dir) / (name + ".png")).string(), current);
        }
    }
    std::cout << "restored " << inputs.size() << " image(s) into " << out_dir << "\n";
    return 0;
}

int cmd_modulate(const std::string& ckpt, const std::string& input, const std::string& out_dir,
                 const std::string& alphas_csv) {
    auto [info, model] = train::load_model_checkpoint(ckpt);
    std::vector<double> alphas;
    for (const std::string& a : split_list(alphas_csv)) {
        try {
            alphas.push_back(std::stod(a));
        } catch (const std::exception&) {
            throw ConfigError("bad alpha '" + a + "'");
        }
    }
    Tensor img = read_png(input);
    if (img.dim(0) % model->config().downsample || img.dim(1) % model->config().downsample)
        throw DataError("modulate: image dims must be divisible by " +
                        std::to_string(model->config().downsample) + " (pad beforehand)");
    infer::ModulationGrid grid = infer::modulation_grid(*model, img, alphas);
    fs::create_directories(out_dir);
    write_png((fs::path(out_dir) / "modulation_sheet.png").string(), grid.sheet);
    write_text(fs::path(out_dir) / "modulation_metrics.json", grid.metrics_json);
    std::cout << grid.metrics_json;
    return 0;
}

int cmd_ablate(const TrainFlags& flags, const std::string& manifest_path,
               const std::string& out_dir, const std::string& regimes_csv, int ladder_steps,
               int ladder_size, int ladder_scenes) {
    train::AblationOptions opt;
    opt.base = flags.resolve();
    opt.regimes.clear();
    for (const std::string& r : split_list(regimes_csv))
        opt.regimes.push_back(train::regime_from_string(r));
    Manifest manifest = load_validated_manifest(manifest_path);
    opt.ladder_steps = ladder_steps;
    opt.ladder_size = ladder_size;
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "config_effective.txt", kv_to_text(opt.base.to_kv()));
    std::ofstream log(fs::path(out_dir) / "ablate_log.jsonl", std::ios::binary);
    train::AblationReport report = train::run_ablation(manifest, opt, out_dir, &log);
    std::cout << report.json;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"all-in-one adverse weather restoration toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a paired degraded corpus + manifest");
    std::string sy_clean, sy_out = "corpus", sy_kinds = "rain_streak,haze,snow,raindrop";
    int sy_per_kind = 4, sy_make_clean = 0, sy_clean_size = 64;
    double sy_lo = 0.25, sy_hi = 0.9;
    uint64_t sy_seed = 0;
    synth_cmd->add_option("--clean-dir", sy_clean, "directory of clean .png images")->required();
    synth_cmd->add_option("--out", sy_out, "output corpus directory");
    synth_cmd->add_option("--kinds", sy_kinds, "comma list of rain_streak|haze|snow|raindrop");
    synth_cmd->add_option("--per-kind", sy_per_kind, "degraded images per kind");
    synth_cmd->add_option("--severity-min", sy_lo, "severity sampler lower bound");
    synth_cmd->add_option("--severity-max", sy_hi, "severity sampler upper bound");
    synth_cmd->add_option("--seed", sy_seed, "corpus seed");
    synth_cmd->add_option("--make-clean", sy_make_clean,
                          "first synthesize N procedural clean scenes into --clean-dir");
    synth_cmd->add_option("--clean-size", sy_clean_size, "side length for --make-clean scenes");

    // shared train/ablate flags
    auto add_train_flags = [](CLI::App* cmd, TrainFlags& f) {
        cmd->add_option("--config", f.layers.config_path, "key=value config file");
        cmd->add_option("--set", f.layers.sets, "override a config key, e.g. --set lr=2e-4")
            ->take_all();
        cmd->add_option("--seed", f.seed, "training seed")->each([&f](const std::string&) {
            f.has_seed = true;
        });
        cmd->add_option("--regime", f.regime, "severity loss: none|mrl|mqrl|direct");
    };

    // train
    auto* train_cmd = app.add_subcommand("train", "two-stage training run");
    TrainFlags tr_flags;
    std::string tr_manifest, tr_out = "run", tr_resume;
    int tr_stage = 0;
    train_cmd->add_option("--manifest", tr_manifest, "corpus manifest.csv")->required();
    train_cmd->add_option("--out", tr_out, "output directory");
    train_cmd->add_option("--resume", tr_resume, "checkpoint to resume from");
    train_cmd->add_option("--stage", tr_stage, "1, 2, or 0 for both (default)");
    add_train_flags(train_cmd, tr_flags);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM report before and after restoration");
    std::string ev_ckpt, ev_manifest, ev_out;
    eval_cmd->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    eval_cmd->add_option("--manifest", ev_manifest, "corpus manifest.csv")->required();
    eval_cmd->add_option("--out", ev_out, "directory for eval_report.json (optional)");

    // restore
    auto* restore_cmd = app.add_subcommand("restore", "restore one image or a directory");
    std::string rs_ckpt, rs_input, rs_out = "restored";
    int rs_iters = 1;
    restore_cmd->add_option("--checkpoint", rs_ckpt, "model checkpoint")->required();
    restore_cmd->add_option("--input", rs_input, "png file or directory")->required();
    restore_cmd->add_option("--out", rs_out, "output directory");
    restore_cmd->add_option("--iters", rs_iters, "progressive restoration passes")
        ->check(CLI::PositiveNumber);

    // modulate
    auto* mod_cmd = app.add_subcommand("modulate", "restoration-level contact sheet");
    std::string md_ckpt, md_input, md_out = "modulated", md_alphas = "-0.5,0,0.5,1";
    mod_cmd->add_option("--checkpoint", md_ckpt, "model checkpoint")->required();
    mod_cmd->add_option("--input", md_input, "png file")->required();
    mod_cmd->add_option("--out", md_out, "output directory");
    mod_cmd->add_option("--alphas", md_alphas, "comma list of modulation strengths");

    // ablate
    auto* ab_cmd = app.add_subcommand("ablate", "compare severity-loss regimes");
    TrainFlags ab_flags;
    std::string ab_manifest, ab_out = "ablation", ab_regimes = "direct,mrl,mqrl";
    int ab_ladder_steps = 9, ab_ladder_size = 64, ab_ladder_scenes = 3;
    ab_cmd->add_option("--manifest", ab_manifest, "corpus manifest.csv")->required();
    ab_cmd->add_option("--out", ab_out, "output directory");
    ab_cmd->add_option("--regimes", ab_regimes, "comma list of none|mrl|mqrl|direct");
    ab_cmd->add_option("--ladder-steps", ab_ladder_steps, "severity ladder resolution");
    ab_cmd->add_option("--ladder-size", ab_ladder_size, "ladder image side");
    ab_cmd->add_option("--ladder-scenes", ab_ladder_scenes, "ladders per kind, averaged");
    add_train_flags(ab_cmd, ab_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // --help exits 0; anything else is a usage error
    }

    try {
        if (synth_cmd->parsed())
            return cmd_synth(sy_clean, sy_out, sy_kinds, sy_per_kind, sy_lo, sy_hi, sy_seed,
                             sy_make_clean, sy_clean_size);
        if (train_cmd->parsed()) return cmd_train(tr_flags, tr_manifest, tr_out, tr_resume, tr_stage);
        if (eval_cmd->parsed()) return cmd_eval(ev_ckpt, ev_manifest, ev_out);
        if (restore_cmd->parsed()) return cmd_restore(rs_ckpt, rs_input, rs_out, rs_iters);
        if (mod_cmd->parsed()) return cmd_modulate(md_ckpt, md_input, md_out, md_alphas);
        if (ab_cmd->parsed())
            return cmd_ablate(ab_flags, ab_manifest, ab_out, ab_regimes, ab_ladder_steps,
                              ab_ladder_size, ab_ladder_scenes);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
