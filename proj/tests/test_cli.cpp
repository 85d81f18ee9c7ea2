#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const char* kCli = AWR_CLI_PATH;

int run(const std::string& args) {
    std::string cmd = std::string(kCli) + " " + args + " >/dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct Workspace {
    fs::path root;
    Workspace() {
        root = fs::temp_directory_path() / "awr_cli_test";
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Workspace() { fs::remove_all(root); }
    std::string p(const std::string& rel) const { return (root / rel).string(); }
};

}  // namespace

TEST_CASE("bad arguments exit with code 2") {
    CHECK(run("definitely-not-a-subcommand") == 2);
    CHECK(run("synth") == 2);                           // missing required --clean-dir
    CHECK(run("train --manifest x.csv --regime bogus --out /tmp/awr_cli_x") == 2);
    CHECK(run("") == 2);                                // subcommand required
}

TEST_CASE("missing data exits with code 3") {
    Workspace ws;
    CHECK(run("synth --clean-dir " + ws.p("nonexistent") + " --out " + ws.p("out")) == 3);
    CHECK(run("train --manifest " + ws.p("missing.csv") + " --out " + ws.p("run")) == 3);
    CHECK(run("eval --checkpoint " + ws.p("missing.ckpt") + " --manifest " + ws.p("missing.csv")) == 3);
    // malformed manifest
    std::ofstream f(ws.root / "bad.csv");
    f << "totally,wrong,header\n";
    f.close();
    CHECK(run("train --manifest " + ws.p("bad.csv") + " --out " + ws.p("run")) == 3);
}

TEST_CASE("full pipeline through the binary") {
    Workspace ws;
    REQUIRE(run("synth --clean-dir " + ws.p("clean") + " --make-clean 2 --clean-size 48 --out " +
                ws.p("corpus") + " --kinds haze,snow --per-kind 2 --seed 4") == 0);
    CHECK(fs::exists(ws.root / "corpus" / "manifest.csv"));
    CHECK(fs::exists(ws.root / "corpus" / "config_effective.txt"));

    std::ofstream cfg(ws.root / "cfg.txt");
    cfg << "crop_size=32\nbatch_size=2\nstage1_epochs=1\nstage2_epochs=1\nsteps_per_epoch=3\n"
           "lr=1e-3\nseed=9\nfeat_dim=16\nblocks=1\nheads=4\ntrunk_w0=8\ntrunk_w1=8\n"
           "trunk_w2=16\nextract_w=8\nrecon_w=8\naffine_conv_w=4\naffine_mlp_w=8\niqa_hidden=8\n";
    cfg.close();

    REQUIRE(run("train --manifest " + ws.p("corpus/manifest.csv") + " --out " + ws.p("runA") +
                " --config " + ws.p("cfg.txt")) == 0);
    CHECK(fs::exists(ws.root / "runA" / "model.ckpt"));
    CHECK(fs::exists(ws.root / "runA" / "stage1.ckpt"));
    CHECK(fs::exists(ws.root / "runA" / "train_log.jsonl"));
    // the effective config records the file values
    std::string eff = slurp(ws.root / "runA" / "config_effective.txt");
    CHECK(eff.find("crop_size=32") != std::string::npos);
    CHECK(eff.find("seed=9") != std::string::npos);

    SUBCASE("flag overrides beat the config file and land in the echo") {
        REQUIRE(run("train --manifest " + ws.p("corpus/manifest.csv") + " --out " + ws.p("runC") +
                    " --config " + ws.p("cfg.txt") + " --set steps_per_epoch=2 --seed 11") == 0);
        std::string eff2 = slurp(ws.root / "runC" / "config_effective.txt");
        CHECK(eff2.find("steps_per_epoch=2") != std::string::npos);
        CHECK(eff2.find("seed=11") != std::string::npos);
    }

    SUBCASE("fixed-seed rerun reproduces the training log byte for byte") {
        REQUIRE(run("train --manifest " + ws.p("corpus/manifest.csv") + " --out " + ws.p("runB") +
                    " --config " + ws.p("cfg.txt")) == 0);
        std::string logA = slurp(ws.root / "runA" / "train_log.jsonl");
        std::string logB = slurp(ws.root / "runB" / "train_log.jsonl");
        CHECK(!logA.empty());
        CHECK(logA == logB);
    }

    SUBCASE("eval, restore and modulate consume the checkpoint") {
        CHECK(run("eval --checkpoint " + ws.p("runA/model.ckpt") + " --manifest " +
                  ws.p("corpus/manifest.csv") + " --out " + ws.p("evalout")) == 0);
        CHECK(fs::exists(ws.root / "evalout" / "eval_report.json"));

        CHECK(run("restore --checkpoint " + ws.p("runA/model.ckpt") + " --input " +
                  ws.p("corpus/degraded") + " --out " + ws.p("restored") + " --iters 2") == 0);
        CHECK(fs::exists(ws.root / "restored" / "haze_0_scene0_iter2.png"));

        CHECK(run("modulate --checkpoint " + ws.p("runA/model.ckpt") + " --input " +
                  ws.p("corpus/degraded/haze_0_scene0.png") + " --out " + ws.p("mod") +
                  " --alphas 0,1") == 0);
        CHECK(fs::exists(ws.root / "mod" / "modulation_sheet.png"));
        CHECK(fs::exists(ws.root / "mod" / "modulation_metrics.json"));
    }

    SUBCASE("version-mismatched checkpoint is a data error") {
        // corrupt the magic
        std::string bytes = slurp(ws.root / "runA" / "model.ckpt");
        bytes[7] = '9';
        std::ofstream bad(ws.root / "bad.ckpt", std::ios::binary);
        bad << bytes;
        bad.close();
        CHECK(run("eval --checkpoint " + ws.p("bad.ckpt") + " --manifest " +
                  ws.p("corpus/manifest.csv")) == 3);
    }
}

TEST_CASE("ablate produces per-regime checkpoints and a report") {
    Workspace ws;
    REQUIRE(run("synth --clean-dir " + ws.p("clean") + " --make-clean 2 --clean-size 48 --out " +
                ws.p("corpus") + " --kinds haze,rain_streak --per-kind 2 --seed 5") == 0);
    std::ofstream cfg(ws.root / "cfg.txt");
    cfg << "crop_size=32\nbatch_size=2\nstage1_epochs=1\nstage2_epochs=0\nsteps_per_epoch=3\n"
           "lr=1e-3\nseed=9\nfeat_dim=16\nblocks=1\nheads=4\ntrunk_w0=8\ntrunk_w1=8\n"
           "trunk_w2=16\nextract_w=8\nrecon_w=8\naffine_conv_w=4\naffine_mlp_w=8\niqa_hidden=8\n";
    cfg.close();
    REQUIRE(run("ablate --manifest " + ws.p("corpus/manifest.csv") + " --out " + ws.p("abl") +
                " --config " + ws.p("cfg.txt") + " --regimes none,mrl,mqrl,direct --ladder-size 32") == 0);
    for (const char* r : {"none", "mrl", "mqrl", "direct"})
        CHECK(fs::exists(ws.root / "abl" / (std::string("ablate_") + r + ".ckpt")));
    CHECK(fs::exists(ws.root / "abl" / "ablation_report.json"));
    // the four checkpoints differ
    std::string a = slurp(ws.root / "abl" / "ablate_none.ckpt");
    std::string b = slurp(ws.root / "abl" / "ablate_mrl.ckpt");
    std::string c = slurp(ws.root / "abl" / "ablate_mqrl.ckpt");
    std::string d = slurp(ws.root / "abl" / "ablate_direct.ckpt");
    CHECK(a != b);
    CHECK(b != c);
    CHECK(c != d);
    CHECK(a != c);

    SUBCASE("rerun reproduces the report byte for byte") {
        std::string r1 = slurp(ws.root / "abl" / "ablation_report.json");
        REQUIRE(run("ablate --manifest " + ws.p("corpus/manifest.csv") + " --out " + ws.p("abl2") +
                    " --config " + ws.p("cfg.txt") +
                    " --regimes none,mrl,mqrl,direct --ladder-size 32") == 0);
        CHECK(r1 == slurp(ws.root / "abl2" / "ablation_report.json"));
    }
}
