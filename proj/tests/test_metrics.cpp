#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "awr/metrics.hpp"
#include "awr/png_io.hpp"
#include "awr/rng.hpp"
#include "awr/synth.hpp"

using namespace awr;
namespace fs = std::filesystem;

namespace {

Tensor random_image(int h, int w, uint64_t seed) {
    RandomStream rs = RandomStream::keyed(seed, "metrics-img");
    Tensor img({h, w, 3});
    for (int64_t i = 0; i < img.size(); ++i) img[i] = rs.uniform();
    return img;
}

// Independent SSIM oracle: builds its own Gaussian window and walks every
// valid window position with plain scalar loops.
double ssim_oracle(const Tensor& a, const Tensor& b) {
    const int n = 11;
    const double sigma = 1.5;
    double win[11][11];
    double norm = 0.0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double dy = y - 5.0, dx = x - 5.0;
            win[y][x] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            norm += win[y][x];
        }
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) win[y][x] /= norm;

    const double c1 = 1e-4, c2 = 9e-4;
    int h = a.dim(0), w = a.dim(1), ch = a.dim(2);
    double total = 0.0;
    int count = 0;
    for (int c = 0; c < ch; ++c)
        for (int oy = 0; oy + n <= h; ++oy)
            for (int ox = 0; ox + n <= w; ++ox) {
                double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
                for (int y = 0; y < n; ++y)
                    for (int x = 0; x < n; ++x) {
                        ma += win[y][x] * a.at(oy + y, ox + x, c);
                        mb += win[y][x] * b.at(oy + y, ox + x, c);
                    }
                for (int y = 0; y < n; ++y)
                    for (int x = 0; x < n; ++x) {
                        double da = a.at(oy + y, ox + x, c) - ma;
                        double db = b.at(oy + y, ox + x, c) - mb;
                        va += win[y][x] * da * da;
                        vb += win[y][x] * db * db;
                        cov += win[y][x] * da * db;
                    }
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
    return total / count;
}

}  // namespace

TEST_CASE("psnr basics") {
    SUBCASE("mse 0.01 gives 20 dB") {
        Tensor a = Tensor::zeros({4, 4, 3});
        Tensor b = Tensor::full({4, 4, 3}, 0.1);
        CHECK(metrics::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
    }
    SUBCASE("identical images return the cap") {
        Tensor a = random_image(8, 8, 1);
        CHECK(metrics::psnr(a, a) == metrics::kPsnrCap);
    }
    SUBCASE("matches scalar mse oracle on random pairs") {
        Tensor a = random_image(9, 7, 2);
        Tensor b = random_image(9, 7, 3);
        double mse = 0.0;
        for (int64_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
        mse /= static_cast<double>(a.size());
        CHECK(metrics::psnr(a, b) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-12));
    }
    SUBCASE("symmetric") {
        Tensor a = random_image(8, 8, 4);
        Tensor b = random_image(8, 8, 5);
        CHECK(metrics::psnr(a, b) == metrics::psnr(b, a));
    }
    SUBCASE("shape mismatch throws") {
        CHECK_THROWS_AS(metrics::psnr(Tensor::zeros({4, 4, 3}), Tensor::zeros({4, 5, 3})), ShapeError);
    }
}

TEST_CASE("ssim basics") {
    SUBCASE("identical images give 1") {
        Tensor a = random_image(16, 16, 6);
        CHECK(metrics::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("constant a vs 1-a matches the closed form") {
        double v = 0.3;
        Tensor a = Tensor::full({16, 16, 3}, v);
        Tensor b = Tensor::full({16, 16, 3}, 1.0 - v);
        // zero variance: ssim = (2ab + C1) / (a^2 + b^2 + C1)
        double expect = (2 * v * (1 - v) + 1e-4) / (v * v + (1 - v) * (1 - v) + 1e-4);
        CHECK(metrics::ssim(a, b) == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("symmetric") {
        Tensor a = random_image(14, 18, 7);
        Tensor b = random_image(14, 18, 8);
        CHECK(metrics::ssim(a, b) == doctest::Approx(metrics::ssim(b, a)).epsilon(1e-12));
    }
    SUBCASE("matches the independent windowed oracle") {
        Tensor a = random_image(15, 13, 9);
        Tensor b = random_image(15, 13, 10);
        CHECK(metrics::ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-9));
        // structured pair too
        Tensor scene = synth::make_scene(2, 16, 16);
        synth::DegradationSpec s{synth::Kind::haze, 0.6, 1};
        Tensor hazy = synth::apply_haze(scene, s);
        CHECK(metrics::ssim(hazy, scene) == doctest::Approx(ssim_oracle(hazy, scene)).epsilon(1e-9));
    }
    SUBCASE("too-small image throws") {
        CHECK_THROWS_AS(metrics::ssim(Tensor::zeros({8, 8, 3}), Tensor::zeros({8, 8, 3})), ShapeError);
    }
}

TEST_CASE("gt_quality normalization") {
    SUBCASE("psnr 25 maps to 0.5") {
        double target = std::pow(10.0, -1.25);  // per-pixel diff for MSE 10^-2.5
        Tensor a = Tensor::zeros({8, 8, 3});
        Tensor b = Tensor::full({8, 8, 3}, target);
        CHECK(metrics::psnr(a, b) == doctest::Approx(25.0).epsilon(1e-9));
        CHECK(metrics::gt_quality(a, b) == doctest::Approx(0.5).epsilon(1e-9));
    }
    SUBCASE("identical images give 1") {
        Tensor a = random_image(8, 8, 11);
        CHECK(metrics::gt_quality(a, a) == 1.0);
    }
    SUBCASE("monotone non-increasing along a haze severity ladder") {
        Tensor scene = synth::make_scene(5, 32, 32);
        double prev = 2.0;
        for (int s = 1; s <= 9; ++s) {
            synth::DegradationSpec sp{synth::Kind::haze, s / 10.0, 1};
            double q = metrics::gt_quality(synth::apply_haze(scene, sp), scene);
            CHECK(q <= prev + 1e-12);
            CHECK(q >= 0.0);
            CHECK(q <= 1.0);
            prev = q;
        }
    }
}

TEST_CASE("evaluate report") {
    fs::path tmp = fs::temp_directory_path() / "awr_eval_test";
    fs::remove_all(tmp);
    fs::create_directories(tmp / "clean");
    for (int i = 0; i < 2; ++i)
        write_png((tmp / "clean" / ("s" + std::to_string(i) + ".png")).string(),
                  synth::make_scene(static_cast<uint64_t>(i), 32, 32));
    synth::CorpusOptions opt;
    opt.kinds = {synth::Kind::haze, synth::Kind::snow};
    opt.per_kind = 2;
    opt.seed = 3;
    Manifest m = synth::generate_corpus((tmp / "clean").string(), (tmp / "out").string(), opt);

    SUBCASE("identity model reproduces input scores") {
        auto identity = [](const Tensor& img) { return img; };
        metrics::EvalReport r = metrics::evaluate(m, identity);
        CHECK(r.mean_psnr_after == doctest::Approx(r.mean_psnr_before).epsilon(1e-12));
        CHECK(r.mean_ssim_after == doctest::Approx(r.mean_ssim_before).epsilon(1e-12));
        CHECK(r.json.find("\"overall\"") != std::string::npos);
        CHECK(r.json.find("\"haze\"") != std::string::npos);
        CHECK(r.json.find("\"snow\"") != std::string::npos);
    }
    SUBCASE("empty manifest fails") {
        Manifest empty;
        CHECK_THROWS_AS(metrics::evaluate(empty, [](const Tensor& i) { return i; }), DataError);
    }
    SUBCASE("rerun produces identical report bytes") {
        auto blur = [](const Tensor& img) {
            Tensor out = img;
            for (int64_t i = 0; i < out.size(); ++i) out[i] = 0.9 * out[i] + 0.05;
            return out;
        };
        metrics::EvalReport r1 = metrics::evaluate(m, blur);
        metrics::EvalReport r2 = metrics::evaluate(m, blur);
        CHECK(r1.json == r2.json);
    }
    fs::remove_all(tmp);
}
