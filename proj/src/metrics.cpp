#include "awr/metrics.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "awr/png_io.hpp"

namespace awr::metrics {

double psnr(const Tensor& a, const Tensor& b, double cap) {
    require_same_shape(a, b, "psnr");
    if (a.size() == 0) throw ShapeError("psnr: empty tensors");
    double mse = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse <= 0.0) return cap;
    double v = 10.0 * std::log10(1.0 / mse);
    return v < 0.0 ? 0.0 : (v > cap ? cap : v);
}

Tensor ssim_window(int size, double sigma) {
    Tensor k({size, size});
    double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            double v = std::exp(-((y - c) * (y - c) + (x - c) * (x - c)) / (2.0 * sigma * sigma));
            k.at(y, x) = v;
            sum += v;
        }
    for (int64_t i = 0; i < k.size(); ++i) k[i] /= sum;
    return k;
}

namespace {

// Valid-padded Gaussian-weighted local moments on one channel.
void local_moments(const Tensor& a, const Tensor& b, const Tensor& win, int ch,
                   int oy, int ox, double& mu_a, double& mu_b, double& saa,
                   double& sbb, double& sab) {
    int k = win.dim(0);
    mu_a = mu_b = saa = sbb = sab = 0.0;
    for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x) {
            double w = win.at(y, x);
            double av = a.at(oy + y, ox + x, ch);
            double bv = b.at(oy + y, ox + x, ch);
            mu_a += w * av;
            mu_b += w * bv;
            saa += w * av * av;
            sbb += w * bv * bv;
            sab += w * av * bv;
        }
    saa -= mu_a * mu_a;
    sbb -= mu_b * mu_b;
    sab -= mu_a * mu_b;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ssim");
    if (a.rank() != 3) throw ShapeError("ssim: (h,w,c) tensors required");
    const Tensor win = ssim_window();
    int k = win.dim(0);
    int h = a.dim(0), w = a.dim(1), c = a.dim(2);
    int oh = h - k + 1, ow = w - k + 1;
    if (oh <= 0 || ow <= 0) throw ShapeError("ssim: image smaller than 11x11 window");
    constexpr double C1 = 0.01 * 0.01;
    constexpr double C2 = 0.03 * 0.03;
    double total = 0.0;
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double mu_a, mu_b, saa, sbb, sab;
                local_moments(a, b, win, ch, oy, ox, mu_a, mu_b, saa, sbb, sab);
                double num = (2.0 * mu_a * mu_b + C1) * (2.0 * sab + C2);
                double den = (mu_a * mu_a + mu_b * mu_b + C1) * (saa + sbb + C2);
                total += num / den;
            }
    return total / (static_cast<double>(oh) * ow * c);
}

double gt_quality(const Tensor& degraded, const Tensor& clean, double cap) {
    double p = psnr(degraded, clean, cap);
    return p / cap;
}

EvalReport evaluate(const Manifest& manifest, const std::function<Tensor(const Tensor&)>& restore) {
    if (manifest.rows.empty()) throw DataError("evaluate: empty manifest");
    using json = nlohmann::ordered_json;

    struct Acc {
        double pb = 0, pa = 0, sb = 0, sa = 0;
        int n = 0;
    };
    std::map<std::string, Acc> per_kind;
    Acc overall;

    for (size_t i = 0; i < manifest.rows.size(); ++i) {
        Tensor degraded = read_png(manifest.degraded_path(static_cast<int>(i)));
        Tensor clean = read_png(manifest.clean_path(static_cast<int>(i)));
        require_same_shape(degraded, clean, "evaluate");
        Tensor restored = restore(degraded);
        double pb = psnr(degraded, clean);
        double pa = psnr(restored, clean);
        double sb = ssim(degraded, clean);
        double sa = ssim(restored, clean);
        for (Acc* acc : {&per_kind[manifest.rows[i].kind], &overall}) {
            acc->pb += pb;
            acc->pa += pa;
            acc->sb += sb;
            acc->sa += sa;
            acc->n += 1;
        }
    }

    auto block = [](const Acc& a) {
        json j;
        j["count"] = a.n;
        j["psnr_before"] = a.pb / a.n;
        j["psnr_after"] = a.pa / a.n;
        j["ssim_before"] = a.sb / a.n;
        j["ssim_after"] = a.sa / a.n;
        return j;
    };

    json j;
    j["overall"] = block(overall);
    json kinds_j;
    for (const std::string& k : manifest.kinds()) kinds_j[k] = block(per_kind[k]);
    j["per_kind"] = kinds_j;

    EvalReport r;
    r.json = j.dump(2) + "\n";
    r.mean_psnr_before = overall.pb / overall.n;
    r.mean_psnr_after = overall.pa / overall.n;
    r.mean_ssim_before = overall.sb / overall.n;
    r.mean_ssim_after = overall.sa / overall.n;
    return r;
}

}  // namespace awr::metrics
