#include "awr/inference.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "awr/metrics.hpp"

namespace awr::infer {

std::vector<Tensor> iterative_restore(const Model& model, const Tensor& image, int n) {
    if (n < 1) throw ConfigError("iterative_restore: n must be >= 1");
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(n));
    Tensor current = image;
    for (int i = 0; i < n; ++i) {
        current = model.restore_image(current);
        out.push_back(current);
    }
    return out;
}

Direction find_direction(const Model& model, const Tensor& image) {
    Direction d;
    auto [tm, sev] = model.encode_image(image);
    d.type_map = std::move(tm);
    d.severity = std::move(sev);
    Tensor restored = model.restore_image_with(image, d.type_map, d.severity);
    auto [tm2, sev2] = model.encode_image(restored);
    d.severity_restored = std::move(sev2);
    return d;
}

Tensor modulate(const Model& model, const Tensor& image, double alpha) {
    Direction d = find_direction(model, image);
    if (alpha == 0.0) return model.restore_image_with(image, d.type_map, d.severity);
    if (alpha == 1.0) return model.restore_image_with(image, d.type_map, d.severity_restored);
    Tensor blended(d.severity.dims());
    for (int64_t i = 0; i < blended.size(); ++i)
        blended[i] = d.severity[i] + alpha * (d.severity_restored[i] - d.severity[i]);
    return model.restore_image_with(image, d.type_map, blended);
}

ModulationGrid modulation_grid(const Model& model, const Tensor& image,
                               const std::vector<double>& alphas) {
    if (alphas.empty()) throw ConfigError("modulation_grid: alpha list is empty");
    int h = image.dim(0), w = image.dim(1);
    ModulationGrid grid;
    grid.sheet = Tensor({h, w * static_cast<int>(alphas.size()), 3});

    Direction d = find_direction(model, image);
    nlohmann::ordered_json records = nlohmann::ordered_json::array();
    for (size_t ai = 0; ai < alphas.size(); ++ai) {
        double alpha = alphas[ai];
        Tensor panel;
        if (alpha == 0.0) {
            panel = model.restore_image_with(image, d.type_map, d.severity);
        } else if (alpha == 1.0) {
            panel = model.restore_image_with(image, d.type_map, d.severity_restored);
        } else {
            Tensor blended(d.severity.dims());
            for (int64_t i = 0; i < blended.size(); ++i)
                blended[i] = d.severity[i] + alpha * (d.severity_restored[i] - d.severity[i]);
            panel = model.restore_image_with(image, d.type_map, blended);
        }
        double residual = 0.0;
        for (int64_t i = 0; i < panel.size(); ++i) {
            double diff = panel[i] - image[i];
            residual += diff * diff;
        }
        residual = std::sqrt(residual);
        auto [tm_p, sev_p] = model.encode_image(panel);
        (void)tm_p;
        nlohmann::ordered_json rec;
        rec["alpha"] = alpha;
        rec["residual_l2"] = residual;
        rec["psnr_vs_input"] = metrics::psnr(panel, image);
        rec["predicted_iqa"] = model.predict_iqa_value(sev_p);
        records.push_back(rec);

        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c)
                    grid.sheet.at(y, static_cast<int>(ai) * w + x, c) = panel.at(y, x, c);
    }
    nlohmann::ordered_json j;
    j["alphas"] = records;
    grid.metrics_json = j.dump(2) + "\n";
    return grid;
}

Tensor restore_any(const Model& model, const Tensor& image) {
    int s = model.config().downsample;
    int h = image.dim(0), w = image.dim(1);
    int ph = (h + s - 1) / s * s;
    int pw = (w + s - 1) / s * s;
    if (ph == h && pw == w) return model.restore_image(image);
    Tensor padded({ph, pw, 3});
    for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x)
            for (int c = 0; c < 3; ++c)
                padded.at(y, x, c) = image.at(std::min(y, h - 1), std::min(x, w - 1), c);
    Tensor restored = model.restore_image(padded);
    Tensor out({h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = restored.at(y, x, c);
    return out;
}

}  // namespace awr::infer
