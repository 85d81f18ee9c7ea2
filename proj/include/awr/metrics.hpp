#pragma once

#include <functional>
#include <string>

#include "awr/data.hpp"
#include "awr/tensor.hpp"

namespace awr::metrics {

inline constexpr double kPsnrCap = 50.0;  // dB; also the quality normalization ceiling

// 10*log10(1/MSE) over all values, clamped to [0, cap]; identical images
// return the cap.
double psnr(const Tensor& a, const Tensor& b, double cap = kPsnrCap);

// Mean local SSIM: 11x11 Gaussian window (sigma 1.5), valid padding,
// C1=0.01^2, C2=0.03^2 on unit range, per channel then averaged.
double ssim(const Tensor& a, const Tensor& b);

// Ground-truth quality in [0,1]: clip(psnr, 0, cap) / cap.
double gt_quality(const Tensor& degraded, const Tensor& clean, double cap = kPsnrCap);

// The separable window weights used by ssim(); exposed so the loss path
// reuses the identical kernel.
Tensor ssim_window(int size = 11, double sigma = 1.5);

struct EvalReport {
    // JSON text with fixed key ordering; identical inputs yield identical bytes.
    std::string json;
    double mean_psnr_before = 0.0;
    double mean_psnr_after = 0.0;
    double mean_ssim_before = 0.0;
    double mean_ssim_after = 0.0;
};

// Per-kind and overall mean PSNR/SSIM, before and after restoration.
// `restore` maps a degraded image to its restored version.
EvalReport evaluate(const Manifest& manifest,
                    const std::function<Tensor(const Tensor&)>& restore);

}  // namespace awr::metrics
