#pragma once

#include <string>
#include <vector>

#include "awr/model.hpp"
#include "awr/tensor.hpp"

namespace awr::infer {

// restore applied n times; element k is the (k+1)-th pass. Stacked
// degradations come out by setting n to the number of degradations.
std::vector<Tensor> iterative_restore(const Model& model, const Tensor& image, int n);

struct Direction {
    Tensor severity;           // of the input image
    Tensor severity_restored;  // of restore(input): the lower-restoration-level end
    Tensor type_map;
};

// Encode, restore, re-encode: the vector severity_restored - severity is
// the latent direction along which restoration strength moves.
Direction find_direction(const Model& model, const Tensor& image);

// Restoration level modulation: blends severity along the found direction
// (alpha 0 = plain restore, 1 = the re-encoded severity, outside [0,1]
// extrapolates) and restores with the type map held fixed.
Tensor modulate(const Model& model, const Tensor& image, double alpha);

struct ModulationGrid {
    Tensor sheet;              // panels left to right, one per alpha
    std::string metrics_json;  // fixed key order, one record per alpha
};

ModulationGrid modulation_grid(const Model& model, const Tensor& image,
                               const std::vector<double>& alphas);

// Edge-replicate pad to a multiple of the model downsample, restore, crop
// back; accepts any image size.
Tensor restore_any(const Model& model, const Tensor& image);

}  // namespace awr::infer
