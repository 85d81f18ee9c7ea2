#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "awr/graph.hpp"
#include "awr/rng.hpp"
#include "awr/tensor.hpp"

namespace awr {

// Pixel-wise then channel-wise affine transform on top of per-channel
// instance normalization:
//   out = global_scale * (local_scale * (F - mu) / sigma + local_shift) + global_shift
// local params are (h, w) maps broadcast across channels, global params are
// length-c vectors broadcast across pixels; sigma = sqrt(var + eps) with
// population variance over the spatial dims.
struct AffineParams {
    nn::Var local_scale;
    nn::Var local_shift;
    nn::Var global_scale;
    nn::Var global_shift;
};

nn::Var local_global_adain(nn::Tape& t, nn::Var feat, const AffineParams& p, double eps = 1e-5);

struct ModelConfig {
    int downsample = 4;  // S: 2, 4 or 8
    int feat_dim = 128;  // D
    int blocks = 6;      // K conditioned residual blocks
    int heads = 4;       // attention heads
    int trunk_w0 = 32, trunk_w1 = 64, trunk_w2 = 128;  // encoder trunk widths
    int extract_w = 64;       // first extraction conv width
    int recon_w = 64;         // first reconstruction conv width
    int affine_conv_w = 16;   // local affine head hidden channels
    int affine_mlp_w = 32;    // global affine head hidden units
    int iqa_hidden = 64;      // quality regressor hidden units
    double norm_eps = 1e-5;
    uint64_t init_seed = 1;

    void validate() const;

    std::string to_kv() const;
    static ModelConfig from_kv(const std::unordered_map<std::string, std::string>& kv);
};

// Named parameter tensors plus their optimizer moments. Order of
// registration is the serialization order.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor m, v;  // AdamW moments, same shape
    };

    Tensor& add(const std::string& name, Tensor init);
    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    int64_t scalar_count() const;
    int64_t scalar_count_prefix(const std::string& prefix) const;

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

// Weather-conditioned restoration model: a degradation encoder producing a
// spatial type map and a pooled severity vector, and a restorer of
// stride-2 feature extraction, conditioned residual blocks, one
// type-guided cross-attention block and upsampling reconstruction.
class Model {
public:
    explicit Model(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Per-tape parameter binding so one graph shares a single leaf per
    // parameter and gradients accumulate across the batch.
    struct Ctx {
        nn::Tape* tape = nullptr;
        std::unordered_map<std::string, nn::Var> bound;
    };
    Ctx bind(nn::Tape& t) const { return Ctx{&t, {}}; }
    nn::Var p(Ctx& c, const std::string& name) const;

    // type_map: (h/S, w/S); severity: (D)
    std::pair<nn::Var, nn::Var> encode(Ctx& c, nn::Var image) const;
    nn::Var predict_iqa(Ctx& c, nn::Var severity) const;  // scalar in [0,1]
    nn::Var extract_features(Ctx& c, nn::Var image) const;
    AffineParams make_affines(Ctx& c, nn::Var type_map, nn::Var severity, int block) const;
    nn::Var residual_block(Ctx& c, nn::Var feat, nn::Var type_map, nn::Var severity, int block) const;
    nn::Var cross_attention(Ctx& c, nn::Var feat, nn::Var type_map) const;
    nn::Var reconstruct(Ctx& c, nn::Var feat) const;
    nn::Var restore_with(Ctx& c, nn::Var image, nn::Var type_map, nn::Var severity) const;
    nn::Var restore(Ctx& c, nn::Var image) const;

    // No-grad conveniences over plain tensors.
    std::pair<Tensor, Tensor> encode_image(const Tensor& image) const;
    double predict_iqa_value(const Tensor& severity) const;
    Tensor restore_image(const Tensor& image) const;
    Tensor restore_image_with(const Tensor& image, const Tensor& type_map, const Tensor& severity) const;

    int64_t parameter_count() const { return params_.scalar_count(); }
    int64_t encoder_parameter_count() const { return params_.scalar_count_prefix("enc."); }
    std::string summary() const;

private:
    void build_params();
    nn::Var conv(Ctx& c, nn::Var x, const std::string& name, int stride, int pad) const;
    nn::Var fc(Ctx& c, nn::Var x, const std::string& name) const;

    ModelConfig cfg_;
    ParamStore params_;
    int s2_stages_ = 2;  // log2(downsample)
};

}  // namespace awr
