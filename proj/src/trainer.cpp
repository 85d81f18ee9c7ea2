#include "awr/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "awr/metrics.hpp"
#include "awr/png_io.hpp"

namespace awr::train {

std::string to_string(SeverityRegime r) {
    switch (r) {
        case SeverityRegime::mqrl: return "mqrl";
        case SeverityRegime::mrl: return "mrl";
        case SeverityRegime::direct: return "direct";
        case SeverityRegime::none: return "none";
    }
    throw ConfigError("bad regime");
}

SeverityRegime regime_from_string(const std::string& s) {
    if (s == "mqrl") return SeverityRegime::mqrl;
    if (s == "mrl") return SeverityRegime::mrl;
    if (s == "direct") return SeverityRegime::direct;
    if (s == "none") return SeverityRegime::none;
    throw ConfigError("unknown severity regime: '" + s + "' (expected none|mrl|mqrl|direct)");
}

void TrainConfig::validate() const {
    if (crop_size <= 0 || batch_size <= 0 || stage1_epochs < 0 || stage2_epochs < 0)
        throw ConfigError("train: sizes must be positive");
    if (crop_size % model.downsample != 0)
        throw ConfigError("train: crop_size must be divisible by model downsample");
    if (lr <= 0.0) throw ConfigError("train: lr must be positive");
    if (decay_start_epoch < 0) throw ConfigError("train: decay_start_epoch must be >= 0");
    if (margin < 0.0) throw ConfigError("train: margin must be nonnegative");
    if (tau <= 0.0) throw ConfigError("train: tau must be positive");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be nonnegative");
    weights.validate();
    model.validate();
}

KvMap TrainConfig::to_kv() const {
    KvMap kv;
    auto put_d = [&](const char* k, double v) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        kv[k] = buf;
    };
    kv["crop_size"] = std::to_string(crop_size);
    kv["batch_size"] = std::to_string(batch_size);
    kv["stage1_epochs"] = std::to_string(stage1_epochs);
    kv["stage2_epochs"] = std::to_string(stage2_epochs);
    kv["steps_per_epoch"] = std::to_string(steps_per_epoch);
    put_d("lr", lr);
    kv["decay_start_epoch"] = std::to_string(decay_start_epoch);
    put_d("beta1", beta1);
    put_d("beta2", beta2);
    put_d("weight_decay", weight_decay);
    put_d("adam_eps", adam_eps);
    kv["seed"] = std::to_string(seed);
    put_d("lambda_cl", weights.cl);
    put_d("lambda_l1", weights.l1);
    put_d("lambda_ssim", weights.ssim);
    put_d("lambda_perceptual", weights.perceptual);
    put_d("margin", margin);
    put_d("tau", tau);
    kv["regime"] = to_string(regime);
    kv["pyramid_seed"] = std::to_string(pyramid_seed);
    // model dims
    kv["downsample"] = std::to_string(model.downsample);
    kv["feat_dim"] = std::to_string(model.feat_dim);
    kv["blocks"] = std::to_string(model.blocks);
    kv["heads"] = std::to_string(model.heads);
    kv["trunk_w0"] = std::to_string(model.trunk_w0);
    kv["trunk_w1"] = std::to_string(model.trunk_w1);
    kv["trunk_w2"] = std::to_string(model.trunk_w2);
    kv["extract_w"] = std::to_string(model.extract_w);
    kv["recon_w"] = std::to_string(model.recon_w);
    kv["affine_conv_w"] = std::to_string(model.affine_conv_w);
    kv["affine_mlp_w"] = std::to_string(model.affine_mlp_w);
    kv["iqa_hidden"] = std::to_string(model.iqa_hidden);
    kv["init_seed"] = std::to_string(model.init_seed);
    return kv;
}

TrainConfig TrainConfig::from_kv(const KvMap& kv) {
    TrainConfig c;
    c.crop_size = kv_int(kv, "crop_size", c.crop_size);
    c.batch_size = kv_int(kv, "batch_size", c.batch_size);
    c.stage1_epochs = kv_int(kv, "stage1_epochs", c.stage1_epochs);
    c.stage2_epochs = kv_int(kv, "stage2_epochs", c.stage2_epochs);
    c.steps_per_epoch = kv_int(kv, "steps_per_epoch", c.steps_per_epoch);
    c.lr = kv_double(kv, "lr", c.lr);
    c.decay_start_epoch = kv_int(kv, "decay_start_epoch", c.decay_start_epoch);
    c.beta1 = kv_double(kv, "beta1", c.beta1);
    c.beta2 = kv_double(kv, "beta2", c.beta2);
    c.weight_decay = kv_double(kv, "weight_decay", c.weight_decay);
    c.adam_eps = kv_double(kv, "adam_eps", c.adam_eps);
    c.seed = kv_u64(kv, "seed", c.seed);
    c.weights.cl = kv_double(kv, "lambda_cl", c.weights.cl);
    c.weights.l1 = kv_double(kv, "lambda_l1", c.weights.l1);
    c.weights.ssim = kv_double(kv, "lambda_ssim", c.weights.ssim);
    c.weights.perceptual = kv_double(kv, "lambda_perceptual", c.weights.perceptual);
    c.margin = kv_double(kv, "margin", c.margin);
    c.tau = kv_double(kv, "tau", c.tau);
    c.regime = regime_from_string(kv_str(kv, "regime", to_string(c.regime)));
    c.pyramid_seed = kv_u64(kv, "pyramid_seed", c.pyramid_seed);
    c.model.downsample = kv_int(kv, "downsample", c.model.downsample);
    c.model.feat_dim = kv_int(kv, "feat_dim", c.model.feat_dim);
    c.model.blocks = kv_int(kv, "blocks", c.model.blocks);
    c.model.heads = kv_int(kv, "heads", c.model.heads);
    c.model.trunk_w0 = kv_int(kv, "trunk_w0", c.model.trunk_w0);
    c.model.trunk_w1 = kv_int(kv, "trunk_w1", c.model.trunk_w1);
    c.model.trunk_w2 = kv_int(kv, "trunk_w2", c.model.trunk_w2);
    c.model.extract_w = kv_int(kv, "extract_w", c.model.extract_w);
    c.model.recon_w = kv_int(kv, "recon_w", c.model.recon_w);
    c.model.affine_conv_w = kv_int(kv, "affine_conv_w", c.model.affine_conv_w);
    c.model.affine_mlp_w = kv_int(kv, "affine_mlp_w", c.model.affine_mlp_w);
    c.model.iqa_hidden = kv_int(kv, "iqa_hidden", c.model.iqa_hidden);
    c.model.init_seed = kv_u64(kv, "init_seed", c.model.init_seed);
    c.validate();
    return c;
}

double lr_at(int epoch, int stage_epochs, int decay_start, double base_lr) {
    if (epoch < 0) throw ConfigError("lr_at: negative epoch");
    if (epoch <= decay_start || stage_epochs <= decay_start) return base_lr;
    if (epoch >= stage_epochs) return 0.0;
    return base_lr * static_cast<double>(stage_epochs - epoch) /
           static_cast<double>(stage_epochs - decay_start);
}

std::pair<int, int> sample_rank_pair(const Manifest& m, const std::string& kind, RandomStream& rng) {
    std::vector<int> rows = m.rows_of_kind(kind);
    if (rows.size() < 2)
        throw DataError("sample_rank_pair: kind '" + kind + "' has " + std::to_string(rows.size()) +
                        " row(s); need at least 2");
    int a = rng.uniform_int(static_cast<int>(rows.size()));
    int b = rng.uniform_int(static_cast<int>(rows.size()) - 1);
    if (b >= a) ++b;
    return {rows[static_cast<size_t>(a)], rows[static_cast<size_t>(b)]};
}

Trainer::Trainer(TrainConfig cfg, Manifest manifest)
    : cfg_(std::move(cfg)), manifest_(std::move(manifest)), pyramid_(cfg_.pyramid_seed) {
    cfg_.validate();
    if (manifest_.rows.empty()) throw DataError("trainer: empty manifest");
    model_ = std::make_unique<Model>(cfg_.model);
    check_ranks();
    cl_possible_ = manifest_.kinds().size() >= 2;
    degraded_cache_.reserve(manifest_.rows.size());
    clean_cache_.reserve(manifest_.rows.size());
    for (size_t i = 0; i < manifest_.rows.size(); ++i) {
        degraded_cache_.push_back(read_png(manifest_.degraded_path(static_cast<int>(i))));
        clean_cache_.push_back(read_png(manifest_.clean_path(static_cast<int>(i))));
        require_same_shape(degraded_cache_.back(), clean_cache_.back(), "trainer image pair");
        if (degraded_cache_.back().dim(0) < cfg_.crop_size ||
            degraded_cache_.back().dim(1) < cfg_.crop_size)
            throw DataError("trainer: image smaller than crop_size in row " + std::to_string(i + 1));
    }
}

void Trainer::check_ranks() const {
    for (const std::string& k : manifest_.kinds())
        if (manifest_.rows_of_kind(k).size() < 2)
            throw DataError("trainer: kind '" + k + "' needs at least 2 manifest rows for rank pairs");
}

int Trainer::steps_per_epoch() const {
    if (cfg_.steps_per_epoch > 0) return cfg_.steps_per_epoch;
    int n = static_cast<int>(manifest_.rows.size());
    return (n + cfg_.batch_size - 1) / cfg_.batch_size;
}

Batch Trainer::build_batch(uint64_t step) const {
    RandomStream rng = RandomStream::keyed(cfg_.seed, "batch", step);
    std::vector<std::string> kinds = manifest_.kinds();
    // rotate kind assignment so every batch mixes kinds when it can
    int offset = kinds.size() > 1 ? rng.uniform_int(static_cast<int>(kinds.size())) : 0;

    Batch batch;
    batch.cl_enabled = cl_possible_;
    for (int i = 0; i < cfg_.batch_size; ++i) {
        const std::string& kind = kinds[(static_cast<size_t>(offset) + i) % kinds.size()];
        auto [row_a, row_b] = sample_rank_pair(manifest_, kind, rng);
        BatchSample s;
        s.row_a = row_a;
        s.row_b = row_b;
        s.kind = kind;
        auto crop = [&](const Tensor& img, int y0, int x0) {
            Tensor out({cfg_.crop_size, cfg_.crop_size, 3});
            for (int y = 0; y < cfg_.crop_size; ++y)
                for (int x = 0; x < cfg_.crop_size; ++x)
                    for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
            return out;
        };
        const Tensor& da = degraded_cache_[static_cast<size_t>(row_a)];
        s.crop_ya = rng.uniform_int(da.dim(0) - cfg_.crop_size + 1);
        s.crop_xa = rng.uniform_int(da.dim(1) - cfg_.crop_size + 1);
        s.degraded_a = crop(da, s.crop_ya, s.crop_xa);
        s.clean_a = crop(clean_cache_[static_cast<size_t>(row_a)], s.crop_ya, s.crop_xa);
        const Tensor& db = degraded_cache_[static_cast<size_t>(row_b)];
        s.crop_yb = rng.uniform_int(db.dim(0) - cfg_.crop_size + 1);
        s.crop_xb = rng.uniform_int(db.dim(1) - cfg_.crop_size + 1);
        s.degraded_b = crop(db, s.crop_yb, s.crop_xb);
        s.clean_b = crop(clean_cache_[static_cast<size_t>(row_b)], s.crop_yb, s.crop_xb);
        s.gt_a = metrics::gt_quality(s.degraded_a, s.clean_a);
        s.gt_b = metrics::gt_quality(s.degraded_b, s.clean_b);
        batch.samples.push_back(std::move(s));
    }
    return batch;
}

StepStats Trainer::step_once(int stage, int epoch, std::ostream* log) {
    if (stage != 1 && stage != 2) throw ConfigError("step_once: stage must be 1 or 2");
    Batch batch = build_batch(global_step_);
    if (!cl_possible_ && !warned_single_kind_ && stage == 1) {
        warned_single_kind_ = true;
        std::cerr << "warning: single-kind manifest, contrastive type loss disabled\n";
    }

    const int stage_epochs = stage == 1 ? cfg_.stage1_epochs : cfg_.stage2_epochs;
    const double base = stage == 1 ? cfg_.lr : cfg_.lr / 10.0;
    const double lr = lr_at(epoch, stage_epochs, cfg_.decay_start_epoch, base);

    nn::Tape t;
    Model::Ctx ctx = model_->bind(t);
    const int b = static_cast<int>(batch.samples.size());

    std::vector<nn::Var> tm_a(static_cast<size_t>(b)), sv_a(static_cast<size_t>(b));
    std::vector<nn::Var> tm_b(static_cast<size_t>(b)), sv_b(static_cast<size_t>(b));
    nn::Var sev_sum{}, cl_sum{}, l1_sum{}, ssim_sum{}, per_sum{};
    int cl_count = 0;

    // pass 1: encode everything and restore the anchors
    for (int i = 0; i < b; ++i) {
        BatchSample& s = batch.samples[static_cast<size_t>(i)];
        nn::Var img_a = t.input(s.degraded_a);
        nn::Var clean_a = t.input(s.clean_a);
        auto enc_a = model_->encode(ctx, img_a);
        tm_a[static_cast<size_t>(i)] = enc_a.first;
        sv_a[static_cast<size_t>(i)] = enc_a.second;
        nn::Var restored = model_->restore_with(ctx, img_a, enc_a.first, enc_a.second);

        nn::Var l1_i = loss::l1(t, restored, clean_a);
        nn::Var ssim_i = loss::ssim_loss(t, restored, clean_a);
        l1_sum = l1_sum.valid() ? nn::add(t, l1_sum, l1_i) : l1_i;
        ssim_sum = ssim_sum.valid() ? nn::add(t, ssim_sum, ssim_i) : ssim_i;

        if (stage == 1) {
            nn::Var per_i = loss::perceptual(t, restored, clean_a, pyramid_);
            per_sum = per_sum.valid() ? nn::add(t, per_sum, per_i) : per_i;
            auto enc_b = model_->encode(ctx, t.input(s.degraded_b));
            tm_b[static_cast<size_t>(i)] = enc_b.first;
            sv_b[static_cast<size_t>(i)] = enc_b.second;
        }
    }

    // pass 2: ranking and contrastive terms over the complete batch
    if (stage == 1) {
        for (int i = 0; i < b; ++i) {
            BatchSample& s = batch.samples[static_cast<size_t>(i)];
            nn::Var iqa_a = model_->predict_iqa(ctx, sv_a[static_cast<size_t>(i)]);
            nn::Var iqa_b = model_->predict_iqa(ctx, sv_b[static_cast<size_t>(i)]);

            nn::Var sev_i{};
            switch (cfg_.regime) {
                case SeverityRegime::mqrl:
                    sev_i = loss::mqrl(t, iqa_a, iqa_b, s.gt_a, s.gt_b, cfg_.margin);
                    break;
                case SeverityRegime::mrl:
                    sev_i = loss::mrl(t, iqa_a, iqa_b, s.gt_a, s.gt_b, cfg_.margin);
                    break;
                case SeverityRegime::direct:
                    sev_i = nn::scale(t, nn::add(t, loss::direct_iqa(t, iqa_a, s.gt_a),
                                                 loss::direct_iqa(t, iqa_b, s.gt_b)),
                                      0.5);
                    break;
                case SeverityRegime::none: break;
            }
            if (sev_i.valid()) sev_sum = sev_sum.valid() ? nn::add(t, sev_sum, sev_i) : sev_i;

            if (batch.cl_enabled) {
                // positive: the same-kind partner; negatives: other anchors
                // of a different kind in this batch
                const Tensor& tmv = t.val(tm_a[static_cast<size_t>(i)]);
                int flat = static_cast<int>(tmv.size());
                nn::Var anchor = nn::reshape(t, tm_a[static_cast<size_t>(i)], {flat});
                nn::Var positive = nn::reshape(t, tm_b[static_cast<size_t>(i)], {flat});
                std::vector<nn::Var> negatives;
                for (int j = 0; j < b; ++j)
                    if (j != i && batch.samples[static_cast<size_t>(j)].kind != s.kind)
                        negatives.push_back(nn::reshape(t, tm_a[static_cast<size_t>(j)], {flat}));
                if (!negatives.empty()) {
                    nn::Var cl_i = loss::contrastive(t, anchor, positive, negatives, cfg_.tau);
                    cl_sum = cl_sum.valid() ? nn::add(t, cl_sum, cl_i) : cl_i;
                    ++cl_count;
                }
            }
        }
    }

    double invb = 1.0 / b;
    loss::LossTerms terms;
    if (sev_sum.valid()) terms.mqrl = nn::scale(t, sev_sum, invb);
    if (cl_sum.valid()) terms.cl = nn::scale(t, cl_sum, 1.0 / cl_count);
    terms.l1 = nn::scale(t, l1_sum, invb);
    terms.ssim = nn::scale(t, ssim_sum, invb);
    if (per_sum.valid()) terms.perceptual = nn::scale(t, per_sum, invb);
    nn::Var total = loss::total_loss(t, terms, cfg_.weights);

    StepStats st;
    st.step = global_step_;
    st.epoch = epoch;
    st.stage = stage;
    st.lr = lr;
    st.total = t.scalar(total);
    st.mqrl = terms.mqrl.valid() ? t.scalar(terms.mqrl) : 0.0;
    st.cl = terms.cl.valid() ? t.scalar(terms.cl) : 0.0;
    st.l1 = t.scalar(terms.l1);
    st.ssim = t.scalar(terms.ssim);
    st.perceptual = terms.perceptual.valid() ? t.scalar(terms.perceptual) : 0.0;

    if (!std::isfinite(st.total)) {
        nlohmann::ordered_json dump;
        dump["event"] = "nan_abort";
        dump["step"] = st.step;
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (const auto& s : batch.samples) {
            nlohmann::ordered_json r;
            r["row_a"] = s.row_a;
            r["row_b"] = s.row_b;
            r["kind"] = s.kind;
            r["crop_a"] = {s.crop_ya, s.crop_xa};
            r["crop_b"] = {s.crop_yb, s.crop_xb};
            rows.push_back(r);
        }
        dump["batch"] = rows;
        dump["losses"] = {{"mqrl", st.mqrl}, {"cl", st.cl},    {"l1", st.l1},
                          {"ssim", st.ssim}, {"perceptual", st.perceptual}};
        if (log) (*log) << dump.dump() << "\n" << std::flush;
        throw NumericError("non-finite loss at step " + std::to_string(st.step) +
                           "; offending batch dumped to the log");
    }

    t.backward(total);
    apply_adamw(ctx, t, lr);
    ++global_step_;

    if (log) {
        nlohmann::ordered_json j;
        j["step"] = st.step;
        j["epoch"] = st.epoch;
        j["stage"] = st.stage;
        j["lr"] = st.lr;
        j["mqrl"] = st.mqrl;
        j["cl"] = st.cl;
        j["l1"] = st.l1;
        j["ssim"] = st.ssim;
        j["perceptual"] = st.perceptual;
        j["total"] = st.total;
        (*log) << j.dump() << "\n";
    }
    return st;
}

void Trainer::apply_adamw(Model::Ctx& ctx, nn::Tape& t, double lr) {
    ++adam_t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(adam_t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(adam_t_));
    for (auto& e : model_->params().entries()) {
        auto it = ctx.bound.find(e.name);
        if (it == ctx.bound.end()) continue;  // not part of this step's graph
        const Tensor& g = t.grad(it->second);
        for (int64_t i = 0; i < e.value.size(); ++i) {
            double m = cfg_.beta1 * e.m[i] + (1.0 - cfg_.beta1) * g[i];
            double v = cfg_.beta2 * e.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            e.m[i] = snap_f32(m);
            e.v[i] = snap_f32(v);
            double update = (m / bc1) / (std::sqrt(v / bc2) + cfg_.adam_eps);
            e.value[i] = snap_f32(e.value[i] - lr * (update + cfg_.weight_decay * e.value[i]));
        }
    }
}

void Trainer::run_stage1(std::ostream* log) {
    int spe = steps_per_epoch();
    for (int epoch = stage1_epochs_done_; epoch < cfg_.stage1_epochs; ++epoch) {
        for (int s = 0; s < spe; ++s) step_once(1, epoch, log);
        stage1_epochs_done_ = epoch + 1;
    }
}

void Trainer::run_stage2(std::ostream* log) {
    int spe = steps_per_epoch();
    for (int epoch = stage2_epochs_done_; epoch < cfg_.stage2_epochs; ++epoch) {
        for (int s = 0; s < spe; ++s) step_once(2, epoch, log);
        stage2_epochs_done_ = epoch + 1;
    }
}

// ---------------- checkpoint serialization ----------------

namespace {

constexpr char kMagic[8] = {'A', 'W', 'R', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    explicit Reader(const std::string& b) : buf(b) {}
    void need(size_t n) const {
        if (pos + n > buf.size()) throw DataError("checkpoint truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

void put_blob(std::string& out, const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u32(out, static_cast<uint32_t>(t.dim(i)));
    for (int64_t i = 0; i < t.size(); ++i) put_f32(out, static_cast<float>(t[i]));
}

std::pair<std::string, Tensor> read_blob(Reader& r) {
    uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    uint32_t rank = r.u32();
    std::vector<int> dims;
    for (uint32_t i = 0; i < rank; ++i) dims.push_back(static_cast<int>(r.u32()));
    Tensor t(dims);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(r.f32());
    return {std::move(name), std::move(t)};
}

}  // namespace

void Trainer::save_checkpoint_file(const std::string& path, const TrainConfig& cfg,
                                   const Model& model, uint64_t global_step, int stage1_done,
                                   int stage2_done, uint64_t adam_t) {
    std::string out;
    out.append(kMagic, 8);
    put_u32(out, 1);  // format version
    std::string cfg_text = kv_to_text(cfg.to_kv());
    put_u32(out, static_cast<uint32_t>(cfg_text.size()));
    out += cfg_text;
    put_u64(out, global_step);
    put_u32(out, static_cast<uint32_t>(stage1_done));
    put_u32(out, static_cast<uint32_t>(stage2_done));
    put_u64(out, adam_t);
    put_u64(out, cfg.seed);        // training RNG key
    put_u64(out, global_step);     // training RNG counter (streams are keyed per step)

    const auto& entries = model.params().entries();
    put_u32(out, static_cast<uint32_t>(entries.size() * 3));
    for (const auto& e : entries) {
        put_blob(out, e.name, e.value);
        put_blob(out, "opt.m." + e.name, e.m);
        put_blob(out, "opt.v." + e.name, e.v);
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write checkpoint: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

void Trainer::save_checkpoint(const std::string& path) const {
    save_checkpoint_file(path, cfg_, *model_, global_step_, stage1_epochs_done_,
                         stage2_epochs_done_, adam_t_);
}

std::pair<CheckpointInfo, std::unique_ptr<Model>> load_model_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    std::string buf = ss.str();
    if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 8) != 0)
        throw DataError("not a checkpoint file: " + path);
    Reader r(buf);
    r.pos = 8;
    uint32_t version = r.u32();
    if (version != 1)
        throw DataError("checkpoint version " + std::to_string(version) + " unsupported (expected 1)");
    uint32_t cfg_len = r.u32();
    std::string cfg_text = r.bytes(cfg_len);

    CheckpointInfo info;
    info.config = TrainConfig::from_kv(parse_kv_text(cfg_text));
    info.global_step = r.u64();
    info.stage1_epochs_done = static_cast<int>(r.u32());
    info.stage2_epochs_done = static_cast<int>(r.u32());
    info.adam_t = r.u64();
    r.u64();  // rng key (reconstructed from config seed)
    r.u64();  // rng counter (reconstructed from global_step)

    auto model = std::make_unique<Model>(info.config.model);
    uint32_t n_blobs = r.u32();
    for (uint32_t i = 0; i < n_blobs; ++i) {
        auto [name, tensor] = read_blob(r);
        Tensor* dst = nullptr;
        if (name.rfind("opt.m.", 0) == 0)
            dst = &model->params().entry(name.substr(6)).m;
        else if (name.rfind("opt.v.", 0) == 0)
            dst = &model->params().entry(name.substr(6)).v;
        else
            dst = &model->params().entry(name).value;
        if (!dst->same_shape(tensor))
            throw DataError("checkpoint blob '" + name + "' shape mismatch");
        *dst = std::move(tensor);
    }
    return {std::move(info), std::move(model)};
}

Trainer Trainer::load_checkpoint(const std::string& path, Manifest manifest) {
    auto [info, model] = load_model_checkpoint(path);
    Trainer tr(info.config, std::move(manifest));
    tr.model_ = std::move(model);
    tr.global_step_ = info.global_step;
    tr.stage1_epochs_done_ = info.stage1_epochs_done;
    tr.stage2_epochs_done_ = info.stage2_epochs_done;
    tr.adam_t_ = info.adam_t;
    return tr;
}

}  // namespace awr::train
