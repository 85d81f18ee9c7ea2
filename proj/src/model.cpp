#include "awr/model.hpp"

#include <cmath>
#include <sstream>

namespace awr {

using nn::Tape;
using nn::Var;

nn::Var local_global_adain(Tape& t, Var feat, const AffineParams& p, double eps) {
    const Tensor& fv = t.val(feat);
    if (fv.rank() != 3) throw ShapeError("adain: rank-3 feature required");
    int h = fv.dim(0), w = fv.dim(1), c = fv.dim(2);
    const Tensor& ls = t.val(p.local_scale);
    if (ls.rank() != 2 || ls.dim(0) != h || ls.dim(1) != w)
        throw ShapeError("adain: local params must be (h,w) = " + fv.shape_str());
    require_same_shape(ls, t.val(p.local_shift), "adain local");
    const Tensor& gs = t.val(p.global_scale);
    if (gs.rank() != 1 || gs.dim(0) != c) throw ShapeError("adain: global params must be length c");
    require_same_shape(gs, t.val(p.global_shift), "adain global");

    Var mu = nn::global_avg_pool(t, feat);
    Var centered = nn::sub(t, feat, nn::broadcast_hw(t, mu, h, w));
    Var var = nn::global_avg_pool(t, nn::mul(t, centered, centered));
    Var inv_sigma = nn::pow_scalar(t, nn::add_scalar(t, var, eps), -0.5);
    Var normalized = nn::mul(t, centered, nn::broadcast_hw(t, inv_sigma, h, w));

    Var local = nn::add(t, nn::mul(t, normalized, nn::broadcast_c(t, p.local_scale, c)),
                        nn::broadcast_c(t, p.local_shift, c));
    return nn::add(t, nn::mul(t, local, nn::broadcast_hw(t, p.global_scale, h, w)),
                   nn::broadcast_hw(t, p.global_shift, h, w));
}

void ModelConfig::validate() const {
    if (downsample != 2 && downsample != 4 && downsample != 8)
        throw ConfigError("model: downsample must be 2, 4 or 8");
    if (feat_dim <= 0 || blocks < 0 || heads <= 0) throw ConfigError("model: bad dims");
    if (feat_dim % heads != 0)
        throw ConfigError("model: feat_dim " + std::to_string(feat_dim) +
                          " not divisible by heads " + std::to_string(heads));
    for (int v : {trunk_w0, trunk_w1, trunk_w2, extract_w, recon_w, affine_conv_w, affine_mlp_w, iqa_hidden})
        if (v <= 0) throw ConfigError("model: widths must be positive");
    if (recon_w % 2 != 0) throw ConfigError("model: recon_w must be even");
    if (norm_eps <= 0) throw ConfigError("model: norm_eps must be positive");
}

std::string ModelConfig::to_kv() const {
    std::ostringstream os;
    os << "downsample=" << downsample << "\nfeat_dim=" << feat_dim << "\nblocks=" << blocks
       << "\nheads=" << heads << "\ntrunk_w0=" << trunk_w0 << "\ntrunk_w1=" << trunk_w1
       << "\ntrunk_w2=" << trunk_w2 << "\nextract_w=" << extract_w << "\nrecon_w=" << recon_w
       << "\naffine_conv_w=" << affine_conv_w << "\naffine_mlp_w=" << affine_mlp_w
       << "\niqa_hidden=" << iqa_hidden << "\ninit_seed=" << init_seed << "\n";
    return os.str();
}

ModelConfig ModelConfig::from_kv(const std::unordered_map<std::string, std::string>& kv) {
    ModelConfig c;
    auto geti = [&](const char* k, int fb) {
        auto it = kv.find(k);
        return it == kv.end() ? fb : std::stoi(it->second);
    };
    c.downsample = geti("downsample", c.downsample);
    c.feat_dim = geti("feat_dim", c.feat_dim);
    c.blocks = geti("blocks", c.blocks);
    c.heads = geti("heads", c.heads);
    c.trunk_w0 = geti("trunk_w0", c.trunk_w0);
    c.trunk_w1 = geti("trunk_w1", c.trunk_w1);
    c.trunk_w2 = geti("trunk_w2", c.trunk_w2);
    c.extract_w = geti("extract_w", c.extract_w);
    c.recon_w = geti("recon_w", c.recon_w);
    c.affine_conv_w = geti("affine_conv_w", c.affine_conv_w);
    c.affine_mlp_w = geti("affine_mlp_w", c.affine_mlp_w);
    c.iqa_hidden = geti("iqa_hidden", c.iqa_hidden);
    auto it = kv.find("init_seed");
    if (it != kv.end()) c.init_seed = std::stoull(it->second);
    c.validate();
    return c;
}

Tensor& ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter: " + name);
    index_[name] = entries_.size();
    Entry e;
    e.name = name;
    e.m = Tensor::zeros(init.dims());
    e.v = Tensor::zeros(init.dims());
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    return entries_.back().value;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second];
}
const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return entries_[it->second];
}

int64_t ParamStore::scalar_count() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

int64_t ParamStore::scalar_count_prefix(const std::string& prefix) const {
    int64_t n = 0;
    for (const auto& e : entries_)
        if (e.name.rfind(prefix, 0) == 0) n += e.value.size();
    return n;
}

namespace {

Tensor he_conv(RandomStream rs, int k, int cin, int cout) {
    Tensor w({k, k, cin, cout});
    double std = std::sqrt(2.0 / (static_cast<double>(k) * k * cin));
    for (int64_t i = 0; i < w.size(); ++i) w[i] = snap_f32(rs.normal() * std);
    return w;
}

Tensor he_fc(RandomStream rs, int out, int in) {
    Tensor w({out, in});
    double std = std::sqrt(2.0 / in);
    for (int64_t i = 0; i < w.size(); ++i) w[i] = snap_f32(rs.normal() * std);
    return w;
}

}  // namespace

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    s2_stages_ = cfg_.downsample == 2 ? 1 : (cfg_.downsample == 4 ? 2 : 3);
    build_params();
}

void Model::build_params() {
    uint64_t seed = cfg_.init_seed;
    int pi = 0;  // distinct init stream per parameter
    auto rs = [&]() { return RandomStream::keyed(seed, "model-init", static_cast<uint64_t>(pi++)); };
    auto add_conv = [&](const std::string& n, int k, int cin, int cout, bool zero = false) {
        params_.add(n + ".w", zero ? Tensor::zeros({k, k, cin, cout}) : he_conv(rs(), k, cin, cout));
        params_.add(n + ".b", Tensor::zeros({cout}));
    };
    auto add_fc = [&](const std::string& n, int out, int in, bool zero = false) {
        params_.add(n + ".w", zero ? Tensor::zeros({out, in}) : he_fc(rs(), out, in));
        params_.add(n + ".b", Tensor::zeros({out}));
    };

    // encoder trunk: three stages; stride-2 stages first, then stride-1
    const int tw[3] = {cfg_.trunk_w0, cfg_.trunk_w1, cfg_.trunk_w2};
    int cin = 3;
    for (int s = 0; s < 3; ++s) {
        add_conv("enc.stage" + std::to_string(s), 3, cin, tw[s]);
        cin = tw[s];
    }
    add_conv("enc.fuse", 1, tw[0] + tw[1] + tw[2], cfg_.feat_dim);
    add_conv("enc.type", 3, cfg_.feat_dim, 1);
    add_fc("enc.iqa.fc1", cfg_.iqa_hidden, cfg_.feat_dim);
    add_fc("enc.iqa.fc2", 1, cfg_.iqa_hidden, /*zero=*/true);  // fresh model scores 0.5

    // feature extraction: stride-2 chain ending at feat_dim
    {
        int c = 3;
        for (int s = 0; s < s2_stages_; ++s) {
            int cout = (s == s2_stages_ - 1) ? cfg_.feat_dim : cfg_.extract_w;
            add_conv("ext.c" + std::to_string(s), 3, c, cout);
            c = cout;
        }
    }

    // conditioned residual blocks; final conv zero so each block starts
    // as the identity
    for (int b = 0; b < cfg_.blocks; ++b) {
        std::string base = "blk" + std::to_string(b);
        add_conv(base + ".conv1", 3, cfg_.feat_dim, cfg_.feat_dim);
        add_conv(base + ".conv2", 3, cfg_.feat_dim, cfg_.feat_dim, /*zero=*/true);
        add_conv(base + ".local.c0", 3, 1, cfg_.affine_conv_w);
        // scale/shift emitted as two channels; zero weights with bias (1, 0)
        params_.add(base + ".local.c1.w", Tensor::zeros({3, 3, cfg_.affine_conv_w, 2}));
        params_.add(base + ".local.c1.b", Tensor({2}, {1.0, 0.0}));
        add_fc(base + ".global.fc1", cfg_.affine_mlp_w, cfg_.feat_dim);
        Tensor gb({2 * cfg_.feat_dim});
        for (int i = 0; i < cfg_.feat_dim; ++i) gb[i] = 1.0;
        params_.add(base + ".global.fc2.w", Tensor::zeros({2 * cfg_.feat_dim, cfg_.affine_mlp_w}));
        params_.add(base + ".global.fc2.b", std::move(gb));
    }

    // type-guided cross attention; zero output projection keeps it an
    // identity at init
    add_conv("att.lift", 1, 1, cfg_.feat_dim);
    add_conv("att.q", 1, cfg_.feat_dim, cfg_.feat_dim);
    add_conv("att.k", 1, cfg_.feat_dim, cfg_.feat_dim);
    add_conv("att.v", 1, cfg_.feat_dim, cfg_.feat_dim);
    add_conv("att.out", 1, cfg_.feat_dim, cfg_.feat_dim, /*zero=*/true);

    // reconstruction
    {
        int c = cfg_.feat_dim;
        int wdt = cfg_.recon_w;
        for (int s = 0; s < s2_stages_; ++s) {
            add_conv("rec.c" + std::to_string(s), 3, c, wdt);
            c = wdt;
            wdt = std::max(8, wdt / 2);
        }
        add_conv("rec.out", 3, c, 3);
    }
}

Var Model::p(Ctx& c, const std::string& name) const {
    auto it = c.bound.find(name);
    if (it != c.bound.end()) return it->second;
    Var v = c.tape->input(params_.entry(name).value);
    c.bound.emplace(name, v);
    return v;
}

Var Model::conv(Ctx& c, Var x, const std::string& name, int stride, int pad) const {
    return nn::conv2d(*c.tape, x, p(c, name + ".w"), p(c, name + ".b"), stride, pad);
}

Var Model::fc(Ctx& c, Var x, const std::string& name) const {
    return nn::dense(*c.tape, x, p(c, name + ".w"), p(c, name + ".b"));
}

namespace {
void require_divisible(const Tensor& img, int s, const char* op) {
    if (img.rank() != 3 || img.dim(2) != 3)
        throw ShapeError(std::string(op) + ": (h,w,3) image required, got " + img.shape_str());
    if (img.dim(0) % s != 0 || img.dim(1) % s != 0)
        throw ShapeError(std::string(op) + ": spatial dims " + img.shape_str() +
                         " not divisible by downsample " + std::to_string(s));
}
}  // namespace

std::pair<Var, Var> Model::encode(Ctx& c, Var image) const {
    Tape& t = *c.tape;
    require_divisible(t.val(image), cfg_.downsample, "encode");

    std::vector<Var> levels;
    std::vector<int> scales;  // downsample factor of each stage output
    Var x = image;
    int scale = 1;
    for (int s = 0; s < 3; ++s) {
        int stride = s < s2_stages_ ? 2 : 1;
        x = nn::lrelu(t, conv(c, x, "enc.stage" + std::to_string(s), stride, 1), 0.2);
        scale *= stride;
        levels.push_back(x);
        scales.push_back(scale);
    }
    // multi-level features pooled onto the coarsest grid, concatenated,
    // fused by one conv
    for (size_t i = 0; i < levels.size(); ++i)
        for (int sc = scales[i]; sc < cfg_.downsample; sc *= 2) levels[i] = nn::avgpool2(t, levels[i]);
    Var fused = nn::lrelu(t, conv(c, nn::concat_last(t, levels), "enc.fuse", 1, 0), 0.2);

    Var tm3 = conv(c, fused, "enc.type", 1, 1);  // (h/S, w/S, 1)
    const Tensor& tv = t.val(tm3);
    Var type_map = nn::reshape(t, tm3, {tv.dim(0), tv.dim(1)});
    Var severity = nn::global_avg_pool(t, fused);
    return {type_map, severity};
}

Var Model::predict_iqa(Ctx& c, Var severity) const {
    Tape& t = *c.tape;
    if (t.val(severity).rank() != 1 || t.val(severity).dim(0) != cfg_.feat_dim)
        throw ShapeError("predict_iqa: severity must be length " + std::to_string(cfg_.feat_dim));
    Var h = nn::lrelu(t, fc(c, severity, "enc.iqa.fc1"), 0.2);
    return nn::sigmoid(t, fc(c, h, "enc.iqa.fc2"));
}

Var Model::extract_features(Ctx& c, Var image) const {
    Tape& t = *c.tape;
    require_divisible(t.val(image), cfg_.downsample, "extract_features");
    Var x = image;
    for (int s = 0; s < s2_stages_; ++s)
        x = nn::lrelu(t, conv(c, x, "ext.c" + std::to_string(s), 2, 1), 0.2);
    return x;
}

AffineParams Model::make_affines(Ctx& c, Var type_map, Var severity, int block) const {
    Tape& t = *c.tape;
    const Tensor& tm = t.val(type_map);
    if (tm.rank() != 2) throw ShapeError("make_affines: type map must be rank-2");
    std::string base = "blk" + std::to_string(block);

    Var tm3 = nn::reshape(t, type_map, {tm.dim(0), tm.dim(1), 1});
    Var hloc = nn::lrelu(t, conv(c, tm3, base + ".local.c0", 1, 1), 0.2);
    Var locmaps = conv(c, hloc, base + ".local.c1", 1, 1);  // (h, w, 2)
    Var ls = nn::reshape(t, nn::slice_last(t, locmaps, 0, 1), {tm.dim(0), tm.dim(1)});
    Var lb = nn::reshape(t, nn::slice_last(t, locmaps, 1, 1), {tm.dim(0), tm.dim(1)});

    Var hg = nn::lrelu(t, fc(c, severity, base + ".global.fc1"), 0.2);
    Var gvec = fc(c, hg, base + ".global.fc2");  // (2D)
    Var gs = nn::slice_last(t, gvec, 0, cfg_.feat_dim);
    Var gb = nn::slice_last(t, gvec, cfg_.feat_dim, cfg_.feat_dim);
    return AffineParams{ls, lb, gs, gb};
}

Var Model::residual_block(Ctx& c, Var feat, Var type_map, Var severity, int block) const {
    Tape& t = *c.tape;
    std::string base = "blk" + std::to_string(block);
    AffineParams affines = make_affines(c, type_map, severity, block);
    Var x = conv(c, feat, base + ".conv1", 1, 1);
    x = local_global_adain(t, x, affines, cfg_.norm_eps);
    x = nn::lrelu(t, x, 0.2);
    x = conv(c, x, base + ".conv2", 1, 1);
    return nn::add(t, feat, x);
}

Var Model::cross_attention(Ctx& c, Var feat, Var type_map) const {
    Tape& t = *c.tape;
    const Tensor& fv = t.val(feat);
    int h = fv.dim(0), w = fv.dim(1), d = fv.dim(2);
    if (d != cfg_.feat_dim) throw ShapeError("cross_attention: channel dim mismatch");
    const Tensor& tv = t.val(type_map);
    if (tv.rank() != 2 || tv.dim(0) != h || tv.dim(1) != w)
        throw ShapeError("cross_attention: type map must be (h,w) of the feature");
    int n = h * w;
    int hd = d / cfg_.heads;
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    Var lifted = conv(c, nn::reshape(t, type_map, {h, w, 1}), "att.lift", 1, 0);
    Var q = nn::reshape(t, conv(c, lifted, "att.q", 1, 0), {n, d});
    Var k = nn::reshape(t, conv(c, feat, "att.k", 1, 0), {n, d});
    Var v = nn::reshape(t, conv(c, feat, "att.v", 1, 0), {n, d});

    std::vector<Var> heads;
    for (int hd_i = 0; hd_i < cfg_.heads; ++hd_i) {
        Var qh = nn::slice_last(t, q, hd_i * hd, hd);
        Var kh = nn::slice_last(t, k, hd_i * hd, hd);
        Var vh = nn::slice_last(t, v, hd_i * hd, hd);
        Var scores = nn::scale(t, nn::matmul(t, qh, nn::transpose(t, kh)), inv_sqrt);
        Var attn = nn::softmax_rows(t, scores);  // rows: query positions
        heads.push_back(nn::matmul(t, attn, vh));
    }
    Var merged = nn::reshape(t, nn::concat_last(t, heads), {h, w, d});
    Var out = conv(c, merged, "att.out", 1, 0);
    return nn::add(t, feat, out);
}

Var Model::reconstruct(Ctx& c, Var feat) const {
    Tape& t = *c.tape;
    Var x = feat;
    for (int s = 0; s < s2_stages_; ++s)
        x = nn::lrelu(t, conv(c, nn::upsample2(t, x), "rec.c" + std::to_string(s), 1, 1), 0.2);
    return nn::sigmoid(t, conv(c, x, "rec.out", 1, 1));
}

Var Model::restore_with(Ctx& c, Var image, Var type_map, Var severity) const {
    Var f = extract_features(c, image);
    for (int b = 0; b < cfg_.blocks; ++b) f = residual_block(c, f, type_map, severity, b);
    f = cross_attention(c, f, type_map);
    return reconstruct(c, f);
}

Var Model::restore(Ctx& c, Var image) const {
    auto [type_map, severity] = encode(c, image);
    return restore_with(c, image, type_map, severity);
}

std::pair<Tensor, Tensor> Model::encode_image(const Tensor& image) const {
    Tape t(false);
    Ctx c = bind(t);
    auto [tm, sev] = encode(c, t.input(image));
    return {t.val(tm), t.val(sev)};
}

double Model::predict_iqa_value(const Tensor& severity) const {
    Tape t(false);
    Ctx c = bind(t);
    return t.scalar(predict_iqa(c, t.input(severity)));
}

Tensor Model::restore_image(const Tensor& image) const {
    Tape t(false);
    Ctx c = bind(t);
    return t.val(restore(c, t.input(image)));
}

Tensor Model::restore_image_with(const Tensor& image, const Tensor& type_map,
                                 const Tensor& severity) const {
    Tape t(false);
    Ctx c = bind(t);
    return t.val(restore_with(c, t.input(image), t.input(type_map), t.input(severity)));
}

std::string Model::summary() const {
    std::ostringstream os;
    const char* groups[] = {"enc.", "ext.", "blk", "att.", "rec."};
    const char* labels[] = {"degradation encoder", "feature extraction", "residual blocks",
                            "cross attention", "reconstruction"};
    int64_t total = parameter_count();
    os << "parameters: " << total << "\n";
    for (int i = 0; i < 5; ++i)
        os << "  " << labels[i] << ": " << params_.scalar_count_prefix(groups[i]) << "\n";
    return os.str();
}

}  // namespace awr
