#include "awr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "awr/png_io.hpp"

namespace fs = std::filesystem;

namespace awr::synth {

namespace {

double clip01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

void require_kind(const DegradationSpec& spec, Kind expected, const char* op) {
    if (spec.kind != expected)
        throw ConfigError(std::string(op) + ": spec kind is " + to_string(spec.kind));
    if (spec.severity < 0.0 || spec.severity > 1.0)
        throw ConfigError(std::string(op) + ": severity outside [0,1]");
}

void require_image(const Tensor& img, const char* op) {
    if (img.rank() != 3 || img.dim(2) != 3)
        throw ShapeError(std::string(op) + ": (h,w,3) image required, got " + img.shape_str());
}

RandomStream element_stream(const DegradationSpec& spec, uint64_t element) {
    return RandomStream::keyed(spec.seed, to_string(spec.kind), element);
}

// Additive bright segment with bilinear splatting so streaks are not
// aliased into single-pixel stairs.
void splat_segment(Tensor& img, double cy, double cx, double angle, double len,
                   double amount) {
    int h = img.dim(0), w = img.dim(1);
    double dy = std::sin(angle), dx = std::cos(angle);
    int steps = std::max(2, static_cast<int>(std::ceil(len * 2.0)));
    for (int s = 0; s <= steps; ++s) {
        double f = static_cast<double>(s) / steps - 0.5;
        double y = cy + f * len * dy;
        double x = cx + f * len * dx;
        int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
        double fy = y - y0, fx = x - x0;
        const double wgt[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
        const int oy[4] = {0, 0, 1, 1}, ox[4] = {0, 1, 0, 1};
        // taper toward the segment ends
        double taper = 1.0 - std::fabs(2.0 * f);
        for (int i = 0; i < 4; ++i) {
            int yy = y0 + oy[i], xx = x0 + ox[i];
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            double a = amount * wgt[i] * (0.35 + 0.65 * taper) / 2.0;
            for (int c = 0; c < 3; ++c) img.at(yy, xx, c) = clip01(img.at(yy, xx, c) + a);
        }
    }
}

}  // namespace

const std::vector<std::string>& kind_names() {
    static const std::vector<std::string> names = {"rain_streak", "haze", "snow", "raindrop"};
    return names;
}

std::string to_string(Kind k) { return kind_names()[static_cast<size_t>(k)]; }

Kind kind_from_string(const std::string& s) {
    const auto& names = kind_names();
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == s) return static_cast<Kind>(i);
    throw ConfigError("unknown degradation kind: '" + s + "'");
}

Tensor apply_haze(const Tensor& clean, const DegradationSpec& spec) {
    require_kind(spec, Kind::haze, "apply_haze");
    require_image(clean, "apply_haze");
    const double t = 1.0 - 0.9 * spec.severity;
    const double airlight = 0.9;
    Tensor out(clean.dims());
    for (int64_t i = 0; i < clean.size(); ++i) out[i] = clip01(clean[i] * t + airlight * (1.0 - t));
    return out;
}

int rain_streak_count(const DegradationSpec& spec, int h, int w) {
    return static_cast<int>(std::lround(spec.severity * 0.02 * h * w));
}

Tensor apply_rain_streak(const Tensor& clean, const DegradationSpec& spec) {
    require_kind(spec, Kind::rain_streak, "apply_rain_streak");
    require_image(clean, "apply_rain_streak");
    Tensor out = clean;
    if (spec.severity == 0.0) return out;
    int h = clean.dim(0), w = clean.dim(1);
    int count = rain_streak_count(spec, h, w);
    double minhw = std::min(h, w);
    for (int i = 0; i < count; ++i) {
        RandomStream rs = element_stream(spec, static_cast<uint64_t>(i));
        double cy = rs.uniform(0.0, h);
        double cx = rs.uniform(0.0, w);
        double angle = rs.uniform(1.134, 2.007);  // 65..115 degrees, near vertical
        double len = minhw * rs.uniform(0.14, 0.3);
        double opacity = spec.severity * rs.uniform(0.3, 0.55);
        splat_segment(out, cy, cx, angle, len, opacity);
    }
    return out;
}

int snow_flake_count(const DegradationSpec& spec, int h, int w) {
    return static_cast<int>(std::lround(spec.severity * 0.010 * h * w));
}

Tensor apply_snow(const Tensor& clean, const DegradationSpec& spec) {
    require_kind(spec, Kind::snow, "apply_snow");
    require_image(clean, "apply_snow");
    Tensor out = clean;
    if (spec.severity == 0.0) return out;
    int h = clean.dim(0), w = clean.dim(1);
    int count = snow_flake_count(spec, h, w);
    for (int i = 0; i < count; ++i) {
        RandomStream rs = element_stream(spec, static_cast<uint64_t>(i));
        double cy = rs.uniform(0.0, h);
        double cx = rs.uniform(0.0, w);
        double radius = 0.7 + rs.uniform(0.0, 1.3) + 1.2 * spec.severity;
        double alpha = 0.5 + 0.3 * rs.uniform();
        int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
        int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + radius + 1)));
        int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
        int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + radius + 1)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                double d = std::hypot(y - cy, x - cx);
                if (d > radius) continue;
                double edge = std::min(1.0, radius - d);  // soft rim
                double a = alpha * edge;
                for (int c = 0; c < 3; ++c)
                    out.at(y, x, c) = clip01(out.at(y, x, c) * (1.0 - a) + a);
            }
    }
    return out;
}

int raindrop_count(const DegradationSpec& spec) {
    return static_cast<int>(std::lround(spec.severity * 16.0));
}

Tensor apply_raindrop(const Tensor& clean, const DegradationSpec& spec) {
    require_kind(spec, Kind::raindrop, "apply_raindrop");
    require_image(clean, "apply_raindrop");
    Tensor out = clean;
    int count = raindrop_count(spec);
    if (count == 0) return out;
    int h = clean.dim(0), w = clean.dim(1);
    for (int i = 0; i < count; ++i) {
        RandomStream rs = element_stream(spec, static_cast<uint64_t>(i));
        double cy = rs.uniform(0.1 * h, 0.9 * h);
        double cx = rs.uniform(0.1 * w, 0.9 * w);
        double ay = 2.5 + rs.uniform(0.0, 3.5) + 3.0 * spec.severity;  // semi-axes
        double ax = ay * rs.uniform(0.6, 0.9);
        double theta = rs.uniform(-0.4, 0.4);
        double ct = std::cos(theta), st = std::sin(theta);
        int y0 = std::max(0, static_cast<int>(cy - ay - ax));
        int y1 = std::min(h - 1, static_cast<int>(cy + ay + ax));
        int x0 = std::max(0, static_cast<int>(cx - ay - ax));
        int x1 = std::min(w - 1, static_cast<int>(cx + ay + ax));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                double ry = (y - cy) * ct - (x - cx) * st;
                double rx = (y - cy) * st + (x - cx) * ct;
                if ((ry * ry) / (ay * ay) + (rx * rx) / (ax * ax) > 1.0) continue;
                // box-blur of the *input* region, then brighten
                for (int c = 0; c < 3; ++c) {
                    double s = 0.0;
                    int n = 0;
                    for (int by = -2; by <= 2; ++by)
                        for (int bx = -2; bx <= 2; ++bx) {
                            int yy = y + by, xx = x + bx;
                            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                            s += clean.at(yy, xx, c);
                            ++n;
                        }
                    out.at(y, x, c) = clip01((s / n) * 1.12 + 0.03);
                }
            }
    }
    return out;
}

Tensor apply_degradation(const Tensor& clean, const DegradationSpec& spec) {
    switch (spec.kind) {
        case Kind::haze: return apply_haze(clean, spec);
        case Kind::rain_streak: return apply_rain_streak(clean, spec);
        case Kind::snow: return apply_snow(clean, spec);
        case Kind::raindrop: return apply_raindrop(clean, spec);
    }
    throw ConfigError("apply_degradation: bad kind");
}

Tensor make_scene(uint64_t index, int h, int w) {
    RandomStream rs = RandomStream::keyed(index, "scene");
    Tensor img({h, w, 3});
    // low-frequency background
    double fy = rs.uniform(0.5, 2.0), fx = rs.uniform(0.5, 2.0);
    double base[3], amp[3];
    for (int c = 0; c < 3; ++c) {
        base[c] = rs.uniform(0.25, 0.65);
        amp[c] = rs.uniform(0.08, 0.22);
    }
    double phase = rs.uniform(0.0, 6.28);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = std::sin(fy * 3.1415926 * y / h + phase) * std::cos(fx * 3.1415926 * x / w);
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = clip01(base[c] + amp[c] * v);
        }
    // rectangles and discs give PSNR/SSIM edges to care about
    int shapes = 4 + rs.uniform_int(4);
    for (int s = 0; s < shapes; ++s) {
        double col[3] = {rs.uniform(0.05, 0.95), rs.uniform(0.05, 0.95), rs.uniform(0.05, 0.95)};
        if (rs.uniform() < 0.5) {
            int ry0 = rs.uniform_int(h), rx0 = rs.uniform_int(w);
            int rh = 2 + rs.uniform_int(std::max(2, h / 3));
            int rw = 2 + rs.uniform_int(std::max(2, w / 3));
            for (int y = ry0; y < std::min(h, ry0 + rh); ++y)
                for (int x = rx0; x < std::min(w, rx0 + rw); ++x)
                    for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
        } else {
            double cy = rs.uniform(0.0, h), cx = rs.uniform(0.0, w);
            double r = 2.0 + rs.uniform(0.0, std::max(2.0, h / 5.0));
            int y0 = std::max(0, static_cast<int>(cy - r)), y1 = std::min(h - 1, static_cast<int>(cy + r));
            int x0 = std::max(0, static_cast<int>(cx - r)), x1 = std::min(w - 1, static_cast<int>(cx + r));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x)
                    if (std::hypot(y - cy, x - cx) <= r)
                        for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
        }
    }
    // thin stripes for high-frequency content
    double stripe = 6.28 * rs.uniform(2.0, 5.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = 0.04 * std::sin(stripe * x / w + 3.0 * stripe * y / h);
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = clip01(img.at(y, x, c) + v);
        }
    return quantize8(img);
}

Manifest generate_corpus(const std::string& clean_dir, const std::string& out_dir,
                         const CorpusOptions& opt) {
    if (opt.kinds.empty()) throw ConfigError("generate_corpus: no kinds requested");
    if (opt.per_kind <= 0) throw ConfigError("generate_corpus: per_kind must be positive");
    if (opt.severity_lo < 0.0 || opt.severity_hi > 1.0 || opt.severity_lo > opt.severity_hi)
        throw ConfigError("generate_corpus: severity range must satisfy 0 <= lo <= hi <= 1");

    std::vector<std::string> cleans;
    if (!fs::is_directory(clean_dir)) throw DataError("clean_dir is not a directory: " + clean_dir);
    for (const auto& e : fs::directory_iterator(clean_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") cleans.push_back(e.path().string());
    std::sort(cleans.begin(), cleans.end());
    if (cleans.empty()) throw DataError("clean_dir has no .png images: " + clean_dir);

    fs::create_directories(fs::path(out_dir) / "degraded");

    Manifest m;
    m.root = out_dir;
    for (Kind kind : opt.kinds) {
        const std::string kname = to_string(kind);
        for (int i = 0; i < opt.per_kind; ++i) {
            const std::string& clean_path = cleans[static_cast<size_t>(i) % cleans.size()];
            RandomStream sev_rs = RandomStream::keyed(opt.seed, "corpus-severity",
                                                      RandomStream::hash_str(kname),
                                                      static_cast<uint64_t>(i));
            DegradationSpec spec;
            spec.kind = kind;
            spec.severity = sev_rs.uniform(opt.severity_lo, opt.severity_hi);
            spec.seed = RandomStream::keyed(opt.seed, "corpus-element",
                                            RandomStream::hash_str(kname),
                                            static_cast<uint64_t>(i))
                            .key();
            Tensor clean = read_png(clean_path);
            Tensor degraded = apply_degradation(clean, spec);

            std::string stem = fs::path(clean_path).stem().string();
            std::string rel = "degraded/" + kname + "_" + std::to_string(i) + "_" + stem + ".png";
            write_png((fs::path(out_dir) / rel).string(), degraded);

            ManifestRow row;
            row.degraded = rel;
            row.clean = fs::absolute(clean_path).lexically_normal().string();
            row.kind = kname;
            row.severity = spec.severity;
            row.seed = spec.seed;
            m.rows.push_back(std::move(row));
        }
    }
    save_manifest(m, (fs::path(out_dir) / "manifest.csv").string());
    return m;
}

}  // namespace awr::synth
