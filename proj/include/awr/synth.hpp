#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "awr/data.hpp"
#include "awr/rng.hpp"
#include "awr/tensor.hpp"

namespace awr::synth {

enum class Kind { rain_streak, haze, snow, raindrop };

const std::vector<std::string>& kind_names();
std::string to_string(Kind k);
Kind kind_from_string(const std::string& s);  // throws ConfigError on unknown

// What to apply to a clean image. Identical spec on an identical image
// always yields a bit-identical result; randomness comes from a
// counter stream keyed by (seed, kind, streak/flake/drop index).
struct DegradationSpec {
    Kind kind = Kind::haze;
    double severity = 0.0;  // in [0,1]
    uint64_t seed = 0;
};

struct PairedSample {
    Tensor clean;
    Tensor degraded;
    DegradationSpec spec;
};

// Uniform atmospheric veil: out = clean*t + A*(1-t), t = 1 - 0.9*severity, A = 0.9.
Tensor apply_haze(const Tensor& clean, const DegradationSpec& spec);
// Additive oriented bright streaks; count and opacity scale linearly with severity.
Tensor apply_rain_streak(const Tensor& clean, const DegradationSpec& spec);
// White flake overlay; density and flake size scale with severity.
Tensor apply_snow(const Tensor& clean, const DegradationSpec& spec);
// Local-only effect: elliptical regions replaced by blurred + brightened
// content; pixels outside the drops are bit-equal to the input.
Tensor apply_raindrop(const Tensor& clean, const DegradationSpec& spec);

// Dispatch on spec.kind.
Tensor apply_degradation(const Tensor& clean, const DegradationSpec& spec);

// Deterministic element counts the generators commit to, exposed so tests
// and tools can audit severity scaling without re-deriving it.
int rain_streak_count(const DegradationSpec& spec, int h, int w);
int snow_flake_count(const DegradationSpec& spec, int h, int w);
int raindrop_count(const DegradationSpec& spec);

// Procedural clean test scene (gradients + shapes), deterministic in index.
Tensor make_scene(uint64_t index, int h, int w);

struct CorpusOptions {
    std::vector<Kind> kinds = {Kind::rain_streak, Kind::haze, Kind::snow, Kind::raindrop};
    int per_kind = 4;             // degraded images per kind; clean images cycle
    double severity_lo = 0.25;
    double severity_hi = 0.9;
    uint64_t seed = 0;
};

// Degrades PNGs from clean_dir into out_dir/degraded/ and writes
// out_dir/manifest.csv. Returns the manifest (root = out_dir).
Manifest generate_corpus(const std::string& clean_dir, const std::string& out_dir,
                         const CorpusOptions& opt);

}  // namespace awr::synth
