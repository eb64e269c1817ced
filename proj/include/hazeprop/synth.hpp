#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hazeprop/field.hpp"
#include "hazeprop/training.hpp"

namespace hazeprop {

/// Scattering recipe for one hazy pair: gray airlight a, extinction beta.
struct HazeRecipe {
    double a = 0.85;      // in [0.7, 1.0]
    double beta = 1.0;    // in [0.7, 1.2]
    int crop = 180;
    uint64_t seed = 0;

    void validate() const;
};

/// Per-channel underwater recipe: background light and extinction per channel.
struct UnderwaterRecipe {
    double b[3] = {0.1, 0.7, 0.85};     // B_r in [0.05,0.2], B_g in [0.6,0.8], B_b in [0.7,1.0]
    double beta[3] = {0.1, 0.75, 0.85}; // beta_r in [0.05,0.15], beta_g in [0.6,0.9], beta_b in [0.7,1.0]
    int crop = 180;
    uint64_t seed = 0;

    void validate() const;
};

enum class DepthKind { ramp, radial, steps, perlin };

DepthKind depth_kind_from_string(const std::string& s);

/// Deterministic depth field in [0.5, 5.0] length units.
ScalarField procedural_depth(DepthKind kind, int height, int width, uint64_t seed);

/// Deterministic clean test scene: overlapping soft shapes, shading, and mild
/// texture. Stands in for photographic content so the repository needs no
/// external datasets.
ImageRGB procedural_scene(int height, int width, uint64_t seed);

struct HazySample {
    ImageRGB observation;
    ScalarField transmission;
};

struct UnderwaterSample {
    ImageRGB observation;
    ScalarField transmission[3];
};

/// Forward scattering synthesis: t = exp(-beta d), I = J t + a (1 - t).
/// A crop window (seeded, identical for image and map) is applied last when
/// crop is smaller than the input.
HazySample synth_hazy(const ImageRGB& clean, const ScalarField& depth, const HazeRecipe& r);

/// Per-channel variant with channel background light and extinction.
UnderwaterSample synth_underwater(const ImageRGB& clean, const ScalarField& depth,
                                  const UnderwaterRecipe& r);

struct DatasetOptions {
    int pair_count = 50;
    int crop = 180;
    uint64_t seed = 0;
    double a_range[2] = {0.7, 1.0};
    double beta_range[2] = {0.7, 1.2};
};

/// Sample recipes uniformly from the declared ranges and synthesize pairs
/// from the given (clean image, depth) sources, cycling through them.
std::vector<TrainingPair> build_dataset(
    const std::vector<std::pair<ImageRGB, ScalarField>>& sources, const DatasetOptions& opts);

/// Fully procedural sources: scenes and depth maps derived from the seed.
std::vector<std::pair<ImageRGB, ScalarField>> procedural_sources(int count, int height,
                                                                 int width, uint64_t seed);

}  // namespace hazeprop
