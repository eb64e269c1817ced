#include "hazeprop/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hazeprop/rng.hpp"

namespace hazeprop {

void HazeRecipe::validate() const {
    if (a < 0.7 || a > 1.0) throw std::invalid_argument("HazeRecipe: a outside [0.7, 1.0]");
    if (beta < 0.7 || beta > 1.2)
        throw std::invalid_argument("HazeRecipe: beta outside [0.7, 1.2]");
    if (crop < 1) throw std::invalid_argument("HazeRecipe: crop must be positive");
}

void UnderwaterRecipe::validate() const {
    const double b_lo[3] = {0.05, 0.6, 0.7}, b_hi[3] = {0.2, 0.8, 1.0};
    const double beta_lo[3] = {0.05, 0.6, 0.7}, beta_hi[3] = {0.15, 0.9, 1.0};
    for (int c = 0; c < 3; ++c) {
        if (b[c] < b_lo[c] || b[c] > b_hi[c])
            throw std::invalid_argument("UnderwaterRecipe: background light outside range");
        if (beta[c] < beta_lo[c] || beta[c] > beta_hi[c])
            throw std::invalid_argument("UnderwaterRecipe: extinction outside range");
    }
    if (crop < 1) throw std::invalid_argument("UnderwaterRecipe: crop must be positive");
}

DepthKind depth_kind_from_string(const std::string& s) {
    if (s == "ramp") return DepthKind::ramp;
    if (s == "radial") return DepthKind::radial;
    if (s == "steps") return DepthKind::steps;
    if (s == "perlin") return DepthKind::perlin;
    throw std::invalid_argument("unknown depth kind: " + s);
}

namespace {

constexpr double kDepthMin = 0.5;
constexpr double kDepthMax = 5.0;

// Smooth value noise: bilinear interpolation of a coarse seeded lattice,
// summed over a few octaves.
ScalarField value_noise(int height, int width, uint64_t seed, int base_cell) {
    ScalarField out(height, width, 0.0);
    Rng rng(seed);
    double amplitude = 1.0, total = 0.0;
    int cell = base_cell;
    for (int octave = 0; octave < 3; ++octave) {
        const int gh = height / cell + 2, gw = width / cell + 2;
        std::vector<double> lattice(static_cast<size_t>(gh) * gw);
        for (auto& v : lattice) v = rng.next_double();
        for (int i = 0; i < height; ++i) {
            const double fi = static_cast<double>(i) / cell;
            const int i0 = static_cast<int>(fi);
            const double wi = fi - i0;
            for (int j = 0; j < width; ++j) {
                const double fj = static_cast<double>(j) / cell;
                const int j0 = static_cast<int>(fj);
                const double wj = fj - j0;
                const double v00 = lattice[static_cast<size_t>(i0) * gw + j0];
                const double v01 = lattice[static_cast<size_t>(i0) * gw + j0 + 1];
                const double v10 = lattice[static_cast<size_t>(i0 + 1) * gw + j0];
                const double v11 = lattice[static_cast<size_t>(i0 + 1) * gw + j0 + 1];
                const double v = (1 - wi) * ((1 - wj) * v00 + wj * v01) +
                                 wi * ((1 - wj) * v10 + wj * v11);
                out(i, j) += amplitude * v;
            }
        }
        total += amplitude;
        amplitude *= 0.5;
        cell = std::max(2, cell / 2);
    }
    for (size_t i = 0; i < out.size(); ++i) out.at(i) /= total;
    return out;
}

void rescale_to(ScalarField& f, double lo, double hi) {
    const double fmin = f.min_value(), fmax = f.max_value();
    const double span = fmax - fmin;
    for (size_t i = 0; i < f.size(); ++i)
        f.at(i) = span > 0 ? lo + (hi - lo) * (f.at(i) - fmin) / span : 0.5 * (lo + hi);
}

}  // namespace

ScalarField procedural_depth(DepthKind kind, int height, int width, uint64_t seed) {
    if (height < 8 || width < 8)
        throw std::invalid_argument("procedural_depth: minimum size is 8x8");
    ScalarField d(height, width);
    switch (kind) {
        case DepthKind::ramp:
            for (int i = 0; i < height; ++i)
                for (int j = 0; j < width; ++j)
                    d(i, j) = kDepthMin +
                              (kDepthMax - kDepthMin) * j / std::max(1, width - 1);
            break;
        case DepthKind::radial: {
            const double ci = (height - 1) / 2.0, cj = (width - 1) / 2.0;
            const double rmax = std::hypot(ci, cj);
            for (int i = 0; i < height; ++i)
                for (int j = 0; j < width; ++j)
                    d(i, j) = kDepthMin +
                              (kDepthMax - kDepthMin) * std::hypot(i - ci, j - cj) / rmax;
            break;
        }
        case DepthKind::steps: {
            Rng rng(seed);
            const int bands = 4 + static_cast<int>(rng.next_below(4));
            std::vector<double> level(bands);
            for (auto& v : level) v = rng.uniform(kDepthMin, kDepthMax);
            const bool vertical = rng.next_below(2) == 0;
            for (int i = 0; i < height; ++i)
                for (int j = 0; j < width; ++j) {
                    const int band = vertical ? j * bands / width : i * bands / height;
                    d(i, j) = level[band];
                }
            break;
        }
        case DepthKind::perlin:
            d = value_noise(height, width, seed, std::max(8, std::min(height, width) / 4));
            rescale_to(d, kDepthMin, kDepthMax);
            break;
    }
    return d;
}

ImageRGB procedural_scene(int height, int width, uint64_t seed) {
    Rng rng(seed);
    ImageRGB img(height, width);

    // Base: smooth illumination gradient in a random direction per channel hue.
    double base[3];
    for (double& b : base) b = rng.uniform(0.25, 0.75);
    const double gi = rng.uniform(-0.25, 0.25), gj = rng.uniform(-0.25, 0.25);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < height; ++i)
            for (int j = 0; j < width; ++j)
                img.channel(c)(i, j) = base[c] + gi * (static_cast<double>(i) / height - 0.5) +
                                       gj * (static_cast<double>(j) / width - 0.5);

    // Overlapping rectangles and disks with their own colors.
    const int shapes = 6 + static_cast<int>(rng.next_below(5));
    for (int s = 0; s < shapes; ++s) {
        double color[3];
        for (double& v : color) v = rng.next_double();
        const bool disk = rng.next_below(2) == 0;
        const int ci = static_cast<int>(rng.next_below(height));
        const int cj = static_cast<int>(rng.next_below(width));
        const int ri = 4 + static_cast<int>(rng.next_below(std::max(2, height / 3)));
        const int rj = 4 + static_cast<int>(rng.next_below(std::max(2, width / 3)));
        const double blend = rng.uniform(0.55, 0.95);
        for (int i = std::max(0, ci - ri); i < std::min(height, ci + ri); ++i)
            for (int j = std::max(0, cj - rj); j < std::min(width, cj + rj); ++j) {
                if (disk) {
                    const double di = static_cast<double>(i - ci) / ri;
                    const double dj = static_cast<double>(j - cj) / rj;
                    if (di * di + dj * dj > 1.0) continue;
                }
                for (int c = 0; c < 3; ++c)
                    img.channel(c)(i, j) =
                        (1 - blend) * img.channel(c)(i, j) + blend * color[c];
            }
    }

    // Half the scenes carry a large bright region (sky band or pale wall),
    // the classical failure case of dark-pixel priors; without them the
    // synthetic distribution is unrealistically easy for those baselines.
    if (rng.next_below(2) == 0) {
        const bool band = rng.next_below(2) == 0;
        const double level = rng.uniform(0.85, 0.97);
        if (band) {
            const int rows = height / 4 + static_cast<int>(rng.next_below(height / 4 + 1));
            for (int c = 0; c < 3; ++c)
                for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < width; ++j)
                        img.channel(c)(i, j) =
                            level - 0.05 * i / std::max(1, rows - 1);
        } else {
            const int ci = static_cast<int>(rng.next_below(height));
            const int cj = static_cast<int>(rng.next_below(width));
            const int ri = height / 3 + static_cast<int>(rng.next_below(height / 4 + 1));
            const int rj = width / 3 + static_cast<int>(rng.next_below(width / 4 + 1));
            for (int i = std::max(0, ci - ri); i < std::min(height, ci + ri); ++i)
                for (int j = std::max(0, cj - rj); j < std::min(width, cj + rj); ++j) {
                    const double di = static_cast<double>(i - ci) / ri;
                    const double dj = static_cast<double>(j - cj) / rj;
                    if (di * di + dj * dj > 1.0) continue;
                    for (int c = 0; c < 3; ++c) img.channel(c)(i, j) = level;
                }
        }
    }

    // Mild texture so patches are not exactly piecewise constant.
    const ScalarField grain = value_noise(height, width, rng.next_u64(), 6);
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < img.pixel_count(); ++i)
            img.channel(c).at(i) += 0.08 * (grain.at(i) - 0.5);

    // Stretch to a photographic range with genuine shadows; priors derived
    // from channel extremes need the dark end to exist.
    double lo = 1.0, hi = 0.0;
    for (int c = 0; c < 3; ++c) {
        lo = std::min(lo, img.channel(c).min_value());
        hi = std::max(hi, img.channel(c).max_value());
    }
    const double span = hi - lo;
    if (span > 1e-9)
        for (int c = 0; c < 3; ++c)
            for (size_t i = 0; i < img.pixel_count(); ++i)
                img.channel(c).at(i) = 0.02 + 0.96 * (img.channel(c).at(i) - lo) / span;

    img.clamp(0.0, 1.0);
    return img;
}

namespace {

struct CropWindow {
    int i0, j0, size;
};

CropWindow pick_crop(int height, int width, int crop, Rng& rng) {
    if (crop > height || crop > width)
        throw std::invalid_argument("synth: source smaller than the requested crop");
    CropWindow w;
    w.size = crop;
    w.i0 = height == crop ? 0 : static_cast<int>(rng.next_below(height - crop + 1));
    w.j0 = width == crop ? 0 : static_cast<int>(rng.next_below(width - crop + 1));
    return w;
}

ScalarField crop_field(const ScalarField& f, const CropWindow& w) {
    ScalarField out(w.size, w.size);
    for (int i = 0; i < w.size; ++i)
        for (int j = 0; j < w.size; ++j) out(i, j) = f(w.i0 + i, w.j0 + j);
    return out;
}

ImageRGB crop_image(const ImageRGB& img, const CropWindow& w) {
    return ImageRGB(crop_field(img.channel(0), w), crop_field(img.channel(1), w),
                    crop_field(img.channel(2), w));
}

}  // namespace

HazySample synth_hazy(const ImageRGB& clean, const ScalarField& depth, const HazeRecipe& r) {
    r.validate();
    if (!clean.channel(0).same_shape(depth))
        throw std::invalid_argument("synth_hazy: image/depth shape mismatch");

    ScalarField t(depth.height(), depth.width());
    for (size_t i = 0; i < t.size(); ++i) t.at(i) = std::exp(-r.beta * depth.at(i));

    ImageRGB hazy(clean.height(), clean.width());
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < hazy.pixel_count(); ++i)
            hazy.channel(c).at(i) =
                clean.channel(c).at(i) * t.at(i) + r.a * (1.0 - t.at(i));

    Rng rng(r.seed);
    const int crop = std::min({r.crop, clean.height(), clean.width()});
    const CropWindow w = pick_crop(clean.height(), clean.width(), crop, rng);
    return {crop_image(hazy, w), crop_field(t, w)};
}

UnderwaterSample synth_underwater(const ImageRGB& clean, const ScalarField& depth,
                                  const UnderwaterRecipe& r) {
    r.validate();
    if (!clean.channel(0).same_shape(depth))
        throw std::invalid_argument("synth_underwater: image/depth shape mismatch");

    UnderwaterSample out;
    ImageRGB degraded(clean.height(), clean.width());
    ScalarField t_full[3] = {ScalarField(depth.height(), depth.width()),
                             ScalarField(depth.height(), depth.width()),
                             ScalarField(depth.height(), depth.width())};
    for (int c = 0; c < 3; ++c) {
        for (size_t i = 0; i < depth.size(); ++i) {
            const double t = std::exp(-r.beta[c] * depth.at(i));
            t_full[c].at(i) = t;
            degraded.channel(c).at(i) = clean.channel(c).at(i) * t + r.b[c] * (1.0 - t);
        }
    }

    Rng rng(r.seed);
    const int crop = std::min({r.crop, clean.height(), clean.width()});
    const CropWindow w = pick_crop(clean.height(), clean.width(), crop, rng);
    out.observation = crop_image(degraded, w);
    for (int c = 0; c < 3; ++c) out.transmission[c] = crop_field(t_full[c], w);
    return out;
}

std::vector<TrainingPair> build_dataset(
    const std::vector<std::pair<ImageRGB, ScalarField>>& sources, const DatasetOptions& opts) {
    if (sources.empty()) throw std::invalid_argument("build_dataset: no sources");
    if (opts.pair_count < 1) throw std::invalid_argument("build_dataset: pair count < 1");
    for (const auto& [img, depth] : sources)
        if (img.height() < opts.crop || img.width() < opts.crop)
            throw std::invalid_argument(
                "build_dataset: source smaller than the crop window (" +
                std::to_string(img.height()) + "x" + std::to_string(img.width()) + " vs " +
                std::to_string(opts.crop) + ")");

    Rng rng(opts.seed);
    std::vector<TrainingPair> pairs;
    pairs.reserve(opts.pair_count);
    for (int s = 0; s < opts.pair_count; ++s) {
        Rng item = rng.fork(s);
        const auto& [clean, depth] = sources[s % sources.size()];
        HazeRecipe recipe;
        recipe.a = item.uniform(opts.a_range[0], opts.a_range[1]);
        recipe.beta = item.uniform(opts.beta_range[0], opts.beta_range[1]);
        recipe.crop = opts.crop;
        recipe.seed = item.next_u64();
        HazySample sample = synth_hazy(clean, depth, recipe);
        pairs.push_back({std::move(sample.observation), std::move(sample.transmission)});
    }
    return pairs;
}

std::vector<std::pair<ImageRGB, ScalarField>> procedural_sources(int count, int height,
                                                                 int width, uint64_t seed) {
    std::vector<std::pair<ImageRGB, ScalarField>> sources;
    sources.reserve(count);
    Rng rng(seed);
    const DepthKind kinds[4] = {DepthKind::ramp, DepthKind::radial, DepthKind::steps,
                                DepthKind::perlin};
    for (int i = 0; i < count; ++i) {
        Rng item = rng.fork(i);
        const DepthKind kind = kinds[item.next_below(4)];
        ImageRGB scene = procedural_scene(height, width, item.next_u64());
        ScalarField depth = procedural_depth(kind, height, width, item.next_u64());
        sources.emplace_back(std::move(scene), std::move(depth));
    }
    return sources;
}

}  // namespace hazeprop
