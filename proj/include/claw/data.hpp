#pragma once

// Dataset handling: PNG pair ingestion, deterministic splitting, resizing,
// and the synthetic curvilinear-vessel generator that stands in for clinical
// data.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "claw/model.hpp"

namespace claw {

struct Sample {
    Tensor4<float> image;  // (1, channels, h, w), values in [0, 1]
    BinaryMask mask;
    std::string id;
};

struct SynthSpec {
    index_t size = 128;
    index_t vessel_count_min = 3;
    index_t vessel_count_max = 7;
    double width_min = 2.0;  // stroke width in pixels, >= 1
    double width_max = 5.0;
    // 1.0 keeps the middle control point uniform in the frame; smaller values
    // pull it toward the chord and flatten the curves.
    double curvature_scale = 1.0;
    double noise_sigma = 0.03;
    double vessel_intensity_min = 0.65;
    double vessel_intensity_max = 0.95;
    double background_min = 0.05;
    double background_max = 0.35;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Loads an image/mask PNG pair. The image scales to [0,1]; the mask must be
/// strictly {0, 255} valued, 255 mapping to foreground.
Sample load_pair(const std::string& image_path, const std::string& mask_path);

/// Writes `images/<id>.png` and `masks/<id>.png` under dir.
void save_sample(const std::string& dir, const Sample& sample);

/// Bilinear image resize, nearest-neighbor mask resize (masks stay binary).
Sample resize_to(const Sample& sample, index_t size);

/// Deterministic shuffle + floor split; the remainder goes to the train side.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t count, index_t ratio_train, index_t ratio_test, std::uint64_t seed);

std::pair<std::vector<Sample>, std::vector<Sample>> split(std::vector<Sample> dataset,
                                                          index_t ratio_train,
                                                          index_t ratio_test,
                                                          std::uint64_t seed);

/// Draws `count` samples, each fully determined by (spec.seed, index): a few
/// quadratic Bezier strokes of linearly varying width over a low-frequency
/// background field plus Gaussian noise.
std::vector<Sample> synth_generate(const SynthSpec& spec, index_t count);

/// synth_generate + save_sample for each, plus a `spec.txt` key=value record.
void write_synth_dataset(const std::string& dir, const SynthSpec& spec, index_t count);

/// Loads every image/mask pair under dir (layout images/<id>.png,
/// masks/<id>.png), sorted by id.
std::vector<Sample> load_dataset(const std::string& dir);

/// Adapts sample channel count to what a model expects: gray replicates,
/// rgb collapses to its mean. Returns the tensor only.
Tensor4<float> adapt_channels(const Tensor4<float>& image, index_t channels);

/// Stacks samples into a batch tensor pair (inputs, {0,1} targets).
std::pair<Tensor4<float>, Tensor4<float>> make_batch(const std::vector<const Sample*>& samples,
                                                     index_t input_channels);

}  // namespace claw
