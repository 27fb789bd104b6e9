#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tscam/box.hpp"
#include "tscam/image.hpp"
#include "tscam/rng.hpp"
#include "tscam/tensor.hpp"

namespace tscam {

struct DatasetRecord {
    std::string path;  // image path relative to the manifest directory
    index_t label = 0;
    std::vector<Box> boxes;  // original pixel coordinates
};

struct LoadedRecord {
    DatasetRecord meta;
    Tensor<float> image;  // [3,H,W] in [0,1]
};

// Synthetic WSOL set: one textured shape per image on a textured background,
// with neutral distractor blobs that carry no class signal. Shape kind and
// hue are class-specific; an opacity field lets parts of the shape fade into
// the background so that localization stays non-trivial.
struct SynthConfig {
    index_t num_classes = 4;
    index_t image_size = 64;
    index_t train_images = 400;
    index_t val_images = 100;
    index_t test_images = 200;
    double min_scale = 0.34;  // shape extent as a fraction of image size
    double max_scale = 0.56;
    index_t max_distractors = 2;
    double shape_alpha_lo = 0.45;
    double shape_alpha_hi = 1.0;
    bool multi_instance = false;
    std::uint64_t seed = 7;

    void validate() const;
};

struct RenderedRecord {
    Image image;
    std::vector<std::uint8_t> mask;  // shape coverage, image_size^2
    std::vector<Box> boxes;
    index_t label = 0;
};

// Splits are numbered train=0, val=1, test=2.
extern const char* const kSplitNames[3];

// Renders one record deterministically from (seed, split, index).
RenderedRecord render_record(const SynthConfig& config, int split, index_t index);

// Writes images/ plus train.jsonl / val.jsonl / test.jsonl and stats.json.
void generate(const SynthConfig& config, const std::filesystem::path& out_dir);

std::vector<DatasetRecord> read_manifest(const std::filesystem::path& manifest_path,
                                         index_t num_classes);

// Manifest plus decoded images; validates labels and boxes.
std::vector<LoadedRecord> load(const std::filesystem::path& manifest_path, index_t num_classes);

struct ChannelStats {
    std::array<double, 3> mean{0.5, 0.5, 0.5};
    std::array<double, 3> stddev{0.25, 0.25, 0.25};
};

void write_stats(const std::filesystem::path& dataset_dir, const ChannelStats& stats);
ChannelStats read_stats(const std::filesystem::path& dataset_dir);

enum class AugmentMode { Train, Eval };

struct AugmentConfig {
    index_t resize_to = 72;
    index_t crop_to = 64;
    ChannelStats stats;
};

// Train: resize, random crop, random horizontal flip, normalize.
// Eval: resize, center crop, normalize. rng may be null in eval mode.
Tensor<float> augment(const Tensor<float>& image, AugmentMode mode, const AugmentConfig& config,
                      Rng* rng);

// Affine box transfer between original coordinates and the eval-time
// resize + center-crop input frame. Square images only.
Box map_box_to_input(const Box& b, index_t orig_size, index_t resize_to, index_t crop_to);
Box map_box_to_original(const Box& b, index_t orig_size, index_t resize_to, index_t crop_to);

}  // namespace tscam
