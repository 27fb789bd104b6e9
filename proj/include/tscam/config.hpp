#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tscam/dataset.hpp"
#include "tscam/train.hpp"
#include "tscam/vit.hpp"

namespace tscam {

// Flat key = value table shared by the config file and the --kebab-case
// flags. Unknown keys are rejected and every value is type-checked.
struct RunConfig {
    // model
    index_t image_size = 64;
    index_t patch_size = 8;
    index_t depth = 4;
    index_t heads = 4;
    index_t embed_dim = 64;
    double mlp_ratio = 4.0;
    index_t num_classes = 4;
    std::string head_variant = "conv2d";

    // synthetic dataset
    index_t train_images = 400;
    index_t val_images = 100;
    index_t test_images = 200;
    index_t max_distractors = 2;
    double min_scale = 0.34;
    double max_scale = 0.56;
    double shape_alpha_lo = 0.45;
    double shape_alpha_hi = 1.0;
    bool multi_instance = false;

    // training
    index_t epochs = 20;
    index_t batch_size = 32;
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    double weight_decay = 5e-4;
    double clip_norm = 1.0;
    double aux_cls_weight = 1.0;
    index_t resize_to = 72;
    index_t crop_to = 64;

    // localization
    double tau = 0.4;
    index_t layer_lo = 1;
    index_t layer_hi = 0;  // 0 resolves to the model depth
    std::string mode = "tscam";
    std::string class_selector = "top1";  // top1 | gt | all-top5
    std::string target = "pos-embed";     // pos-embed | patch-tokens
    index_t label = -1;
    std::string thresholds = "0.3,0.5,0.7";

    // run
    std::uint64_t seed = 7;
    index_t threads = 1;

    // paths
    std::string out;
    std::string data_dir;
    std::string checkpoint;
    std::string image;
    std::string manifest;
    std::string pred;
    std::string gt;

    VitConfig vit() const;
    SynthConfig synth() const;
    TrainConfig trainer() const;  // stats left at defaults; train() fills them

    index_t resolved_layer_hi() const { return layer_hi > 0 ? layer_hi : depth; }
};

// Parses "key = value" lines; '#' starts a comment. Unknown keys and type
// mismatches raise ParseError with the line number.
void parse_config_file(const std::filesystem::path& path, RunConfig* config);

// Applies --kebab-case overrides ("--epochs 5" or "--epochs=5"). Returns
// usage errors for unknown flags or missing values.
void apply_flags(const std::vector<std::string>& args, RunConfig* config);

// Full effective config, one "key = value" line per entry.
std::string render_config(const RunConfig& config);

// All known keys, in render order.
std::vector<std::string> config_keys();

}  // namespace tscam
