#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "tscam/dataset.hpp"
#include "tscam/optim.hpp"
#include "tscam/vit.hpp"

namespace tscam {

struct TrainConfig {
    index_t epochs = 20;
    index_t batch_size = 32;
    AdamWConfig adamw;
    double clip_norm = 1.0;      // global gradient norm clip; <= 0 disables
    double aux_cls_weight = 1.0; // class-token loss weight alongside the map loss
    index_t threads = 1;
    std::uint64_t seed = 7;
    AugmentConfig augment;
};

struct EpochLog {
    index_t epoch = 0;
    double train_loss = 0.0;
    double val_top1 = 0.0;  // classification accuracy, percent
    double lr = 0.0;
};

struct Checkpoint {
    VitParams<float> params;
    AugmentConfig augment;
    bool has_optimizer = false;
    AdamWConfig optimizer_config;
    index_t optimizer_step = 0;
    std::map<std::string, Tensor<float>> moment1;
    std::map<std::string, Tensor<float>> moment2;
};

void save_checkpoint(const std::filesystem::path& path, const VitParams<float>& params,
                     const AugmentConfig& augment, const AdamW<float>* optimizer = nullptr);

// expected_config, when given, must match the stored one.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const VitConfig* expected_config = nullptr);

void restore_optimizer(AdamW<float>& optimizer, const Checkpoint& checkpoint);

// Minimizes the semantic re-allocation loss over shuffled mini-batches.
// Per-image gradients are always reduced in batch order, so results are
// bit-identical for any thread count.
class Trainer {
public:
    Trainer(VitParams<float> params, TrainConfig config, std::vector<LoadedRecord> train_set,
            std::vector<LoadedRecord> val_set);

    // Mean training loss over the epoch; throws DivergenceError on a
    // non-finite loss or gradient.
    double run_epoch(index_t epoch);

    // Top-1 classification accuracy (percent) on the validation set.
    double validate() const;

    double lr_at(index_t epoch) const;
    std::vector<index_t> epoch_order(index_t epoch) const;

    VitParams<float>& params() { return params_; }
    const VitParams<float>& params() const { return params_; }
    AdamW<float>& optimizer() { return optimizer_; }

private:
    VitParams<float> params_;
    TrainConfig config_;
    std::vector<LoadedRecord> train_set_;
    std::vector<LoadedRecord> val_set_;
    std::vector<std::pair<std::string, Var<float>>> named_;
    AdamW<float> optimizer_;
};

struct TrainResult {
    std::vector<EpochLog> log;
    index_t best_epoch = 0;
    double best_val_top1 = 0.0;
    std::filesystem::path best_checkpoint;
    std::filesystem::path final_checkpoint;
};

// Full run: loads the dataset splits, trains, writes log.jsonl plus
// best.ckpt / final.ckpt under out_dir.
TrainResult train(const VitConfig& config, HeadVariant variant,
                  const std::filesystem::path& data_dir, const TrainConfig& train_config,
                  const std::filesystem::path& out_dir);

}  // namespace tscam
