#include "tscam/train.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include "tscam/container.hpp"
#include "tscam/head.hpp"

namespace tscam {

namespace {

constexpr std::uint64_t kShuffleStream = 1ULL << 56;
constexpr std::uint64_t kAugmentStream = 2ULL << 56;

struct ImageResult {
    double loss = 0.0;
    std::vector<Tensor<float>> grads;  // aligned with named parameter order
};

// One forward/backward pass on a worker-local parameter copy.
ImageResult compute_image(const VitParams<float>& worker, const TrainConfig& config,
                          const LoadedRecord& rec, Rng aug_rng) {
    Tensor<float> input = augment(rec.image, AugmentMode::Train, config.augment, &aug_rng);
    const VitConfig& cfg = worker.config;

    Tape<float> tape;
    VitForward<float> fwd = vit_forward(tape, input, worker);
    Var<float> patch_tokens = slice_rows(tape, fwd.tokens, 1, cfg.num_patches() + 1);
    Var<float> maps = semantic_maps(tape, patch_tokens, worker.head_kernel, worker.head_variant,
                                    cfg.grid(), cfg.grid());
    Var<float> loss = semantic_loss(tape, maps, rec.meta.label);
    if (config.aux_cls_weight > 0.0) {
        Var<float> aux = classification_loss(tape, fwd.tokens, worker, rec.meta.label);
        loss = add(tape, loss, scale(tape, aux, static_cast<float>(config.aux_cls_weight)));
    }
    tape.backward(loss);

    ImageResult result;
    result.loss = static_cast<double>(loss->value[0]);
    for (const auto& [name, var] : worker.named_params()) {
        (void)name;
        result.grads.push_back(var->grad);
    }
    return result;
}

}  // namespace

Trainer::Trainer(VitParams<float> params, TrainConfig config, std::vector<LoadedRecord> train_set,
                 std::vector<LoadedRecord> val_set)
    : params_(std::move(params)),
      config_(std::move(config)),
      train_set_(std::move(train_set)),
      val_set_(std::move(val_set)),
      named_(params_.named_params()),
      optimizer_(params_.named_params(), config_.adamw) {
    if (config_.augment.crop_to != params_.config.image_size) {
        throw ConfigError("augment crop size " + std::to_string(config_.augment.crop_to) +
                          " does not match model input size " +
                          std::to_string(params_.config.image_size));
    }
    if (train_set_.empty()) {
        throw ConfigError("training set is empty");
    }
    if (config_.batch_size <= 0 || config_.epochs <= 0) {
        throw ConfigError("batch size and epoch count must be positive");
    }
}

double Trainer::lr_at(index_t epoch) const {
    // Cosine decay to zero across the run.
    const double t = static_cast<double>(epoch) / static_cast<double>(config_.epochs);
    return config_.adamw.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * t));
}

std::vector<index_t> Trainer::epoch_order(index_t epoch) const {
    std::vector<index_t> order(train_set_.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = static_cast<index_t>(i);
    }
    Rng rng = Rng(config_.seed).fork(kShuffleStream | static_cast<std::uint64_t>(epoch));
    for (index_t i = static_cast<index_t>(order.size()) - 1; i > 0; --i) {
        const index_t j = rng.uniform_int(0, i + 1);
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    return order;
}

double Trainer::run_epoch(index_t epoch) {
    const std::vector<index_t> order = epoch_order(epoch);
    const double lr_now = lr_at(epoch);
    const Rng root(config_.seed);

    double epoch_loss = 0.0;
    index_t seen = 0;

    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
        const std::size_t batch_end = std::min(order.size(), start + config_.batch_size);
        const std::size_t batch_n = batch_end - start;
        std::vector<ImageResult> results(batch_n);

        auto worker_fn = [&](std::size_t lo, std::size_t hi) {
            if (lo >= hi) {
                return;
            }
            VitParams<float> local = params_.clone();
            const auto local_named = local.named_params();
            for (std::size_t b = lo; b < hi; ++b) {
                const index_t pos = static_cast<index_t>(start + b);
                const LoadedRecord& rec = train_set_[static_cast<std::size_t>(order[start + b])];
                Rng aug_rng = root.fork(kAugmentStream |
                                        (static_cast<std::uint64_t>(epoch) << 24) |
                                        static_cast<std::uint64_t>(pos));
                results[b] = compute_image(local, config_, rec, aug_rng);
                for (const auto& [name, var] : local_named) {
                    (void)name;
                    for (float& g : var->grad.values()) {
                        g = 0.0f;
                    }
                }
            }
        };

        const std::size_t threads =
            std::max<std::size_t>(1, std::min<std::size_t>(config_.threads, batch_n));
        if (threads == 1) {
            worker_fn(0, batch_n);
        } else {
            std::vector<std::thread> pool;
            const std::size_t per = (batch_n + threads - 1) / threads;
            for (std::size_t t = 0; t < threads; ++t) {
                const std::size_t lo = t * per;
                const std::size_t hi = std::min(batch_n, lo + per);
                pool.emplace_back(worker_fn, lo, hi);
            }
            for (auto& th : pool) {
                th.join();
            }
        }

        // Reduce in batch order; thread count does not affect the sums.
        optimizer_.zero_grad();
        double batch_loss = 0.0;
        const float inv_batch = 1.0f / static_cast<float>(batch_n);
        for (std::size_t b = 0; b < batch_n; ++b) {
            batch_loss += results[b].loss;
            for (std::size_t p = 0; p < named_.size(); ++p) {
                const Tensor<float>& src = results[b].grads[p];
                Tensor<float>& dst = named_[p].second->grad;
                for (index_t i = 0; i < dst.size(); ++i) {
                    dst[i] += src[i];
                }
            }
        }
        batch_loss /= static_cast<double>(batch_n);
        if (!std::isfinite(batch_loss)) {
            throw DivergenceError("training loss is non-finite at epoch " +
                                  std::to_string(epoch));
        }

        double norm_sq = 0.0;
        for (auto& [name, var] : named_) {
            (void)name;
            for (float& g : var->grad.values()) {
                g *= inv_batch;
                norm_sq += static_cast<double>(g) * static_cast<double>(g);
            }
        }
        if (config_.clip_norm > 0.0) {
            const double norm = std::sqrt(norm_sq);
            if (norm > config_.clip_norm) {
                const float scale = static_cast<float>(config_.clip_norm / norm);
                for (auto& [name, var] : named_) {
                    (void)name;
                    for (float& g : var->grad.values()) {
                        g *= scale;
                    }
                }
            }
        }

        optimizer_.step(lr_now);
        epoch_loss += batch_loss * static_cast<double>(batch_n);
        seen += static_cast<index_t>(batch_n);
    }
    return epoch_loss / static_cast<double>(seen);
}

double Trainer::validate() const {
    if (val_set_.empty()) {
        return 0.0;
    }
    index_t correct = 0;
    for (const LoadedRecord& rec : val_set_) {
        Tensor<float> input = augment(rec.image, AugmentMode::Eval, config_.augment, nullptr);
        InferenceOutput out = run_inference(input, params_, 1, params_.config.depth);
        if (out.ranking[0] == rec.meta.label) {
            ++correct;
        }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(val_set_.size());
}

void save_checkpoint(const std::filesystem::path& path, const VitParams<float>& params,
                     const AugmentConfig& augment, const AdamW<float>* optimizer) {
    TensorContainer container;
    for (const auto& [name, var] : params.named_params()) {
        container.put(name, var->value);
    }
    nlohmann::json cfg = params.config.to_json();
    cfg["head_variant"] = head_variant_name(params.head_variant);
    container.meta["config"] = cfg;
    container.meta["normalization"] = {{"mean", augment.stats.mean},
                                       {"std", augment.stats.stddev},
                                       {"resize_to", augment.resize_to},
                                       {"crop_to", augment.crop_to}};
    if (optimizer) {
        const AdamWConfig& oc = optimizer->config();
        container.meta["optim"] = {{"t", optimizer->step_count()}, {"lr", oc.lr},
                                   {"beta1", oc.beta1},            {"beta2", oc.beta2},
                                   {"eps", oc.eps},                {"weight_decay", oc.weight_decay}};
        const auto& opt_params = optimizer->params();
        for (std::size_t i = 0; i < opt_params.size(); ++i) {
            container.put("optim.m." + opt_params[i].first, optimizer->moment1(i));
            container.put("optim.v." + opt_params[i].first, optimizer->moment2(i));
        }
    }
    container.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const VitConfig* expected_config) {
    TensorContainer container = TensorContainer::load(path);
    if (!container.meta.contains("config")) {
        throw FormatError("checkpoint '" + path.string() + "' is missing its config");
    }
    Checkpoint ck;
    const nlohmann::json& cfg = container.meta["config"];
    const VitConfig vit_config = VitConfig::from_json(cfg);
    if (expected_config && !(vit_config == *expected_config)) {
        throw ConfigError("checkpoint '" + path.string() +
                          "' was trained with a different model configuration");
    }
    const HeadVariant variant =
        head_variant_from_name(cfg.value("head_variant", std::string("conv2d")));

    // Reconstruct with the right shapes, then overwrite every tensor.
    ck.params = init_params<float>(vit_config, variant, 0);
    for (auto& [name, var] : ck.params.named_params()) {
        if (!container.contains(name)) {
            throw FormatError("checkpoint '" + path.string() + "' is missing tensor '" + name +
                              "'");
        }
        const Tensor<float>& stored = container.get<float>(name);
        if (!stored.same_shape(var->value)) {
            throw ConfigError("checkpoint tensor '" + name + "' has shape " +
                              shape_str(stored.shape()) + ", expected " +
                              shape_str(var->value.shape()));
        }
        var->value = stored;
    }

    if (container.meta.contains("normalization")) {
        const nlohmann::json& n = container.meta["normalization"];
        ck.augment.stats.mean = n.at("mean").get<std::array<double, 3>>();
        ck.augment.stats.stddev = n.at("std").get<std::array<double, 3>>();
        ck.augment.resize_to = n.at("resize_to").get<index_t>();
        ck.augment.crop_to = n.at("crop_to").get<index_t>();
    }
    if (container.meta.contains("optim")) {
        const nlohmann::json& o = container.meta["optim"];
        ck.has_optimizer = true;
        ck.optimizer_step = o.at("t").get<index_t>();
        ck.optimizer_config.lr = o.at("lr").get<double>();
        ck.optimizer_config.beta1 = o.at("beta1").get<double>();
        ck.optimizer_config.beta2 = o.at("beta2").get<double>();
        ck.optimizer_config.eps = o.at("eps").get<double>();
        ck.optimizer_config.weight_decay = o.at("weight_decay").get<double>();
        for (const auto& [name, var] : ck.params.named_params()) {
            (void)var;
            ck.moment1[name] = container.get<float>("optim.m." + name);
            ck.moment2[name] = container.get<float>("optim.v." + name);
        }
    }
    return ck;
}

void restore_optimizer(AdamW<float>& optimizer, const Checkpoint& checkpoint) {
    if (!checkpoint.has_optimizer) {
        throw ConfigError("checkpoint has no optimizer state");
    }
    optimizer.set_step_count(checkpoint.optimizer_step);
    const auto& params = optimizer.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        optimizer.moment1(i) = checkpoint.moment1.at(params[i].first);
        optimizer.moment2(i) = checkpoint.moment2.at(params[i].first);
    }
}

TrainResult train(const VitConfig& config, HeadVariant variant,
                  const std::filesystem::path& data_dir, const TrainConfig& train_config,
                  const std::filesystem::path& out_dir) {
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);

    TrainConfig tc = train_config;
    tc.augment.stats = read_stats(data_dir);

    std::vector<LoadedRecord> train_set = load(data_dir / "train.jsonl", config.num_classes);
    std::vector<LoadedRecord> val_set = load(data_dir / "val.jsonl", config.num_classes);

    Trainer trainer(init_params<float>(config, variant, tc.seed), tc, std::move(train_set),
                    std::move(val_set));

    TrainResult result;
    result.best_checkpoint = out_dir / "best.ckpt";
    result.final_checkpoint = out_dir / "final.ckpt";
    result.best_val_top1 = -1.0;

    std::ofstream log_file(out_dir / "log.jsonl");
    if (!log_file) {
        throw IoError("cannot open '" + (out_dir / "log.jsonl").string() + "' for writing");
    }

    for (index_t epoch = 0; epoch < tc.epochs; ++epoch) {
        EpochLog entry;
        entry.epoch = epoch;
        entry.lr = trainer.lr_at(epoch);
        entry.train_loss = trainer.run_epoch(epoch);
        entry.val_top1 = trainer.validate();
        result.log.push_back(entry);

        nlohmann::ordered_json j;
        j["epoch"] = entry.epoch;
        j["train_loss"] = entry.train_loss;
        j["val_cls_top1"] = entry.val_top1;
        j["lr"] = entry.lr;
        log_file << j.dump() << "\n";
        log_file.flush();

        // final.ckpt always holds the newest completed epoch, so a later
        // divergence still leaves a usable checkpoint behind.
        save_checkpoint(result.final_checkpoint, trainer.params(), tc.augment,
                        &trainer.optimizer());
        if (entry.val_top1 > result.best_val_top1) {
            result.best_val_top1 = entry.val_top1;
            result.best_epoch = epoch;
            save_checkpoint(result.best_checkpoint, trainer.params(), tc.augment);
        }
    }
    return result;
}

}  // namespace tscam
