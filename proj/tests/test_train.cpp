#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tscam/train.hpp"

using namespace tscam;
namespace fs = std::filesystem;

namespace {

VitConfig tiny_vit() {
    VitConfig c;
    c.image_size = 16;
    c.patch_size = 8;
    c.depth = 1;
    c.heads = 2;
    c.embed_dim = 16;
    c.mlp_ratio = 2.0;
    c.num_classes = 3;
    return c;
}

SynthConfig tiny_synth() {
    SynthConfig c;
    c.num_classes = 3;
    c.image_size = 16;
    c.train_images = 18;
    c.val_images = 6;
    c.test_images = 6;
    c.seed = 5;
    return c;
}

TrainConfig tiny_train(index_t epochs) {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = 6;
    t.adamw.lr = 1e-3;
    t.seed = 5;
    t.augment.resize_to = 18;
    t.augment.crop_to = 16;
    return t;
}

fs::path fresh_dir(const char* name) {
    const fs::path dir = fs::temp_directory_path() / "tscam_train_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

const fs::path& shared_dataset() {
    static const fs::path dir = [] {
        const fs::path d = fresh_dir("dataset");
        generate(tiny_synth(), d);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_SUITE("train") {
    TEST_CASE("he-initialized conv head matches the fan-in variance") {
        VitConfig cfg = tiny_vit();
        cfg.embed_dim = 128;  // 10 * 128 * 9 = 11520 draws
        cfg.heads = 4;
        cfg.num_classes = 5;
        cfg.image_size = 16;
        // widen the class count by reusing the config across several seeds
        double sum = 0.0, sum_sq = 0.0;
        index_t n = 0;
        for (std::uint64_t seed = 1; seed <= 2; ++seed) {
            VitParams<float> p = init_params<float>(cfg, HeadVariant::Conv2D, seed);
            for (const float v : p.head_kernel->value.values()) {
                sum += v;
                sum_sq += static_cast<double>(v) * v;
                ++n;
            }
        }
        CHECK(n >= 10000);
        const double mean = sum / static_cast<double>(n);
        const double var = sum_sq / static_cast<double>(n) - mean * mean;
        const double expect = 2.0 / (128.0 * 9.0);
        CHECK(var == doctest::Approx(expect).epsilon(0.2));
    }

    TEST_CASE("biases start at exactly zero and seeds reproduce") {
        const VitConfig cfg = tiny_vit();
        VitParams<float> a = init_params<float>(cfg, HeadVariant::Conv2D, 9);
        VitParams<float> b = init_params<float>(cfg, HeadVariant::Conv2D, 9);
        VitParams<float> c = init_params<float>(cfg, HeadVariant::Conv2D, 10);

        for (const float v : a.blocks[0].qkv_bias->value.values()) {
            CHECK(v == 0.0f);
        }
        for (const float v : a.blocks[0].mlp1_bias->value.values()) {
            CHECK(v == 0.0f);
        }
        for (const float v : a.head_bias->value.values()) {
            CHECK(v == 0.0f);
        }

        bool identical = true;
        bool differs = false;
        const auto an = a.named_params();
        const auto bn = b.named_params();
        const auto cn = c.named_params();
        for (std::size_t i = 0; i < an.size(); ++i) {
            if (max_abs_diff(an[i].second->value, bn[i].second->value) != 0.0) {
                identical = false;
            }
            if (max_abs_diff(an[i].second->value, cn[i].second->value) != 0.0) {
                differs = true;
            }
        }
        CHECK(identical);
        CHECK(differs);
    }

    TEST_CASE("checkpoints round trip bit-for-bit") {
        const VitConfig cfg = tiny_vit();
        VitParams<float> params = init_params<float>(cfg, HeadVariant::Conv1D, 21);
        AdamW<float> opt(params.named_params(), AdamWConfig{});
        for (auto& [name, var] : params.named_params()) {
            (void)name;
            for (float& g : var->grad.values()) {
                g = 0.01f;
            }
        }
        opt.step();

        AugmentConfig ac;
        ac.stats.mean = {0.4, 0.5, 0.6};
        ac.stats.stddev = {0.2, 0.21, 0.22};
        const fs::path dir = fresh_dir("ckpt");
        save_checkpoint(dir / "a.ckpt", params, ac, &opt);

        const Checkpoint back = load_checkpoint(dir / "a.ckpt");
        CHECK(back.params.config == cfg);
        CHECK(back.params.head_variant == HeadVariant::Conv1D);
        CHECK(back.augment.stats.mean == ac.stats.mean);
        CHECK(back.has_optimizer);
        CHECK(back.optimizer_step == 1);
        const auto orig = params.named_params();
        const auto loaded = back.params.named_params();
        for (std::size_t i = 0; i < orig.size(); ++i) {
            CHECK(max_abs_diff(orig[i].second->value, loaded[i].second->value) == 0.0);
        }

        // saving the loaded state reproduces the file exactly
        AdamW<float> opt2(back.params.named_params(), back.optimizer_config);
        restore_optimizer(opt2, back);
        save_checkpoint(dir / "b.ckpt", back.params, back.augment, &opt2);
        CHECK(file_bytes(dir / "a.ckpt") == file_bytes(dir / "b.ckpt"));
    }

    TEST_CASE("truncated checkpoints fail cleanly") {
        const VitConfig cfg = tiny_vit();
        VitParams<float> params = init_params<float>(cfg, HeadVariant::Conv2D, 22);
        const fs::path dir = fresh_dir("trunc");
        save_checkpoint(dir / "full.ckpt", params, AugmentConfig{});
        const std::string bytes = file_bytes(dir / "full.ckpt");
        std::ofstream out(dir / "cut.ckpt", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
        out.close();
        CHECK_THROWS_AS(load_checkpoint(dir / "cut.ckpt"), FormatError);
    }

    TEST_CASE("checkpoints with a different model config are rejected") {
        const VitConfig cfg = tiny_vit();
        VitParams<float> params = init_params<float>(cfg, HeadVariant::Conv2D, 23);
        const fs::path dir = fresh_dir("mismatch");
        save_checkpoint(dir / "m.ckpt", params, AugmentConfig{});
        VitConfig other = cfg;
        other.depth = 2;
        CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt", &other), ConfigError);
        CHECK_NOTHROW(load_checkpoint(dir / "m.ckpt", &cfg));
    }

    TEST_CASE("two epochs reduce the map loss below ln C and reproduce bitwise") {
        const fs::path out1 = fresh_dir("run1");
        const fs::path out2 = fresh_dir("run2");
        TrainConfig tc = tiny_train(2);
        tc.aux_cls_weight = 0.0;  // the learnability floor is about the map loss
        const TrainResult r1 =
            train(tiny_vit(), HeadVariant::Conv2D, shared_dataset(), tc, out1);
        const TrainResult r2 =
            train(tiny_vit(), HeadVariant::Conv2D, shared_dataset(), tc, out2);

        CHECK(r1.log.size() == 2);
        CHECK(r1.log.back().train_loss < std::log(3.0));
        CHECK(file_bytes(out1 / "final.ckpt") == file_bytes(out2 / "final.ckpt"));
        CHECK(file_bytes(out1 / "log.jsonl") == file_bytes(out2 / "log.jsonl"));
    }

    TEST_CASE("thread count does not change the result") {
        const fs::path out1 = fresh_dir("threads1");
        const fs::path out2 = fresh_dir("threads2");
        TrainConfig serial = tiny_train(1);
        TrainConfig threaded = tiny_train(1);
        threaded.threads = 3;
        const TrainResult r1 =
            train(tiny_vit(), HeadVariant::Conv2D, shared_dataset(), serial, out1);
        const TrainResult r2 =
            train(tiny_vit(), HeadVariant::Conv2D, shared_dataset(), threaded, out2);
        (void)r1;
        (void)r2;
        CHECK(file_bytes(out1 / "final.ckpt") == file_bytes(out2 / "final.ckpt"));
    }

    TEST_CASE("an epoch replayed from a checkpoint reproduces the logged loss") {
        const fs::path out_a = fresh_dir("replay_a");
        const fs::path out_b = fresh_dir("replay_b");
        const TrainResult one =
            train(tiny_vit(), HeadVariant::Conv2D, shared_dataset(), tiny_train(1), out_a);
        const TrainResult two =
            train(tiny_vit(), HeadVariant::Conv2D, shared_dataset(), tiny_train(2), out_b);
        CHECK(one.log[0].train_loss == two.log[0].train_loss);

        // resume from the epoch-0 checkpoint and replay epoch 1
        Checkpoint ck = load_checkpoint(out_a / "final.ckpt");
        TrainConfig tc = tiny_train(2);
        tc.augment.stats = ck.augment.stats;
        Trainer trainer(std::move(ck.params), tc,
                        load(shared_dataset() / "train.jsonl", 3),
                        load(shared_dataset() / "val.jsonl", 3));
        restore_optimizer(trainer.optimizer(), ck);
        const double replayed = trainer.run_epoch(1);
        CHECK(replayed == doctest::Approx(two.log[1].train_loss).epsilon(1e-6));
    }

    TEST_CASE("trainer validates the augment crop against the model input") {
        TrainConfig tc = tiny_train(1);
        tc.augment.crop_to = 32;
        CHECK_THROWS_AS(train(tiny_vit(), HeadVariant::Conv2D, shared_dataset(), tc,
                              fresh_dir("bad_crop")),
                        ConfigError);
    }
}
