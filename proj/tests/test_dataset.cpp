#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "tscam/dataset.hpp"
#include "tscam/errors.hpp"

using namespace tscam;
namespace fs = std::filesystem;

namespace {

SynthConfig small_config() {
    SynthConfig c;
    c.num_classes = 4;
    c.image_size = 48;
    c.train_images = 24;
    c.val_images = 8;
    c.test_images = 8;
    c.seed = 11;
    return c;
}

fs::path fresh_dir(const char* name) {
    const fs::path dir = fs::temp_directory_path() / "tscam_dataset_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Box scan_tight_box(const std::vector<std::uint8_t>& mask, index_t size) {
    int min_x = static_cast<int>(size), max_x = -1, min_y = static_cast<int>(size), max_y = -1;
    for (index_t y = 0; y < size; ++y) {
        for (index_t x = 0; x < size; ++x) {
            if (mask[static_cast<std::size_t>(y * size + x)]) {
                min_x = std::min(min_x, static_cast<int>(x));
                max_x = std::max(max_x, static_cast<int>(x));
                min_y = std::min(min_y, static_cast<int>(y));
                max_y = std::max(max_y, static_cast<int>(y));
            }
        }
    }
    return Box{min_x, min_y, max_x + 1, max_y + 1};
}

}  // namespace

TEST_SUITE("dataset") {
    TEST_CASE("generation is byte-identical under the same seed") {
        const SynthConfig cfg = small_config();
        const fs::path a = fresh_dir("det_a");
        const fs::path b = fresh_dir("det_b");
        generate(cfg, a);
        generate(cfg, b);
        int compared = 0;
        for (const auto& entry : fs::recursive_directory_iterator(a)) {
            if (!entry.is_regular_file()) {
                continue;
            }
            const fs::path rel = fs::relative(entry.path(), a);
            CHECK(file_bytes(entry.path()) == file_bytes(b / rel));
            ++compared;
        }
        CHECK(compared == 24 + 8 + 8 + 3 + 1);  // images + manifests + stats
    }

    TEST_CASE("manifest box equals the pixel-scan of the rendered mask") {
        const SynthConfig cfg = small_config();
        for (index_t i = 0; i < 10; ++i) {
            const RenderedRecord rec = render_record(cfg, 0, i);
            REQUIRE(rec.boxes.size() == 1);
            CHECK(rec.boxes[0] == scan_tight_box(rec.mask, cfg.image_size));
            CHECK(rec.boxes[0].x0 >= 0);
            CHECK(rec.boxes[0].x1 <= static_cast<int>(cfg.image_size));
            CHECK(rec.boxes[0].area() > 0);
        }
    }

    TEST_CASE("class counts are balanced") {
        const SynthConfig cfg = small_config();
        const fs::path dir = fresh_dir("balance");
        generate(cfg, dir);
        std::map<index_t, int> counts;
        for (const auto& rec : read_manifest(dir / "train.jsonl", cfg.num_classes)) {
            counts[rec.label]++;
        }
        REQUIRE(counts.size() == 4);
        for (const auto& [label, n] : counts) {
            CHECK(n == 6);
        }
    }

    TEST_CASE("load round-trips labels and boxes and validates them") {
        const SynthConfig cfg = small_config();
        const fs::path dir = fresh_dir("roundtrip");
        generate(cfg, dir);
        const auto manifest = read_manifest(dir / "val.jsonl", cfg.num_classes);
        const auto loaded = load(dir / "val.jsonl", cfg.num_classes);
        REQUIRE(manifest.size() == loaded.size());
        for (std::size_t i = 0; i < manifest.size(); ++i) {
            CHECK(manifest[i].label == loaded[i].meta.label);
            CHECK(manifest[i].boxes == loaded[i].meta.boxes);
            CHECK(loaded[i].image.shape() ==
                  std::vector<index_t>{3, cfg.image_size, cfg.image_size});
        }
    }

    TEST_CASE("out-of-range labels and bad manifests are rejected") {
        const fs::path dir = fresh_dir("bad_manifest");
        {
            std::ofstream m(dir / "bad_label.jsonl");
            m << R"({"path": "x.ppm", "label": 4, "boxes": [[0,0,2,2]]})" << "\n";
        }
        CHECK_THROWS_AS(read_manifest(dir / "bad_label.jsonl", 4), ValueError);

        {
            std::ofstream m(dir / "no_boxes.jsonl");
            m << R"({"path": "x.ppm", "label": 1, "boxes": []})" << "\n";
        }
        CHECK_THROWS_AS(read_manifest(dir / "no_boxes.jsonl", 4), ValueError);

        {
            std::ofstream m(dir / "garbled.jsonl");
            m << R"({"path": "x.ppm", "label": )" << "\n";
        }
        try {
            read_manifest(dir / "garbled.jsonl", 4);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("line 1") != std::string::npos);
        }
    }

    TEST_CASE("missing image files surface as io errors naming the path") {
        const fs::path dir = fresh_dir("missing_image");
        {
            std::ofstream m(dir / "m.jsonl");
            m << R"({"path": "images/ghost.ppm", "label": 0, "boxes": [[0,0,2,2]]})" << "\n";
        }
        try {
            load(dir / "m.jsonl", 4);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("ghost.ppm") != std::string::npos);
        }
    }

    TEST_CASE("eval augmentation is deterministic and normalizes") {
        const SynthConfig cfg = small_config();
        const RenderedRecord rec = render_record(cfg, 2, 3);
        const Tensor<float> img = image_to_tensor(rec.image);
        AugmentConfig ac;
        ac.resize_to = 54;
        ac.crop_to = 48;
        const Tensor<float> a = augment(img, AugmentMode::Eval, ac, nullptr);
        const Tensor<float> b = augment(img, AugmentMode::Eval, ac, nullptr);
        CHECK(max_abs_diff(a, b) == 0.0);
        CHECK(a.shape() == std::vector<index_t>{3, 48, 48});
    }

    TEST_CASE("resize equal to crop in eval mode is a pure resize") {
        const SynthConfig cfg = small_config();
        const RenderedRecord rec = render_record(cfg, 1, 0);
        const Tensor<float> img = image_to_tensor(rec.image);
        AugmentConfig ac;
        ac.resize_to = 48;
        ac.crop_to = 48;
        const Tensor<float> out = augment(img, AugmentMode::Eval, ac, nullptr);
        const Tensor<float> resized = bilinear_resize(img, 48, 48);
        for (index_t c = 0; c < 3; ++c) {
            const float mean = static_cast<float>(ac.stats.mean[static_cast<std::size_t>(c)]);
            const float inv = 1.0f / static_cast<float>(ac.stats.stddev[static_cast<std::size_t>(c)]);
            for (index_t i = 0; i < 48 * 48; ++i) {
                const float expect = (resized[c * 48 * 48 + i] - mean) * inv;
                CHECK(out[c * 48 * 48 + i] == doctest::Approx(expect).epsilon(1e-6));
            }
        }
    }

    TEST_CASE("train crops stay inside the resized frame") {
        // Tiny sizes, many seeds: reconstruct the offset by matching pixels.
        AugmentConfig ac;
        ac.resize_to = 6;
        ac.crop_to = 4;
        ac.stats = ChannelStats{{0, 0, 0}, {1, 1, 1}};
        Tensor<float> img({3, 6, 6});
        for (index_t c = 0; c < 3; ++c) {
            for (index_t y = 0; y < 6; ++y) {
                for (index_t x = 0; x < 6; ++x) {
                    img(c, y, x) = static_cast<float>(y * 6 + x);
                }
            }
        }
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            Rng rng(seed);
            const Tensor<float> out = augment(img, AugmentMode::Train, ac, &rng);
            // top-left pixel identifies (dy, dx (possibly flipped))
            const float v = out(0, 0, 0);
            const int flat = static_cast<int>(std::lround(v));
            const int sy = flat / 6, sx = flat % 6;
            CHECK(sy >= 0);
            CHECK(sy <= 2);
            CHECK(sx >= 0);
            CHECK(sx <= 5);  // flipped crops read from the right edge
        }
    }

    TEST_CASE("boxes survive the eval-time affine map within one pixel") {
        SynthConfig cfg = small_config();
        cfg.image_size = 64;
        for (index_t i = 0; i < 8; ++i) {
            const RenderedRecord rec = render_record(cfg, 0, i);
            const index_t resize_to = 72, crop_to = 64;

            // transform the mask exactly like the image and rescan
            Tensor<float> mask_t({1, cfg.image_size, cfg.image_size});
            for (index_t p = 0; p < cfg.image_size * cfg.image_size; ++p) {
                mask_t[p] = rec.mask[static_cast<std::size_t>(p)] ? 1.0f : 0.0f;
            }
            const Tensor<float> resized = bilinear_resize(mask_t, resize_to, resize_to);
            const index_t off = (resize_to - crop_to) / 2;
            std::vector<std::uint8_t> cropped(static_cast<std::size_t>(crop_to * crop_to), 0);
            bool any = false;
            for (index_t y = 0; y < crop_to; ++y) {
                for (index_t x = 0; x < crop_to; ++x) {
                    if (resized(0, y + off, x + off) > 0.5f) {
                        cropped[static_cast<std::size_t>(y * crop_to + x)] = 1;
                        any = true;
                    }
                }
            }
            REQUIRE(any);
            const Box scanned = scan_tight_box(cropped, crop_to);
            const Box mapped = map_box_to_input(rec.boxes[0], cfg.image_size, resize_to, crop_to);
            CHECK(std::abs(scanned.x0 - mapped.x0) <= 1);
            CHECK(std::abs(scanned.y0 - mapped.y0) <= 1);
            CHECK(std::abs(scanned.x1 - mapped.x1) <= 1);
            CHECK(std::abs(scanned.y1 - mapped.y1) <= 1);

            // and the inverse map undoes the forward map within one pixel
            const Box back =
                map_box_to_original(mapped, cfg.image_size, resize_to, crop_to);
            CHECK(std::abs(back.x0 - rec.boxes[0].x0) <= 1);
            CHECK(std::abs(back.y1 - rec.boxes[0].y1) <= 1);
        }
    }

    TEST_CASE("classes separate under a color-histogram centroid classifier") {
        SynthConfig cfg = small_config();
        cfg.image_size = 64;
        cfg.train_images = 80;
        cfg.test_images = 80;

        // chroma-weighted hue histogram: saturated (shape) pixels dominate,
        // the desaturated background and gray distractors contribute little
        constexpr std::size_t kBins = 18;
        auto histogram = [&](const Image& img) {
            std::vector<double> h(kBins, 0.0);
            double total = 1e-9;
            for (std::size_t p = 0; p < img.rgb.size(); p += 3) {
                const double r = img.rgb[p], g = img.rgb[p + 1], b = img.rgb[p + 2];
                const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
                const double chroma = mx - mn;
                if (chroma <= 0.0) {
                    continue;
                }
                double hue;
                if (mx == r) {
                    hue = std::fmod((g - b) / chroma + 6.0, 6.0);
                } else if (mx == g) {
                    hue = (b - r) / chroma + 2.0;
                } else {
                    hue = (r - g) / chroma + 4.0;
                }
                const std::size_t bin =
                    std::min(kBins - 1, static_cast<std::size_t>(hue / 6.0 * kBins));
                const double weight = chroma * chroma;
                h[bin] += weight;
                total += weight;
            }
            for (double& v : h) {
                v /= total;
            }
            return h;
        };

        std::vector<std::vector<double>> centroids(
            static_cast<std::size_t>(cfg.num_classes), std::vector<double>(kBins, 0.0));
        std::vector<int> counts(static_cast<std::size_t>(cfg.num_classes), 0);
        for (index_t i = 0; i < cfg.train_images; ++i) {
            const RenderedRecord rec = render_record(cfg, 0, i);
            const auto h = histogram(rec.image);
            auto& c = centroids[static_cast<std::size_t>(rec.label)];
            for (std::size_t k = 0; k < kBins; ++k) {
                c[k] += h[k];
            }
            counts[static_cast<std::size_t>(rec.label)]++;
        }
        for (std::size_t cls = 0; cls < centroids.size(); ++cls) {
            for (double& v : centroids[cls]) {
                v /= counts[cls];
            }
        }

        int correct = 0;
        for (index_t i = 0; i < cfg.test_images; ++i) {
            const RenderedRecord rec = render_record(cfg, 2, i);
            const auto h = histogram(rec.image);
            int best = -1;
            double best_d = 1e30;
            for (std::size_t cls = 0; cls < centroids.size(); ++cls) {
                double d = 0.0;
                for (std::size_t k = 0; k < kBins; ++k) {
                    const double diff = h[k] - centroids[cls][k];
                    d += diff * diff;
                }
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<int>(cls);
                }
            }
            if (best == static_cast<int>(rec.label)) {
                ++correct;
            }
        }
        CHECK(static_cast<double>(correct) / static_cast<double>(cfg.test_images) > 0.95);
    }

    TEST_CASE("multi-instance mode emits two disjoint boxes of one class") {
        SynthConfig cfg = small_config();
        cfg.image_size = 64;
        cfg.multi_instance = true;
        for (index_t i = 0; i < 6; ++i) {
            const RenderedRecord rec = render_record(cfg, 0, i);
            REQUIRE(rec.boxes.size() == 2);
            for (const Box& b : rec.boxes) {
                CHECK(b.area() > 0);
            }
        }
    }

    TEST_CASE("synth config validation") {
        SynthConfig cfg = small_config();
        cfg.num_classes = 7;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = small_config();
        cfg.min_scale = 0.9;
        cfg.max_scale = 0.5;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }

    TEST_CASE("stats round trip") {
        const fs::path dir = fresh_dir("stats");
        ChannelStats s;
        s.mean = {0.25, 0.5, 0.75};
        s.stddev = {0.1, 0.2, 0.3};
        write_stats(dir, s);
        const ChannelStats back = read_stats(dir);
        CHECK(back.mean == s.mean);
        CHECK(back.stddev == s.stddev);
    }
}
