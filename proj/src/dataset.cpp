#include "tscam/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tscam/errors.hpp"

namespace tscam {

const char* const kSplitNames[3] = {"train", "val", "test"};

void SynthConfig::validate() const {
    if (num_classes < 1 || num_classes > 6) {
        throw ConfigError("num_classes must be in [1,6], one shape kind per class");
    }
    if (image_size < 16) {
        throw ConfigError("image_size must be at least 16");
    }
    if (train_images <= 0 || val_images <= 0 || test_images <= 0) {
        throw ConfigError("every split needs at least one image");
    }
    if (!(min_scale > 0.0 && min_scale <= max_scale && max_scale < 0.95)) {
        throw ConfigError("shape scale range is invalid");
    }
    if (!(shape_alpha_lo > 0.0 && shape_alpha_lo <= shape_alpha_hi && shape_alpha_hi <= 1.0)) {
        throw ConfigError("shape alpha range is invalid");
    }
    if (max_distractors < 0) {
        throw ConfigError("max_distractors must be non-negative");
    }
}

namespace {

struct Rgb {
    double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
    h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
    const int i = static_cast<int>(h);
    const double f = h - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (i % 6) {
        case 0:
            return {v, t, p};
        case 1:
            return {q, v, p};
        case 2:
            return {p, v, t};
        case 3:
            return {p, q, v};
        case 4:
            return {t, p, v};
        default:
            return {v, p, q};
    }
}

// Smooth scalar field in [0,1]: a coarse random grid upsampled bilinearly.
Tensor<double> low_freq_field(Rng& rng, index_t size, index_t grid) {
    Tensor<double> coarse({1, grid, grid});
    for (double& v : coarse.values()) {
        v = rng.uniform();
    }
    return bilinear_resize(coarse, size, size).reshaped({size, size});
}

enum class ShapeKind { Circle, Square, Triangle, Cross, Ring, Bar };

bool inside_shape(ShapeKind kind, double dx, double dy, double e) {
    switch (kind) {
        case ShapeKind::Circle:
            return dx * dx + dy * dy <= e * e;
        case ShapeKind::Square:
            return std::abs(dx) <= 0.9 * e && std::abs(dy) <= 0.9 * e;
        case ShapeKind::Triangle: {
            // Upward triangle spanning [-e, 0.78e] vertically.
            if (dy < -e || dy > 0.78 * e) {
                return false;
            }
            const double half_width = 0.95 * e * (dy + e) / (1.78 * e);
            return std::abs(dx) <= half_width;
        }
        case ShapeKind::Cross:
            return (std::abs(dx) <= 0.34 * e && std::abs(dy) <= e) ||
                   (std::abs(dy) <= 0.34 * e && std::abs(dx) <= e);
        case ShapeKind::Ring: {
            const double rr = dx * dx + dy * dy;
            return rr <= e * e && rr >= 0.3 * e * e;
        }
        case ShapeKind::Bar:
            return std::abs(dx) <= e && std::abs(dy) <= 0.38 * e;
    }
    return false;
}

struct ShapeInstance {
    ShapeKind kind;
    double cx, cy, extent;
};

Rgb class_color(index_t label, index_t num_classes) {
    const double hue = 360.0 * static_cast<double>(label) / static_cast<double>(num_classes);
    return hsv_to_rgb(hue, 0.82, 0.88);
}

void paint_shape(Image& img, std::vector<std::uint8_t>& mask, const ShapeInstance& shape,
                 const Rgb& color, const Tensor<double>& brightness, const Tensor<double>& alpha01,
                 double alpha_lo, double alpha_hi) {
    const index_t size = img.width;
    for (index_t y = 0; y < size; ++y) {
        for (index_t x = 0; x < size; ++x) {
            const double dx = static_cast<double>(x) - shape.cx;
            const double dy = static_cast<double>(y) - shape.cy;
            if (!inside_shape(shape.kind, dx, dy, shape.extent)) {
                continue;
            }
            mask[static_cast<std::size_t>(y * size + x)] = 1;
            const double bright = 0.55 + 0.45 * brightness(y, x);
            const double a = alpha_lo + (alpha_hi - alpha_lo) * alpha01(y, x);
            for (int c = 0; c < 3; ++c) {
                const double shade = (c == 0 ? color.r : c == 1 ? color.g : color.b) * bright;
                const double bg = static_cast<double>(img.at(static_cast<int>(y),
                                                             static_cast<int>(x), c)) /
                                  255.0;
                const double v = bg * (1.0 - a) + shade * a;
                img.at(static_cast<int>(y), static_cast<int>(x), c) =
                    static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
            }
        }
    }
}

// Tight box of one instance's coverage, scanned pixel by pixel.
Box tight_box(index_t size, const ShapeInstance& shape) {
    int min_x = static_cast<int>(size), max_x = -1;
    int min_y = static_cast<int>(size), max_y = -1;
    for (index_t y = 0; y < size; ++y) {
        for (index_t x = 0; x < size; ++x) {
            const double dx = static_cast<double>(x) - shape.cx;
            const double dy = static_cast<double>(y) - shape.cy;
            if (!inside_shape(shape.kind, dx, dy, shape.extent)) {
                continue;
            }
            min_x = std::min(min_x, static_cast<int>(x));
            max_x = std::max(max_x, static_cast<int>(x));
            min_y = std::min(min_y, static_cast<int>(y));
            max_y = std::max(max_y, static_cast<int>(y));
        }
    }
    return Box{min_x, min_y, max_x + 1, max_y + 1};
}

}  // namespace

RenderedRecord render_record(const SynthConfig& config, int split, index_t index) {
    config.validate();
    Rng root(config.seed);
    Rng rng = root.fork((static_cast<std::uint64_t>(split) << 40) |
                        static_cast<std::uint64_t>(index));
    const index_t size = config.image_size;

    RenderedRecord rec;
    rec.label = index % config.num_classes;
    rec.image.width = static_cast<int>(size);
    rec.image.height = static_cast<int>(size);
    rec.image.rgb.assign(static_cast<std::size_t>(size) * size * 3, 0);
    rec.mask.assign(static_cast<std::size_t>(size) * size, 0);

    // Background: desaturated base color under a smooth brightness field.
    const Rgb base = hsv_to_rgb(rng.uniform(0.0, 360.0), rng.uniform(0.03, 0.14),
                                rng.uniform(0.4, 0.75));
    Tensor<double> bg_field = low_freq_field(rng, size, 4);
    for (index_t y = 0; y < size; ++y) {
        for (index_t x = 0; x < size; ++x) {
            const double m = 0.6 + 0.65 * bg_field(y, x);
            const double noise = rng.uniform(-0.015, 0.015);
            const double rgb[3] = {base.r * m + noise, base.g * m + noise, base.b * m + noise};
            for (int c = 0; c < 3; ++c) {
                rec.image.at(static_cast<int>(y), static_cast<int>(x), c) =
                    static_cast<std::uint8_t>(
                        std::lround(255.0 * std::clamp(rgb[c], 0.0, 1.0)));
            }
        }
    }

    // Shape placement; a second instance only in multi-instance mode.
    const int instances = config.multi_instance ? 2 : 1;
    std::vector<ShapeInstance> shapes;
    for (int inst = 0; inst < instances; ++inst) {
        ShapeInstance s;
        s.kind = static_cast<ShapeKind>(rec.label % 6);
        for (int attempt = 0;; ++attempt) {
            const double scale = rng.uniform(config.min_scale, config.max_scale);
            s.extent = scale * static_cast<double>(size) / 2.0;
            s.cx = rng.uniform(s.extent + 1.0, static_cast<double>(size) - s.extent - 1.0);
            s.cy = rng.uniform(s.extent + 1.0, static_cast<double>(size) - s.extent - 1.0);
            bool clear = true;
            for (const ShapeInstance& other : shapes) {
                const double d = std::hypot(s.cx - other.cx, s.cy - other.cy);
                if (d < s.extent + other.extent + 3.0) {
                    clear = false;
                    break;
                }
            }
            if (clear || attempt > 40) {
                break;
            }
        }
        shapes.push_back(s);
    }

    // Neutral distractor blobs; bright but class-agnostic, never overlapping
    // a shape and never part of the ground truth.
    const index_t n_distract =
        config.max_distractors > 0 ? rng.uniform_int(1, config.max_distractors + 1) : 0;
    Tensor<double> distract_field = low_freq_field(rng, size, 5);
    for (index_t bi = 0; bi < n_distract; ++bi) {
        double ax = rng.uniform(3.5, 7.5);
        double ay = rng.uniform(3.5, 7.5);
        double bx = 0.0, by = 0.0;
        bool placed = false;
        for (int attempt = 0; attempt < 24 && !placed; ++attempt) {
            bx = rng.uniform(ax + 1.0, static_cast<double>(size) - ax - 1.0);
            by = rng.uniform(ay + 1.0, static_cast<double>(size) - ay - 1.0);
            placed = true;
            for (const ShapeInstance& s : shapes) {
                if (std::hypot(bx - s.cx, by - s.cy) < s.extent + std::max(ax, ay) + 2.0) {
                    placed = false;
                    break;
                }
            }
        }
        if (!placed) {
            continue;
        }
        const double gray = rng.uniform(0.78, 0.95);
        for (index_t y = 0; y < size; ++y) {
            for (index_t x = 0; x < size; ++x) {
                const double ddx = (static_cast<double>(x) - bx) / ax;
                const double ddy = (static_cast<double>(y) - by) / ay;
                if (ddx * ddx + ddy * ddy > 1.0) {
                    continue;
                }
                const double v = gray * (0.72 + 0.28 * distract_field(y, x));
                for (int c = 0; c < 3; ++c) {
                    rec.image.at(static_cast<int>(y), static_cast<int>(x), c) =
                        static_cast<std::uint8_t>(
                            std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
                }
            }
        }
    }

    // Shapes on top, with spatially varying opacity.
    const Rgb color = class_color(rec.label, config.num_classes);
    for (const ShapeInstance& s : shapes) {
        Tensor<double> brightness = low_freq_field(rng, size, 4);
        Tensor<double> alpha01 = low_freq_field(rng, size, 3);
        paint_shape(rec.image, rec.mask, s, color, brightness, alpha01, config.shape_alpha_lo,
                    config.shape_alpha_hi);
        rec.boxes.push_back(tight_box(size, s));
    }
    return rec;
}

void generate(const SynthConfig& config, const std::filesystem::path& out_dir) {
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (ec) {
        throw IoError("cannot create output directory '" + (out_dir / "images").string() + "'");
    }

    const index_t counts[3] = {config.train_images, config.val_images, config.test_images};
    std::array<double, 3> sum{0, 0, 0};
    std::array<double, 3> sum_sq{0, 0, 0};
    double pixels = 0.0;

    for (int split = 0; split < 3; ++split) {
        const std::filesystem::path manifest = out_dir / (std::string(kSplitNames[split]) +
                                                          ".jsonl");
        std::ofstream mf(manifest);
        if (!mf) {
            throw IoError("cannot open '" + manifest.string() + "' for writing");
        }
        for (index_t i = 0; i < counts[split]; ++i) {
            RenderedRecord rec = render_record(config, split, i);
            std::ostringstream name;
            name << kSplitNames[split] << "_";
            name.width(4);
            name.fill('0');
            name << i;
            const std::string rel = "images/" + name.str() + ".ppm";
            write_ppm(out_dir / rel, rec.image);

            nlohmann::ordered_json line;
            line["path"] = rel;
            line["label"] = rec.label;
            nlohmann::ordered_json boxes = nlohmann::ordered_json::array();
            for (const Box& b : rec.boxes) {
                boxes.push_back({b.x0, b.y0, b.x1, b.y1});
            }
            line["boxes"] = boxes;
            mf << line.dump() << "\n";

            if (split == 0) {
                const index_t size = config.image_size;
                for (index_t p = 0; p < size * size; ++p) {
                    for (int c = 0; c < 3; ++c) {
                        const double v =
                            static_cast<double>(rec.image.rgb[static_cast<std::size_t>(p * 3 + c)]) /
                            255.0;
                        sum[static_cast<std::size_t>(c)] += v;
                        sum_sq[static_cast<std::size_t>(c)] += v * v;
                    }
                }
                pixels += static_cast<double>(size * size);
            }
        }
        if (!mf) {
            throw IoError("write failed for '" + manifest.string() + "'");
        }
    }

    ChannelStats stats;
    for (int c = 0; c < 3; ++c) {
        const double mean = sum[static_cast<std::size_t>(c)] / pixels;
        const double var = sum_sq[static_cast<std::size_t>(c)] / pixels - mean * mean;
        stats.mean[static_cast<std::size_t>(c)] = mean;
        stats.stddev[static_cast<std::size_t>(c)] = std::sqrt(std::max(var, 1e-8));
    }
    write_stats(out_dir, stats);
}

std::vector<DatasetRecord> read_manifest(const std::filesystem::path& manifest_path,
                                         index_t num_classes) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw IoError("cannot open manifest '" + manifest_path.string() + "'");
    }
    std::vector<DatasetRecord> records;
    std::string line;
    index_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            DatasetRecord rec;
            rec.path = j.at("path").get<std::string>();
            rec.label = j.at("label").get<index_t>();
            for (const auto& jb : j.at("boxes")) {
                if (!jb.is_array() || jb.size() != 4) {
                    throw ParseError("box is not a 4-element array");
                }
                rec.boxes.push_back(Box{jb[0].get<int>(), jb[1].get<int>(), jb[2].get<int>(),
                                        jb[3].get<int>()});
            }
            records.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("manifest '" + manifest_path.string() + "' line " +
                             std::to_string(line_no) + ": " + e.what());
        }
        const DatasetRecord& rec = records.back();
        if (rec.label < 0 || rec.label >= num_classes) {
            throw ValueError("manifest '" + manifest_path.string() + "' line " +
                             std::to_string(line_no) + ": label " + std::to_string(rec.label) +
                             " out of range [0, " + std::to_string(num_classes) + ")");
        }
        if (rec.boxes.empty()) {
            throw ValueError("manifest '" + manifest_path.string() + "' line " +
                             std::to_string(line_no) + ": record has no boxes");
        }
    }
    return records;
}

std::vector<LoadedRecord> load(const std::filesystem::path& manifest_path, index_t num_classes) {
    const std::filesystem::path dir = manifest_path.parent_path();
    std::vector<LoadedRecord> out;
    for (DatasetRecord& rec : read_manifest(manifest_path, num_classes)) {
        Image img = read_ppm(dir / rec.path);
        for (const Box& b : rec.boxes) {
            if (b.x0 < 0 || b.y0 < 0 || b.x1 > img.width || b.y1 > img.height ||
                b.x0 >= b.x1 || b.y0 >= b.y1) {
                throw ValueError("record '" + rec.path + "': box " + b.str() +
                                 " outside image bounds " + std::to_string(img.width) + "x" +
                                 std::to_string(img.height));
            }
        }
        LoadedRecord lr;
        lr.meta = std::move(rec);
        lr.image = image_to_tensor(img);
        out.push_back(std::move(lr));
    }
    return out;
}

void write_stats(const std::filesystem::path& dataset_dir, const ChannelStats& stats) {
    nlohmann::json j;
    j["mean"] = stats.mean;
    j["std"] = stats.stddev;
    std::ofstream out(dataset_dir / "stats.json");
    if (!out) {
        throw IoError("cannot open '" + (dataset_dir / "stats.json").string() + "' for writing");
    }
    out << j.dump(2) << "\n";
}

ChannelStats read_stats(const std::filesystem::path& dataset_dir) {
    std::ifstream in(dataset_dir / "stats.json");
    if (!in) {
        throw IoError("cannot open '" + (dataset_dir / "stats.json").string() + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
        ChannelStats stats;
        stats.mean = j.at("mean").get<std::array<double, 3>>();
        stats.stddev = j.at("std").get<std::array<double, 3>>();
        return stats;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed stats.json: " + std::string(e.what()));
    }
}

Tensor<float> augment(const Tensor<float>& image, AugmentMode mode, const AugmentConfig& config,
                      Rng* rng) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw ShapeError("augment: expected [3,H,W], got " + shape_str(image.shape()));
    }
    if (config.resize_to < config.crop_to) {
        throw ConfigError("augment: resize_to must be >= crop_to");
    }
    if (mode == AugmentMode::Train && rng == nullptr) {
        throw ConfigError("augment: train mode needs an rng");
    }
    Tensor<float> resized = bilinear_resize(image, config.resize_to, config.resize_to);

    index_t dy = 0, dx = 0;
    bool flip = false;
    const index_t slack = config.resize_to - config.crop_to;
    if (mode == AugmentMode::Train) {
        dy = slack > 0 ? rng->uniform_int(0, slack + 1) : 0;
        dx = slack > 0 ? rng->uniform_int(0, slack + 1) : 0;
        flip = rng->coin();
    } else {
        dy = slack / 2;
        dx = slack / 2;
    }

    const index_t crop = config.crop_to;
    Tensor<float> out({3, crop, crop});
    for (index_t c = 0; c < 3; ++c) {
        const float mean = static_cast<float>(config.stats.mean[static_cast<std::size_t>(c)]);
        const float inv_std =
            1.0f / static_cast<float>(config.stats.stddev[static_cast<std::size_t>(c)]);
        for (index_t y = 0; y < crop; ++y) {
            for (index_t x = 0; x < crop; ++x) {
                const index_t sx = flip ? (crop - 1 - x) : x;
                out(c, y, x) = (resized(c, y + dy, sx + dx) - mean) * inv_std;
            }
        }
    }
    return out;
}

namespace {

int clamp_round(double v, index_t hi) {
    return static_cast<int>(std::clamp<long long>(std::llround(v), 0, hi));
}

}  // namespace

Box map_box_to_input(const Box& b, index_t orig_size, index_t resize_to, index_t crop_to) {
    const double s = static_cast<double>(resize_to) / static_cast<double>(orig_size);
    const double off = static_cast<double>((resize_to - crop_to) / 2);
    Box out;
    out.x0 = clamp_round(b.x0 * s - off, crop_to);
    out.y0 = clamp_round(b.y0 * s - off, crop_to);
    out.x1 = clamp_round(b.x1 * s - off, crop_to);
    out.y1 = clamp_round(b.y1 * s - off, crop_to);
    out.x1 = std::max(out.x1, std::min(out.x0 + 1, static_cast<int>(crop_to)));
    out.y1 = std::max(out.y1, std::min(out.y0 + 1, static_cast<int>(crop_to)));
    out.x0 = std::min(out.x0, out.x1 - 1);
    out.y0 = std::min(out.y0, out.y1 - 1);
    return out;
}

Box map_box_to_original(const Box& b, index_t orig_size, index_t resize_to, index_t crop_to) {
    const double s = static_cast<double>(resize_to) / static_cast<double>(orig_size);
    const double off = static_cast<double>((resize_to - crop_to) / 2);
    Box out;
    out.x0 = clamp_round((b.x0 + off) / s, orig_size);
    out.y0 = clamp_round((b.y0 + off) / s, orig_size);
    out.x1 = clamp_round((b.x1 + off) / s, orig_size);
    out.y1 = clamp_round((b.y1 + off) / s, orig_size);
    out.x1 = std::max(out.x1, std::min(out.x0 + 1, static_cast<int>(orig_size)));
    out.y1 = std::max(out.y1, std::min(out.y0 + 1, static_cast<int>(orig_size)));
    out.x0 = std::min(out.x0, out.x1 - 1);
    out.y0 = std::min(out.y0, out.y1 - 1);
    return out;
}

}  // namespace tscam
