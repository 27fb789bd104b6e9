#include "tscam/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include "tscam/config.hpp"
#include "tscam/container.hpp"
#include "tscam/eval.hpp"
#include "tscam/head.hpp"

namespace tscam {

namespace {

namespace fs = std::filesystem;

void require_path(const std::string& value, const char* flag) {
    if (value.empty()) {
        throw UsageError(std::string("missing required --") + flag);
    }
}

fs::path ensure_out_dir(const RunConfig& cfg) {
    require_path(cfg.out, "out");
    fs::path dir(cfg.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec && !fs::is_directory(dir)) {
        throw IoError("cannot create output directory '" + dir.string() + "'");
    }
    return dir;
}

// Every run echoes its effective configuration for reproducibility.
void echo_config(const fs::path& out_dir, const RunConfig& cfg) {
    std::ofstream f(out_dir / "config.txt");
    if (!f) {
        throw IoError("cannot write '" + (out_dir / "config.txt").string() + "'");
    }
    f << render_config(cfg);
}

std::vector<double> parse_threshold_list(const std::string& spec) {
    std::vector<double> out;
    std::string token;
    std::istringstream is(spec);
    while (std::getline(is, token, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(token, &used);
            if (used != token.size()) {
                throw ValueError("");
            }
            out.push_back(v);
        } catch (const std::logic_error&) {
            throw UsageError("bad threshold '" + token + "' in '" + spec + "'");
        } catch (const ValueError&) {
            throw UsageError("bad threshold '" + token + "' in '" + spec + "'");
        }
    }
    if (out.empty()) {
        throw UsageError("threshold list is empty");
    }
    return out;
}

struct LoadedCheckpoint {
    Checkpoint ck;
    index_t layer_lo = 1;
    index_t layer_hi = 1;
};

LoadedCheckpoint load_for_inference(const RunConfig& cfg) {
    require_path(cfg.checkpoint, "checkpoint");
    LoadedCheckpoint lc{load_checkpoint(cfg.checkpoint), 1, 1};
    lc.layer_lo = cfg.layer_lo;
    lc.layer_hi = cfg.layer_hi > 0 ? cfg.layer_hi : lc.ck.params.config.depth;
    return lc;
}

// Inference for one original-resolution image: per-class boxes mapped back
// to original pixel coordinates.
PredictionRecord predict_record(const std::string& id, const Tensor<float>& original,
                                const LoadedCheckpoint& lc, LocalizeMode mode, double tau) {
    const VitConfig& mc = lc.ck.params.config;
    const index_t orig_size = original.dim(1);
    if (original.dim(1) != original.dim(2)) {
        throw ValueError("image '" + id + "' is not square");
    }
    Tensor<float> input = augment(original, AugmentMode::Eval, lc.ck.augment, nullptr);
    InferenceOutput inf = run_inference(input, lc.ck.params, lc.layer_lo, lc.layer_hi);

    PredictionRecord rec;
    rec.id = id;
    const std::size_t top_k = std::min<std::size_t>(5, inf.ranking.size());
    for (std::size_t k = 0; k < top_k; ++k) {
        rec.top.push_back(inf.ranking[k]);
        rec.scores.push_back(inf.probs[static_cast<std::size_t>(inf.ranking[k])]);
    }
    for (index_t c = 0; c < mc.num_classes; ++c) {
        Tensor<double> map = postprocess(class_map(inf, mode, c), mc.image_size, mc.image_size);
        const Box input_box = extract_bbox(map, tau);
        rec.boxes[c] = map_box_to_original(input_box, orig_size, lc.ck.augment.resize_to,
                                           lc.ck.augment.crop_to);
    }
    return rec;
}

int cmd_generate_data(const RunConfig& cfg) {
    const fs::path out_dir = ensure_out_dir(cfg);
    generate(cfg.synth(), out_dir);
    echo_config(out_dir, cfg);
    std::cout << "dataset written to " << out_dir.string() << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    require_path(cfg.data_dir, "data-dir");
    const fs::path out_dir = ensure_out_dir(cfg);
    echo_config(out_dir, cfg);
    const TrainResult result = train(cfg.vit(), head_variant_from_name(cfg.head_variant),
                                     cfg.data_dir, cfg.trainer(), out_dir);
    const EpochLog& last = result.log.back();
    std::cout << "trained " << cfg.epochs << " epochs; final loss " << last.train_loss
              << ", val top-1 " << last.val_top1 << "%\n";
    std::cout << "best epoch " << result.best_epoch << " (val top-1 " << result.best_val_top1
              << "%), checkpoints: " << result.best_checkpoint.string() << ", "
              << result.final_checkpoint.string() << "\n";
    return 0;
}

int cmd_infer(const RunConfig& cfg) {
    const fs::path out_dir = ensure_out_dir(cfg);
    if (cfg.image.empty() == cfg.manifest.empty()) {
        throw UsageError("infer needs exactly one of --image or --manifest");
    }
    const LoadedCheckpoint lc = load_for_inference(cfg);
    const LocalizeMode mode = localize_mode_from_name(cfg.mode);

    std::vector<PredictionRecord> preds;
    if (!cfg.image.empty()) {
        const Tensor<float> original = image_to_tensor(read_ppm(cfg.image));
        const std::string id = fs::path(cfg.image).filename().string();
        PredictionRecord rec = predict_record(id, original, lc, mode, cfg.tau);
        preds.push_back(rec);

        // Companion map of the top-scored class for quick inspection.
        Tensor<float> input = augment(original, AugmentMode::Eval, lc.ck.augment, nullptr);
        InferenceOutput inf = run_inference(input, lc.ck.params, lc.layer_lo, lc.layer_hi);
        Tensor<double> map = postprocess(class_map(inf, mode, inf.ranking[0]),
                                         lc.ck.params.config.image_size,
                                         lc.ck.params.config.image_size);
        write_pgm(out_dir / (fs::path(cfg.image).stem().string() + "_map.pgm"), map);
    } else {
        const std::vector<LoadedRecord> records =
            load(cfg.manifest, lc.ck.params.config.num_classes);
        preds.resize(records.size());
        const std::size_t threads = std::max<index_t>(1, cfg.threads);
        auto worker = [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                preds[i] =
                    predict_record(records[i].meta.path, records[i].image, lc, mode, cfg.tau);
            }
        };
        if (threads <= 1 || records.size() <= 1) {
            worker(0, records.size());
        } else {
            std::vector<std::thread> pool;
            const std::size_t per = (records.size() + threads - 1) / threads;
            for (std::size_t t = 0; t < threads; ++t) {
                const std::size_t lo = std::min(records.size(), t * per);
                const std::size_t hi = std::min(records.size(), lo + per);
                if (lo < hi) {
                    pool.emplace_back(worker, lo, hi);
                }
            }
            for (auto& th : pool) {
                th.join();
            }
        }
    }
    const fs::path pred_path = out_dir / "predictions.jsonl";
    write_predictions(pred_path, preds);
    echo_config(out_dir, cfg);
    std::cout << "wrote " << preds.size() << " prediction(s) to " << pred_path.string() << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    require_path(cfg.pred, "pred");
    require_path(cfg.gt, "gt");
    const fs::path out_dir = ensure_out_dir(cfg);
    const auto preds = read_predictions(cfg.pred);
    const auto gts = ground_truth_from_manifest(cfg.gt, cfg.num_classes);
    const LocAccuracy acc = loc_accuracy(preds, gts, 0.5);
    const ErrorBreakdown errors = error_analysis(preds, gts);

    std::ofstream mj(out_dir / "metrics.json");
    mj << metrics_json(acc, errors).dump(2) << "\n";
    std::ofstream rt(out_dir / "report.txt");
    rt << metrics_table(acc, errors);
    echo_config(out_dir, cfg);
    std::cout << metrics_table(acc, errors);
    return 0;
}

int cmd_sweep_iou(const RunConfig& cfg) {
    require_path(cfg.pred, "pred");
    require_path(cfg.gt, "gt");
    const fs::path out_dir = ensure_out_dir(cfg);
    const auto preds = read_predictions(cfg.pred);
    const auto gts = ground_truth_from_manifest(cfg.gt, cfg.num_classes);
    const std::vector<double> thresholds = parse_threshold_list(cfg.thresholds);
    const auto sweep = iou_sweep(preds, gts, thresholds);

    nlohmann::ordered_json j;
    j["thresholds"] = thresholds;
    nlohmann::ordered_json top1 = nlohmann::ordered_json::array();
    nlohmann::ordered_json top5 = nlohmann::ordered_json::array();
    nlohmann::ordered_json gt_known = nlohmann::ordered_json::array();
    for (const auto& [t, acc] : sweep) {
        top1.push_back(acc.top1);
        top5.push_back(acc.top5);
        gt_known.push_back(acc.gt_known);
        std::cout << "iou " << t << ": top1 " << acc.top1 << "% top5 " << acc.top5
                  << "% gt-known " << acc.gt_known << "%\n";
    }
    j["top1"] = top1;
    j["top5"] = top5;
    j["gt_known"] = gt_known;
    std::ofstream f(out_dir / "sweep.json");
    f << j.dump(2) << "\n";
    echo_config(out_dir, cfg);
    return 0;
}

int cmd_error_analysis(const RunConfig& cfg) {
    require_path(cfg.pred, "pred");
    require_path(cfg.gt, "gt");
    const fs::path out_dir = ensure_out_dir(cfg);
    const auto preds = read_predictions(cfg.pred);
    const auto gts = ground_truth_from_manifest(cfg.gt, cfg.num_classes);
    const ErrorBreakdown e = error_analysis(preds, gts);
    nlohmann::json j = metrics_json(LocAccuracy{}, e)["errors"];
    j["records"] = e.total;
    std::ofstream f(out_dir / "errors.json");
    f << j.dump(2) << "\n";
    echo_config(out_dir, cfg);
    std::cout << "Cls " << 100.0 * e.frac(e.cls) << "%  M-Ins " << 100.0 * e.frac(e.m_ins)
              << "%  Part " << 100.0 * e.frac(e.part) << "%  More " << 100.0 * e.frac(e.more)
              << "%  OT " << 100.0 * e.frac(e.ot) << "%  Correct "
              << 100.0 * e.frac(e.correct) << "%\n";
    return 0;
}

int cmd_export_cam(const RunConfig& cfg) {
    require_path(cfg.image, "image");
    const fs::path out_dir = ensure_out_dir(cfg);
    const LoadedCheckpoint lc = load_for_inference(cfg);
    const LocalizeMode mode = localize_mode_from_name(cfg.mode);
    const VitConfig& mc = lc.ck.params.config;

    const Tensor<float> original = image_to_tensor(read_ppm(cfg.image));
    const index_t orig_size = original.dim(1);
    Tensor<float> input = augment(original, AugmentMode::Eval, lc.ck.augment, nullptr);
    InferenceOutput inf = run_inference(input, lc.ck.params, lc.layer_lo, lc.layer_hi);

    std::vector<index_t> classes;
    if (cfg.class_selector == "top1") {
        classes.push_back(inf.ranking[0]);
    } else if (cfg.class_selector == "gt") {
        if (cfg.label < 0 || cfg.label >= mc.num_classes) {
            throw UsageError("--class-selector gt needs a valid --label");
        }
        classes.push_back(cfg.label);
    } else if (cfg.class_selector == "all-top5") {
        for (std::size_t k = 0; k < inf.ranking.size() && k < 5; ++k) {
            classes.push_back(inf.ranking[k]);
        }
    } else {
        throw UsageError("unknown class selector '" + cfg.class_selector +
                         "' (expected top1, gt or all-top5)");
    }

    nlohmann::ordered_json sidecar = nlohmann::ordered_json::array();
    TensorContainer raw_maps;
    for (const index_t c : classes) {
        const Tensor<double> raw = class_map(inf, mode, c);
        raw_maps.put("cam." + std::to_string(c), raw);
        Tensor<double> map = postprocess(raw, mc.image_size, mc.image_size);
        const Box input_box = extract_bbox(map, cfg.tau);
        const Box orig_box = map_box_to_original(input_box, orig_size, lc.ck.augment.resize_to,
                                                 lc.ck.augment.crop_to);
        const fs::path pgm = out_dir / ("cam_" + std::to_string(c) + ".pgm");
        write_pgm(pgm, map);
        nlohmann::ordered_json entry;
        entry["class"] = c;
        entry["score"] = inf.probs[static_cast<std::size_t>(c)];
        entry["box"] = {orig_box.x0, orig_box.y0, orig_box.x1, orig_box.y1};
        entry["box_input"] = {input_box.x0, input_box.y0, input_box.x1, input_box.y1};
        entry["map"] = pgm.filename().string();
        sidecar.push_back(entry);
    }
    raw_maps.meta["config"] = mc.to_json();
    raw_maps.save(out_dir / "cams.tsc");
    std::ofstream f(out_dir / "cams.json");
    f << sidecar.dump(2) << "\n";
    echo_config(out_dir, cfg);
    std::cout << "wrote " << classes.size() << " map(s) to " << out_dir.string() << "\n";
    return 0;
}

int cmd_export_attn(const RunConfig& cfg) {
    require_path(cfg.image, "image");
    const fs::path out_dir = ensure_out_dir(cfg);
    const LoadedCheckpoint lc = load_for_inference(cfg);

    const Tensor<float> original = image_to_tensor(read_ppm(cfg.image));
    Tensor<float> input = augment(original, AugmentMode::Eval, lc.ck.augment, nullptr);
    Tape<float> tape;
    VitForward<float> fwd = vit_forward(tape, input, lc.ck.params);

    TensorContainer container;
    for (index_t l = 0; l < fwd.attention.depth(); ++l) {
        container.put("attn." + std::to_string(l + 1),
                      fwd.attention.layers[static_cast<std::size_t>(l)]);
    }
    container.meta["config"] = lc.ck.params.config.to_json();
    const fs::path path = out_dir / "attention.tsc";
    container.save(path);
    echo_config(out_dir, cfg);
    std::cout << "wrote " << fwd.attention.depth() << " attention matrices to " << path.string()
              << "\n";
    return 0;
}

int cmd_similarity(const RunConfig& cfg) {
    const fs::path out_dir = ensure_out_dir(cfg);
    const LoadedCheckpoint lc = load_for_inference(cfg);
    const VitConfig& mc = lc.ck.params.config;

    Tensor<double> vectors;
    if (cfg.target == "pos-embed") {
        // Patch-token position embeddings (the class token's row excluded).
        const Tensor<float>& pos = lc.ck.params.pos_embed->value;
        const index_t n = mc.num_patches(), d = mc.embed_dim;
        Tensor<double> rows({n, d});
        for (index_t i = 0; i < n; ++i) {
            for (index_t j = 0; j < d; ++j) {
                rows(i, j) = static_cast<double>(pos(i + 1, j));
            }
        }
        vectors = std::move(rows);
    } else if (cfg.target == "patch-tokens") {
        require_path(cfg.image, "image");
        const Tensor<float> original = image_to_tensor(read_ppm(cfg.image));
        Tensor<float> input = augment(original, AugmentMode::Eval, lc.ck.augment, nullptr);
        InferenceOutput inf = run_inference(input, lc.ck.params, lc.layer_lo, lc.layer_hi);
        vectors = inf.patch_tokens;
    } else {
        throw UsageError("unknown target '" + cfg.target +
                         "' (expected pos-embed or patch-tokens)");
    }

    const Tensor<double> sim = cosine_similarity_matrix(vectors);
    TensorContainer container;
    container.put("similarity", sim);
    container.meta["config"] = mc.to_json();
    container.save(out_dir / "similarity.tsc");

    // Min-max normalized heatmap.
    double lo = sim[0], hi = sim[0];
    for (const double v : sim.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Tensor<double> heat = sim;
    if (hi > lo) {
        for (double& v : heat.values()) {
            v = (v - lo) / (hi - lo);
        }
    } else {
        for (double& v : heat.values()) {
            v = 0.0;
        }
    }
    write_pgm(out_dir / "similarity.pgm", heat);
    echo_config(out_dir, cfg);
    std::cout << "wrote similarity matrix (" << sim.dim(0) << "x" << sim.dim(1) << ") to "
              << out_dir.string() << "\n";
    return 0;
}

int cmd_summary(const RunConfig& cfg) {
    ModelSummary summary;
    if (!cfg.checkpoint.empty()) {
        const Checkpoint ck = load_checkpoint(cfg.checkpoint);
        summary = model_summary(ck.params);
    } else {
        summary = model_summary(
            init_params<float>(cfg.vit(), head_variant_from_name(cfg.head_variant), cfg.seed));
    }
    std::cout << summary.table();
    if (!cfg.out.empty()) {
        const fs::path out_dir = ensure_out_dir(cfg);
        std::ofstream f(out_dir / "summary.txt");
        f << summary.table();
        echo_config(out_dir, cfg);
    }
    return 0;
}

}  // namespace

std::string cli_help() {
    std::ostringstream os;
    os << "usage: tscam <subcommand> [--config file] [--key value ...]\n"
       << "\n"
       << "subcommands:\n"
       << "  generate-data    write a synthetic dataset (--out)\n"
       << "  train            train on a dataset (--data-dir --out)\n"
       << "  infer            predictions + maps (--checkpoint, --image|--manifest, --out)\n"
       << "  eval             localization metrics (--pred --gt --out)\n"
       << "  sweep-iou        accuracy across IoU thresholds (--pred --gt --out)\n"
       << "  error-analysis   five-way error taxonomy (--pred --gt --out)\n"
       << "  export-cam       per-class maps + boxes (--checkpoint --image --out)\n"
       << "  export-attn      attention matrices (--checkpoint --image --out)\n"
       << "  similarity       cosine similarity matrix (--checkpoint [--image] --out)\n"
       << "  summary          parameter table (--checkpoint | model flags)\n"
       << "\n"
       << "The config file (also via TSCAM_CONFIG) holds 'key = value' lines; every key\n"
       << "is also available as a --kebab-case flag. Keys:\n";
    for (const std::string& key : config_keys()) {
        std::string flag = key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        os << "  --" << flag << "\n";
    }
    return os.str();
}

int dispatch(const std::vector<std::string>& args) {
    try {
        if (args.empty()) {
            throw UsageError("no subcommand given");
        }
        const std::string& cmd = args[0];
        if (cmd == "help" || cmd == "--help" || cmd == "-h") {
            std::cout << cli_help();
            return 0;
        }

        // Split out --config, apply the file first, then flag overrides.
        std::vector<std::string> flags(args.begin() + 1, args.end());
        std::string config_path;
        if (const char* env = std::getenv("TSCAM_CONFIG")) {
            config_path = env;
        }
        for (std::size_t i = 0; i < flags.size();) {
            if (flags[i] == "--config") {
                if (i + 1 >= flags.size()) {
                    throw UsageError("--config needs a path");
                }
                config_path = flags[i + 1];
                flags.erase(flags.begin() + static_cast<std::ptrdiff_t>(i),
                            flags.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            } else if (flags[i].rfind("--config=", 0) == 0) {
                config_path = flags[i].substr(9);
                flags.erase(flags.begin() + static_cast<std::ptrdiff_t>(i));
            } else {
                ++i;
            }
        }

        RunConfig cfg;
        if (!config_path.empty()) {
            parse_config_file(config_path, &cfg);
        }
        apply_flags(flags, &cfg);

        if (cmd == "generate-data") {
            return cmd_generate_data(cfg);
        }
        if (cmd == "train") {
            return cmd_train(cfg);
        }
        if (cmd == "infer") {
            return cmd_infer(cfg);
        }
        if (cmd == "eval") {
            return cmd_eval(cfg);
        }
        if (cmd == "sweep-iou") {
            return cmd_sweep_iou(cfg);
        }
        if (cmd == "error-analysis") {
            return cmd_error_analysis(cfg);
        }
        if (cmd == "export-cam") {
            return cmd_export_cam(cfg);
        }
        if (cmd == "export-attn") {
            return cmd_export_attn(cfg);
        }
        if (cmd == "similarity") {
            return cmd_similarity(cfg);
        }
        if (cmd == "summary") {
            return cmd_summary(cfg);
        }
        throw UsageError("unknown subcommand '" + cmd + "'");
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n\n" << cli_help();
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int dispatch(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return dispatch(args);
}

}  // namespace tscam
