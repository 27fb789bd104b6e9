#include "tscam/eval.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "tscam/dataset.hpp"
#include "tscam/errors.hpp"

namespace tscam {

namespace {

// Pairs every ground-truth record with its prediction; missing ids are a
// coverage error.
std::vector<std::pair<const PredictionRecord*, const GroundTruthRecord*>> join(
    const std::vector<PredictionRecord>& preds, const std::vector<GroundTruthRecord>& gts) {
    std::map<std::string, const PredictionRecord*> by_id;
    for (const auto& p : preds) {
        by_id[p.id] = &p;
    }
    std::vector<std::pair<const PredictionRecord*, const GroundTruthRecord*>> joined;
    std::string missing;
    for (const auto& g : gts) {
        auto it = by_id.find(g.id);
        if (it == by_id.end()) {
            missing += missing.empty() ? g.id : (", " + g.id);
        } else {
            joined.emplace_back(it->second, &g);
        }
    }
    if (!missing.empty()) {
        throw CoverageError("no prediction for: " + missing);
    }
    return joined;
}

double best_iou(const Box& pred, const std::vector<Box>& gts) {
    double best = 0.0;
    for (const Box& g : gts) {
        best = std::max(best, iou(pred, g));
    }
    return best;
}

const Box& box_for_class(const PredictionRecord& p, index_t cls) {
    auto it = p.boxes.find(cls);
    if (it == p.boxes.end()) {
        throw CoverageError("prediction '" + p.id + "' has no box for class " +
                            std::to_string(cls));
    }
    return it->second;
}

}  // namespace

LocAccuracy loc_accuracy(const std::vector<PredictionRecord>& preds,
                         const std::vector<GroundTruthRecord>& gts, double iou_threshold) {
    const auto joined = join(preds, gts);
    long long top1 = 0, top5 = 0, gt_known = 0;
    for (const auto& [p, g] : joined) {
        if (p->top.empty()) {
            throw ValueError("prediction '" + p->id + "' has no classes");
        }
        // Top-1: correct class and its own box over the threshold.
        if (p->top[0] == g->label &&
            best_iou(box_for_class(*p, p->top[0]), g->boxes) > iou_threshold) {
            ++top1;
        }
        // Top-5: any listed class that is correct, scored with its own box.
        for (std::size_t k = 0; k < p->top.size() && k < 5; ++k) {
            if (p->top[k] == g->label &&
                best_iou(box_for_class(*p, p->top[k]), g->boxes) > iou_threshold) {
                ++top5;
                break;
            }
        }
        // GT-Known: the ground-truth class's box, classification ignored.
        if (best_iou(box_for_class(*p, g->label), g->boxes) > iou_threshold) {
            ++gt_known;
        }
    }
    const double n = static_cast<double>(joined.size());
    return LocAccuracy{100.0 * top1 / n, 100.0 * top5 / n, 100.0 * gt_known / n};
}

std::vector<std::pair<double, LocAccuracy>> iou_sweep(
    const std::vector<PredictionRecord>& preds, const std::vector<GroundTruthRecord>& gts,
    const std::vector<double>& thresholds) {
    for (std::size_t i = 1; i < thresholds.size(); ++i) {
        if (thresholds[i] < thresholds[i - 1]) {
            throw ValueError("iou_sweep: thresholds must be sorted ascending");
        }
    }
    std::vector<std::pair<double, LocAccuracy>> out;
    out.reserve(thresholds.size());
    for (const double t : thresholds) {
        out.emplace_back(t, loc_accuracy(preds, gts, t));
    }
    return out;
}

ErrorBreakdown error_analysis(const std::vector<PredictionRecord>& preds,
                              const std::vector<GroundTruthRecord>& gts) {
    const auto joined = join(preds, gts);
    ErrorBreakdown e;
    e.total = static_cast<long long>(joined.size());
    for (const auto& [p, g] : joined) {
        if (p->top.empty()) {
            throw ValueError("prediction '" + p->id + "' has no classes");
        }
        if (p->top[0] != g->label) {
            ++e.cls;
            continue;
        }
        const Box& pred_box = box_for_class(*p, p->top[0]);
        double iou_m = 0.0, iog_m = 0.0, iop_m = 0.0;
        long long iog_over_03 = 0;
        for (const Box& gt : g->boxes) {
            iou_m = std::max(iou_m, iou(pred_box, gt));
            const double g_frac = iog(pred_box, gt);
            const double p_frac = iop(pred_box, gt);
            iog_m = std::max(iog_m, g_frac);
            iop_m = std::max(iop_m, p_frac);
            if (g_frac > 0.3) {
                ++iog_over_03;
            }
        }
        if (iou_m < 0.5) {
            if (iog_over_03 > 1) {
                ++e.m_ins;
            } else if (iop_m > 0.5) {
                ++e.part;
            } else if (iog_m > 0.7) {
                ++e.more;
            } else {
                ++e.ot;
            }
        } else {
            ++e.correct;
        }
    }
    return e;
}

void write_predictions(const std::filesystem::path& path,
                       const std::vector<PredictionRecord>& preds) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    for (const auto& p : preds) {
        nlohmann::ordered_json j;
        j["id"] = p.id;
        j["top5"] = p.top;
        j["scores"] = p.scores;
        nlohmann::ordered_json boxes = nlohmann::ordered_json::object();
        for (const auto& [cls, b] : p.boxes) {
            boxes[std::to_string(cls)] = {b.x0, b.y0, b.x1, b.y1};
        }
        j["boxes"] = boxes;
        out << j.dump() << "\n";
    }
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open predictions '" + path.string() + "'");
    }
    std::vector<PredictionRecord> preds;
    std::string line;
    index_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            PredictionRecord p;
            p.id = j.at("id").get<std::string>();
            p.top = j.at("top5").get<std::vector<index_t>>();
            p.scores = j.at("scores").get<std::vector<double>>();
            for (auto it = j.at("boxes").begin(); it != j.at("boxes").end(); ++it) {
                const auto& jb = it.value();
                p.boxes[static_cast<index_t>(std::stoll(it.key()))] =
                    Box{jb[0].get<int>(), jb[1].get<int>(), jb[2].get<int>(), jb[3].get<int>()};
            }
            preds.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("predictions '" + path.string() + "' line " +
                             std::to_string(line_no) + ": " + e.what());
        } catch (const std::logic_error& e) {
            throw ParseError("predictions '" + path.string() + "' line " +
                             std::to_string(line_no) + ": " + e.what());
        }
    }
    return preds;
}

std::vector<GroundTruthRecord> ground_truth_from_manifest(const std::filesystem::path& manifest,
                                                          index_t num_classes) {
    std::vector<GroundTruthRecord> out;
    for (const DatasetRecord& rec : read_manifest(manifest, num_classes)) {
        out.push_back(GroundTruthRecord{rec.path, rec.label, rec.boxes});
    }
    return out;
}

nlohmann::json metrics_json(const LocAccuracy& acc, const ErrorBreakdown& errors) {
    nlohmann::json j;
    j["loc_acc"] = {{"top1", acc.top1}, {"top5", acc.top5}, {"gt_known", acc.gt_known}};
    j["errors"] = {{"cls", 100.0 * errors.frac(errors.cls)},
                   {"m_ins", 100.0 * errors.frac(errors.m_ins)},
                   {"part", 100.0 * errors.frac(errors.part)},
                   {"more", 100.0 * errors.frac(errors.more)},
                   {"ot", 100.0 * errors.frac(errors.ot)},
                   {"correct", 100.0 * errors.frac(errors.correct)}};
    j["records"] = errors.total;
    return j;
}

std::string metrics_table(const LocAccuracy& acc, const ErrorBreakdown& errors) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "Loc Acc      Top-1    Top-5    Gt-Known\n";
    os << "             " << std::setw(6) << acc.top1 << "   " << std::setw(6) << acc.top5
       << "   " << std::setw(8) << acc.gt_known << "\n";
    os << "Errors (%)   Cls      M-Ins    Part     More     OT       Correct\n";
    os << "             " << std::setw(6) << 100.0 * errors.frac(errors.cls) << "   "
       << std::setw(6) << 100.0 * errors.frac(errors.m_ins) << "   " << std::setw(6)
       << 100.0 * errors.frac(errors.part) << "   " << std::setw(6)
       << 100.0 * errors.frac(errors.more) << "   " << std::setw(6)
       << 100.0 * errors.frac(errors.ot) << "   " << std::setw(7)
       << 100.0 * errors.frac(errors.correct) << "\n";
    os << "records      " << errors.total << "\n";
    return os.str();
}

}  // namespace tscam
