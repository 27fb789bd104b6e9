#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tscam/box.hpp"
#include "tscam/tensor.hpp"

namespace tscam {

struct PredictionRecord {
    std::string id;
    std::vector<index_t> top;      // class ids, descending score, up to 5
    std::vector<double> scores;    // aligned with top
    std::map<index_t, Box> boxes;  // per-class map-derived boxes
};

struct GroundTruthRecord {
    std::string id;
    index_t label = 0;
    std::vector<Box> boxes;
};

struct LocAccuracy {
    double top1 = 0.0;  // percentages
    double top5 = 0.0;
    double gt_known = 0.0;
};

// A record counts for Top-1 when the top class is correct and its box has
// IoU strictly over the threshold with at least one ground-truth box; for
// Top-5 when any of the top classes passes the same test with its own box;
// GT-Known scores the ground-truth class's box regardless of classification.
LocAccuracy loc_accuracy(const std::vector<PredictionRecord>& preds,
                         const std::vector<GroundTruthRecord>& gts, double iou_threshold = 0.5);

std::vector<std::pair<double, LocAccuracy>> iou_sweep(
    const std::vector<PredictionRecord>& preds, const std::vector<GroundTruthRecord>& gts,
    const std::vector<double>& thresholds);

// Five-way localization error taxonomy plus the correct bucket; the six
// integer counts always partition the record set.
struct ErrorBreakdown {
    long long cls = 0;
    long long m_ins = 0;
    long long part = 0;
    long long more = 0;
    long long ot = 0;
    long long correct = 0;
    long long total = 0;

    double frac(long long c) const {
        return total > 0 ? static_cast<double>(c) / static_cast<double>(total) : 0.0;
    }
};

ErrorBreakdown error_analysis(const std::vector<PredictionRecord>& preds,
                              const std::vector<GroundTruthRecord>& gts);

// JSON Lines round-trip of prediction records.
void write_predictions(const std::filesystem::path& path,
                       const std::vector<PredictionRecord>& preds);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

std::vector<GroundTruthRecord> ground_truth_from_manifest(const std::filesystem::path& manifest,
                                                          index_t num_classes);

nlohmann::json metrics_json(const LocAccuracy& acc, const ErrorBreakdown& errors);
std::string metrics_table(const LocAccuracy& acc, const ErrorBreakdown& errors);

}  // namespace tscam
