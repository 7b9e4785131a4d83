#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evinet/metrics.hpp"

namespace evinet {

// Deterministic number formatting used by every report file: %.12g, with
// NaN normalised to "nan".
std::string format_value(double v);

// predictions table: id,true,pred,p0..p{k-1},u,grade
void write_predictions(const std::string& path, const std::vector<PredictionRecord>& preds, int k);
std::vector<PredictionRecord> read_predictions(const std::string& path);

struct ReportInputs {
    std::vector<PredictionRecord> pooled;
    // Per-fold prediction sets; empty for external/eval reports.
    std::vector<std::vector<PredictionRecord>> per_fold;
    int k = 3;
    // "pooled" for cross-validation, "external" for held-out evaluation.
    std::string scope = "pooled";
    std::uint64_t seed = 0;
    int bootstrap_resamples = 2000;
};

// Emits the full report surface into out_dir: predictions.csv, per-class
// ROC point files, grade_table.csv, anomalies.csv, uncertainty_summary.csv,
// metrics_summary.csv and a human-readable summary.txt.
void write_report(const std::string& out_dir, const ReportInputs& inputs);

} // namespace evinet
