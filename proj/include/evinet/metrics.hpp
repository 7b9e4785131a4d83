#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace evinet {

// One scored subject after inference. probs is the Dirichlet mean alpha/S;
// grade is grade_of(uncertainty).
struct PredictionRecord {
    std::string id;
    int true_class = 0;
    int predicted_class = 0;
    std::vector<double> probs;
    double uncertainty = 1.0;
    int grade = 5;
};

struct ConfusionMetrics {
    double accuracy = 0.0;
    double sensitivity = 0.0;   // NaN when the class has no positives
    double specificity = 0.0;   // NaN when the class has no negatives
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

struct RocResult {
    double auc = 0.0;
    std::vector<RocPoint> points;   // (0,0) .. (1,1), fpr/tpr non-decreasing
};

struct FoldCi {
    double mean = 0.0;
    double sd = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct GradeRow {
    int grade = 1;
    std::int64_t count = 0;
    double correct_rate = 0.0;   // NaN for empty grades
};

enum class AnomalyKind { ConfidentWrong, HesitantRight };

struct Anomaly {
    std::string id;
    AnomalyKind kind = AnomalyKind::ConfidentWrong;
};

// One-vs-rest confusion metrics at the argmax operating point. Undefined
// ratios (no positives / no negatives) come back as NaN, never as 0.
ConfusionMetrics one_vs_rest_confusion_metrics(const std::vector<PredictionRecord>& preds,
                                               int class_index);

// ROC by threshold sweep over distinct scores, AUC by trapezoid; equal to
// Mann-Whitney concordance with ties counted 1/2. Needs both label values.
RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Mean, sample SD and the 1.96-normal-approximation interval over per-fold
// values; needs at least two folds.
FoldCi fold_ci(const std::vector<double>& per_fold_values, double level = 0.95);

// Seeded percentile bootstrap over pooled subjects (the paper's CI method is
// unstated, so both this and fold_ci appear in reports).
struct BootstrapCi {
    double low = 0.0;
    double high = 0.0;
};
BootstrapCi bootstrap_auc_ci(const std::vector<double>& scores, const std::vector<int>& labels,
                             int resamples, std::uint64_t seed);

// Five rows, one per uncertainty grade; counts always sum to preds.size().
std::vector<GradeRow> grade_correct_rates(const std::vector<PredictionRecord>& preds);

// confident-wrong: wrong prediction at grade <= 2;
// hesitant-right: correct prediction at grade >= 4.
std::vector<Anomaly> flag_anomalies(const std::vector<PredictionRecord>& preds);

// Median uncertainty per true class (even counts average the central pair);
// NaN for classes with no predictions.
std::vector<double> uncertainty_summary(const std::vector<PredictionRecord>& preds, int k);

const char* anomaly_kind_name(AnomalyKind kind);

} // namespace evinet
