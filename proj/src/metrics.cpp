#include "evinet/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "evinet/errors.hpp"
#include "evinet/rng.hpp"

namespace evinet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median_sorted(std::vector<double>& v) {
    if (v.empty()) return kNaN;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

const char* anomaly_kind_name(AnomalyKind kind) {
    return kind == AnomalyKind::ConfidentWrong ? "confident-wrong" : "hesitant-right";
}

ConfusionMetrics one_vs_rest_confusion_metrics(const std::vector<PredictionRecord>& preds,
                                               int class_index) {
    if (preds.empty()) {
        throw validation_error("one_vs_rest_confusion_metrics: no predictions");
    }
    std::int64_t tp = 0, fn = 0, fp = 0, tn = 0;
    for (const auto& p : preds) {
        const bool truth = p.true_class == class_index;
        const bool predicted = p.predicted_class == class_index;
        if (truth && predicted) ++tp;
        else if (truth) ++fn;
        else if (predicted) ++fp;
        else ++tn;
    }
    ConfusionMetrics m;
    const std::int64_t n = tp + fn + fp + tn;
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(n);
    m.sensitivity = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : kNaN;
    m.specificity = (tn + fp) > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : kNaN;
    return m;
}

RocResult roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw validation_error("roc_auc: scores and labels must be nonempty and equally sized");
    }
    std::int64_t n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!std::isfinite(scores[i])) {
            throw validation_error("roc_auc: non-finite score");
        }
        (labels[i] != 0 ? n_pos : n_neg) += 1;
    }
    if (n_pos == 0 || n_neg == 0) {
        throw validation_error("roc_auc: need at least one positive and one negative label");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    RocResult r;
    r.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::int64_t tp = 0, fp = 0;
    std::size_t i = 0;
    double auc = 0.0;
    while (i < order.size()) {
        // Consume the whole tie group so the curve has one point per
        // distinct threshold; the trapezoid over the tie diagonal is then
        // exactly the 1/2-credit Mann-Whitney tie term.
        const double threshold = scores[order[i]];
        std::int64_t d_tp = 0, d_fp = 0;
        while (i < order.size() && scores[order[i]] == threshold) {
            (labels[order[i]] != 0 ? d_tp : d_fp) += 1;
            ++i;
        }
        const double tpr0 = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double fpr0 = static_cast<double>(fp) / static_cast<double>(n_neg);
        tp += d_tp;
        fp += d_fp;
        const double tpr1 = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double fpr1 = static_cast<double>(fp) / static_cast<double>(n_neg);
        auc += (fpr1 - fpr0) * 0.5 * (tpr0 + tpr1);
        r.points.push_back({fpr1, tpr1, threshold});
    }
    r.auc = auc;
    return r;
}

FoldCi fold_ci(const std::vector<double>& per_fold_values, double level) {
    if (per_fold_values.size() < 2) {
        throw validation_error("fold_ci: need at least two fold values");
    }
    if (level != 0.95) {
        throw validation_error("fold_ci: only the 95% level is supported");
    }
    const double n = static_cast<double>(per_fold_values.size());
    FoldCi ci;
    ci.min = *std::min_element(per_fold_values.begin(), per_fold_values.end());
    ci.max = *std::max_element(per_fold_values.begin(), per_fold_values.end());
    if (ci.min == ci.max) {
        // Identical folds collapse exactly, not merely to rounding noise.
        ci.mean = ci.ci_low = ci.ci_high = ci.min;
        ci.sd = 0.0;
        return ci;
    }
    ci.mean = std::accumulate(per_fold_values.begin(), per_fold_values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : per_fold_values) ss += (v - ci.mean) * (v - ci.mean);
    ci.sd = std::sqrt(ss / (n - 1.0));
    const double half = 1.96 * ci.sd / std::sqrt(n);
    ci.ci_low = ci.mean - half;
    ci.ci_high = ci.mean + half;
    return ci;
}

BootstrapCi bootstrap_auc_ci(const std::vector<double>& scores, const std::vector<int>& labels,
                             int resamples, std::uint64_t seed) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw validation_error("bootstrap_auc_ci: scores and labels must be nonempty and equal");
    }
    if (resamples < 1) {
        throw validation_error("bootstrap_auc_ci: resamples must be >= 1");
    }
    std::mt19937_64 rng(derive_seed(seed, 0xb007));
    std::vector<double> aucs;
    aucs.reserve(static_cast<std::size_t>(resamples));
    std::vector<double> s(scores.size());
    std::vector<int> l(labels.size());
    for (int b = 0; b < resamples; ++b) {
        bool both = false;
        // Degenerate single-class resamples are redrawn; tiny cohorts would
        // otherwise poison the percentiles with NaNs.
        do {
            int pos = 0;
            for (std::size_t i = 0; i < s.size(); ++i) {
                const std::size_t j = static_cast<std::size_t>(bounded(rng, s.size()));
                s[i] = scores[j];
                l[i] = labels[j];
                pos += l[i] != 0 ? 1 : 0;
            }
            both = pos > 0 && pos < static_cast<int>(s.size());
        } while (!both);
        aucs.push_back(roc_auc(s, l).auc);
    }
    std::sort(aucs.begin(), aucs.end());
    const auto percentile = [&](double q) {
        const double pos = q * (static_cast<double>(aucs.size()) - 1.0);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, aucs.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return aucs[lo] + frac * (aucs[hi] - aucs[lo]);
    };
    return BootstrapCi{percentile(0.025), percentile(0.975)};
}

std::vector<GradeRow> grade_correct_rates(const std::vector<PredictionRecord>& preds) {
    std::vector<GradeRow> rows(5);
    std::array<std::int64_t, 5> correct{};
    for (int g = 0; g < 5; ++g) rows[static_cast<std::size_t>(g)].grade = g + 1;
    for (const auto& p : preds) {
        if (p.grade < 1 || p.grade > 5) {
            throw validation_error("grade_correct_rates: prediction '" + p.id +
                                   "' carries grade " + std::to_string(p.grade));
        }
        auto& row = rows[static_cast<std::size_t>(p.grade - 1)];
        ++row.count;
        if (p.predicted_class == p.true_class) ++correct[static_cast<std::size_t>(p.grade - 1)];
    }
    for (int g = 0; g < 5; ++g) {
        auto& row = rows[static_cast<std::size_t>(g)];
        row.correct_rate = row.count > 0
                               ? static_cast<double>(correct[static_cast<std::size_t>(g)]) /
                                     static_cast<double>(row.count)
                               : kNaN;
    }
    return rows;
}

std::vector<Anomaly> flag_anomalies(const std::vector<PredictionRecord>& preds) {
    std::vector<Anomaly> out;
    for (const auto& p : preds) {
        const bool correct = p.predicted_class == p.true_class;
        if (!correct && p.grade <= 2) {
            out.push_back({p.id, AnomalyKind::ConfidentWrong});
        } else if (correct && p.grade >= 4) {
            out.push_back({p.id, AnomalyKind::HesitantRight});
        }
    }
    return out;
}

std::vector<double> uncertainty_summary(const std::vector<PredictionRecord>& preds, int k) {
    std::vector<std::vector<double>> per_class(static_cast<std::size_t>(k));
    for (const auto& p : preds) {
        if (p.true_class < 0 || p.true_class >= k) {
            throw validation_error("uncertainty_summary: prediction '" + p.id +
                                   "' has class outside [0," + std::to_string(k) + ")");
        }
        per_class[static_cast<std::size_t>(p.true_class)].push_back(p.uncertainty);
    }
    std::vector<double> medians(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        medians[static_cast<std::size_t>(c)] = median_sorted(per_class[static_cast<std::size_t>(c)]);
    }
    return medians;
}

} // namespace evinet
