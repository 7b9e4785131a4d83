#include "evinet/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>

#include "evinet/csv.hpp"
#include "evinet/data.hpp"
#include "evinet/errors.hpp"
#include "evinet/evidential.hpp"

namespace evinet {

std::string format_value(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

namespace {

std::string class_label(int c, int k) {
    if (k == kNumClasses) return kClassNames[c];
    return "class" + std::to_string(c);
}

std::vector<double> class_scores(const std::vector<PredictionRecord>& preds, int c) {
    std::vector<double> s;
    s.reserve(preds.size());
    for (const auto& p : preds) s.push_back(p.probs[static_cast<std::size_t>(c)]);
    return s;
}

std::vector<int> class_labels(const std::vector<PredictionRecord>& preds, int c) {
    std::vector<int> l;
    l.reserve(preds.size());
    for (const auto& p : preds) l.push_back(p.true_class == c ? 1 : 0);
    return l;
}

bool has_both_label_values(const std::vector<int>& labels) {
    bool pos = false, neg = false;
    for (int l : labels) (l != 0 ? pos : neg) = true;
    return pos && neg;
}

// ROC for one class, or nothing when the set is single-class (tiny or
// degenerate cohorts); callers then report NaN rather than aborting.
std::optional<RocResult> roc_for_class(const std::vector<PredictionRecord>& preds, int c) {
    const auto labels = class_labels(preds, c);
    if (!has_both_label_values(labels)) return std::nullopt;
    return roc_auc(class_scores(preds, c), labels);
}

} // namespace

void write_predictions(const std::string& path, const std::vector<PredictionRecord>& preds, int k) {
    CsvTable t;
    t.header = {"id", "true", "pred"};
    for (int c = 0; c < k; ++c) t.header.push_back("p" + std::to_string(c));
    t.header.push_back("u");
    t.header.push_back("grade");
    for (const auto& p : preds) {
        std::vector<std::string> row = {p.id, std::to_string(p.true_class),
                                        std::to_string(p.predicted_class)};
        for (int c = 0; c < k; ++c) row.push_back(format_value(p.probs[static_cast<std::size_t>(c)]));
        row.push_back(format_value(p.uncertainty));
        row.push_back(std::to_string(p.grade));
        t.rows.push_back(std::move(row));
    }
    write_csv(path, t);
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
    CsvTable t = read_csv(path);
    const std::size_t cid = t.column("id", path);
    const std::size_t ctrue = t.column("true", path);
    const std::size_t cpred = t.column("pred", path);
    const std::size_t cu = t.column("u", path);
    const std::size_t cgrade = t.column("grade", path);
    std::vector<std::size_t> cprobs;
    for (int c = 0;; ++c) {
        const std::string name = "p" + std::to_string(c);
        bool found = false;
        for (std::size_t i = 0; i < t.header.size(); ++i) {
            if (t.header[i] == name) {
                cprobs.push_back(i);
                found = true;
                break;
            }
        }
        if (!found) break;
    }
    if (cprobs.size() < 2) {
        throw validation_error(path + ": need probability columns p0,p1,...");
    }
    std::vector<PredictionRecord> preds;
    preds.reserve(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        PredictionRecord p;
        try {
            p.id = row[cid];
            p.true_class = std::stoi(row[ctrue]);
            p.predicted_class = std::stoi(row[cpred]);
            for (std::size_t c : cprobs) p.probs.push_back(std::stod(row[c]));
            p.uncertainty = std::stod(row[cu]);
            p.grade = std::stoi(row[cgrade]);
        } catch (const std::exception&) {
            throw validation_error(path + ": row " + std::to_string(r + 1) +
                                   ": unparseable field");
        }
        preds.push_back(std::move(p));
    }
    return preds;
}

void write_report(const std::string& out_dir, const ReportInputs& in) {
    const int k = in.k;
    for (const auto& p : in.pooled) {
        if (static_cast<int>(p.probs.size()) != k) {
            throw validation_error("write_report: prediction '" + p.id + "' carries " +
                                   std::to_string(p.probs.size()) + " probabilities, expected " +
                                   std::to_string(k));
        }
    }

    write_predictions(out_dir + "/predictions.csv", in.pooled, k);

    // Per-class ROC points and pooled AUC (NaN and an empty points file for
    // classes without both label values).
    std::vector<double> pooled_auc(static_cast<std::size_t>(k),
                                   std::numeric_limits<double>::quiet_NaN());
    for (int c = 0; c < k; ++c) {
        const auto roc = roc_for_class(in.pooled, c);
        CsvTable t;
        t.header = {"fpr", "tpr", "threshold"};
        if (roc) {
            pooled_auc[static_cast<std::size_t>(c)] = roc->auc;
            for (const auto& pt : roc->points) {
                t.rows.push_back({format_value(pt.fpr), format_value(pt.tpr),
                                  format_value(pt.threshold)});
            }
        }
        write_csv(out_dir + "/roc_" + class_label(c, k) + ".csv", t);
    }

    // Grade table.
    const std::vector<GradeRow> grades = grade_correct_rates(in.pooled);
    {
        CsvTable t;
        t.header = {"grade", "count", "correct_rate"};
        for (const auto& g : grades) {
            t.rows.push_back({std::to_string(g.grade), std::to_string(g.count),
                              format_value(g.correct_rate)});
        }
        write_csv(out_dir + "/grade_table.csv", t);
    }

    // Anomalies.
    {
        const std::vector<Anomaly> anomalies = flag_anomalies(in.pooled);
        CsvTable t;
        t.header = {"id", "kind"};
        for (const auto& a : anomalies) t.rows.push_back({a.id, anomaly_kind_name(a.kind)});
        write_csv(out_dir + "/anomalies.csv", t);
    }

    // Median uncertainty per class.
    const std::vector<double> medians = uncertainty_summary(in.pooled, k);
    {
        CsvTable t;
        t.header = {"class", "median_uncertainty"};
        for (int c = 0; c < k; ++c) {
            t.rows.push_back({class_label(c, k), format_value(medians[static_cast<std::size_t>(c)])});
        }
        write_csv(out_dir + "/uncertainty_summary.csv", t);
    }

    // Metrics summary rows: class,metric,scope,value.
    CsvTable ms;
    ms.header = {"class", "metric", "scope", "value"};
    const auto add = [&ms](const std::string& cls, const std::string& metric,
                           const std::string& scope, double value) {
        ms.rows.push_back({cls, metric, scope, format_value(value)});
    };

    const char* metric_names[4] = {"auc", "accuracy", "sensitivity", "specificity"};
    for (int c = 0; c < k; ++c) {
        const std::string cls = class_label(c, k);

        // Fold-level rows and their aggregates.
        if (in.per_fold.size() >= 2) {
            std::vector<std::vector<double>> fold_values(4);
            for (std::size_t f = 0; f < in.per_fold.size(); ++f) {
                const auto& fp = in.per_fold[f];
                const auto roc = roc_for_class(fp, c);
                const ConfusionMetrics cm = one_vs_rest_confusion_metrics(fp, c);
                const double values[4] = {
                    roc ? roc->auc : std::numeric_limits<double>::quiet_NaN(),
                    cm.accuracy, cm.sensitivity, cm.specificity};
                for (int m = 0; m < 4; ++m) {
                    fold_values[static_cast<std::size_t>(m)].push_back(values[m]);
                    add(cls, metric_names[m], "fold" + std::to_string(f), values[m]);
                }
            }
            for (int m = 0; m < 4; ++m) {
                const auto& values = fold_values[static_cast<std::size_t>(m)];
                const bool defined = std::all_of(values.begin(), values.end(),
                                                 [](double v) { return std::isfinite(v); });
                const FoldCi ci = defined ? fold_ci(values) : FoldCi{
                    std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                    std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                    std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
                add(cls, metric_names[m], "fold_mean", ci.mean);
                add(cls, metric_names[m], "fold_sd", ci.sd);
                add(cls, metric_names[m], "ci_low", ci.ci_low);
                add(cls, metric_names[m], "ci_high", ci.ci_high);
                add(cls, metric_names[m], "fold_min", ci.min);
                add(cls, metric_names[m], "fold_max", ci.max);
            }
        }

        // Pooled operating-point metrics and AUC with bootstrap CI.
        const ConfusionMetrics cm = one_vs_rest_confusion_metrics(in.pooled, c);
        add(cls, "auc", in.scope, pooled_auc[static_cast<std::size_t>(c)]);
        add(cls, "accuracy", in.scope, cm.accuracy);
        add(cls, "sensitivity", in.scope, cm.sensitivity);
        add(cls, "specificity", in.scope, cm.specificity);
        BootstrapCi bci{std::numeric_limits<double>::quiet_NaN(),
                        std::numeric_limits<double>::quiet_NaN()};
        if (std::isfinite(pooled_auc[static_cast<std::size_t>(c)])) {
            bci = bootstrap_auc_ci(class_scores(in.pooled, c), class_labels(in.pooled, c),
                                   in.bootstrap_resamples,
                                   in.seed + static_cast<std::uint64_t>(c));
        }
        add(cls, "auc", "bootstrap_low", bci.low);
        add(cls, "auc", "bootstrap_high", bci.high);
    }
    {
        double macro = 0.0;
        for (double a : pooled_auc) macro += a;
        macro /= static_cast<double>(k);
        add("macro", "auc", in.scope, macro);
    }
    write_csv(out_dir + "/metrics_summary.csv", ms);

    // Human-readable digest.
    std::ostringstream txt;
    txt << "report scope: " << in.scope << "\n";
    txt << "subjects: " << in.pooled.size() << "\n\n";
    txt << "class           auc   accuracy  sensitivity  specificity  median_u\n";
    for (int c = 0; c < k; ++c) {
        const ConfusionMetrics cm = one_vs_rest_confusion_metrics(in.pooled, c);
        char line[160];
        std::snprintf(line, sizeof(line), "%-10s %8.4f %10.4f %12.4f %12.4f %9.4f\n",
                      class_label(c, k).c_str(), pooled_auc[static_cast<std::size_t>(c)],
                      cm.accuracy, cm.sensitivity, cm.specificity,
                      medians[static_cast<std::size_t>(c)]);
        txt << line;
    }
    txt << "\ngrade  count  correct_rate\n";
    for (const auto& g : grades) {
        char line[80];
        if (std::isnan(g.correct_rate)) {
            std::snprintf(line, sizeof(line), "%5d %6lld           nan\n", g.grade,
                          static_cast<long long>(g.count));
        } else {
            std::snprintf(line, sizeof(line), "%5d %6lld %13.4f\n", g.grade,
                          static_cast<long long>(g.count), g.correct_rate);
        }
        txt << line;
    }
    txt << "\nanomalies: " << flag_anomalies(in.pooled).size() << " (see anomalies.csv)\n";
    std::ofstream summary(out_dir + "/summary.txt");
    if (!summary) throw io_error("write_report: cannot open " + out_dir + "/summary.txt");
    summary << txt.str();
    if (!summary) throw io_error("write_report: failed writing summary.txt");
}

} // namespace evinet
