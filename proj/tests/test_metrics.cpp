#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "evinet/errors.hpp"
#include "evinet/evidential.hpp"
#include "evinet/metrics.hpp"
#include "evinet/rng.hpp"

using namespace evinet;

namespace {

PredictionRecord pred(const std::string& id, int truth, int predicted, double u) {
    PredictionRecord p;
    p.id = id;
    p.true_class = truth;
    p.predicted_class = predicted;
    p.probs = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    p.uncertainty = u;
    p.grade = grade_of(u);
    return p;
}

// Predictions realising a given confusion matrix rows(true) x cols(pred).
std::vector<PredictionRecord> from_confusion(const std::vector<std::vector<int>>& m) {
    std::vector<PredictionRecord> preds;
    int n = 0;
    for (std::size_t t = 0; t < m.size(); ++t) {
        for (std::size_t p = 0; p < m[t].size(); ++p) {
            for (int i = 0; i < m[t][p]; ++i) {
                preds.push_back(pred("n" + std::to_string(n++), static_cast<int>(t),
                                     static_cast<int>(p), 0.5));
            }
        }
    }
    return preds;
}

// Mann-Whitney pairwise concordance with half credit for ties; the
// independent oracle for the trapezoidal AUC.
double concordance(const std::vector<double>& scores, const std::vector<int>& labels) {
    double num = 0.0;
    std::int64_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 0) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j]) num += 1.0;
            else if (scores[i] == scores[j]) num += 0.5;
        }
    }
    return num / static_cast<double>(pairs);
}

} // namespace

TEST_CASE("one-vs-rest confusion metrics") {
    SUBCASE("hand-counted 3x3 confusion") {
        const auto preds = from_confusion({{8, 1, 1}, {2, 3, 0}, {1, 0, 4}});
        const auto m = one_vs_rest_confusion_metrics(preds, 0);
        CHECK(m.sensitivity == doctest::Approx(0.8).epsilon(1e-12));
        CHECK(m.specificity == doctest::Approx(0.7).epsilon(1e-12));
        CHECK(m.accuracy == doctest::Approx(0.75).epsilon(1e-12));
    }
    SUBCASE("perfect predictions") {
        const auto preds = from_confusion({{5, 0, 0}, {0, 4, 0}, {0, 0, 3}});
        for (int c = 0; c < 3; ++c) {
            const auto m = one_vs_rest_confusion_metrics(preds, c);
            CHECK(m.accuracy == 1.0);
            CHECK(m.sensitivity == 1.0);
            CHECK(m.specificity == 1.0);
        }
    }
    SUBCASE("everything predicted class 0") {
        const auto preds = from_confusion({{5, 0, 0}, {4, 0, 0}, {3, 0, 0}});
        const auto m = one_vs_rest_confusion_metrics(preds, 0);
        CHECK(m.specificity == 0.0);
        CHECK(m.sensitivity == 1.0);
    }
    SUBCASE("undefined ratios surface as NaN, not zero") {
        const auto preds = from_confusion({{0, 0, 0}, {0, 4, 0}, {0, 0, 3}});
        const auto m = one_vs_rest_confusion_metrics(preds, 0);   // class 0 has no positives
        CHECK(std::isnan(m.sensitivity));
        CHECK(!std::isnan(m.specificity));
        CHECK_THROWS_AS(one_vs_rest_confusion_metrics({}, 0), validation_error);
    }
}

TEST_CASE("roc auc worked cases") {
    SUBCASE("pairwise concordance 3/4") {
        const auto r = roc_auc({0.9, 0.4, 0.5, 0.1}, {1, 1, 0, 0});
        CHECK(r.auc == doctest::Approx(0.75).epsilon(1e-12));
    }
    SUBCASE("perfect separation") {
        const auto r = roc_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
        CHECK(r.auc == 1.0);
    }
    SUBCASE("all scores equal") {
        const auto r = roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0});
        CHECK(r.auc == 0.5);
    }
    SUBCASE("single-class labels error") {
        CHECK_THROWS_AS(roc_auc({0.5, 0.6}, {1, 1}), validation_error);
        CHECK_THROWS_AS(roc_auc({0.5, 0.6}, {0, 0}), validation_error);
        CHECK_THROWS_AS(roc_auc({}, {}), validation_error);
    }
}

TEST_CASE("roc curve endpoints and monotonicity") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 3 + static_cast<int>(bounded(rng, 40));
        std::vector<double> scores;
        std::vector<int> labels;
        int pos = 0;
        for (int i = 0; i < n; ++i) {
            scores.push_back(static_cast<double>(bounded(rng, 10)) / 10.0);
            labels.push_back(static_cast<int>(bounded(rng, 2)));
            pos += labels.back();
        }
        if (pos == 0 || pos == n) continue;
        const auto r = roc_auc(scores, labels);
        REQUIRE(r.points.size() >= 2);
        CHECK(r.points.front().fpr == 0.0);
        CHECK(r.points.front().tpr == 0.0);
        CHECK(r.points.back().fpr == 1.0);
        CHECK(r.points.back().tpr == 1.0);
        for (std::size_t i = 1; i < r.points.size(); ++i) {
            CHECK(r.points[i].fpr >= r.points[i - 1].fpr);
            CHECK(r.points[i].tpr >= r.points[i - 1].tpr);
            CHECK(r.points[i].threshold < r.points[i - 1].threshold);
        }
    }
}

TEST_CASE("trapezoidal auc equals pairwise concordance with ties") {
    std::mt19937_64 rng(7171);
    int tested = 0;
    while (tested < 200) {
        const int n = 2 + static_cast<int>(bounded(rng, 49));
        std::vector<double> scores;
        std::vector<int> labels;
        int pos = 0;
        for (int i = 0; i < n; ++i) {
            // Coarse grid so ties genuinely occur.
            scores.push_back(static_cast<double>(bounded(rng, 8)) / 7.0);
            labels.push_back(static_cast<int>(bounded(rng, 2)));
            pos += labels.back();
        }
        if (pos == 0 || pos == n) continue;
        ++tested;
        const auto r = roc_auc(scores, labels);
        CHECK(std::abs(r.auc - concordance(scores, labels)) <= 1e-12);
    }
}

TEST_CASE("auc is invariant under strictly increasing score transforms") {
    std::mt19937_64 rng(515);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> scores;
        std::vector<int> labels;
        for (int i = 0; i < 30; ++i) {
            scores.push_back(uniform01(rng));
            labels.push_back(i % 3 == 0 ? 1 : 0);
        }
        const double base = roc_auc(scores, labels).auc;
        std::vector<double> warped = scores;
        for (double& s : warped) s = std::exp(3.0 * s) - 0.5;
        CHECK(roc_auc(warped, labels).auc == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("roc points reproduce thresholded confusion metrics") {
    // Binary-ised check: predict positive when score >= t; the curve point
    // at threshold t must equal (1 - specificity, sensitivity).
    std::mt19937_64 rng(31337);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 10 + static_cast<int>(bounded(rng, 30));
        std::vector<double> scores;
        std::vector<int> labels;
        int pos = 0;
        for (int i = 0; i < n; ++i) {
            scores.push_back(static_cast<double>(bounded(rng, 12)) / 11.0);
            labels.push_back(static_cast<int>(bounded(rng, 2)));
            pos += labels.back();
        }
        if (pos == 0 || pos == n) continue;
        const auto r = roc_auc(scores, labels);
        for (std::size_t k = 1; k < r.points.size(); ++k) {
            const double t = r.points[k].threshold;
            std::vector<PredictionRecord> preds;
            for (int i = 0; i < n; ++i) {
                preds.push_back(pred("p" + std::to_string(i), labels[static_cast<std::size_t>(i)],
                                     scores[static_cast<std::size_t>(i)] >= t ? 1 : 0, 0.5));
            }
            const auto m = one_vs_rest_confusion_metrics(preds, 1);
            CHECK(r.points[k].tpr == doctest::Approx(m.sensitivity).epsilon(1e-12));
            CHECK(r.points[k].fpr == doctest::Approx(1.0 - m.specificity).epsilon(1e-12));
        }
    }
}

TEST_CASE("fold confidence intervals") {
    SUBCASE("five-fold example") {
        const auto ci = fold_ci({0.86, 0.88, 0.90, 0.85, 0.87});
        CHECK(ci.mean == doctest::Approx(0.872).epsilon(1e-12));
        CHECK(ci.sd == doctest::Approx(0.019235384).epsilon(1e-6));
        CHECK(ci.ci_low == doctest::Approx(0.8551).epsilon(1e-4));
        CHECK(ci.ci_high == doctest::Approx(0.8889).epsilon(1e-4));
        CHECK(ci.min == 0.85);
        CHECK(ci.max == 0.90);
    }
    SUBCASE("identical values collapse to a point") {
        const auto ci = fold_ci({0.7, 0.7, 0.7});
        CHECK(ci.sd == 0.0);
        CHECK(ci.ci_low == 0.7);
        CHECK(ci.ci_high == 0.7);
    }
    SUBCASE("two extreme values") {
        const auto ci = fold_ci({0.0, 1.0});
        CHECK(ci.mean == 0.5);
        CHECK(ci.sd == doctest::Approx(0.7071067812).epsilon(1e-9));
    }
    SUBCASE("fewer than two values error") {
        CHECK_THROWS_AS(fold_ci({0.5}), validation_error);
    }
}

TEST_CASE("grade correct rates") {
    SUBCASE("single populated grade") {
        std::vector<PredictionRecord> preds;
        for (int i = 0; i < 4; ++i) preds.push_back(pred("a" + std::to_string(i), 1, 1, 0.05));
        const auto rows = grade_correct_rates(preds);
        REQUIRE(rows.size() == 5);
        CHECK(rows[0].count == 4);
        CHECK(rows[0].correct_rate == 1.0);
        for (int g = 1; g < 5; ++g) {
            CHECK(rows[static_cast<std::size_t>(g)].count == 0);
            CHECK(std::isnan(rows[static_cast<std::size_t>(g)].correct_rate));
        }
    }
    SUBCASE("25 of 28 correct in grade 1") {
        std::vector<PredictionRecord> preds;
        for (int i = 0; i < 25; ++i) preds.push_back(pred("c" + std::to_string(i), 0, 0, 0.1));
        for (int i = 0; i < 3; ++i) preds.push_back(pred("w" + std::to_string(i), 0, 1, 0.1));
        const auto rows = grade_correct_rates(preds);
        CHECK(rows[0].count == 28);
        CHECK(rows[0].correct_rate == doctest::Approx(25.0 / 28.0).epsilon(1e-12));
        CHECK(rows[0].correct_rate == doctest::Approx(0.8929).epsilon(1e-4));
    }
    SUBCASE("counts sum to the number of predictions") {
        std::mt19937_64 rng(515151);
        std::vector<PredictionRecord> preds;
        for (int i = 0; i < 10; ++i) {
            preds.push_back(pred("r" + std::to_string(i), 0, static_cast<int>(bounded(rng, 3)),
                                 uniform01(rng)));
        }
        const auto rows = grade_correct_rates(preds);
        std::int64_t total = 0;
        for (const auto& r : rows) total += r.count;
        CHECK(total == 10);
    }
}

TEST_CASE("anomaly flagging") {
    const auto flags = flag_anomalies({
        pred("cw", 0, 1, 0.1),    // wrong at grade 1
        pred("hr", 2, 2, 0.85),   // correct at grade 5
        pred("ok", 1, 1, 0.3),    // correct at grade 2: not flagged
        pred("hw", 0, 1, 0.7),    // wrong at grade 4: not flagged
    });
    REQUIRE(flags.size() == 2);
    CHECK(flags[0].id == "cw");
    CHECK(flags[0].kind == AnomalyKind::ConfidentWrong);
    CHECK(flags[1].id == "hr");
    CHECK(flags[1].kind == AnomalyKind::HesitantRight);
}

TEST_CASE("per-class median uncertainty") {
    SUBCASE("odd and even counts") {
        std::vector<PredictionRecord> preds = {
            pred("a", 0, 0, 0.1), pred("b", 0, 0, 0.2), pred("c", 0, 0, 0.3),
            pred("d", 1, 1, 0.1), pred("e", 1, 1, 0.3),
        };
        const auto med = uncertainty_summary(preds, 3);
        CHECK(med[0] == doctest::Approx(0.2).epsilon(1e-15));
        CHECK(med[1] == doctest::Approx(0.2).epsilon(1e-15));
        CHECK(std::isnan(med[2]));   // empty class
    }
    SUBCASE("matches a sort-based oracle on random draws") {
        std::mt19937_64 rng(606);
        std::vector<PredictionRecord> preds;
        std::vector<double> us;
        for (int i = 0; i < 100; ++i) {
            const double u = uniform01(rng);
            us.push_back(u);
            preds.push_back(pred("s" + std::to_string(i), 0, 0, u));
        }
        std::sort(us.begin(), us.end());
        const double oracle = 0.5 * (us[49] + us[50]);
        CHECK(uncertainty_summary(preds, 3)[0] == oracle);
    }
}

TEST_CASE("bootstrap auc percentile interval") {
    std::mt19937_64 rng(11);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 60; ++i) {
        const int label = i % 2;
        labels.push_back(label);
        scores.push_back(label == 1 ? uniform_in(rng, 0.55, 1.0) : uniform_in(rng, 0.0, 0.45));
    }
    const auto ci = bootstrap_auc_ci(scores, labels, 500, 99);
    CHECK(ci.low == 1.0);    // perfectly separated stays perfect under resampling
    CHECK(ci.high == 1.0);
    const auto ci2 = bootstrap_auc_ci(scores, labels, 500, 99);
    CHECK(ci.low == ci2.low);    // seeded determinism
    CHECK(ci.high == ci2.high);

    std::vector<double> noisy;
    std::vector<int> nlabels;
    for (int i = 0; i < 80; ++i) {
        nlabels.push_back(i % 2);
        noisy.push_back(uniform01(rng));
    }
    const auto wide = bootstrap_auc_ci(noisy, nlabels, 500, 7);
    CHECK(wide.low < 0.5);
    CHECK(wide.high > 0.5);
    CHECK(wide.low < wide.high);
}
