#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "evinet/data.hpp"
#include "evinet/errors.hpp"

using namespace evinet;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << content;
    return path;
}

std::vector<SubjectRecord> records_with_labels(const std::vector<int>& labels) {
    std::vector<SubjectRecord> records;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        SubjectRecord r;
        r.id = "r" + std::to_string(i);
        r.label = labels[i];
        records.push_back(r);
    }
    return records;
}

} // namespace

TEST_CASE("manifest loading") {
    SUBCASE("well-formed") {
        const std::string path = write_temp("evinet_manifest_ok.csv",
                                            "id,label,volume_path,boxes_path\n"
                                            "a,0,vol/a,\n"
                                            "b,1,vol/b,boxes/b.csv\n"
                                            "c,2,vol/c,\n");
        const auto records = load_manifest(path);
        REQUIRE(records.size() == 3);
        CHECK(records[0].id == "a");
        CHECK(records[1].label == 1);
        CHECK(records[1].boxes_path == "boxes/b.csv");
        CHECK(records[2].volume_path == "vol/c");
        std::remove(path.c_str());
    }
    SUBCASE("duplicate id names the id") {
        const std::string path = write_temp("evinet_manifest_dup.csv",
                                            "id,label,volume_path,boxes_path\n"
                                            "a,0,vol/a,\n"
                                            "a,1,vol/b,\n");
        CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("'a'"), validation_error);
        std::remove(path.c_str());
    }
    SUBCASE("label outside range names the record") {
        const std::string path = write_temp("evinet_manifest_label.csv",
                                            "id,label,volume_path,boxes_path\n"
                                            "a,0,vol/a,\n"
                                            "bad,4,vol/b,\n");
        CHECK_THROWS_WITH_AS(load_manifest(path), doctest::Contains("'bad'"), validation_error);
        std::remove(path.c_str());
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.csv"), io_error);
    }
}

TEST_CASE("manifest round trip") {
    std::vector<SubjectRecord> records = {
        {"x1", 0, "vols/x1", ""},
        {"x2", 2, "vols/x2", "boxes/x2.csv"},
    };
    const std::string path =
        (std::filesystem::temp_directory_path() / "evinet_manifest_rt.csv").string();
    save_manifest(path, records);
    const auto back = load_manifest(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].id == records[0].id);
    CHECK(back[1].boxes_path == records[1].boxes_path);
    std::remove(path.c_str());
}

TEST_CASE("class counts") {
    CHECK(class_counts({}) == std::vector<std::int64_t>{0, 0, 0});
    CHECK(class_counts(records_with_labels({0, 0, 1, 2, 2, 2})) ==
          std::vector<std::int64_t>{2, 1, 3});
    // Centre-1-sized cohort.
    std::vector<int> labels;
    labels.insert(labels.end(), 395, 0);
    labels.insert(labels.end(), 167, 1);
    labels.insert(labels.end(), 106, 2);
    CHECK(class_counts(records_with_labels(labels)) ==
          std::vector<std::int64_t>{395, 167, 106});
}

TEST_CASE("stratified k-fold honours the balance contract") {
    SUBCASE("16 records (6,5,5) over 5 folds") {
        const auto records = records_with_labels({0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2});
        const auto folds = stratified_kfold(records, 5, 99);
        REQUIRE(folds.size() == 5);
        for (const auto& f : folds) {
            CHECK(f.validation_ids.size() >= 3);
            CHECK(f.validation_ids.size() <= 4);
            CHECK(f.train_ids.size() + f.validation_ids.size() == records.size());
            // Per-class validation counts differ by at most one across folds.
            int c0 = 0, c1 = 0, c2 = 0;
            for (const auto& id : f.validation_ids) {
                const int idx = std::stoi(id.substr(1));
                const int label = records[static_cast<std::size_t>(idx)].label;
                (label == 0 ? c0 : label == 1 ? c1 : c2) += 1;
            }
            CHECK((c0 == 1 || c0 == 2));
            CHECK(c1 == 1);
            CHECK(c2 == 1);
        }
    }
    SUBCASE("a class smaller than k is a configuration error") {
        // Largest-remainder counts for n=10 at the default proportions.
        const auto records = records_with_labels({0, 0, 0, 0, 0, 0, 1, 1, 2, 2});
        CHECK_THROWS_WITH_AS(stratified_kfold(records, 5, 99), doctest::Contains("2 members"),
                             validation_error);
    }
    SUBCASE("668 records (395,167,106) give validation sizes 133..134") {
        std::vector<int> labels;
        labels.insert(labels.end(), 395, 0);
        labels.insert(labels.end(), 167, 1);
        labels.insert(labels.end(), 106, 2);
        const auto folds = stratified_kfold(records_with_labels(labels), 5, 7);
        for (const auto& f : folds) {
            CHECK(f.validation_ids.size() >= 133);
            CHECK(f.validation_ids.size() <= 134);
        }
    }
    SUBCASE("same seed reproduces the split") {
        const auto records = records_with_labels({0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2});
        const auto a = stratified_kfold(records, 5, 4242);
        const auto b = stratified_kfold(records, 5, 4242);
        for (std::size_t f = 0; f < a.size(); ++f) {
            CHECK(a[f].validation_ids == b[f].validation_ids);
            CHECK(a[f].train_ids == b[f].train_ids);
        }
        const auto c = stratified_kfold(records, 5, 4243);
        bool any_differ = false;
        for (std::size_t f = 0; f < a.size(); ++f) {
            if (a[f].validation_ids != c[f].validation_ids) any_differ = true;
        }
        CHECK(any_differ);
    }
    SUBCASE("folds partition the cohort") {
        const auto records = records_with_labels({0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2});
        const auto folds = stratified_kfold(records, 5, 1);
        std::set<std::string> seen;
        for (const auto& f : folds) {
            std::set<std::string> train(f.train_ids.begin(), f.train_ids.end());
            for (const auto& id : f.validation_ids) {
                CHECK(!train.count(id));
                CHECK(seen.insert(id).second);   // pairwise disjoint validation sets
            }
            CHECK(f.train_ids.size() + f.validation_ids.size() == records.size());
        }
        CHECK(seen.size() == records.size());
    }
    SUBCASE("class smaller than k errors with the counts") {
        const auto records = records_with_labels({0, 0, 0, 0, 0, 0, 1, 1, 2, 2});
        CHECK_THROWS_WITH_AS(stratified_kfold(records, 6, 0), doctest::Contains("2 members"),
                             validation_error);
    }
}

TEST_CASE("largest remainder apportionment") {
    CHECK(largest_remainder_counts(100, std::array<double, 3>{0.59, 0.16, 0.25}) ==
          std::vector<int>{59, 16, 25});
    CHECK(largest_remainder_counts(10, std::array<double, 3>{1.0 / 3, 1.0 / 3, 1.0 / 3}) ==
          std::vector<int>{4, 3, 3});
    for (int n : {15, 37, 101, 668}) {
        const auto counts = largest_remainder_counts(n, std::array<double, 3>{0.59, 0.16, 0.25});
        CHECK(counts[0] + counts[1] + counts[2] == n);
    }
    CHECK_THROWS_AS(largest_remainder_counts(10, std::array<double, 3>{0.5, 0.4, 0.2}),
                    validation_error);
    CHECK_THROWS_AS(largest_remainder_counts(10, std::array<double, 3>{1.2, -0.1, -0.1}),
                    validation_error);
}

TEST_CASE("synthetic cohorts are deterministic and correctly apportioned") {
    const auto a = generate_synthetic_cohort(100, {0.59, 0.16, 0.25}, Difficulty::Easy, 16, 7);
    REQUIRE(a.records.size() == 100);
    REQUIRE(a.volumes.size() == 100);
    CHECK(class_counts(a.records) == std::vector<std::int64_t>{59, 16, 25});

    const auto b = generate_synthetic_cohort(100, {0.59, 0.16, 0.25}, Difficulty::Easy, 16, 7);
    for (std::size_t i = 0; i < a.volumes.size(); ++i) {
        CHECK(a.volumes[i].values == b.volumes[i].values);   // bitwise
    }
    const auto c = generate_synthetic_cohort(100, {0.59, 0.16, 0.25}, Difficulty::Easy, 16, 8);
    bool any_differ = false;
    for (std::size_t i = 0; i < a.volumes.size(); ++i) {
        if (a.volumes[i].values != c.volumes[i].values) any_differ = true;
    }
    CHECK(any_differ);

    CHECK_THROWS_AS(generate_synthetic_cohort(10, {0.59, 0.16, 0.25}, Difficulty::Easy, 16, 7),
                    validation_error);
}

TEST_CASE("easy cohorts separate under a mean-intensity/upper-tail-size probe") {
    const int n = 120;
    const auto cohort = generate_synthetic_cohort(n, {0.59, 0.16, 0.25}, Difficulty::Easy, 32, 11);

    // Two features: whole-volume mean and the cube root of the count of
    // voxels brighter than a between-class threshold (a blob-size proxy).
    std::vector<std::array<double, 2>> features(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& v = cohort.volumes[static_cast<std::size_t>(i)];
        double sum = 0.0;
        std::int64_t bright = 0;
        for (float x : v.values) {
            sum += x;
            if (x > -55.0f) ++bright;
        }
        features[static_cast<std::size_t>(i)] = {sum / static_cast<double>(v.voxel_count()),
                                                 std::cbrt(static_cast<double>(bright))};
    }

    // Standardise on the training half (even indices), then classify the
    // odd half by nearest class centroid.
    std::array<double, 2> mean{0, 0}, sd{0, 0};
    int n_train = 0;
    for (int i = 0; i < n; i += 2) {
        ++n_train;
        for (int f = 0; f < 2; ++f) mean[static_cast<std::size_t>(f)] += features[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)];
    }
    for (auto& m : mean) m /= n_train;
    for (int i = 0; i < n; i += 2) {
        for (int f = 0; f < 2; ++f) {
            const double d = features[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)] - mean[static_cast<std::size_t>(f)];
            sd[static_cast<std::size_t>(f)] += d * d;
        }
    }
    for (auto& s : sd) s = std::sqrt(s / n_train) + 1e-12;

    std::array<std::array<double, 2>, 3> centroid{};
    std::array<int, 3> counts{};
    for (int i = 0; i < n; i += 2) {
        const int label = cohort.records[static_cast<std::size_t>(i)].label;
        ++counts[static_cast<std::size_t>(label)];
        for (int f = 0; f < 2; ++f) {
            centroid[static_cast<std::size_t>(label)][static_cast<std::size_t>(f)] +=
                (features[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)] - mean[static_cast<std::size_t>(f)]) / sd[static_cast<std::size_t>(f)];
        }
    }
    for (int c = 0; c < 3; ++c) {
        REQUIRE(counts[static_cast<std::size_t>(c)] > 0);
        for (int f = 0; f < 2; ++f) centroid[static_cast<std::size_t>(c)][static_cast<std::size_t>(f)] /= counts[static_cast<std::size_t>(c)];
    }

    int correct = 0, total = 0;
    for (int i = 1; i < n; i += 2) {
        ++total;
        double best = 1e300;
        int best_c = -1;
        for (int c = 0; c < 3; ++c) {
            double d2 = 0.0;
            for (int f = 0; f < 2; ++f) {
                const double z = (features[static_cast<std::size_t>(i)][static_cast<std::size_t>(f)] - mean[static_cast<std::size_t>(f)]) / sd[static_cast<std::size_t>(f)] -
                                 centroid[static_cast<std::size_t>(c)][static_cast<std::size_t>(f)];
                d2 += z * z;
            }
            if (d2 < best) {
                best = d2;
                best_c = c;
            }
        }
        if (best_c == cohort.records[static_cast<std::size_t>(i)].label) ++correct;
    }
    CHECK(static_cast<double>(correct) / total >= 0.95);
}

TEST_CASE("difficulty parsing") {
    CHECK(parse_difficulty("easy") == Difficulty::Easy);
    CHECK(parse_difficulty("medium") == Difficulty::Medium);
    CHECK(parse_difficulty("hard") == Difficulty::Hard);
    CHECK(difficulty_name(Difficulty::Hard) == "hard");
    CHECK_THROWS_AS(parse_difficulty("impossible"), validation_error);
}
