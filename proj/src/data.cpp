#include "evinet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "evinet/csv.hpp"
#include "evinet/errors.hpp"
#include "evinet/rng.hpp"

namespace evinet {

std::vector<SubjectRecord> load_manifest(const std::string& path, int k) {
    CsvTable t = read_csv(path);
    const std::size_t cid = t.column("id", path);
    const std::size_t clabel = t.column("label", path);
    const std::size_t cvol = t.column("volume_path", path);
    const std::size_t cboxes = t.column("boxes_path", path);

    std::vector<SubjectRecord> records;
    records.reserve(t.rows.size());
    std::set<std::string> seen;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        SubjectRecord rec;
        rec.id = row[cid];
        if (rec.id.empty()) {
            throw validation_error(path + ": row " + std::to_string(r + 1) + ": empty id");
        }
        if (!seen.insert(rec.id).second) {
            throw validation_error(path + ": duplicate id '" + rec.id + "'");
        }
        try {
            rec.label = std::stoi(row[clabel]);
        } catch (const std::exception&) {
            throw validation_error(path + ": record '" + rec.id + "': unparseable label '" +
                                   row[clabel] + "'");
        }
        if (rec.label < 0 || rec.label >= k) {
            throw validation_error(path + ": record '" + rec.id + "': label " +
                                   std::to_string(rec.label) + " outside [0," + std::to_string(k) +
                                   ")");
        }
        rec.volume_path = row[cvol];
        rec.boxes_path = row[cboxes];
        records.push_back(std::move(rec));
    }
    return records;
}

void save_manifest(const std::string& path, const std::vector<SubjectRecord>& records) {
    CsvTable t;
    t.header = {"id", "label", "volume_path", "boxes_path"};
    for (const auto& r : records) {
        t.rows.push_back({r.id, std::to_string(r.label), r.volume_path, r.boxes_path});
    }
    write_csv(path, t);
}

std::vector<std::int64_t> class_counts(const std::vector<SubjectRecord>& records, int k) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
    for (const auto& r : records) {
        if (r.label < 0 || r.label >= k) {
            throw validation_error("class_counts: record '" + r.id + "' has label " +
                                   std::to_string(r.label) + " outside [0," + std::to_string(k) +
                                   ")");
        }
        ++counts[static_cast<std::size_t>(r.label)];
    }
    return counts;
}

std::vector<FoldSplit> stratified_kfold(const std::vector<SubjectRecord>& records,
                                        int k_folds, std::uint64_t seed) {
    if (k_folds < 2) {
        throw validation_error("stratified_kfold: need at least 2 folds");
    }
    int max_label = 0;
    for (const auto& r : records) max_label = std::max(max_label, r.label);
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label) + 1);
    for (std::size_t i = 0; i < records.size(); ++i) {
        by_class[static_cast<std::size_t>(records[i].label)].push_back(i);
    }
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (by_class[c].size() < static_cast<std::size_t>(k_folds)) {
            throw validation_error("stratified_kfold: class " + std::to_string(c) + " has " +
                                   std::to_string(by_class[c].size()) + " members but " +
                                   std::to_string(k_folds) + " folds were requested");
        }
    }

    std::mt19937_64 rng(derive_seed(seed, 0xf01d));
    std::vector<std::vector<std::string>> fold_validation(static_cast<std::size_t>(k_folds));
    // A fold pointer that keeps running across classes balances total fold
    // sizes as well as the per-class counts.
    std::size_t next_fold = 0;
    for (auto& members : by_class) {
        shuffle(members, rng);
        for (std::size_t idx : members) {
            fold_validation[next_fold].push_back(records[idx].id);
            next_fold = (next_fold + 1) % static_cast<std::size_t>(k_folds);
        }
    }

    std::vector<FoldSplit> folds(static_cast<std::size_t>(k_folds));
    for (int f = 0; f < k_folds; ++f) {
        auto& split = folds[static_cast<std::size_t>(f)];
        split.fold_index = f;
        std::set<std::string> held(fold_validation[static_cast<std::size_t>(f)].begin(),
                                   fold_validation[static_cast<std::size_t>(f)].end());
        for (const auto& r : records) {
            if (held.count(r.id)) {
                split.validation_ids.push_back(r.id);
            } else {
                split.train_ids.push_back(r.id);
            }
        }
    }
    return folds;
}

Difficulty parse_difficulty(const std::string& name) {
    if (name == "easy") return Difficulty::Easy;
    if (name == "medium") return Difficulty::Medium;
    if (name == "hard") return Difficulty::Hard;
    throw validation_error("unknown difficulty '" + name + "' (expected easy|medium|hard)");
}

std::string difficulty_name(Difficulty d) {
    switch (d) {
        case Difficulty::Easy: return "easy";
        case Difficulty::Medium: return "medium";
        case Difficulty::Hard: return "hard";
    }
    return "easy";
}

std::vector<int> largest_remainder_counts(int n, std::span<const double> proportions) {
    double sum = 0.0;
    for (double p : proportions) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw validation_error("proportions must be non-negative and finite");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw validation_error("proportions must sum to 1, got " + std::to_string(sum));
    }
    std::vector<int> counts(proportions.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    int assigned = 0;
    for (std::size_t c = 0; c < proportions.size(); ++c) {
        const double exact = n * proportions[c];
        counts[c] = static_cast<int>(std::floor(exact));
        assigned += counts[c];
        remainders.emplace_back(exact - counts[c], c);
    }
    // Ties by lower class index.
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int d = 0; d < n - assigned; ++d) {
        ++counts[remainders[static_cast<std::size_t>(d)].second];
    }
    return counts;
}

namespace {

struct DifficultyParams {
    double radius_spread;     // uniform half-width, voxels
    double intensity_jitter;  // per-subject sd, HU
    double noise_sd;          // per-voxel sd, HU
    double texture_amp;       // HU
};

DifficultyParams params_for(Difficulty d) {
    switch (d) {
        case Difficulty::Easy: return {0.6, 6.0, 6.0, 6.0};
        case Difficulty::Medium: return {1.8, 27.0, 24.0, 15.0};
        case Difficulty::Hard: return {3.0, 55.0, 45.0, 25.0};
    }
    return {0.6, 6.0, 6.0, 6.0};
}

// Class signatures in window units (window 300/40 spans [-110, 190] HU).
// Class 1 is a rim: bright shell, dim core, mimicking heterogeneous lesions;
// the other two are solid blobs. Whole-volume mean intensity and blob size
// stay monotone across classes so simple feature probes also separate them.
constexpr double kClassIntensity[kNumClasses] = {130.0, 70.0, -20.0};
constexpr double kClassRadius[kNumClasses] = {10.0, 7.5, 5.5};
constexpr double kClassTextureFreq[kNumClasses] = {1.0, 2.0, 3.0};
constexpr double kBackground = -90.0;
constexpr double kRimCoreFraction = 0.62;    // class-1 core radius fraction
constexpr double kRimCoreIntensity = -75.0;  // class-1 core value

Volume3D synth_volume(int label, int side, Difficulty difficulty, std::mt19937_64& rng) {
    const DifficultyParams dp = params_for(difficulty);
    const double half = side / 2.0;

    const double intensity = kClassIntensity[label] + dp.intensity_jitter * normal01(rng);
    // Radii scale with the volume side so cohorts stay usable at small sides.
    const double radius_scale = side / 32.0;
    double radii[3];
    for (double& r : radii) {
        r = std::max(2.0, (kClassRadius[label] +
                           uniform_in(rng, -dp.radius_spread, dp.radius_spread)) *
                              radius_scale);
    }
    double centre[3];
    for (double& c : centre) c = half + uniform_in(rng, -side / 10.0, side / 10.0);

    const double freq = kClassTextureFreq[label] + uniform_in(rng, -0.2, 0.2);
    double phase[3];
    for (double& p : phase) p = uniform_in(rng, 0.0, 6.283185307179586);

    Volume3D v;
    v.dims = {side, side, side};
    v.spacing_mm = {1.0, 1.0, 1.0};
    v.values.resize(v.voxel_count());
    std::size_t idx = 0;
    const double two_pi = 6.283185307179586;
    for (int z = 0; z < side; ++z) {
        for (int y = 0; y < side; ++y) {
            for (int x = 0; x < side; ++x, ++idx) {
                const double dx = (x - centre[0]) / radii[0];
                const double dy = (y - centre[1]) / radii[1];
                const double dz = (z - centre[2]) / radii[2];
                const double r2 = dx * dx + dy * dy + dz * dz;
                double value;
                if (r2 <= 1.0) {
                    const double texture = dp.texture_amp *
                                           std::sin(two_pi * freq * x / side + phase[0]) *
                                           std::sin(two_pi * freq * y / side + phase[1]) *
                                           std::sin(two_pi * freq * z / side + phase[2]);
                    const bool hollow_core =
                        label == 1 && r2 <= kRimCoreFraction * kRimCoreFraction;
                    value = (hollow_core ? kRimCoreIntensity : intensity) + texture;
                } else {
                    value = kBackground;
                }
                v.values[idx] = static_cast<float>(value + dp.noise_sd * normal01(rng));
            }
        }
    }
    return v;
}

} // namespace

SyntheticCohort generate_synthetic_cohort(int n,
                                          std::array<double, 3> proportions,
                                          Difficulty difficulty,
                                          int side,
                                          std::uint64_t seed) {
    if (n < 15) {
        throw validation_error("generate_synthetic_cohort: need n >= 15, got " + std::to_string(n));
    }
    if (side < 8) {
        throw validation_error("generate_synthetic_cohort: side must be >= 8");
    }
    const std::vector<int> counts = largest_remainder_counts(n, proportions);

    SyntheticCohort cohort;
    cohort.records.reserve(static_cast<std::size_t>(n));
    cohort.volumes.reserve(static_cast<std::size_t>(n));
    int subject = 0;
    for (int label = 0; label < kNumClasses; ++label) {
        for (int i = 0; i < counts[static_cast<std::size_t>(label)]; ++i, ++subject) {
            SubjectRecord rec;
            char buf[16];
            std::snprintf(buf, sizeof(buf), "s%04d", subject);
            rec.id = buf;
            rec.label = label;
            cohort.records.push_back(std::move(rec));
            // Per-subject stream so volumes do not depend on generation order.
            std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(subject) + 1));
            cohort.volumes.push_back(synth_volume(label, side, difficulty, rng));
        }
    }
    return cohort;
}

} // namespace evinet
