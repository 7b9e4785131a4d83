#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "evinet/volume.hpp"

namespace evinet {

inline constexpr int kNumClasses = 3;   // 0=ccRCC, 1=pRCC, 2=chRCC
inline constexpr const char* kClassNames[kNumClasses] = {"ccRCC", "pRCC", "chRCC"};

// One labelled case. volume_path is the volume file stem (see save_volume);
// boxes_path is empty when the subject has no detection boxes.
struct SubjectRecord {
    std::string id;
    int label = 0;
    std::string volume_path;
    std::string boxes_path;
};

struct FoldSplit {
    int fold_index = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> validation_ids;
};

// Manifest: CSV with header id,label,volume_path,boxes_path, one record per
// line. Duplicate ids and labels outside [0,k) are rejected.
std::vector<SubjectRecord> load_manifest(const std::string& path, int k = kNumClasses);
void save_manifest(const std::string& path, const std::vector<SubjectRecord>& records);

// Per-class record counts.
std::vector<std::int64_t> class_counts(const std::vector<SubjectRecord>& records,
                                       int k = kNumClasses);

// Stratified k-fold: per-class shuffles driven by `seed`, then a
// continuing round-robin deal so per-class and total validation counts
// differ by at most one across folds. Every class needs >= k_folds members.
std::vector<FoldSplit> stratified_kfold(const std::vector<SubjectRecord>& records,
                                        int k_folds, std::uint64_t seed);

enum class Difficulty { Easy, Medium, Hard };
Difficulty parse_difficulty(const std::string& name);
std::string difficulty_name(Difficulty d);

struct SyntheticCohort {
    std::vector<SubjectRecord> records;   // volume_path left empty; caller assigns on save
    std::vector<Volume3D> volumes;        // parallel to records
};

// Synthetic CT-like cohort: each subject is an ellipsoidal blob with
// class-specific mean intensity, radius distribution and internal texture
// over a darker background, plus voxel noise scaled by difficulty. Class
// counts follow largest-remainder rounding of the proportions. Deterministic
// in (n, proportions, difficulty, side, seed).
SyntheticCohort generate_synthetic_cohort(int n,
                                          std::array<double, 3> proportions,
                                          Difficulty difficulty,
                                          int side,
                                          std::uint64_t seed);

// Largest-remainder apportionment of n among the proportions; exposed for
// tests. Sum of the result is exactly n.
std::vector<int> largest_remainder_counts(int n, std::span<const double> proportions);

} // namespace evinet
