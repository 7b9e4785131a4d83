#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace evinet::cli {

// Fully resolved run configuration; serialised as run_config.json next to
// every command's outputs so runs are reproducible from the snapshot alone.
struct RunConfig {
    std::string command;
    std::uint64_t seed = 0;
    int k_folds = 5;
    int epochs = 30;                 // desk-scale default; clinical-scale via --epochs
    double learning_rate = 1e-4;
    int batch_size = 32;
    std::string manifest;
    std::string out_dir;
    std::string checkpoint;
    std::string vois;
    std::string predictions;
    int n = 150;
    std::array<double, 3> proportions{0.59, 0.16, 0.25};
    std::string difficulty = "easy";
    int side = 32;
    int stage1_channels = 16;
    int block_channels = 16;
    std::string evidence_activation = "relu";
    double window_width = 300.0;
    double window_level = 40.0;
    int fold_jobs = 1;
    int bootstrap_resamples = 2000;
};

// Parses args (without argv[0]) and dispatches. Returns the process exit
// code: 0 ok, 1 validation error, 2 I/O error, 3 numeric fault.
int run(const std::vector<std::string>& args);

// Command entry points used by `run` and by the tests.
void cmd_synth(const RunConfig& config);
void cmd_detect_merge(const RunConfig& config);
void cmd_crossval(const RunConfig& config);
void cmd_eval(const RunConfig& config);
void cmd_report(const RunConfig& config);

} // namespace evinet::cli
