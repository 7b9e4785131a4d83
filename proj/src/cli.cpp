#include "evinet/cli.hpp"

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "evinet/csv.hpp"
#include "evinet/data.hpp"
#include "evinet/detection.hpp"
#include "evinet/errors.hpp"
#include "evinet/evidential.hpp"
#include "evinet/metrics.hpp"
#include "evinet/network.hpp"
#include "evinet/report.hpp"
#include "evinet/rng.hpp"
#include "evinet/volume.hpp"

namespace fs = std::filesystem;

namespace evinet::cli {

namespace {

void ensure_out_dir(const RunConfig& cfg) {
    if (cfg.out_dir.empty()) {
        throw validation_error(cfg.command + ": --out is required");
    }
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) {
        throw io_error(cfg.command + ": cannot create output directory " + cfg.out_dir + ": " +
                       ec.message());
    }
}

void write_config_snapshot(const RunConfig& cfg) {
    nlohmann::json j;
    j["command"] = cfg.command;
    j["seed"] = cfg.seed;
    j["k_folds"] = cfg.k_folds;
    j["epochs"] = cfg.epochs;
    j["learning_rate"] = cfg.learning_rate;
    j["batch_size"] = cfg.batch_size;
    j["manifest"] = cfg.manifest;
    j["out_dir"] = cfg.out_dir;
    j["checkpoint"] = cfg.checkpoint;
    j["vois"] = cfg.vois;
    j["predictions"] = cfg.predictions;
    j["n"] = cfg.n;
    j["proportions"] = cfg.proportions;
    j["difficulty"] = cfg.difficulty;
    j["side"] = cfg.side;
    j["stage1_channels"] = cfg.stage1_channels;
    j["block_channels"] = cfg.block_channels;
    j["evidence_activation"] = cfg.evidence_activation;
    j["window_width"] = cfg.window_width;
    j["window_level"] = cfg.window_level;
    j["fold_jobs"] = cfg.fold_jobs;
    j["bootstrap_resamples"] = cfg.bootstrap_resamples;
    std::ofstream out(cfg.out_dir + "/run_config.json");
    if (!out) throw io_error("cannot write " + cfg.out_dir + "/run_config.json");
    out << j.dump(2) << "\n";
}

net::NetworkConfig network_config_of(const RunConfig& cfg) {
    net::NetworkConfig nc;
    nc.input_side = cfg.side;
    nc.stage1_channels = cfg.stage1_channels;
    nc.block_channels = cfg.block_channels;
    nc.classes = kNumClasses;
    nc.evidence_activation = net::parse_evidence_activation(cfg.evidence_activation);
    nc.validate();
    return nc;
}

net::OptimizerConfig optimizer_config_of(const RunConfig& cfg) {
    net::OptimizerConfig oc;
    oc.learning_rate = cfg.learning_rate;
    oc.batch_size = cfg.batch_size;
    oc.epochs = cfg.epochs;
    oc.validate();
    return oc;
}

std::string resolve_relative(const std::string& base_file, const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(base_file).parent_path() / path).string();
}

std::map<std::string, Box3D> load_voi_table(const std::string& path) {
    std::map<std::string, Box3D> vois;
    CsvTable t = read_csv(path);
    const std::size_t cid = t.column("id", path);
    const std::size_t cx0 = t.column("x_min", path), cy0 = t.column("y_min", path),
                      cz0 = t.column("z_min", path);
    const std::size_t cx1 = t.column("x_max", path), cy1 = t.column("y_max", path),
                      cz1 = t.column("z_max", path);
    for (const auto& row : t.rows) {
        Box3D b;
        try {
            b.min_voxel = {std::stoi(row[cx0]), std::stoi(row[cy0]), std::stoi(row[cz0])};
            b.max_voxel = {std::stoi(row[cx1]), std::stoi(row[cy1]), std::stoi(row[cz1])};
        } catch (const std::exception&) {
            throw validation_error(path + ": unparseable VoI row for id '" + row[cid] + "'");
        }
        vois[row[cid]] = b;
    }
    return vois;
}

// Load + window + resample + crop for one subject; the network consumes the
// returned cube directly.
Volume3D preprocess_subject(const RunConfig& cfg, const SubjectRecord& rec, int target_side,
                            const std::map<std::string, Box3D>* vois) {
    Volume3D raw = load_volume(resolve_relative(cfg.manifest, rec.volume_path));
    Volume3D windowed = window_normalize(raw, cfg.window_width, cfg.window_level);
    Volume3D iso = resample_isotropic(windowed, 1.0);
    Box3D box = full_extent(iso);
    if (vois) {
        const auto it = vois->find(rec.id);
        if (it != vois->end()) box = it->second;
    }
    return crop(iso, box, target_side);
}

struct PreparedCohort {
    std::vector<SubjectRecord> records;
    std::vector<Volume3D> cubes;                 // parallel to records
    std::map<std::string, std::size_t> by_id;
};

PreparedCohort prepare_cohort(const RunConfig& cfg, int target_side) {
    if (cfg.manifest.empty()) {
        throw validation_error(cfg.command + ": --manifest is required");
    }
    PreparedCohort c;
    c.records = load_manifest(cfg.manifest);
    std::optional<std::map<std::string, Box3D>> vois;
    if (!cfg.vois.empty()) vois = load_voi_table(cfg.vois);
    c.cubes.reserve(c.records.size());
    for (std::size_t i = 0; i < c.records.size(); ++i) {
        c.cubes.push_back(preprocess_subject(cfg, c.records[i], target_side,
                                             vois ? &*vois : nullptr));
        c.by_id[c.records[i].id] = i;
    }
    return c;
}

PredictionRecord predict_subject(const net::ModelState& state, const SubjectRecord& rec,
                                 const Volume3D& cube) {
    const std::vector<double> evidence = net::forward(state, cube);
    const EvidentialOutput eo = from_evidence(evidence, state.config.classes);
    PredictionRecord p;
    p.id = rec.id;
    p.true_class = rec.label;
    p.predicted_class = eo.predicted_class();
    p.probs = eo.probs;
    p.uncertainty = eo.uncertainty;
    p.grade = eo.grade;
    return p;
}

struct FoldOutcome {
    net::TrainResult trained;
    std::vector<PredictionRecord> predictions;
};

FoldOutcome run_fold(const RunConfig& cfg, const PreparedCohort& cohort, const FoldSplit& fold,
                     const net::NetworkConfig& nc, const net::OptimizerConfig& oc) {
    std::vector<const Volume3D*> train_volumes;
    std::vector<int> train_labels;
    for (const auto& id : fold.train_ids) {
        const std::size_t idx = cohort.by_id.at(id);
        train_volumes.push_back(&cohort.cubes[idx]);
        train_labels.push_back(cohort.records[idx].label);
    }
    FoldOutcome out;
    out.trained = net::train(train_volumes, train_labels, nc, oc,
                             derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(fold.fold_index)));
    for (const auto& id : fold.validation_ids) {
        const std::size_t idx = cohort.by_id.at(id);
        out.predictions.push_back(
            predict_subject(out.trained.state, cohort.records[idx], cohort.cubes[idx]));
    }
    return out;
}

} // namespace

void cmd_synth(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const SyntheticCohort cohort = generate_synthetic_cohort(
        cfg.n, cfg.proportions, parse_difficulty(cfg.difficulty), cfg.side, cfg.seed);

    const fs::path vol_dir = fs::path(cfg.out_dir) / "volumes";
    std::error_code ec;
    fs::create_directories(vol_dir, ec);
    if (ec) throw io_error("synth: cannot create " + vol_dir.string());

    std::vector<SubjectRecord> records = cohort.records;
    for (std::size_t i = 0; i < records.size(); ++i) {
        records[i].volume_path = "volumes/" + records[i].id;
        save_volume((vol_dir / records[i].id).string(), cohort.volumes[i]);
    }
    save_manifest(cfg.out_dir + "/manifest.csv", records);
    write_config_snapshot(cfg);
}

void cmd_detect_merge(const RunConfig& cfg) {
    if (cfg.manifest.empty()) throw validation_error("detect-merge: --manifest is required");
    ensure_out_dir(cfg);
    const std::vector<SubjectRecord> records = load_manifest(cfg.manifest);

    CsvTable vois;
    vois.header = {"id", "x_min", "y_min", "z_min", "x_max", "y_max", "z_max"};
    CsvTable skipped;
    skipped.header = {"id", "reason"};
    for (const auto& rec : records) {
        if (rec.boxes_path.empty()) {
            skipped.rows.push_back({rec.id, "no boxes file listed"});
            continue;
        }
        const std::string path = resolve_relative(cfg.manifest, rec.boxes_path);
        if (!fs::exists(path)) {
            skipped.rows.push_back({rec.id, "boxes file missing"});
            continue;
        }
        const std::vector<Box2D> boxes = load_boxes(path);
        if (boxes.empty()) {
            skipped.rows.push_back({rec.id, "boxes file empty"});
            continue;
        }
        const Box3D b = merge_slices(boxes);
        vois.rows.push_back({rec.id,
                             std::to_string(b.min_voxel[0]), std::to_string(b.min_voxel[1]),
                             std::to_string(b.min_voxel[2]),
                             std::to_string(b.max_voxel[0]), std::to_string(b.max_voxel[1]),
                             std::to_string(b.max_voxel[2])});
    }
    write_csv(cfg.out_dir + "/vois.csv", vois);
    write_csv(cfg.out_dir + "/skipped.csv", skipped);
    write_config_snapshot(cfg);
}

void cmd_crossval(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    const net::NetworkConfig nc = network_config_of(cfg);
    const net::OptimizerConfig oc = optimizer_config_of(cfg);
    const PreparedCohort cohort = prepare_cohort(cfg, nc.input_side);
    const std::vector<FoldSplit> folds = stratified_kfold(cohort.records, cfg.k_folds, cfg.seed);

    // Fold assignment table (id -> validation fold).
    {
        CsvTable t;
        t.header = {"id", "fold"};
        std::map<std::string, int> fold_of;
        for (const auto& f : folds) {
            for (const auto& id : f.validation_ids) fold_of[id] = f.fold_index;
        }
        for (const auto& rec : cohort.records) {
            t.rows.push_back({rec.id, std::to_string(fold_of.at(rec.id))});
        }
        write_csv(cfg.out_dir + "/folds.csv", t);
    }

    std::vector<FoldOutcome> outcomes(folds.size());
    const int jobs = std::max(1, cfg.fold_jobs);
    if (jobs == 1) {
        for (std::size_t f = 0; f < folds.size(); ++f) {
            try {
                outcomes[f] = run_fold(cfg, cohort, folds[f], nc, oc);
            } catch (const std::exception& e) {
                throw validation_error("crossval: fold " + std::to_string(f) + ": " + e.what());
            }
        }
    } else {
        // Folds carry independent derived seeds, so parallel execution
        // reproduces the sequential results file-for-file.
        for (std::size_t wave = 0; wave < folds.size(); wave += static_cast<std::size_t>(jobs)) {
            std::vector<std::future<FoldOutcome>> futures;
            const std::size_t stop = std::min(folds.size(), wave + static_cast<std::size_t>(jobs));
            for (std::size_t f = wave; f < stop; ++f) {
                futures.push_back(std::async(std::launch::async, [&, f] {
                    return run_fold(cfg, cohort, folds[f], nc, oc);
                }));
            }
            for (std::size_t f = wave; f < stop; ++f) {
                try {
                    outcomes[f] = futures[f - wave].get();
                } catch (const std::exception& e) {
                    throw validation_error("crossval: fold " + std::to_string(f) + ": " + e.what());
                }
            }
        }
    }

    ReportInputs report;
    report.k = nc.classes;
    report.scope = "pooled";
    report.seed = cfg.seed;
    report.bootstrap_resamples = cfg.bootstrap_resamples;
    for (std::size_t f = 0; f < outcomes.size(); ++f) {
        const fs::path fold_dir = fs::path(cfg.out_dir) / ("fold" + std::to_string(f));
        std::error_code ec;
        fs::create_directories(fold_dir, ec);
        if (ec) throw io_error("crossval: cannot create " + fold_dir.string());
        net::save_checkpoint((fold_dir / "checkpoint.bin").string(), outcomes[f].trained.state);
        write_predictions((fold_dir / "predictions.csv").string(), outcomes[f].predictions,
                          nc.classes);
        CsvTable trace;
        trace.header = {"epoch", "mean_loss"};
        for (std::size_t e = 0; e < outcomes[f].trained.epoch_loss.size(); ++e) {
            trace.rows.push_back({std::to_string(e), format_value(outcomes[f].trained.epoch_loss[e])});
        }
        write_csv((fold_dir / "loss_trace.csv").string(), trace);

        report.per_fold.push_back(outcomes[f].predictions);
        for (const auto& p : outcomes[f].predictions) report.pooled.push_back(p);
    }
    write_report(cfg.out_dir, report);
    write_config_snapshot(cfg);
}

void cmd_eval(const RunConfig& cfg) {
    if (cfg.checkpoint.empty()) throw validation_error("eval: --checkpoint is required");
    ensure_out_dir(cfg);
    const net::ModelState state = net::load_checkpoint(cfg.checkpoint);
    const PreparedCohort cohort = prepare_cohort(cfg, state.config.input_side);

    ReportInputs report;
    report.k = state.config.classes;
    report.scope = "external";
    report.seed = cfg.seed;
    report.bootstrap_resamples = cfg.bootstrap_resamples;
    for (std::size_t i = 0; i < cohort.records.size(); ++i) {
        report.pooled.push_back(predict_subject(state, cohort.records[i], cohort.cubes[i]));
    }
    write_report(cfg.out_dir, report);
    write_config_snapshot(cfg);
}

void cmd_report(const RunConfig& cfg) {
    if (cfg.predictions.empty()) throw validation_error("report: --predictions is required");
    ensure_out_dir(cfg);
    ReportInputs report;
    report.pooled = read_predictions(cfg.predictions);
    if (report.pooled.empty()) throw validation_error("report: no prediction rows in " + cfg.predictions);
    report.k = static_cast<int>(report.pooled.front().probs.size());
    report.scope = "pooled";
    report.seed = cfg.seed;
    report.bootstrap_resamples = cfg.bootstrap_resamples;
    write_report(cfg.out_dir, report);
    write_config_snapshot(cfg);
}

int run(const std::vector<std::string>& args) {
    RunConfig cfg;
    CLI::App app{"evidential 3D CNN pipeline: synthesize, train, cross-validate, evaluate"};
    app.require_subcommand(1);

    const auto add_common = [&cfg](CLI::App* cmd) {
        cmd->add_option("--seed", cfg.seed, "run seed");
        cmd->add_option("--out", cfg.out_dir, "output directory");
    };
    const auto add_training = [&cfg](CLI::App* cmd) {
        cmd->add_option("--folds", cfg.k_folds, "cross-validation folds");
        cmd->add_option("--epochs", cfg.epochs, "training epochs");
        cmd->add_option("--lr", cfg.learning_rate, "learning rate");
        cmd->add_option("--batch", cfg.batch_size, "batch size");
        cmd->add_option("--stage1-channels", cfg.stage1_channels, "stage-1 channel count");
        cmd->add_option("--block-channels", cfg.block_channels, "residual block channel count");
        cmd->add_option("--evidence-activation", cfg.evidence_activation,
                        "evidence activation: relu|softplus");
        cmd->add_option("--fold-jobs", cfg.fold_jobs, "folds trained concurrently");
    };
    const auto add_preprocess = [&cfg](CLI::App* cmd) {
        cmd->add_option("--manifest", cfg.manifest, "cohort manifest");
        cmd->add_option("--vois", cfg.vois, "VoI table from detect-merge");
        cmd->add_option("--side", cfg.side, "network input cube side");
        cmd->add_option("--window-width", cfg.window_width, "CT window width");
        cmd->add_option("--window-level", cfg.window_level, "CT window level");
        cmd->add_option("--bootstrap", cfg.bootstrap_resamples, "bootstrap resamples");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic cohort");
    add_common(synth);
    synth->add_option("--n", cfg.n, "cohort size");
    synth->add_option("--difficulty", cfg.difficulty, "easy|medium|hard");
    synth->add_option("--side", cfg.side, "volume side in voxels");
    synth->add_option("--proportions", cfg.proportions, "class proportions (3 values)");

    CLI::App* merge = app.add_subcommand("detect-merge", "merge per-slice boxes into VoIs");
    add_common(merge);
    merge->add_option("--manifest", cfg.manifest, "cohort manifest");

    CLI::App* crossval = app.add_subcommand("crossval", "stratified k-fold train/evaluate");
    add_common(crossval);
    add_training(crossval);
    add_preprocess(crossval);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    add_common(eval);
    add_preprocess(eval);
    eval->add_option("--checkpoint", cfg.checkpoint, "model checkpoint");

    CLI::App* report = app.add_subcommand("report", "rebuild report files from predictions");
    add_common(report);
    report->add_option("--predictions", cfg.predictions, "predictions.csv to ingest");
    report->add_option("--bootstrap", cfg.bootstrap_resamples, "bootstrap resamples");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        if (synth->parsed()) {
            cfg.command = "synth";
            cmd_synth(cfg);
        } else if (merge->parsed()) {
            cfg.command = "detect-merge";
            cmd_detect_merge(cfg);
        } else if (crossval->parsed()) {
            cfg.command = "crossval";
            cmd_crossval(cfg);
        } else if (eval->parsed()) {
            cfg.command = "eval";
            cmd_eval(cfg);
        } else if (report->parsed()) {
            cfg.command = "report";
            cmd_report(cfg);
        }
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const io_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numeric fault: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace evinet::cli
