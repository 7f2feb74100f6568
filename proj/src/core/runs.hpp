#pragma once

#include <string>
#include <vector>

#include "core/analysis.hpp"
#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/fusion.hpp"
#include "core/optim.hpp"

namespace lslu {

Dataset load_dataset(const RunConfig& cfg, const std::string& split);

struct EpochMetrics {
    int64_t epoch = 0;
    double train_loss = 0.0;
    double val_acc = 0.0;
    double lr = 0.0;
};

inline constexpr const char* kMetricsHeader = "epoch,train_loss,val_acc,lr";

struct TrainResult {
    Graph graph;
    std::vector<EpochMetrics> metrics;
    std::vector<TrajectoryRecord> trajectories;
    int64_t epochs_run = 0;
    bool stopped_early = false;
    double final_val_acc = 0.0;
    std::string checkpoint_path, metrics_path, trajectory_path;
};

// Full training run: per-epoch schedule, series-scalar logging at epoch
// start, BN running-stat updates, optional early stopping; writes
// metrics.csv, trajectories.csv (when the graph has series layers) and
// checkpoint.lslu under cfg.out_dir. Identical config+seed reproduces the
// CSV files byte for byte.
TrainResult run_train(const RunConfig& cfg);

struct EvalReport {
    double loss = 0.0;
    double top1 = 0.0;
    std::vector<double> per_class_acc;
    std::vector<int64_t> per_class_count;
};

EvalReport evaluate_dataset(Graph& g, const Dataset& ds, const std::string& loss_kind, int64_t batch);

struct GradcheckRow {
    std::string group;
    double max_rel_err = 0.0;
    bool pass = false;
};

struct GradcheckReport {
    std::vector<GradcheckRow> rows;
    bool all_pass = false;
};

// Compares analytic gradients against central differences (float64 forced,
// dropout off, batch statistics frozen) on a fresh network. Inputs are
// redrawn until every kinked activation sees pre-activations at a safe
// margin from the kink. `corrupt_group` perturbs one group's analytic
// value, for validating that the harness catches wrong gradients.
GradcheckReport run_gradcheck(const RunConfig& cfg, int samples_per_group, double h = 1e-5,
                              double tolerance = 1e-4, const std::string& corrupt_group = "");

struct AblationRow {
    int n = 0;
    int64_t params = 0;
    int64_t flops = 0;
    double acc = 0.0;
    double latency_ms = 0.0;
};

inline constexpr const char* kAblationHeader = "n,params,flops,acc,latency_ms";

// One full training run per term count, identical seed and schedule.
std::vector<AblationRow> run_ablate(const RunConfig& cfg, const std::vector<int>& n_values);
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct FuseCmdResult {
    FusionReport report;
    std::string out_path;
    double tolerance = 0.0;
    bool within_tolerance = false;
};

// Loads a trained checkpoint, fuses, verifies equivalence on a probe batch
// and writes the fused checkpoint.
FuseCmdResult run_fuse(const std::string& checkpoint_in, const std::string& checkpoint_out,
                       int64_t probes = 100);

}  // namespace lslu
