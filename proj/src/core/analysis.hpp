#pragma once

#include <string>
#include <vector>

#include "core/data.hpp"
#include "core/graph.hpp"

namespace lslu {

// One logged value of one series scalar at one epoch. The shift parameter
// is logged under the kind name "bias".
struct TrajectoryRecord {
    std::string run_id;
    int64_t epoch = 0;
    std::string layer;
    std::string kind;  // theta | omega | alpha | bias
    int term = 0;
    double value = 0.0;
};

inline constexpr const char* kTrajectoryHeader = "run_id,epoch,layer,kind,term,value";

// Snapshot of every series scalar in the graph, taken at the start of the
// epoch so epoch 0 shows exact initialization values.
std::vector<TrajectoryRecord> record_trajectories(const Graph& g, int64_t epoch,
                                                  const std::string& run_id);

std::string trajectory_csv(const std::vector<TrajectoryRecord>& records, bool with_header);
std::vector<TrajectoryRecord> read_trajectory_csv(const std::string& path);

// Mean and population standard deviation of each scalar over its last_k
// logged epochs.
struct ScalarStats {
    std::string layer;
    std::string kind;
    int term = 0;
    double mean = 0.0;
    double stddev = 0.0;
};
std::vector<ScalarStats> convergence_stats(const std::vector<TrajectoryRecord>& records, int last_k = 10);

// Selectivity of one class-conditioned mean-activity profile:
// (max - mean of the rest) / (max + mean of the rest + 1e-12), with
// negative means rectified to zero first, clamped to [0,1].
double csi_from_class_means(std::vector<double> means);

struct SelectivityReport {
    std::string layer;
    std::vector<double> csi;         // one per filter
    std::vector<int64_t> histogram;  // 50 bins over [0,1]
};

// Post-activation spatial mean per (sample, filter), averaged per class,
// then collapsed to one index per filter. Eval mode; needs >= 2 classes
// present in the dataset.
SelectivityReport class_selectivity(Graph& g, const Dataset& ds, const std::string& layer,
                                    int64_t batch = 64);
std::string selectivity_csv(const SelectivityReport& report);

std::vector<std::string> activation_layer_names(const Graph& g);

struct LatencyStats {
    double mean_ms = 0.0;
    double std_ms = 0.0;
    int64_t iters = 0;
};

// Wall-clock per-forward statistics in eval mode, single-threaded.
LatencyStats latency_bench(Graph& g, int64_t batch, int64_t iters, int64_t warmup);

// Shortest round-trip decimal text for CSV output; keeps reruns byte-identical.
std::string fmt_double(double v);

}  // namespace lslu
