#include "core/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace lslu {

std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<TrajectoryRecord> record_trajectories(const Graph& g, int64_t epoch,
                                                  const std::string& run_id) {
    std::vector<TrajectoryRecord> out;
    for (const Node& node : g.nodes) {
        auto* act = std::get_if<ActNode>(&node.payload);
        if (!act || act->mode != ActMode::Series || act->series.terms == 0) continue;
        const SeriesActivationParams& p = act->series;
        for (int n = 0; n < p.terms; ++n) {
            out.push_back({run_id, epoch, node.name, "theta", n, p.theta.value_at(n)});
            out.push_back({run_id, epoch, node.name, "omega", n, p.omega.value_at(n)});
            out.push_back({run_id, epoch, node.name, "alpha", n, p.alpha.value_at(n)});
            out.push_back({run_id, epoch, node.name, "bias", n, p.shift.value_at(n)});
        }
    }
    check(!out.empty(), ErrorCode::NoSeriesLayers, "graph holds no series activations to log");
    return out;
}

std::string trajectory_csv(const std::vector<TrajectoryRecord>& records, bool with_header) {
    std::ostringstream os;
    if (with_header) os << kTrajectoryHeader << "\n";
    for (const TrajectoryRecord& r : records)
        os << r.run_id << "," << r.epoch << "," << r.layer << "," << r.kind << "," << r.term << ","
           << fmt_double(r.value) << "\n";
    return os.str();
}

std::vector<TrajectoryRecord> read_trajectory_csv(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), ErrorCode::FileMissing, "cannot open ", path);
    std::string line;
    check(std::getline(in, line) && line == kTrajectoryHeader, ErrorCode::Corrupt, path,
          ": unexpected header");
    std::vector<TrajectoryRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        TrajectoryRecord r;
        std::string epoch, term, value;
        check(std::getline(fields, r.run_id, ',') && std::getline(fields, epoch, ',') &&
                  std::getline(fields, r.layer, ',') && std::getline(fields, r.kind, ',') &&
                  std::getline(fields, term, ',') && std::getline(fields, value, ','),
              ErrorCode::Corrupt, path, ": malformed row '", line, "'");
        r.epoch = std::stoll(epoch);
        r.term = std::stoi(term);
        r.value = std::stod(value);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<ScalarStats> convergence_stats(const std::vector<TrajectoryRecord>& records, int last_k) {
    check(last_k >= 1, ErrorCode::InvalidConfig, "last_k must be >= 1");
    // keyed by scalar identity; epochs arrive in logging order
    std::map<std::tuple<std::string, std::string, int>, std::vector<double>> series;
    for (const TrajectoryRecord& r : records)
        series[{r.layer, r.kind, r.term}].push_back(r.value);

    std::vector<ScalarStats> out;
    for (auto& [key, values] : series) {
        check(static_cast<int>(values.size()) >= last_k, ErrorCode::InsufficientHistory,
              std::get<0>(key), ".", std::get<1>(key), "[", std::get<2>(key), "] logged ",
              values.size(), " epochs, need ", last_k);
        double mean = 0.0;
        for (size_t i = values.size() - static_cast<size_t>(last_k); i < values.size(); ++i)
            mean += values[i];
        mean /= last_k;
        double var = 0.0;
        for (size_t i = values.size() - static_cast<size_t>(last_k); i < values.size(); ++i)
            var += (values[i] - mean) * (values[i] - mean);
        var /= last_k;
        out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), mean, std::sqrt(var)});
    }
    return out;
}

double csi_from_class_means(std::vector<double> means) {
    check(means.size() >= 2, ErrorCode::SingleClass, "need class means for >= 2 classes");
    for (double& m : means) m = std::max(m, 0.0);
    size_t arg = 0;
    for (size_t k = 1; k < means.size(); ++k)
        if (means[k] > means[arg]) arg = k;
    double rest = 0.0;
    for (size_t k = 0; k < means.size(); ++k)
        if (k != arg) rest += means[k];
    rest /= static_cast<double>(means.size() - 1);
    double csi = (means[arg] - rest) / (means[arg] + rest + 1e-12);
    return std::clamp(csi, 0.0, 1.0);
}

SelectivityReport class_selectivity(Graph& g, const Dataset& ds, const std::string& layer,
                                    int64_t batch) {
    check(ds.size() >= 1, ErrorCode::InvalidConfig, "empty dataset");
    std::vector<int64_t> class_counts(static_cast<size_t>(ds.classes), 0);
    for (int32_t l : ds.labels) ++class_counts[static_cast<size_t>(l)];
    int64_t present = 0;
    for (int64_t c : class_counts) present += c > 0 ? 1 : 0;
    check(present >= 2, ErrorCode::SingleClass, "dataset holds samples of ", present, " class");

    bool layer_exists = false;
    for (const Node& node : g.nodes) layer_exists |= node.name == layer;
    check(layer_exists, ErrorCode::InvalidConfig, "no node named '", layer, "'");

    // class x filter sums of spatially averaged activity
    std::vector<std::vector<double>> sums;
    int64_t filters = -1;

    ForwardCtx ctx;
    ctx.train = false;
    const std::vector<int32_t>* batch_labels = nullptr;
    ctx.capture = [&](const std::string& name, const Tensor& out) {
        if (name != layer) return;
        int64_t n = out.dim(0);
        int64_t c = out.rank() >= 2 ? out.dim(1) : 1;
        int64_t plane = out.size() / (n * c);
        if (filters < 0) {
            filters = c;
            sums.assign(static_cast<size_t>(ds.classes), std::vector<double>(static_cast<size_t>(c), 0.0));
        }
        for (int64_t i = 0; i < n; ++i) {
            auto cls = static_cast<size_t>((*batch_labels)[static_cast<size_t>(i)]);
            for (int64_t f = 0; f < c; ++f) {
                double acc = 0.0;
                for (int64_t e = 0; e < plane; ++e) acc += out.value_at((i * c + f) * plane + e);
                sums[cls][static_cast<size_t>(f)] += acc / static_cast<double>(plane);
            }
        }
    };

    for (int64_t start = 0; start < ds.size(); start += batch) {
        Batch b = take_batch(ds, start, std::min(batch, ds.size() - start));
        Tensor x = normalize_images(b.images, g.norm_mean, g.norm_std, g.dtype);
        batch_labels = &b.labels;
        g.forward(x, ctx);
    }
    check(filters > 0, ErrorCode::Internal, "capture never fired for '", layer, "'");

    SelectivityReport report;
    report.layer = layer;
    for (int64_t f = 0; f < filters; ++f) {
        std::vector<double> means;
        for (int64_t k = 0; k < ds.classes; ++k)
            if (class_counts[static_cast<size_t>(k)] > 0)
                means.push_back(sums[static_cast<size_t>(k)][static_cast<size_t>(f)] /
                                static_cast<double>(class_counts[static_cast<size_t>(k)]));
        report.csi.push_back(csi_from_class_means(std::move(means)));
    }
    report.histogram.assign(50, 0);
    for (double v : report.csi) {
        auto bin = static_cast<size_t>(std::min(49.0, std::floor(v * 50.0)));
        ++report.histogram[bin];
    }
    return report;
}

std::string selectivity_csv(const SelectivityReport& report) {
    std::ostringstream os;
    os << "layer,filter,csi\n";
    for (size_t f = 0; f < report.csi.size(); ++f)
        os << report.layer << "," << f << "," << fmt_double(report.csi[f]) << "\n";
    return os.str();
}

std::vector<std::string> activation_layer_names(const Graph& g) {
    std::vector<std::string> out;
    for (const Node& node : g.nodes)
        if (std::get_if<ActNode>(&node.payload)) out.push_back(node.name);
    return out;
}

LatencyStats latency_bench(Graph& g, int64_t batch, int64_t iters, int64_t warmup) {
    check(iters >= 1, ErrorCode::InsufficientIters, "need iters >= 1, got ", iters);
    check(batch >= 1 && warmup >= 0, ErrorCode::InvalidConfig, "bad bench extents");
    RngStream rng = derive_stream(0, "latency-input");
    Tensor x = Tensor::zeros({batch, g.input_channels, g.input_hw, g.input_hw}, g.dtype);
    for (int64_t e = 0; e < x.size(); ++e) x.set_value_at(e, rng.normal());
    ForwardCtx ctx;
    ctx.train = false;

    for (int64_t i = 0; i < warmup; ++i) g.forward(x, ctx);

    std::vector<double> ms(static_cast<size_t>(iters));
    for (int64_t i = 0; i < iters; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        g.forward(x, ctx);
        auto t1 = std::chrono::steady_clock::now();
        ms[static_cast<size_t>(i)] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    LatencyStats stats;
    stats.iters = iters;
    for (double v : ms) stats.mean_ms += v;
    stats.mean_ms /= static_cast<double>(iters);
    for (double v : ms) stats.std_ms += (v - stats.mean_ms) * (v - stats.mean_ms);
    stats.std_ms = std::sqrt(stats.std_ms / static_cast<double>(iters));
    return stats;
}

}  // namespace lslu
