#include "core/runs.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

namespace lslu {

namespace fs = std::filesystem;

Dataset load_dataset(const RunConfig& cfg, const std::string& split) {
    if (cfg.dataset == "cifar10") return load_cifar10(cfg.data_dir, split);
    if (cfg.dataset == "mnist") return load_mnist_idx(cfg.data_dir, split);
    if (cfg.dataset == "folder") return load_image_folder(cfg.data_dir + "/" + split);
    if (cfg.dataset == "synthetic") {
        SyntheticSpec spec;
        spec.classes = cfg.synthetic_classes;
        spec.per_class = cfg.synthetic_per_class;
        spec.channels = cfg.synthetic_channels;
        spec.hw = cfg.synthetic_hw;
        spec.noise = cfg.synthetic_noise;
        spec.seed = cfg.seed;
        spec.split = split;
        return synthetic_blobs(spec);
    }
    fail(ErrorCode::InvalidConfig, "dataset '", cfg.dataset, "'");
}

namespace {

Tensor batch_loss(const std::string& kind, const Tensor& logits, const std::vector<int32_t>& labels) {
    return kind == "bce" ? bce_with_logits(logits, labels) : cross_entropy(logits, labels);
}

void set_blend_lambda(Graph& g, double lambda) {
    for (Node& node : g.nodes)
        if (auto* act = std::get_if<ActNode>(&node.payload))
            if (act->mode == ActMode::Blended) act->lambda = lambda;
}

bool has_series_layers(const Graph& g) {
    for (const Node& node : g.nodes)
        if (auto* act = std::get_if<ActNode>(&node.payload))
            if (act->mode == ActMode::Series && act->series.terms > 0) return true;
    return false;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(out.good(), ErrorCode::Io, "cannot write ", path);
    out << content;
    out.flush();
    check(out.good(), ErrorCode::Io, "write failed on ", path);
}

}  // namespace

EvalReport evaluate_dataset(Graph& g, const Dataset& ds, const std::string& loss_kind, int64_t batch) {
    check(ds.size() >= 1, ErrorCode::InvalidConfig, "empty dataset");
    EvalReport report;
    report.per_class_acc.assign(static_cast<size_t>(ds.classes), 0.0);
    report.per_class_count.assign(static_cast<size_t>(ds.classes), 0);
    std::vector<int64_t> per_class_hits(static_cast<size_t>(ds.classes), 0);

    ForwardCtx ctx;
    ctx.train = false;
    double loss_sum = 0.0;
    int64_t hits = 0;
    for (int64_t start = 0; start < ds.size(); start += batch) {
        Batch b = take_batch(ds, start, std::min(batch, ds.size() - start));
        Tensor x = normalize_images(b.images, g.norm_mean, g.norm_std, g.dtype);
        Tensor logits = g.forward(x, ctx);
        loss_sum += batch_loss(loss_kind, logits, b.labels).item() * static_cast<double>(b.labels.size());
        int64_t classes = logits.dim(1);
        for (size_t i = 0; i < b.labels.size(); ++i) {
            int64_t arg = 0;
            for (int64_t k = 1; k < classes; ++k)
                if (logits.value_at(static_cast<int64_t>(i) * classes + k) >
                    logits.value_at(static_cast<int64_t>(i) * classes + arg))
                    arg = k;
            auto cls = static_cast<size_t>(b.labels[i]);
            ++report.per_class_count[cls];
            if (arg == b.labels[i]) {
                ++hits;
                ++per_class_hits[cls];
            }
        }
    }
    report.loss = loss_sum / static_cast<double>(ds.size());
    report.top1 = static_cast<double>(hits) / static_cast<double>(ds.size());
    for (size_t k = 0; k < per_class_hits.size(); ++k)
        report.per_class_acc[k] = report.per_class_count[k] == 0
                                      ? 0.0
                                      : static_cast<double>(per_class_hits[k]) /
                                            static_cast<double>(report.per_class_count[k]);
    return report;
}

TrainResult run_train(const RunConfig& cfg) {
    validate_config(cfg);
    Dataset train = take_subset(load_dataset(cfg, "train"), cfg.train_limit);
    Dataset val = take_subset(load_dataset(cfg, "test"), cfg.val_limit);
    check(train.images.dim(2) == train.images.dim(3), ErrorCode::ShapeMismatch,
          "training images must be square");

    NetworkSpec spec = network_spec(cfg);
    spec.in_channels = train.images.dim(1);
    spec.in_hw = train.images.dim(2);
    spec.classes = train.classes;
    TrainResult result;
    result.graph = build_network(spec);
    Graph& g = result.graph;

    ChannelStats stats = compute_channel_stats(train);
    g.norm_mean = stats.mean;
    g.norm_std = stats.stddev;

    std::vector<NamedParam> params = g.parameters();
    AdamState adam;
    SgdState sgd;
    EarlyStopper stopper{cfg.patience, true};
    bool log_series = has_series_layers(g);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cfg.schedule == "cosine" ? cosine_lr(epoch, cfg.epochs, cfg.lr, cfg.lr_min) : cfg.lr;
        set_blend_lambda(g, blend_lambda(epoch, cfg.epochs));
        if (log_series) {
            std::vector<TrajectoryRecord> snap = record_trajectories(g, epoch, cfg.run_id);
            result.trajectories.insert(result.trajectories.end(), snap.begin(), snap.end());
        }

        double loss_sum = 0.0;
        Batcher batcher(train, cfg.batch, derive_stream(cfg.seed, "shuffle", static_cast<uint64_t>(epoch)));
        Batch batch;
        while (batcher.next(batch)) {
            Tensor x = normalize_images(batch.images, g.norm_mean, g.norm_std, g.dtype);
            ForwardCtx ctx;
            ctx.train = true;
            ctx.update_bn_stats = true;
            Tensor loss;
            {
                Tape tape;
                Tensor logits = g.forward(x, ctx);
                loss = batch_loss(cfg.loss, logits, batch.labels);
                tape.backward(loss);
            }
            if (cfg.optimizer == "adam")
                adam_step(params, adam, lr);
            else
                sgd_step(params, sgd, lr, cfg.momentum);
            zero_grads(params);
            loss_sum += loss.item() * static_cast<double>(batch.labels.size());
        }

        double val_acc = evaluate_dataset(g, val, cfg.loss, cfg.batch).top1;
        result.metrics.push_back(
            {epoch, loss_sum / static_cast<double>(train.size()), val_acc, lr});
        result.epochs_run = epoch + 1;
        if (stopper.update(val_acc)) {
            result.stopped_early = true;
            break;
        }
    }
    set_blend_lambda(g, blend_lambda(static_cast<int>(result.epochs_run), cfg.epochs));
    result.final_val_acc = result.metrics.back().val_acc;

    // The in-loop snapshots happen at epoch start, so without this row the
    // trained values would never reach the trajectory log.
    if (log_series && result.epochs_run > 0) {
        std::vector<TrajectoryRecord> snap =
            record_trajectories(g, result.epochs_run, cfg.run_id);
        result.trajectories.insert(result.trajectories.end(), snap.begin(), snap.end());
    }

    fs::create_directories(cfg.out_dir);
    std::ostringstream metrics_csv;
    metrics_csv << kMetricsHeader << "\n";
    for (const EpochMetrics& m : result.metrics)
        metrics_csv << m.epoch << "," << fmt_double(m.train_loss) << "," << fmt_double(m.val_acc)
                    << "," << fmt_double(m.lr) << "\n";
    result.metrics_path = cfg.out_dir + "/metrics.csv";
    write_file(result.metrics_path, metrics_csv.str());

    if (log_series) {
        result.trajectory_path = cfg.out_dir + "/trajectories.csv";
        write_file(result.trajectory_path, trajectory_csv(result.trajectories, true));
    }

    CheckpointMeta meta;
    meta.epoch = result.epochs_run;
    meta.config = config_to_json(cfg);
    meta.config_hash = config_hash(cfg);
    result.checkpoint_path = cfg.out_dir + "/checkpoint.lslu";
    save_checkpoint(result.checkpoint_path, g, meta);
    return result;
}

namespace {

// The floor makes the check absolute for near-zero gradients (the loss is
// O(1), so differences below tol*1e-2 are finite-difference roundoff, not
// wrong calculus). Params whose true gradient vanishes structurally, like
// an omega shift feeding a mean-subtracting batchnorm, stay testable.
double rel_err(double a, double b) {
    double denom = std::max({std::abs(a), std::abs(b), 1e-2});
    return std::abs(a - b) / denom;
}

// "n03.act.theta" -> "theta"; projection tensors land in the main groups.
std::string param_group(const std::string& name) {
    std::string tail = name.substr(name.rfind('.') + 1);
    if (tail.rfind("proj_", 0) == 0) tail = tail.substr(5);
    return tail;
}

// Smallest distance from any kinked activation input to its kink. Smooth
// bases report +inf.
double kink_margin(Graph& g, const Tensor& x, const ForwardCtx& base_ctx) {
    double margin = std::numeric_limits<double>::infinity();
    ForwardCtx ctx = base_ctx;
    // act node i consumes node i-1's output
    std::vector<Tensor> outputs;
    ctx.capture = [&](const std::string&, const Tensor& out) { outputs.push_back(out); };
    g.forward(x, ctx);
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        auto* act = std::get_if<ActNode>(&g.nodes[i].payload);
        if (!act) continue;
        if (act->base != BaseActKind::ReLU && act->base != BaseActKind::LeakyReLU) continue;
        const Tensor& in = i == 0 ? x : outputs[i - 1];
        if (act->mode == ActMode::Series && act->series.terms > 0) {
            for (int n = 0; n < act->series.terms; ++n) {
                double shift = act->series.shift.value_at(n);
                for (int64_t e = 0; e < in.size(); ++e)
                    margin = std::min(margin, std::abs(in.value_at(e) + shift));
            }
        } else {
            for (int64_t e = 0; e < in.size(); ++e)
                margin = std::min(margin, std::abs(in.value_at(e)));
        }
    }
    return margin;
}

}  // namespace

GradcheckReport run_gradcheck(const RunConfig& cfg, int samples_per_group, double h,
                              double tolerance, const std::string& corrupt_group) {
    check(samples_per_group >= 1, ErrorCode::InvalidConfig, "need >= 1 sample per group");
    check(h > 0.0, ErrorCode::InvalidConfig, "step must be positive");
    NetworkSpec spec = network_spec(cfg);
    spec.dtype = DType::F64;
    spec.in_channels = 1;
    spec.in_hw = 16;
    spec.classes = 4;
    Graph g = build_network(spec);

    ForwardCtx ctx;
    ctx.train = true;            // batch statistics, deterministic for fixed input
    ctx.update_bn_stats = false; // stats must not drift between evaluations
    ctx.dropout_enabled = false;

    int64_t batch = 2;
    std::vector<int32_t> labels(static_cast<size_t>(batch));
    Tensor x;
    for (uint64_t attempt = 0;; ++attempt) {
        check(attempt < 64, ErrorCode::Internal, "no input clears the kink margin");
        RngStream draw = derive_stream(cfg.seed, "gradcheck-input", attempt);
        x = Tensor::zeros({batch, spec.in_channels, spec.in_hw, spec.in_hw}, DType::F64);
        for (int64_t e = 0; e < x.size(); ++e) x.set_value_at(e, draw.uniform(-1.0, 1.0));
        for (auto& l : labels) l = static_cast<int32_t>(draw.below(static_cast<uint64_t>(spec.classes)));
        if (kink_margin(g, x, ctx) > 10.0 * h) break;
    }

    auto loss_value = [&]() { return batch_loss(cfg.loss, g.forward(x, ctx), labels).item(); };

    std::vector<NamedParam> params = g.parameters();
    zero_grads(params);
    {
        Tape tape;
        Tensor loss = batch_loss(cfg.loss, g.forward(x, ctx), labels);
        tape.backward(loss);
    }

    static const char* kGroupOrder[] = {"weight", "bias",  "gamma", "beta",
                                        "theta",  "omega", "alpha", "shift"};
    GradcheckReport report;
    report.all_pass = true;
    for (const char* group : kGroupOrder) {
        GradcheckRow row;
        row.group = group;
        bool seen = false;
        for (NamedParam& p : params) {
            if (param_group(p.name) != group) continue;
            seen = true;
            check(p.tensor.has_grad(), ErrorCode::MissingGrad, p.name, " received no gradient");
            int64_t size = p.tensor.size();
            int64_t probes = std::min<int64_t>(samples_per_group, size);
            for (int64_t i = 0; i < probes; ++i) {
                int64_t idx = i * size / probes;
                double analytic = p.tensor.grad_at(idx);
                if (row.group == corrupt_group) analytic += 0.01 * (std::abs(analytic) + 1.0);
                double v = p.tensor.value_at(idx);
                p.tensor.set_value_at(idx, v + h);
                double up = loss_value();
                p.tensor.set_value_at(idx, v - h);
                double down = loss_value();
                p.tensor.set_value_at(idx, v);
                row.max_rel_err =
                    std::max(row.max_rel_err, rel_err(analytic, (up - down) / (2.0 * h)));
            }
        }
        if (!seen) continue;
        row.pass = row.max_rel_err < tolerance;
        report.all_pass &= row.pass;
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::vector<AblationRow> run_ablate(const RunConfig& cfg, const std::vector<int>& n_values) {
    check(!n_values.empty(), ErrorCode::InvalidConfig, "no term counts requested");
    std::vector<AblationRow> rows;
    for (int n : n_values) {
        RunConfig run_cfg = cfg;
        run_cfg.n = n;
        run_cfg.out_dir = cfg.out_dir + "/n" + std::to_string(n);
        TrainResult result = run_train(run_cfg);
        ParamsFlops pf = count_params_flops(result.graph);
        LatencyStats lat = latency_bench(result.graph, 1, 20, 3);
        rows.push_back({n, pf.params, pf.flops, result.final_val_acc, lat.mean_ms});
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << kAblationHeader << "\n";
    for (const AblationRow& r : rows)
        os << r.n << "," << r.params << "," << r.flops << "," << fmt_double(r.acc) << ","
           << fmt_double(r.latency_ms) << "\n";
    return os.str();
}

FuseCmdResult run_fuse(const std::string& checkpoint_in, const std::string& checkpoint_out,
                       int64_t probes) {
    LoadedCheckpoint loaded = load_checkpoint(checkpoint_in);
    FuseCmdResult result;
    result.tolerance = loaded.graph.dtype == DType::F32 ? 1e-5 : 1e-10;
    FusedNetwork fused = fuse_network(loaded.graph, probes, 0);
    result.report = fused.report;
    result.within_tolerance =
        fused.report.max_abs_diff < result.tolerance && fused.report.argmax_preserved;
    result.out_path = checkpoint_out;
    save_checkpoint(checkpoint_out, fused.graph, loaded.meta);
    return result;
}

}  // namespace lslu
