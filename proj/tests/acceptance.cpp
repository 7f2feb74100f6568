// Acceptance gate: ten numbered end-to-end checks over the shipped library,
// one PASS/FAIL line each. Exit code is the number of failures, so ctest
// treats any red line as a suite failure. Every check builds its own inputs;
// the digit fixture stands in for the MNIST IDX pair.

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "core/analysis.hpp"
#include "core/conv_ops.hpp"
#include "core/error.hpp"
#include "core/fusion.hpp"
#include "core/networks.hpp"
#include "core/runs.hpp"
#include "core/series_activation.hpp"
#include "support/digit_fixture.hpp"

namespace fs = std::filesystem;
using namespace lslu;

namespace {

Tensor random_tensor(Shape shape, RngStream& rng, DType dt = DType::F64, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape), dt);
    for (int64_t i = 0; i < t.size(); ++i) t.set_value_at(i, rng.uniform(lo, hi));
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw Error(ErrorCode::ShapeMismatch, "max_abs_diff: shape mismatch");
    double m = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.value_at(i) - b.value_at(i)));
    return m;
}

std::string strf(const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, args);
    va_end(args);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream out;
    out << f.rdbuf();
    return out.str();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Ctx {
    fs::path work;
    std::string digits;
    std::vector<TrainResult> lslu_runs;  // the three seed runs of check 5
};

RunConfig tiny_synthetic(const Ctx& ctx, const std::string& tag) {
    RunConfig cfg;
    cfg.run_id = tag;
    cfg.depth = 4;
    cfg.width = 8;
    cfg.n = 2;
    cfg.epochs = 2;
    cfg.batch = 16;
    cfg.lr = 5e-3;
    cfg.synthetic_classes = 3;
    cfg.synthetic_per_class = 16;
    cfg.synthetic_hw = 8;
    cfg.synthetic_noise = 0.01;
    cfg.seed = 5;
    cfg.out_dir = (ctx.work / tag).string();
    return cfg;
}

RunConfig digit_config(const Ctx& ctx, uint64_t seed, int n) {
    RunConfig cfg;
    cfg.run_id = strf("digits-s%llu-n%d", (unsigned long long)seed, n);
    cfg.width = 64;
    cfg.n = n;
    cfg.batch = 400;
    cfg.dataset = "mnist";
    cfg.data_dir = ctx.digits;
    cfg.train_limit = 2000;
    cfg.val_limit = 1000;
    cfg.seed = seed;
    cfg.out_dir = (ctx.work / cfg.run_id).string();
    return cfg;
}

// 1. At initialization the series must reproduce its base bit for bit.
Outcome check_init_identity(Ctx&) {
    const BaseActKind kinds[] = {BaseActKind::ReLU, BaseActKind::LeakyReLU, BaseActKind::GELU,
                                 BaseActKind::SiLU};
    double worst = 0.0;
    int combos = 0;
    uint64_t draw = 0;
    for (DType dt : {DType::F32, DType::F64})
        for (BaseActKind base : kinds)
            for (int n = 1; n <= 4; ++n) {
                RngStream rng = derive_stream(7, "accept-identity", draw++);
                Tensor x = random_tensor({10000}, rng, dt, -4.0, 4.0);
                Tensor plain = series_forward(x, init_series(0, base, dt));
                Tensor series = series_forward(x, init_series(n, base, dt));
                worst = std::max(worst, max_abs_diff(plain, series));
                ++combos;
            }
    return {worst == 0.0,
            strf("%d base/N/dtype combos, 10^4 inputs each, max |diff| = %g", combos, worst)};
}

// 2. Analytic gradients against central differences on both architectures.
Outcome check_gradients(Ctx&) {
    double worst_all = 0.0, worst_tw = 0.0;
    bool ok = true;
    for (const char* arch : {"mini-vanillanet", "mini-resnet"}) {
        RunConfig cfg;
        cfg.arch = arch;
        cfg.depth = 5;
        cfg.stages = 2;
        cfg.n = 3;
        cfg.seed = 11;
        GradcheckReport rep = run_gradcheck(cfg, 5, 1e-5, 1e-4);
        ok = ok && rep.all_pass;
        for (const GradcheckRow& row : rep.rows) {
            worst_all = std::max(worst_all, row.max_rel_err);
            if (row.group == "theta" || row.group == "omega") {
                worst_tw = std::max(worst_tw, row.max_rel_err);
                ok = ok && row.max_rel_err < 1e-6;
            }
        }
    }
    return {ok, strf("all groups %.3g < 1e-4, theta/omega %.3g < 1e-6", worst_all, worst_tw)};
}

// 3. Deploy-time fusion must not change what the network computes.
Outcome check_fusion(Ctx& ctx) {
    std::string detail;
    bool ok = true;
    for (const char* dt : {"f32", "f64"}) {
        RunConfig cfg = tiny_synthetic(ctx, strf("fuse-%s", dt));
        cfg.dtype = dt;
        TrainResult r = run_train(cfg);
        FusedNetwork fused = fuse_network(r.graph, 100, 0);
        double tol = std::string(dt) == "f32" ? 1e-5 : 1e-10;
        bool within = fused.report.max_abs_diff < tol && fused.report.argmax_preserved &&
                      fused.report.probes == 100;
        ok = ok && within;
        if (!detail.empty()) detail += ", ";
        detail += strf("%s max |diff| %.3g < %.0e", dt, fused.report.max_abs_diff, tol);
    }
    detail += ", argmax preserved on all probes";
    return {ok, detail};
}

// 4. Shared theta folds exactly for the homogeneous base and never otherwise.
Outcome check_theta_fold(Ctx&) {
    RngStream rng = derive_stream(13, "accept-fold");
    ConvLayer conv = make_conv(3, 4, 3, 1, 1, DType::F64, rng);
    SeriesActivationParams series = init_series(3, BaseActKind::ReLU, DType::F64);
    for (int i = 0; i < 3; ++i) series.theta.set_value_at(i, 1.7);
    series.alpha.set_value_at(0, 0.5);
    series.alpha.set_value_at(1, 0.3);
    series.alpha.set_value_at(2, 0.2);
    series.omega.set_value_at(1, -0.2);

    Tensor x = random_tensor({2, 3, 6, 6}, rng, DType::F64);
    Tensor before = series_forward(conv2d(x, conv), series);
    FoldOutcome fold = fold_theta(conv, series);
    if (!fold.folded) return {false, "shared-theta ReLU case declined: " + fold.reason};
    for (int i = 0; i < 3; ++i)
        if (series.theta.value_at(i) != 1.0) return {false, "theta not reset to 1 after fold"};
    double diff = max_abs_diff(before, series_forward(conv2d(x, conv), series));

    bool declined = true;
    for (BaseActKind smooth : {BaseActKind::GELU, BaseActKind::SiLU}) {
        ConvLayer c2 = make_conv(2, 2, 1, 1, 0, DType::F64, rng);
        Tensor w_before = c2.weight.detached_copy();
        SeriesActivationParams s2 = init_series(2, smooth, DType::F64);
        s2.theta.set_value_at(0, 2.0);
        s2.theta.set_value_at(1, 2.0);
        FoldOutcome out = fold_theta(c2, s2);
        declined = declined && !out.folded && !out.reason.empty() &&
                   max_abs_diff(c2.weight, w_before) == 0.0;
    }
    return {diff < 1e-10 && declined,
            strf("fold max |diff| %.3g < 1e-10, smooth bases declined untouched", diff)};
}

// 5. Desk-scale training on the digit fixture, three seeds, against the
//    plain-activation baseline.
Outcome check_training(Ctx& ctx) {
    std::string detail;
    bool ok = true;
    for (uint64_t seed : {0ull, 1ull, 2ull}) {
        double acc[2];
        for (int n : {3, 0}) {
            TrainResult r = run_train(digit_config(ctx, seed, n));
            acc[n == 3 ? 0 : 1] = r.final_val_acc;
            if (n == 3) ctx.lslu_runs.push_back(std::move(r));
        }
        ok = ok && acc[0] >= 0.90 && acc[0] >= acc[1] - 0.01;
        if (!detail.empty()) detail += ", ";
        detail += strf("seed %llu: %.3f vs baseline %.3f", (unsigned long long)seed, acc[0], acc[1]);
    }
    return {ok, detail};
}

// 6. Trajectory log: full per-epoch coverage, exact initialization row,
//    stable scalars over the run's last ten epochs.
Outcome check_trajectories(Ctx& ctx) {
    if (ctx.lslu_runs.empty()) return {false, "no training runs recorded by check 5"};
    double worst_std = 0.0;
    for (const TrainResult& r : ctx.lslu_runs) {
        if (!fs::exists(r.trajectory_path)) return {false, "trajectory CSV missing"};

        std::map<int64_t, int> per_epoch;
        std::set<std::string> scalars;
        for (const TrajectoryRecord& rec : r.trajectories) {
            ++per_epoch[rec.epoch];
            scalars.insert(rec.layer + "/" + rec.kind + "/" + std::to_string(rec.term));
            if (rec.epoch == 0 && rec.kind == "theta" && rec.value != 1.0)
                return {false, strf("epoch-0 theta = %g", rec.value)};
            if (rec.epoch == 0 && rec.kind == "omega" && rec.value != 0.0)
                return {false, strf("epoch-0 omega = %g", rec.value)};
        }
        if (per_epoch.size() != static_cast<size_t>(r.epochs_run) + 1)
            return {false, strf("%zu logged epochs for %lld-epoch run", per_epoch.size(),
                                (long long)r.epochs_run)};
        for (const auto& [epoch, count] : per_epoch)
            if (count != static_cast<int>(scalars.size()))
                return {false, strf("epoch %lld logs %d of %zu scalars", (long long)epoch, count,
                                    scalars.size())};

        for (const ScalarStats& s : convergence_stats(r.trajectories, 10))
            worst_std = std::max(worst_std, s.stddev);
    }
    return {worst_std < 1e-2, strf("%zu runs, %zu scalars each, worst last-10-epoch std %.4g < 1e-2",
                                   ctx.lslu_runs.size(),
                                   ctx.lslu_runs.front().trajectories.size() /
                                       (static_cast<size_t>(ctx.lslu_runs.front().epochs_run) + 1),
                                   worst_std)};
}

// 7. Term-count ablation: five rows, parameter column growing by exactly
//    four scalars per series layer per added term.
Outcome check_ablation(Ctx& ctx) {
    RunConfig cfg = tiny_synthetic(ctx, "ablate");
    cfg.depth = 5;  // four series layers
    std::vector<AblationRow> rows = run_ablate(cfg, {0, 1, 2, 3, 4});
    if (rows.size() != 5) return {false, strf("%zu rows", rows.size())};

    NetworkSpec spec;  // count series layers the same way the builder does
    spec.depth = cfg.depth;
    spec.width = cfg.width;
    spec.terms = 1;
    spec.in_channels = 1;
    spec.in_hw = cfg.synthetic_hw;
    spec.classes = cfg.synthetic_classes;
    Graph probe = build_network(spec);
    int64_t layers = static_cast<int64_t>(activation_layer_names(probe).size());

    bool ok = true;
    for (size_t i = 0; i < rows.size(); ++i) {
        ok = ok && rows[i].n == static_cast<int>(i);
        ok = ok && rows[i].acc >= 0.0 && rows[i].acc <= 1.0 && rows[i].latency_ms > 0.0;
        if (i > 0) ok = ok && rows[i].params - rows[i - 1].params == 4 * layers;
        if (i > 0) ok = ok && rows[i].flops >= rows[i - 1].flops;
    }
    std::string csv = ablation_csv(rows);
    ok = ok && csv.rfind(kAblationHeader, 0) == 0 &&
         std::count(csv.begin(), csv.end(), '\n') == 6;
    return {ok, strf("5 rows, +%lld params per added term across %lld series layers",
                     (long long)(4 * layers), (long long)layers)};
}

// 8. Class-selectivity index endpoints and range.
Outcome check_selectivity(Ctx& ctx) {
    double single = csi_from_class_means({6.0, 0.0, 0.0, 0.0});
    double uniform = csi_from_class_means({2.5, 2.5, 2.5, 2.5});
    bool ok = std::abs(single - 1.0) < 1e-9 && uniform == 0.0;

    RngStream rng = derive_stream(17, "accept-csi");
    for (int i = 0; i < 200 && ok; ++i) {
        std::vector<double> means(4);
        for (double& m : means) m = rng.uniform(-2.0, 2.0);
        double v = csi_from_class_means(means);
        ok = v >= 0.0 && v <= 1.0;
    }

    RunConfig cfg = tiny_synthetic(ctx, "csi");
    TrainResult r = run_train(cfg);
    Dataset ds = load_dataset(cfg, "test");
    size_t filters = 0;
    for (const std::string& layer : activation_layer_names(r.graph)) {
        SelectivityReport rep = class_selectivity(r.graph, ds, layer, 50);
        for (double v : rep.csi) {
            ok = ok && v >= 0.0 && v <= 1.0;
            ++filters;
        }
    }
    return {ok, strf("single-class 1, uniform 0, %zu trained filters all within [0,1]", filters)};
}

// 9. Train-mode batch normalization standardizes each channel.
Outcome check_batchnorm(Ctx&) {
    RngStream rng = derive_stream(19, "accept-bn");
    BatchNormState bn = make_batchnorm(5, DType::F64);
    Tensor x = random_tensor({32, 5, 7, 7}, rng, DType::F64, -2.0, 5.0);
    Tensor y = batchnorm(x, bn, true, true);  // gamma=1, beta=0: pre-affine output

    double worst_mean = 0.0, worst_var = 0.0;
    int64_t per_channel = 32 * 7 * 7;
    for (int64_t c = 0; c < 5; ++c) {
        double sum = 0.0, sq = 0.0;
        for (int64_t n = 0; n < 32; ++n)
            for (int64_t i = 0; i < 49; ++i) {
                double v = y.value_at((n * 5 + c) * 49 + i);
                sum += v;
                sq += v * v;
            }
        double mean = sum / static_cast<double>(per_channel);
        double var = sq / static_cast<double>(per_channel) - mean * mean;
        worst_mean = std::max(worst_mean, std::abs(mean));
        worst_var = std::max(worst_var, std::abs(var - 1.0));
    }
    return {worst_mean < 1e-6 && worst_var < 1e-4,
            strf("batch 32: |mean| %.3g < 1e-6, |var-1| %.3g < 1e-4", worst_mean, worst_var)};
}

// 10. Two cmd_train invocations with one config produce identical bytes.
Outcome check_determinism(Ctx& ctx) {
    RunConfig cfg = tiny_synthetic(ctx, "det");
    cfg.epochs = 3;
    fs::path cfg_path = ctx.work / "det.json";
    std::ofstream(cfg_path) << config_to_json(cfg).dump(2);

    fs::path outs[2] = {ctx.work / "det-a", ctx.work / "det-b"};
    for (const fs::path& out : outs) {
        std::string cmd = std::string(LSLU_CLI_PATH) + " train --config " + cfg_path.string() +
                          " --out " + out.string() + " > /dev/null 2>&1";
        int rc = std::system(cmd.c_str());
        if (rc != 0) return {false, strf("cmd_train exited with status %d", rc)};
    }
    std::string ma = slurp(outs[0] / "metrics.csv"), mb = slurp(outs[1] / "metrics.csv");
    std::string ta = slurp(outs[0] / "trajectories.csv"), tb = slurp(outs[1] / "trajectories.csv");
    bool ok = !ma.empty() && ma == mb && !ta.empty() && ta == tb;
    return {ok, strf("metrics (%zu bytes) and trajectories (%zu bytes) bitwise identical",
                     ma.size(), ta.size())};
}

}  // namespace

int main() {
    Ctx ctx;
    ctx.work = fs::temp_directory_path() / "lslu-acceptance";
    fs::remove_all(ctx.work);
    fs::create_directories(ctx.work / "digits");
    ctx.digits = (ctx.work / "digits").string();
    testing::write_digit_fixture(ctx.digits, 2200, 1100, 42);

    struct Entry {
        int id;
        const char* name;
        double limit_s;  // 0 = no stated bound
        std::function<Outcome(Ctx&)> fn;
    };
    const Entry entries[] = {
        {1, "series equals base activation at initialization", 1.0, check_init_identity},
        {2, "gradient oracle on both architectures", 120.0, check_gradients},
        {3, "fusion equivalence", 30.0, check_fusion},
        {4, "theta folding", 0.0, check_theta_fold},
        {5, "desk-scale training efficacy", 300.0, check_training},
        {6, "trajectory phenomenology hooks", 0.0, check_trajectories},
        {7, "term-count ablation harness", 0.0, check_ablation},
        {8, "class-selectivity properties", 0.0, check_selectivity},
        {9, "train-mode batch normalization statistics", 0.0, check_batchnorm},
        {10, "byte-identical reruns", 0.0, check_determinism},
    };

    int failures = 0;
    for (const Entry& e : entries) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = e.fn(ctx);
        } catch (const std::exception& ex) {
            o = {false, strf("exception: %s", ex.what())};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        bool in_time = e.limit_s <= 0.0 || secs < e.limit_s;
        bool pass = o.pass && in_time;
        if (!pass) ++failures;
        std::printf("%s - criterion %2d: %s; %s%s (%.2fs)\n", pass ? "PASS" : "FAIL", e.id, e.name,
                    o.detail.c_str(), in_time ? "" : strf("; over %.0fs budget", e.limit_s).c_str(),
                    secs);
        std::fflush(stdout);
    }
    std::printf("%d/10 criteria passed\n", 10 - failures);
    fs::remove_all(ctx.work);
    return failures;
}
