#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lslu/lslu.h"

namespace {

// Collects the shared config flags of a subcommand and turns the ones the
// user actually passed into a JSON override object. Flag values always win
// over the config file.
class ConfigArgs {
public:
    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path_, "JSON config file");
        add<std::string>(cmd, "--out", "out_dir", "output directory");
        add<std::string>(cmd, "--run-id", "run_id", "run identifier used in logs");
        add<uint64_t>(cmd, "--seed", "seed", "master seed");
        add<std::string>(cmd, "--dtype", "dtype", "f32 or f64");
        add<std::string>(cmd, "--dataset", "dataset", "cifar10, mnist, folder or synthetic");
        add<std::string>(cmd, "--data-dir", "data_dir", "dataset directory for file datasets");
        add<std::string>(cmd, "--arch", "arch", "mini-vanillanet or mini-resnet");
        add<int>(cmd, "--n", "n", "series terms per activation, 0 keeps the base");
        add<std::string>(cmd, "--base", "base", "relu, leakyrelu, gelu or silu");
        add<std::string>(cmd, "--insertion", "insertion", "full or downsampling");
        add<double>(cmd, "--dropout", "dropout", "dropout rate");
        add<int>(cmd, "--epochs", "epochs", "training epochs");
        add<int>(cmd, "--batch", "batch", "batch size");
        add<double>(cmd, "--lr", "lr", "peak learning rate");
        add<int>(cmd, "--patience", "patience", "early-stopping patience, 0 disables");
    }

    // nullptr on failure, with the error already printed. When no config
    // file was named, a nonempty checkpoint_fallback supplies the settings
    // the checkpoint was trained with, so eval-style commands see the same
    // dataset by default.
    lslu_config* build(const std::string& checkpoint_fallback = "") const {
        lslu_config* cfg = nullptr;
        lslu_status st;
        if (!config_path_.empty())
            st = lslu_config_load(config_path_.c_str(), &cfg);
        else if (!checkpoint_fallback.empty())
            st = lslu_config_from_checkpoint(checkpoint_fallback.c_str(), &cfg);
        else
            st = lslu_config_create(&cfg);
        if (st != LSLU_OK) {
            std::fprintf(stderr, "error: %s\n", lslu_last_error());
            return nullptr;
        }
        nlohmann::json overrides = nlohmann::json::object();
        for (const auto& fill : fills_) fill(overrides);
        if (!overrides.empty() &&
            lslu_config_update_json(cfg, overrides.dump().c_str()) != LSLU_OK) {
            std::fprintf(stderr, "error: %s\n", lslu_last_error());
            lslu_config_free(cfg);
            return nullptr;
        }
        return cfg;
    }

private:
    template <class T>
    void add(CLI::App* cmd, const char* flag, const char* key, const char* help) {
        auto value = std::make_shared<T>();
        CLI::Option* opt = cmd->add_option(flag, *value, help);
        fills_.push_back([opt, key, value](nlohmann::json& j) {
            if (opt->count()) j[key] = *value;
        });
    }

    std::string config_path_;
    std::vector<std::function<void(nlohmann::json&)>> fills_;
};

struct OwnedResult {
    lslu_result* ptr = nullptr;
    ~OwnedResult() { lslu_result_free(ptr); }
};

int report(lslu_status st, const lslu_result* result, bool print_json = true) {
    if (result && print_json) std::printf("%s\n", lslu_result_json(result));
    if (st == LSLU_TOLERANCE_EXCEEDED)
        std::fprintf(stderr, "error: hard tolerance not met\n");
    else if (st != LSLU_OK)
        std::fprintf(stderr, "error: %s\n", lslu_last_error());
    return st == LSLU_OK ? 0 : 1;
}

int print_csv_field(lslu_status st, const lslu_result* result) {
    if (st == LSLU_OK && result) {
        const char* csv = nullptr;
        if (lslu_result_string(result, "csv", &csv) == LSLU_OK) std::printf("%s", csv);
    }
    return report(st, nullptr);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LSLU learnable-series activation toolkit"};
    app.require_subcommand(1);

    ConfigArgs train_args;
    CLI::App* train = app.add_subcommand("train", "train a network and write its artifacts");
    train_args.attach(train);

    ConfigArgs eval_args;
    std::string eval_checkpoint, eval_split = "test";
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    eval_args.attach(eval);
    eval->add_option("--checkpoint", eval_checkpoint, "trained checkpoint")->required();
    eval->add_option("--split", eval_split, "train or test");

    std::string fuse_in, fuse_out;
    long long fuse_probes = 100;
    CLI::App* fuse = app.add_subcommand("fuse", "fuse a checkpoint for inference and verify it");
    fuse->add_option("--in", fuse_in, "checkpoint to fuse")->required();
    fuse->add_option("--out", fuse_out, "where the fused checkpoint goes")->required();
    fuse->add_option("--probes", fuse_probes, "probe batch size for the equivalence check");

    ConfigArgs grad_args;
    int grad_samples = 5;
    double grad_step = 1e-5, grad_tolerance = 1e-4;
    std::string grad_corrupt;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
    grad_args.attach(gradcheck);
    gradcheck->add_option("--samples", grad_samples, "probes per parameter group");
    gradcheck->add_option("--step", grad_step, "finite-difference step");
    gradcheck->add_option("--tolerance", grad_tolerance, "max relative error per group");
    gradcheck->add_option("--corrupt-group", grad_corrupt,
                          "perturb one group's analytic gradients (test fixture)");

    ConfigArgs ablate_args;
    std::vector<int> ablate_ns = {0, 1, 2, 3, 4};
    CLI::App* ablate = app.add_subcommand("ablate", "train once per term count and tabulate");
    ablate_args.attach(ablate);
    ablate->add_option("--n-values", ablate_ns, "term counts to sweep");

    std::string bench_checkpoint;
    long long bench_batch = 1, bench_iters = 50, bench_warmup = 5;
    bool bench_fused = false, bench_unfused = false;
    CLI::App* bench = app.add_subcommand("bench", "latency statistics for a checkpoint");
    bench->add_option("--checkpoint", bench_checkpoint, "trained checkpoint")->required();
    bench->add_option("--batch", bench_batch, "inference batch size");
    bench->add_option("--iters", bench_iters, "timed iterations");
    bench->add_option("--warmup", bench_warmup, "untimed warmup iterations");
    bench->add_flag("--fused", bench_fused, "time the fused network");
    bench->add_flag("--unfused", bench_unfused, "time the stored network");

    ConfigArgs sel_args;
    std::string sel_checkpoint, sel_layer = "all";
    CLI::App* selectivity =
        app.add_subcommand("selectivity", "class-selectivity distribution per activation layer");
    sel_args.attach(selectivity);
    selectivity->add_option("--checkpoint", sel_checkpoint, "trained checkpoint")->required();
    selectivity->add_option("--layer", sel_layer, "activation layer name, or all");

    CLI11_PARSE(app, argc, argv);

    if (train->parsed()) {
        lslu_config* cfg = train_args.build();
        if (!cfg) return 1;
        OwnedResult result;
        lslu_status st = lslu_train(cfg, &result.ptr);
        lslu_config_free(cfg);
        return report(st, result.ptr);
    }

    if (eval->parsed()) {
        lslu_config* cfg = eval_args.build(eval_checkpoint);
        if (!cfg) return 1;
        OwnedResult result;
        lslu_status st =
            lslu_evaluate(cfg, eval_checkpoint.c_str(), eval_split.c_str(), &result.ptr);
        lslu_config_free(cfg);
        return report(st, result.ptr);
    }

    if (fuse->parsed()) {
        OwnedResult result;
        lslu_status st = lslu_fuse(fuse_in.c_str(), fuse_out.c_str(), fuse_probes, &result.ptr);
        return report(st, result.ptr);
    }

    if (gradcheck->parsed()) {
        lslu_config* cfg = grad_args.build();
        if (!cfg) return 1;
        OwnedResult result;
        lslu_status st = lslu_grad_check(cfg, grad_samples, grad_step, grad_tolerance,
                                         grad_corrupt.empty() ? nullptr : grad_corrupt.c_str(),
                                         &result.ptr);
        lslu_config_free(cfg);
        return report(st, result.ptr);
    }

    if (ablate->parsed()) {
        lslu_config* cfg = ablate_args.build();
        if (!cfg) return 1;
        OwnedResult result;
        lslu_status st = lslu_ablate(cfg, ablate_ns.data(), static_cast<int>(ablate_ns.size()),
                                     &result.ptr);
        lslu_config_free(cfg);
        return print_csv_field(st, result.ptr);
    }

    if (bench->parsed()) {
        if (!bench_fused && !bench_unfused) bench_fused = bench_unfused = true;  // paired timings
        std::printf("variant,mean_ms,std_ms,iters,batch\n");
        for (int fused_pass : {0, 1}) {
            if ((fused_pass ? bench_fused : bench_unfused) == false) continue;
            OwnedResult result;
            lslu_status st = lslu_benchmark(bench_checkpoint.c_str(), fused_pass, bench_batch,
                                            bench_iters, bench_warmup, &result.ptr);
            if (st != LSLU_OK) return report(st, nullptr);
            const char* variant = nullptr;
            double mean_ms = 0, std_ms = 0, iters = 0;
            lslu_result_string(result.ptr, "variant", &variant);
            lslu_result_number(result.ptr, "mean_ms", &mean_ms);
            lslu_result_number(result.ptr, "std_ms", &std_ms);
            lslu_result_number(result.ptr, "iters", &iters);
            std::printf("%s,%g,%g,%lld,%lld\n", variant, mean_ms, std_ms,
                        static_cast<long long>(iters), bench_batch);
        }
        return 0;
    }

    if (selectivity->parsed()) {
        lslu_config* cfg = sel_args.build(sel_checkpoint);
        if (!cfg) return 1;
        OwnedResult result;
        lslu_status st = lslu_class_selectivity(
            cfg, sel_checkpoint.c_str(), sel_layer.empty() ? nullptr : sel_layer.c_str(),
            &result.ptr);
        lslu_config_free(cfg);
        return print_csv_field(st, result.ptr);
    }

    return 1;
}
