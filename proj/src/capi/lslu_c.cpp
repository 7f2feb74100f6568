#include "lslu/lslu.h"

#include <cstring>
#include <map>
#include <string>

#include "core/runs.hpp"

using nlohmann::json;

struct lslu_config {
    lslu::RunConfig cfg;
};

struct lslu_result {
    json doc;
    std::string json_text;
    std::map<std::string, std::string> string_cache;
};

namespace {

thread_local std::string g_last_error;

lslu_status status_from(const lslu::Error& e) {
    using lslu::ErrorCode;
    switch (e.code()) {
        case ErrorCode::InvalidConfig:
        case ErrorCode::InvalidRate:
        case ErrorCode::InvalidDepth:
            return LSLU_BAD_CONFIG;
        case ErrorCode::FileMissing:
        case ErrorCode::Io:
            return LSLU_IO_ERROR;
        case ErrorCode::CorruptRecord:
        case ErrorCode::BadMagic:
        case ErrorCode::DimensionMismatch:
        case ErrorCode::VersionMismatch:
        case ErrorCode::Corrupt:
        case ErrorCode::LabelOutOfRange:
            return LSLU_BAD_DATA;
        case ErrorCode::Internal:
            return LSLU_INTERNAL_ERROR;
        default:
            return LSLU_NUMERIC_ERROR;
    }
}

template <class Fn>
lslu_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const lslu::Error& e) {
        g_last_error = e.what();
        return status_from(e);
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return LSLU_INTERNAL_ERROR;
    } catch (...) {
        g_last_error = "unknown failure";
        return LSLU_INTERNAL_ERROR;
    }
}

lslu_status bad_argument(const char* msg) {
    g_last_error = msg;
    return LSLU_BAD_ARGUMENT;
}

lslu_result* make_result(json doc) {
    auto* r = new lslu_result;
    r->doc = std::move(doc);
    r->json_text = r->doc.dump(2);
    return r;
}

json fusion_report_json(const lslu::FusionReport& report) {
    json rows = json::array();
    for (const lslu::FusionRow& row : report.rows)
        rows.push_back({{"transform", row.transform}, {"nodes", row.nodes}, {"detail", row.detail}});
    return json{{"rows", rows},
                {"probes", report.probes},
                {"max_abs_diff", report.max_abs_diff},
                {"argmax_preserved", report.argmax_preserved},
                {"csv", report.csv()}};
}

// Benchmarks and selectivity work on trained checkpoints; the stored
// running statistics make eval-mode forwards legal.
lslu::LoadedCheckpoint load_trained(const char* path) { return lslu::load_checkpoint(path); }

}  // namespace

extern "C" {

const char* lslu_version(void) { return "1.0.0"; }

const char* lslu_last_error(void) { return g_last_error.c_str(); }

lslu_status lslu_config_create(lslu_config** out) {
    if (!out) return bad_argument("out is null");
    *out = new lslu_config{};
    return LSLU_OK;
}

lslu_status lslu_config_load(const char* path, lslu_config** out) {
    if (!path || !out) return bad_argument("path and out must be non-null");
    return guarded([&] {
        *out = new lslu_config{lslu::load_config_file(path)};
        return LSLU_OK;
    });
}

lslu_status lslu_config_from_checkpoint(const char* checkpoint_path, lslu_config** out) {
    if (!checkpoint_path || !out) return bad_argument("checkpoint_path and out must be non-null");
    return guarded([&] {
        lslu::LoadedCheckpoint loaded = lslu::load_checkpoint(checkpoint_path);
        *out = new lslu_config{lslu::config_from_json(loaded.meta.config)};
        return LSLU_OK;
    });
}

lslu_status lslu_config_update_json(lslu_config* cfg, const char* json_object) {
    if (!cfg || !json_object) return bad_argument("cfg and json_object must be non-null");
    return guarded([&] {
        json merged = lslu::config_to_json(cfg->cfg);
        json patch;
        try {
            patch = json::parse(json_object);
        } catch (const json::exception& e) {
            throw lslu::Error(lslu::ErrorCode::InvalidConfig, e.what());
        }
        if (!patch.is_object())
            throw lslu::Error(lslu::ErrorCode::InvalidConfig, "override must be a JSON object");
        for (auto& [key, value] : patch.items()) merged[key] = value;
        cfg->cfg = lslu::config_from_json(merged);
        return LSLU_OK;
    });
}

lslu_status lslu_config_json(const lslu_config* cfg, lslu_result** out) {
    if (!cfg || !out) return bad_argument("cfg and out must be non-null");
    return guarded([&] {
        *out = make_result(lslu::config_to_json(cfg->cfg));
        return LSLU_OK;
    });
}

void lslu_config_free(lslu_config* cfg) { delete cfg; }

lslu_status lslu_train(const lslu_config* cfg, lslu_result** out) {
    if (!cfg || !out) return bad_argument("cfg and out must be non-null");
    return guarded([&] {
        lslu::TrainResult r = lslu::run_train(cfg->cfg);
        json epochs = json::array();
        for (const lslu::EpochMetrics& m : r.metrics)
            epochs.push_back({{"epoch", m.epoch},
                              {"train_loss", m.train_loss},
                              {"val_acc", m.val_acc},
                              {"lr", m.lr}});
        *out = make_result(json{{"run_id", cfg->cfg.run_id},
                                {"epochs_run", r.epochs_run},
                                {"stopped_early", r.stopped_early},
                                {"final_val_acc", r.final_val_acc},
                                {"checkpoint_path", r.checkpoint_path},
                                {"metrics_path", r.metrics_path},
                                {"trajectory_path", r.trajectory_path},
                                {"metrics", epochs}});
        return LSLU_OK;
    });
}

lslu_status lslu_evaluate(const lslu_config* cfg, const char* checkpoint_path, const char* split,
                          lslu_result** out) {
    if (!cfg || !checkpoint_path || !out)
        return bad_argument("cfg, checkpoint_path and out must be non-null");
    return guarded([&] {
        lslu::LoadedCheckpoint loaded = load_trained(checkpoint_path);
        lslu::Dataset ds = lslu::load_dataset(cfg->cfg, split ? split : "test");
        lslu::EvalReport report =
            lslu::evaluate_dataset(loaded.graph, ds, cfg->cfg.loss, cfg->cfg.batch);
        *out = make_result(json{{"loss", report.loss},
                                {"top1", report.top1},
                                {"per_class_acc", report.per_class_acc},
                                {"per_class_count", report.per_class_count},
                                {"samples", ds.size()}});
        return LSLU_OK;
    });
}

lslu_status lslu_fuse(const char* checkpoint_in, const char* checkpoint_out, long long probes,
                      lslu_result** out) {
    if (!checkpoint_in || !checkpoint_out || !out)
        return bad_argument("checkpoint paths and out must be non-null");
    if (probes < 1) return bad_argument("probes must be >= 1");
    return guarded([&] {
        lslu::FuseCmdResult r = lslu::run_fuse(checkpoint_in, checkpoint_out, probes);
        json doc = fusion_report_json(r.report);
        doc["out_path"] = r.out_path;
        doc["tolerance"] = r.tolerance;
        doc["within_tolerance"] = r.within_tolerance;
        *out = make_result(std::move(doc));
        return r.within_tolerance ? LSLU_OK : LSLU_TOLERANCE_EXCEEDED;
    });
}

lslu_status lslu_grad_check(const lslu_config* cfg, int samples_per_group, double step,
                            double tolerance, const char* corrupt_group, lslu_result** out) {
    if (!cfg || !out) return bad_argument("cfg and out must be non-null");
    return guarded([&] {
        lslu::GradcheckReport report = lslu::run_gradcheck(
            cfg->cfg, samples_per_group, step, tolerance, corrupt_group ? corrupt_group : "");
        json rows = json::array();
        for (const lslu::GradcheckRow& row : report.rows)
            rows.push_back(
                {{"group", row.group}, {"max_rel_err", row.max_rel_err}, {"pass", row.pass}});
        *out = make_result(json{{"all_pass", report.all_pass}, {"rows", rows}});
        return report.all_pass ? LSLU_OK : LSLU_TOLERANCE_EXCEEDED;
    });
}

lslu_status lslu_ablate(const lslu_config* cfg, const int* n_values, int count, lslu_result** out) {
    if (!cfg || !n_values || !out) return bad_argument("cfg, n_values and out must be non-null");
    if (count < 1) return bad_argument("count must be >= 1");
    return guarded([&] {
        std::vector<int> ns(n_values, n_values + count);
        std::vector<lslu::AblationRow> rows = lslu::run_ablate(cfg->cfg, ns);
        json jrows = json::array();
        for (const lslu::AblationRow& r : rows)
            jrows.push_back({{"n", r.n},
                             {"params", r.params},
                             {"flops", r.flops},
                             {"acc", r.acc},
                             {"latency_ms", r.latency_ms}});
        *out = make_result(json{{"rows", jrows}, {"csv", lslu::ablation_csv(rows)}});
        return LSLU_OK;
    });
}

lslu_status lslu_benchmark(const char* checkpoint_path, int fuse_first, long long batch,
                           long long iters, long long warmup, lslu_result** out) {
    if (!checkpoint_path || !out) return bad_argument("checkpoint_path and out must be non-null");
    return guarded([&] {
        lslu::LoadedCheckpoint loaded = load_trained(checkpoint_path);
        lslu::Graph* subject = &loaded.graph;
        lslu::FusedNetwork fused;
        if (fuse_first) {
            fused = lslu::fuse_network(loaded.graph, 8, 0);
            subject = &fused.graph;
        }
        lslu::LatencyStats stats = lslu::latency_bench(*subject, batch, iters, warmup);
        *out = make_result(json{{"variant", fuse_first ? "fused" : "unfused"},
                                {"mean_ms", stats.mean_ms},
                                {"std_ms", stats.std_ms},
                                {"iters", stats.iters},
                                {"batch", batch}});
        return LSLU_OK;
    });
}

lslu_status lslu_class_selectivity(const lslu_config* cfg, const char* checkpoint_path,
                                   const char* layer, lslu_result** out) {
    if (!cfg || !checkpoint_path || !out)
        return bad_argument("cfg, checkpoint_path and out must be non-null");
    return guarded([&] {
        lslu::LoadedCheckpoint loaded = load_trained(checkpoint_path);
        lslu::Dataset ds = lslu::load_dataset(cfg->cfg, "test");
        std::vector<std::string> layers;
        if (!layer || std::strcmp(layer, "all") == 0)
            layers = lslu::activation_layer_names(loaded.graph);
        else
            layers.push_back(layer);
        json reports = json::array();
        std::string csv;
        for (const std::string& name : layers) {
            lslu::SelectivityReport report =
                lslu::class_selectivity(loaded.graph, ds, name, cfg->cfg.batch);
            reports.push_back(
                {{"layer", report.layer}, {"csi", report.csi}, {"histogram", report.histogram}});
            csv += lslu::selectivity_csv(report);
        }
        *out = make_result(json{{"reports", reports}, {"csv", csv}});
        return LSLU_OK;
    });
}

lslu_status lslu_series_apply(const char* base, double leaky_slope, int terms, const double* theta,
                              const double* omega, const double* alpha, const double* shift,
                              const double* x, double* y, long long count) {
    if (!base || !x || !y) return bad_argument("base, x and y must be non-null");
    if (count < 0) return bad_argument("count must be >= 0");
    if (terms < 0) return bad_argument("terms must be >= 0");
    if (terms > 0 && (!theta || !omega || !alpha || !shift))
        return bad_argument("terms > 0 needs theta, omega, alpha and shift");
    return guarded([&] {
        lslu::BaseActKind kind = lslu::base_act_from_string(base);
        if (terms == 0) {
            for (long long i = 0; i < count; ++i)
                y[i] = lslu::base_act_value(kind, x[i], leaky_slope);
            return LSLU_OK;
        }
        lslu::SeriesActivationParams params =
            lslu::init_series(terms, kind, lslu::DType::F64, leaky_slope);
        for (int n = 0; n < terms; ++n) {
            params.theta.set_value_at(n, theta[n]);
            params.omega.set_value_at(n, omega[n]);
            params.alpha.set_value_at(n, alpha[n]);
            params.shift.set_value_at(n, shift[n]);
        }
        lslu::Tensor in = lslu::Tensor::from({count}, std::span<const double>(x, static_cast<size_t>(count)),
                                             lslu::DType::F64);
        lslu::Tensor result = lslu::series_forward(in, params);
        for (long long i = 0; i < count; ++i) y[i] = result.value_at(i);
        return LSLU_OK;
    });
}

const char* lslu_result_json(const lslu_result* result) {
    return result ? result->json_text.c_str() : "";
}

lslu_status lslu_result_number(const lslu_result* result, const char* key, double* out) {
    if (!result || !key || !out) return bad_argument("result, key and out must be non-null");
    auto it = result->doc.find(key);
    if (it == result->doc.end()) return bad_argument("no such key");
    if (it->is_boolean()) {
        *out = it->get<bool>() ? 1.0 : 0.0;
        return LSLU_OK;
    }
    if (!it->is_number()) return bad_argument("value is not numeric");
    *out = it->get<double>();
    return LSLU_OK;
}

lslu_status lslu_result_string(const lslu_result* result, const char* key, const char** out) {
    if (!result || !key || !out) return bad_argument("result, key and out must be non-null");
    auto it = result->doc.find(key);
    if (it == result->doc.end()) return bad_argument("no such key");
    if (!it->is_string()) return bad_argument("value is not a string");
    auto* mutable_result = const_cast<lslu_result*>(result);
    mutable_result->string_cache[key] = it->get<std::string>();
    *out = mutable_result->string_cache[key].c_str();
    return LSLU_OK;
}

void lslu_result_free(lslu_result* result) { delete result; }

}  // extern "C"
