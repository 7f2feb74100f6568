#include "core/config.hpp"

#include <fstream>

namespace lslu {

using nlohmann::json;

namespace {

template <class T>
void take(const json& j, const char* key, T& into) {
    if (!j.contains(key)) return;
    try {
        into = j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidConfig, "config key '", key, "': ", e.what());
    }
}

constexpr const char* kKnownKeys[] = {
    "run_id", "arch", "depth", "stages", "blocks_per_stage", "width", "n", "base", "leaky_slope",
    "insertion", "blend", "dropout", "epochs", "batch", "lr", "lr_min", "schedule", "optimizer",
    "momentum", "patience", "seed", "dtype", "dataset", "data_dir", "train_limit", "val_limit",
    "synthetic_classes", "synthetic_per_class", "synthetic_hw", "synthetic_channels",
    "synthetic_noise", "loss", "out_dir"};

}  // namespace

RunConfig config_from_json(const json& j) {
    check(j.is_object(), ErrorCode::InvalidConfig, "config root must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* k : kKnownKeys) known |= key == k;
        check(known, ErrorCode::InvalidConfig, "unknown config key '", key, "'");
    }
    RunConfig cfg;
    take(j, "run_id", cfg.run_id);
    take(j, "arch", cfg.arch);
    take(j, "depth", cfg.depth);
    take(j, "stages", cfg.stages);
    take(j, "blocks_per_stage", cfg.blocks_per_stage);
    take(j, "width", cfg.width);
    take(j, "n", cfg.n);
    take(j, "base", cfg.base);
    take(j, "leaky_slope", cfg.leaky_slope);
    take(j, "insertion", cfg.insertion);
    take(j, "blend", cfg.blend);
    take(j, "dropout", cfg.dropout);
    take(j, "epochs", cfg.epochs);
    take(j, "batch", cfg.batch);
    take(j, "lr", cfg.lr);
    take(j, "lr_min", cfg.lr_min);
    take(j, "schedule", cfg.schedule);
    take(j, "optimizer", cfg.optimizer);
    take(j, "momentum", cfg.momentum);
    take(j, "patience", cfg.patience);
    take(j, "seed", cfg.seed);
    take(j, "dtype", cfg.dtype);
    take(j, "dataset", cfg.dataset);
    take(j, "data_dir", cfg.data_dir);
    take(j, "train_limit", cfg.train_limit);
    take(j, "val_limit", cfg.val_limit);
    take(j, "synthetic_classes", cfg.synthetic_classes);
    take(j, "synthetic_per_class", cfg.synthetic_per_class);
    take(j, "synthetic_hw", cfg.synthetic_hw);
    take(j, "synthetic_channels", cfg.synthetic_channels);
    take(j, "synthetic_noise", cfg.synthetic_noise);
    take(j, "loss", cfg.loss);
    take(j, "out_dir", cfg.out_dir);
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), ErrorCode::FileMissing, "cannot open ", path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidConfig, path, ": ", e.what());
    }
    return config_from_json(j);
}

json config_to_json(const RunConfig& cfg) {
    return {{"run_id", cfg.run_id},
            {"arch", cfg.arch},
            {"depth", cfg.depth},
            {"stages", cfg.stages},
            {"blocks_per_stage", cfg.blocks_per_stage},
            {"width", cfg.width},
            {"n", cfg.n},
            {"base", cfg.base},
            {"leaky_slope", cfg.leaky_slope},
            {"insertion", cfg.insertion},
            {"blend", cfg.blend},
            {"dropout", cfg.dropout},
            {"epochs", cfg.epochs},
            {"batch", cfg.batch},
            {"lr", cfg.lr},
            {"lr_min", cfg.lr_min},
            {"schedule", cfg.schedule},
            {"optimizer", cfg.optimizer},
            {"momentum", cfg.momentum},
            {"patience", cfg.patience},
            {"seed", cfg.seed},
            {"dtype", cfg.dtype},
            {"dataset", cfg.dataset},
            {"data_dir", cfg.data_dir},
            {"train_limit", cfg.train_limit},
            {"val_limit", cfg.val_limit},
            {"synthetic_classes", cfg.synthetic_classes},
            {"synthetic_per_class", cfg.synthetic_per_class},
            {"synthetic_hw", cfg.synthetic_hw},
            {"synthetic_channels", cfg.synthetic_channels},
            {"synthetic_noise", cfg.synthetic_noise},
            {"loss", cfg.loss},
            {"out_dir", cfg.out_dir}};
}

uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(config_to_json(cfg).dump()); }

void validate_config(const RunConfig& cfg) {
    check(cfg.arch == "mini-vanillanet" || cfg.arch == "mini-resnet", ErrorCode::InvalidConfig,
          "arch '", cfg.arch, "'");
    base_act_from_string(cfg.base);  // throws on unknown names
    check(cfg.insertion == "full" || cfg.insertion == "downsampling", ErrorCode::InvalidConfig,
          "insertion '", cfg.insertion, "'");
    check(cfg.n >= 0, ErrorCode::InvalidConfig, "n must be >= 0");
    check(cfg.epochs >= 1, ErrorCode::InvalidConfig, "epochs must be >= 1");
    check(cfg.batch >= 1, ErrorCode::InvalidConfig, "batch must be >= 1");
    check(cfg.lr > 0.0, ErrorCode::InvalidConfig, "lr must be > 0");
    check(cfg.lr_min >= 0.0 && cfg.lr_min <= cfg.lr, ErrorCode::InvalidConfig,
          "lr_min must sit in [0, lr]");
    check(cfg.dropout >= 0.0 && cfg.dropout < 1.0, ErrorCode::InvalidRate, "dropout ", cfg.dropout,
          " outside [0,1)");
    check(cfg.schedule == "cosine" || cfg.schedule == "constant", ErrorCode::InvalidConfig,
          "schedule '", cfg.schedule, "'");
    check(cfg.optimizer == "adam" || cfg.optimizer == "sgd", ErrorCode::InvalidConfig, "optimizer '",
          cfg.optimizer, "'");
    check(cfg.patience >= 0, ErrorCode::InvalidConfig, "patience must be >= 0");
    check(cfg.dtype == "f32" || cfg.dtype == "f64", ErrorCode::InvalidConfig, "dtype '", cfg.dtype, "'");
    check(cfg.dataset == "cifar10" || cfg.dataset == "mnist" || cfg.dataset == "folder" ||
              cfg.dataset == "synthetic",
          ErrorCode::InvalidConfig, "dataset '", cfg.dataset, "'");
    check(cfg.loss == "ce" || cfg.loss == "bce", ErrorCode::InvalidConfig, "loss '", cfg.loss, "'");
    check(!cfg.out_dir.empty(), ErrorCode::InvalidConfig, "out_dir must be set");
    check(cfg.dataset == "synthetic" || !cfg.data_dir.empty(), ErrorCode::InvalidConfig,
          "dataset '", cfg.dataset, "' needs data_dir");
}

DType config_dtype(const RunConfig& cfg) { return cfg.dtype == "f64" ? DType::F64 : DType::F32; }

NetworkSpec network_spec(const RunConfig& cfg) {
    NetworkSpec spec;
    spec.arch = cfg.arch;
    spec.depth = cfg.depth;
    spec.stages = cfg.stages;
    spec.blocks_per_stage = cfg.blocks_per_stage;
    spec.width = cfg.width;
    spec.terms = cfg.n;
    spec.base = base_act_from_string(cfg.base);
    spec.leaky_slope = cfg.leaky_slope;
    spec.downsampling_only = cfg.insertion == "downsampling";
    spec.blend_stages = cfg.blend;
    spec.dropout = cfg.dropout;
    spec.dtype = config_dtype(cfg);
    spec.seed = cfg.seed;
    // input extents come from the dataset at run time
    return spec;
}

}  // namespace lslu
