#pragma once

#include <string>

#include "json.hpp"

#include "core/networks.hpp"

namespace lslu {

// Flat key-value run description; the JSON config file and the CLI flags
// both map onto this. Unknown keys in a file are rejected.
struct RunConfig {
    std::string run_id = "run";
    std::string arch = "mini-vanillanet";  // mini-vanillanet | mini-resnet
    int depth = 5;                         // vanillanet depth
    int stages = 2;                        // resnet stages
    int blocks_per_stage = 1;
    int width = 16;
    int n = 3;                 // series terms, 0 = plain base activation
    std::string base = "relu"; // relu | leakyrelu | gelu | silu
    double leaky_slope = 0.01;
    std::string insertion = "full";  // full | downsampling
    bool blend = false;              // vanillanet blended-activation stages
    double dropout = 0.0;
    int epochs = 10;
    int batch = 128;
    double lr = 1e-3;
    double lr_min = 0.0;
    std::string schedule = "cosine";   // cosine | constant
    std::string optimizer = "adam";    // adam | sgd
    double momentum = 0.9;             // sgd only
    int patience = 0;                  // early stopping; 0 disables
    uint64_t seed = 0;
    std::string dtype = "f32";         // f32 | f64
    std::string dataset = "synthetic"; // cifar10 | mnist | folder | synthetic
    std::string data_dir;
    int64_t train_limit = 0;  // keep first k samples; 0 keeps all
    int64_t val_limit = 0;
    int64_t synthetic_classes = 4;
    int64_t synthetic_per_class = 64;
    int64_t synthetic_hw = 16;
    int64_t synthetic_channels = 1;
    double synthetic_noise = 0.05;
    std::string loss = "ce";  // ce | bce
    std::string out_dir = "out";
};

// Rejects unknown keys; absent keys keep their defaults.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config_file(const std::string& path);

// Canonical form: every field present, keys sorted by the json library.
nlohmann::json config_to_json(const RunConfig& cfg);

// FNV-1a over the canonical serialization; stored in checkpoints.
uint64_t config_hash(const RunConfig& cfg);

void validate_config(const RunConfig& cfg);

DType config_dtype(const RunConfig& cfg);
NetworkSpec network_spec(const RunConfig& cfg);

}  // namespace lslu
