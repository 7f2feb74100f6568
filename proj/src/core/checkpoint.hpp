#pragma once

#include <string>

#include "core/graph.hpp"

namespace lslu {

// Training state carried alongside the tensors.
struct CheckpointMeta {
    int64_t epoch = 0;
    nlohmann::json config = nlohmann::json::object();
    uint64_t config_hash = 0;
};

// Binary container: magic "LSLU", u32 version, u32 entry count, then per
// entry a u16 name length, the name bytes, a u8 dtype code (0 f32, 1 f64,
// 2 raw bytes), a u8 rank, u32 extents, and the values little-endian.
// Two raw-byte entries ride along: "__meta.graph" holds the structure JSON,
// "__meta.info" the CheckpointMeta. Saving the result of a load reproduces
// the file byte for byte.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Graph& g, const CheckpointMeta& meta);

struct LoadedCheckpoint {
    Graph graph;
    CheckpointMeta meta;
};

// Rebuilds the graph recorded in the file.
LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies tensors into an existing graph; every entry must match an existing
// tensor by name and shape, anything else is an error naming the tensor.
CheckpointMeta load_checkpoint_into(const std::string& path, Graph& g);

}  // namespace lslu
