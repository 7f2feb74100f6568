#pragma once

#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "core/nn.hpp"
#include "core/series_activation.hpp"

namespace lslu {

enum class ActMode { Base, Series, Blended };

struct ActNode {
    ActMode mode = ActMode::Base;
    BaseActKind base = BaseActKind::ReLU;
    double leaky_slope = 0.01;
    double lambda = 0.0;  // Blended only; the trainer advances it per epoch
    SeriesActivationParams series;
};

struct ConvNode {
    ConvLayer layer;
};

struct BatchNormNode {
    BatchNormState state;
};

struct PoolNode {
    bool is_max = true;
    int k = 2, stride = 2;
    bool skip_if_small = false;  // pass through once the map is below the window
};

struct LinearNode {
    LinearLayer layer;
};

struct DropoutNode {
    double p = 0.0;
    int stream_index = 0;
};

struct FlattenNode {};
struct GlobalAvgPoolNode {};

// Marks the start of a skip connection; the matching ResidualEnd adds the
// saved value back. Stride-2 blocks project the skip with a 1x1 conv + BN.
struct ResidualBeginNode {
    bool has_projection = false;
    ConvLayer proj;
    BatchNormState proj_bn;
    bool proj_bn_fused = false;  // set once fusion folds proj_bn into proj
};

struct ResidualEndNode {};

using NodePayload = std::variant<ConvNode, BatchNormNode, ActNode, PoolNode, LinearNode, DropoutNode,
                                 FlattenNode, GlobalAvgPoolNode, ResidualBeginNode, ResidualEndNode>;

struct Node {
    std::string name;
    NodePayload payload;
};

struct NamedParam {
    std::string name;
    Tensor tensor;
};

struct ForwardCtx {
    bool train = false;
    bool update_bn_stats = false;
    bool dropout_enabled = true;
    // Invoked with each node's output; analysis taps activations through this.
    std::function<void(const std::string& node_name, const Tensor& out)> capture;
};

struct Graph {
    std::string arch;
    DType dtype = DType::F32;
    int64_t input_channels = 0, input_hw = 0, classes = 0;
    std::vector<double> norm_mean, norm_std;  // train-split stats; empty until computed
    std::vector<Node> nodes;
    std::vector<RngStream> dropout_streams;

    Tensor forward(const Tensor& x, const ForwardCtx& ctx);

    std::vector<NamedParam> parameters();      // trainable tensors only
    std::vector<NamedParam> state_tensors();   // parameters plus BN running stats

    nlohmann::json structure() const;
    static Graph from_structure(const nlohmann::json& j);

    Graph clone() const;  // deep copy, values included
    void seed_dropout(uint64_t master_seed);
};

// Convenience counts used by builders and reports.
size_t count_nodes_of_kind(const Graph& g, const char* kind);
std::string node_kind_name(const NodePayload& payload);

}  // namespace lslu
