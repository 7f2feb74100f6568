#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace lslu {

struct Dataset {
    Tensor images;  // [N,C,H,W] float32 in [0,1]
    std::vector<int32_t> labels;
    int64_t classes = 0;
    std::string split;

    int64_t size() const { return images.defined() ? images.dim(0) : 0; }
};

// Standard binary batches: 3073-byte records, label byte then 3072 CHW pixels.
Dataset load_cifar10(const std::string& dir, const std::string& split);

// IDX pair (images magic 0x803, labels 0x801), big-endian header fields.
Dataset load_mnist_idx(const std::string& dir, const std::string& split);

// Class-per-subdirectory tree of binary PPM (P6) / PGM (P5) files.
Dataset load_image_folder(const std::string& dir);

// Per-class random template plus Gaussian pixel noise; same seed gives a
// bitwise-identical dataset, templates are shared across splits.
struct SyntheticSpec {
    int64_t classes = 4;
    int64_t per_class = 64;
    int64_t channels = 1;
    int64_t hw = 16;
    double noise = 0.05;
    uint64_t seed = 0;
    std::string split = "train";
};

Dataset synthetic_blobs(const SyntheticSpec& spec);

Dataset take_subset(const Dataset& ds, int64_t limit);  // first `limit` samples

struct Batch {
    Tensor images;  // [Q,C,H,W], dataset dtype
    std::vector<int32_t> labels;
};

// Sequential slice [start, start+count) for evaluation passes.
Batch take_batch(const Dataset& ds, int64_t start, int64_t count);

// One epoch's deterministic shuffled traversal; the last short batch is kept.
class Batcher {
  public:
    Batcher(const Dataset& ds, int64_t batch_size, RngStream shuffle);
    bool next(Batch& out);

  private:
    const Dataset& ds_;
    int64_t batch_size_;
    std::vector<int64_t> order_;
    size_t cursor_ = 0;
};

struct ChannelStats {
    std::vector<double> mean, stddev;
};

ChannelStats compute_channel_stats(const Dataset& ds);

// (x - mean) / std per channel, in the requested dtype. Empty stats skip
// the standardization and only convert the dtype.
Tensor normalize_images(const Tensor& images, const std::vector<double>& mean,
                        const std::vector<double>& stddev, DType dt);

}  // namespace lslu
