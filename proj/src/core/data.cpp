#include "core/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace lslu {

namespace fs = std::filesystem;

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), ErrorCode::FileMissing, "cannot open ", path);
    in.seekg(0, std::ios::end);
    std::vector<uint8_t> bytes(static_cast<size_t>(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    check(in.good() || bytes.empty(), ErrorCode::Io, "short read on ", path);
    return bytes;
}

uint32_t read_be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

}  // namespace

Dataset load_cifar10(const std::string& dir, const std::string& split) {
    check(split == "train" || split == "test", ErrorCode::InvalidConfig, "split must be train or test");
    std::vector<std::string> files;
    if (split == "train")
        for (int i = 1; i <= 5; ++i) files.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
    else
        files.push_back(dir + "/test_batch.bin");

    constexpr size_t kRecord = 3073;  // label + 3*32*32
    std::vector<uint8_t> all;
    for (const std::string& f : files) {
        std::vector<uint8_t> bytes = read_file(f);
        check(!bytes.empty() && bytes.size() % kRecord == 0, ErrorCode::CorruptRecord, f, " holds ",
              bytes.size(), " bytes, not a multiple of ", kRecord);
        all.insert(all.end(), bytes.begin(), bytes.end());
    }
    int64_t n = static_cast<int64_t>(all.size() / kRecord);
    Dataset ds;
    ds.classes = 10;
    ds.split = split;
    ds.images = Tensor::zeros({n, 3, 32, 32}, DType::F32);
    ds.labels.resize(static_cast<size_t>(n));
    auto img = ds.images.data<float>();
    for (int64_t i = 0; i < n; ++i) {
        const uint8_t* rec = all.data() + static_cast<size_t>(i) * kRecord;
        check(rec[0] < 10, ErrorCode::CorruptRecord, "label byte ", int(rec[0]), " out of range");
        ds.labels[static_cast<size_t>(i)] = rec[0];
        for (int64_t p = 0; p < 3072; ++p)
            img[i * 3072 + p] = static_cast<float>(rec[1 + p]) / 255.0f;
    }
    return ds;
}

Dataset load_mnist_idx(const std::string& dir, const std::string& split) {
    check(split == "train" || split == "test", ErrorCode::InvalidConfig, "split must be train or test");
    std::string stem = split == "train" ? "train" : "t10k";
    std::vector<uint8_t> img_bytes = read_file(dir + "/" + stem + "-images-idx3-ubyte");
    std::vector<uint8_t> lab_bytes = read_file(dir + "/" + stem + "-labels-idx1-ubyte");

    check(img_bytes.size() >= 16, ErrorCode::Corrupt, "image file too short");
    check(lab_bytes.size() >= 8, ErrorCode::Corrupt, "label file too short");
    check(read_be32(img_bytes.data()) == 0x803u, ErrorCode::BadMagic, "image magic ",
          read_be32(img_bytes.data()), " is not 2051");
    check(read_be32(lab_bytes.data()) == 0x801u, ErrorCode::BadMagic, "label magic ",
          read_be32(lab_bytes.data()), " is not 2049");

    int64_t n = read_be32(img_bytes.data() + 4);
    int64_t rows = read_be32(img_bytes.data() + 8);
    int64_t cols = read_be32(img_bytes.data() + 12);
    int64_t n_labels = read_be32(lab_bytes.data() + 4);
    check(n == n_labels, ErrorCode::DimensionMismatch, n, " images vs ", n_labels, " labels");
    check(img_bytes.size() == 16 + static_cast<size_t>(n * rows * cols), ErrorCode::DimensionMismatch,
          "image payload does not match header counts");
    check(lab_bytes.size() == 8 + static_cast<size_t>(n), ErrorCode::DimensionMismatch,
          "label payload does not match header count");

    Dataset ds;
    ds.classes = 10;
    ds.split = split;
    ds.images = Tensor::zeros({n, 1, rows, cols}, DType::F32);
    ds.labels.resize(static_cast<size_t>(n));
    auto img = ds.images.data<float>();
    int64_t plane = rows * cols;
    for (int64_t i = 0; i < n; ++i) {
        uint8_t lab = lab_bytes[8 + static_cast<size_t>(i)];
        check(lab < 10, ErrorCode::CorruptRecord, "label ", int(lab), " out of range");
        ds.labels[static_cast<size_t>(i)] = lab;
        for (int64_t p = 0; p < plane; ++p)
            img[i * plane + p] = static_cast<float>(img_bytes[16 + static_cast<size_t>(i * plane + p)]) / 255.0f;
    }
    return ds;
}

namespace {

// One PPM(P6)/PGM(P5) file; returns channels and fills pixels as CHW [0,1].
int read_pnm(const std::string& path, std::vector<float>& pixels, int64_t& h, int64_t& w) {
    std::vector<uint8_t> bytes = read_file(path);
    size_t pos = 0;
    auto skip_space = [&]() {
        while (pos < bytes.size()) {
            if (std::isspace(bytes[pos])) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> int64_t {
        skip_space();
        check(pos < bytes.size() && std::isdigit(bytes[pos]), ErrorCode::CorruptRecord, path,
              ": expected integer in header");
        int64_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
        return v;
    };

    check(bytes.size() > 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'),
          ErrorCode::CorruptRecord, path, ": not a binary PGM/PPM file");
    int channels = bytes[1] == '6' ? 3 : 1;
    pos = 2;
    w = read_int();
    h = read_int();
    int64_t maxval = read_int();
    check(maxval == 255, ErrorCode::CorruptRecord, path, ": only maxval 255 supported");
    check(pos < bytes.size() && std::isspace(bytes[pos]), ErrorCode::CorruptRecord, path,
          ": malformed header");
    ++pos;
    size_t need = static_cast<size_t>(h * w * channels);
    check(bytes.size() - pos >= need, ErrorCode::CorruptRecord, path, ": pixel payload truncated");

    pixels.resize(static_cast<size_t>(channels) * h * w);
    // interleaved on disk -> planar CHW
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                pixels[static_cast<size_t>(c * h * w + y * w + x)] =
                    static_cast<float>(bytes[pos + static_cast<size_t>((y * w + x) * channels + c)]) / 255.0f;
    return channels;
}

}  // namespace

Dataset load_image_folder(const std::string& dir) {
    check(fs::is_directory(dir), ErrorCode::FileMissing, dir, " is not a directory");
    std::vector<std::string> class_dirs;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory()) class_dirs.push_back(entry.path().string());
    std::sort(class_dirs.begin(), class_dirs.end());
    check(class_dirs.size() >= 2, ErrorCode::InvalidConfig, dir, " needs >= 2 class subdirectories");

    struct Item {
        std::string path;
        int32_t label;
    };
    std::vector<Item> items;
    for (size_t k = 0; k < class_dirs.size(); ++k) {
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(class_dirs[k])) {
            std::string ext = entry.path().extension().string();
            if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm"))
                files.push_back(entry.path().string());
        }
        std::sort(files.begin(), files.end());
        for (std::string& f : files) items.push_back({std::move(f), static_cast<int32_t>(k)});
    }
    check(!items.empty(), ErrorCode::FileMissing, dir, " holds no .ppm/.pgm files");

    Dataset ds;
    ds.classes = static_cast<int64_t>(class_dirs.size());
    ds.split = "folder";
    int64_t h = 0, w = 0, channels = 0;
    std::vector<float> pixels;
    for (size_t i = 0; i < items.size(); ++i) {
        int64_t ih = 0, iw = 0;
        int ic = read_pnm(items[i].path, pixels, ih, iw);
        if (i == 0) {
            h = ih;
            w = iw;
            channels = ic;
            ds.images = Tensor::zeros({static_cast<int64_t>(items.size()), channels, h, w}, DType::F32);
        }
        check(ih == h && iw == w && ic == channels, ErrorCode::DimensionMismatch, items[i].path,
              " extents differ from the first image");
        auto img = ds.images.data<float>();
        std::copy(pixels.begin(), pixels.end(), img.begin() + static_cast<int64_t>(i) * channels * h * w);
        ds.labels.push_back(items[i].label);
    }
    return ds;
}

Dataset synthetic_blobs(const SyntheticSpec& spec) {
    check(spec.classes >= 2, ErrorCode::InvalidConfig, "synthetic set needs >= 2 classes");
    check(spec.per_class >= 1 && spec.channels >= 1 && spec.hw >= 1, ErrorCode::InvalidConfig,
          "bad synthetic extents");
    int64_t plane = spec.channels * spec.hw * spec.hw;
    int64_t n = spec.classes * spec.per_class;

    // templates depend only on (seed, class) so train/test draw from the same
    // class structure
    std::vector<std::vector<float>> templates(static_cast<size_t>(spec.classes));
    for (int64_t k = 0; k < spec.classes; ++k) {
        RngStream tstream = derive_stream(spec.seed, "synthetic-template", static_cast<uint64_t>(k));
        templates[static_cast<size_t>(k)].resize(static_cast<size_t>(plane));
        for (float& v : templates[static_cast<size_t>(k)])
            v = static_cast<float>(tstream.uniform(0.2, 0.8));
    }

    RngStream noise = derive_stream(spec.seed, "synthetic-noise-" + spec.split);
    Dataset ds;
    ds.classes = spec.classes;
    ds.split = spec.split;
    ds.images = Tensor::zeros({n, spec.channels, spec.hw, spec.hw}, DType::F32);
    ds.labels.resize(static_cast<size_t>(n));
    auto img = ds.images.data<float>();
    for (int64_t i = 0; i < n; ++i) {
        int32_t k = static_cast<int32_t>(i % spec.classes);
        ds.labels[static_cast<size_t>(i)] = k;
        const std::vector<float>& tpl = templates[static_cast<size_t>(k)];
        for (int64_t p = 0; p < plane; ++p) {
            double v = tpl[static_cast<size_t>(p)] + spec.noise * noise.normal();
            img[i * plane + p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return ds;
}

Dataset take_subset(const Dataset& ds, int64_t limit) {
    if (limit <= 0 || limit >= ds.size()) return ds;
    Dataset out;
    out.classes = ds.classes;
    out.split = ds.split;
    int64_t plane = ds.images.size() / ds.size();
    out.images = Tensor::zeros({limit, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)}, DType::F32);
    auto src = ds.images.data<float>();
    auto dst = out.images.data<float>();
    std::copy(src.begin(), src.begin() + limit * plane, dst.begin());
    out.labels.assign(ds.labels.begin(), ds.labels.begin() + limit);
    return out;
}

Batch take_batch(const Dataset& ds, int64_t start, int64_t count) {
    check(start >= 0 && count >= 1 && start + count <= ds.size(), ErrorCode::ShapeMismatch,
          "batch [", start, ",", start + count, ") outside dataset of ", ds.size());
    Batch out;
    int64_t plane = ds.images.size() / ds.size();
    out.images = Tensor::zeros({count, ds.images.dim(1), ds.images.dim(2), ds.images.dim(3)},
                               ds.images.dtype());
    auto src = ds.images.data<float>();
    auto dst = out.images.data<float>();
    std::copy(src.begin() + start * plane, src.begin() + (start + count) * plane, dst.begin());
    out.labels.assign(ds.labels.begin() + start, ds.labels.begin() + start + count);
    return out;
}

Batcher::Batcher(const Dataset& ds, int64_t batch_size, RngStream shuffle) : ds_(ds), batch_size_(batch_size) {
    check(batch_size >= 1, ErrorCode::InvalidConfig, "batch size must be >= 1");
    check(ds.size() >= 1, ErrorCode::InvalidConfig, "empty dataset");
    order_ = shuffle.permutation(ds.size());
}

bool Batcher::next(Batch& out) {
    if (cursor_ >= order_.size()) return false;
    size_t take = std::min(static_cast<size_t>(batch_size_), order_.size() - cursor_);
    int64_t plane = ds_.images.size() / ds_.size();
    out.images = Tensor::zeros({static_cast<int64_t>(take), ds_.images.dim(1), ds_.images.dim(2),
                                ds_.images.dim(3)},
                               ds_.images.dtype());
    out.labels.resize(take);
    auto src = ds_.images.data<float>();
    auto dst = out.images.data<float>();
    for (size_t i = 0; i < take; ++i) {
        int64_t idx = order_[cursor_ + i];
        std::copy(src.begin() + static_cast<int64_t>(idx) * plane,
                  src.begin() + static_cast<int64_t>(idx + 1) * plane,
                  dst.begin() + static_cast<int64_t>(i) * plane);
        out.labels[i] = ds_.labels[idx];
    }
    cursor_ += take;
    return true;
}

ChannelStats compute_channel_stats(const Dataset& ds) {
    check(ds.size() >= 1, ErrorCode::InvalidConfig, "empty dataset");
    int64_t c = ds.images.dim(1);
    int64_t plane = ds.images.dim(2) * ds.images.dim(3);
    ChannelStats stats;
    stats.mean.assign(static_cast<size_t>(c), 0.0);
    stats.stddev.assign(static_cast<size_t>(c), 0.0);
    auto img = ds.images.data<float>();
    int64_t per_channel = ds.size() * plane;
    for (int64_t i = 0; i < ds.size(); ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const float* p = img.data() + (i * c + ch) * plane;
            for (int64_t e = 0; e < plane; ++e) stats.mean[static_cast<size_t>(ch)] += p[e];
        }
    for (double& m : stats.mean) m /= static_cast<double>(per_channel);
    for (int64_t i = 0; i < ds.size(); ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const float* p = img.data() + (i * c + ch) * plane;
            double mu = stats.mean[static_cast<size_t>(ch)];
            for (int64_t e = 0; e < plane; ++e) {
                double d = p[e] - mu;
                stats.stddev[static_cast<size_t>(ch)] += d * d;
            }
        }
    for (double& s : stats.stddev) s = std::sqrt(std::max(s / static_cast<double>(per_channel), 1e-12));
    return stats;
}

Tensor normalize_images(const Tensor& images, const std::vector<double>& mean,
                        const std::vector<double>& stddev, DType dt) {
    check(images.rank() == 4, ErrorCode::ShapeMismatch, "expected NCHW images");
    if (mean.empty() && stddev.empty()) return images.astype(dt);
    int64_t c = images.dim(1);
    check(static_cast<int64_t>(mean.size()) == c && static_cast<int64_t>(stddev.size()) == c,
          ErrorCode::ShapeMismatch, "channel stats do not match image channels");
    Tensor out = Tensor::zeros(images.shape(), dt);
    int64_t plane = images.dim(2) * images.dim(3);
    auto src = images.data<float>();
    dispatch_dtype(dt, [&](auto tag) {
        using T = decltype(tag);
        auto dst = out.data<T>();
        int64_t i = 0;
        for (int64_t n = 0; n < images.dim(0); ++n)
            for (int64_t ch = 0; ch < c; ++ch) {
                double mu = mean[static_cast<size_t>(ch)];
                double inv = 1.0 / stddev[static_cast<size_t>(ch)];
                for (int64_t e = 0; e < plane; ++e, ++i)
                    dst[i] = static_cast<T>((static_cast<double>(src[i]) - mu) * inv);
            }
    });
    return out;
}

}  // namespace lslu
