#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "doctest.h"

#include "core/data.hpp"

using namespace lslu;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const char* tag) {
        path = fs::temp_directory_path() / (std::string("lslu-test-") + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& p, const std::vector<uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void push_be32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(uint8_t(x >> 24));
    v.push_back(uint8_t(x >> 16));
    v.push_back(uint8_t(x >> 8));
    v.push_back(uint8_t(x));
}

// Minimal IDX pair: n images of rows x cols, pixel = (i + p) % 256, label = i % 10.
void write_idx_pair(const fs::path& dir, const std::string& stem, uint32_t n, uint32_t rows,
                    uint32_t cols, uint32_t image_magic = 0x803, uint32_t label_count_override = 0) {
    std::vector<uint8_t> img;
    push_be32(img, image_magic);
    push_be32(img, n);
    push_be32(img, rows);
    push_be32(img, cols);
    for (uint32_t i = 0; i < n; ++i)
        for (uint32_t p = 0; p < rows * cols; ++p) img.push_back(uint8_t((i + p) % 256));
    write_bytes(dir / (stem + "-images-idx3-ubyte"), img);

    uint32_t n_labels = label_count_override ? label_count_override : n;
    std::vector<uint8_t> lab;
    push_be32(lab, 0x801);
    push_be32(lab, n_labels);
    for (uint32_t i = 0; i < n_labels; ++i) lab.push_back(uint8_t(i % 10));
    write_bytes(dir / (stem + "-labels-idx1-ubyte"), lab);
}

}  // namespace

TEST_CASE("synthetic blobs are deterministic and class-structured") {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.per_class = 4;
    spec.hw = 8;
    spec.seed = 42;

    Dataset a = synthetic_blobs(spec);
    Dataset b = synthetic_blobs(spec);
    CHECK(a.size() == 12);
    CHECK(a.images.shape() == Shape{12, 1, 8, 8});
    auto av = a.images.data<float>();
    auto bv = b.images.data<float>();
    for (int64_t i = 0; i < a.images.size(); ++i) CHECK(av[i] == bv[i]);

    SUBCASE("zero noise collapses each class onto its template") {
        spec.noise = 0.0;
        Dataset c = synthetic_blobs(spec);
        auto cv = c.images.data<float>();
        int64_t plane = 64;
        // samples 0 and 3 are both class 0
        for (int64_t p = 0; p < plane; ++p) CHECK(cv[0 * plane + p] == cv[3 * plane + p]);
        // a different split shares the class templates
        spec.split = "test";
        Dataset d = synthetic_blobs(spec);
        auto dv = d.images.data<float>();
        for (int64_t p = 0; p < plane; ++p) CHECK(cv[p] == dv[p]);
    }
    SUBCASE("values stay inside [0,1]") {
        spec.noise = 5.0;
        Dataset c = synthetic_blobs(spec);
        auto cv = c.images.data<float>();
        for (int64_t i = 0; i < c.images.size(); ++i) {
            CHECK(cv[i] >= 0.0f);
            CHECK(cv[i] <= 1.0f);
        }
    }
    SUBCASE("fewer than two classes is rejected") {
        spec.classes = 1;
        CHECK_THROWS_AS(synthetic_blobs(spec), Error);
    }
}

TEST_CASE("batcher walks a permutation with a final short batch") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.per_class = 5;  // N = 10
    spec.hw = 4;
    Dataset ds = synthetic_blobs(spec);

    Batcher batcher(ds, 3, derive_stream(7, "shuffle"));
    Batch batch;
    std::vector<int64_t> sizes;
    std::vector<float> seen_keys;  // first pixel identifies the source image here
    std::vector<int32_t> seen_labels;
    while (batcher.next(batch)) {
        sizes.push_back(batch.images.dim(0));
        auto bv = batch.images.data<float>();
        int64_t plane = batch.images.size() / batch.images.dim(0);
        for (int64_t i = 0; i < batch.images.dim(0); ++i) {
            seen_keys.push_back(bv[i * plane]);
            seen_labels.push_back(batch.labels[static_cast<size_t>(i)]);
        }
    }
    CHECK(sizes == std::vector<int64_t>{3, 3, 3, 1});

    // every sample appears exactly once
    auto sv = ds.images.data<float>();
    int64_t plane = ds.images.size() / ds.size();
    std::multiset<float> want, got(seen_keys.begin(), seen_keys.end());
    for (int64_t i = 0; i < ds.size(); ++i) want.insert(sv[i * plane]);
    CHECK(want == got);

    SUBCASE("same seed reproduces the order") {
        Batcher b1(ds, 4, derive_stream(9, "shuffle"));
        Batcher b2(ds, 4, derive_stream(9, "shuffle"));
        Batch x, y;
        while (b1.next(x)) {
            REQUIRE(b2.next(y));
            CHECK(x.labels == y.labels);
            auto xv = x.images.data<float>();
            auto yv = y.images.data<float>();
            for (int64_t i = 0; i < x.images.size(); ++i) CHECK(xv[i] == yv[i]);
        }
        CHECK(!b2.next(y));
    }
    SUBCASE("bad batch size is rejected") {
        CHECK_THROWS_AS(Batcher(ds, 0, derive_stream(1, "shuffle")), Error);
    }
}

TEST_CASE("mnist idx loader") {
    TempDir dir("mnist");
    write_idx_pair(dir.path, "train", 4, 28, 28);
    write_idx_pair(dir.path, "t10k", 2, 28, 28);

    Dataset train = load_mnist_idx(dir.path.string(), "train");
    CHECK(train.images.shape() == Shape{4, 1, 28, 28});
    CHECK(train.classes == 10);
    CHECK(train.labels == std::vector<int32_t>{0, 1, 2, 3});
    auto tv = train.images.data<float>();
    CHECK(tv[0] == 0.0f);                 // pixel byte 0
    CHECK(tv[255] == 1.0f);               // pixel byte 255 scales to exactly 1
    CHECK(tv[1] == doctest::Approx(1.0 / 255.0));

    Dataset test = load_mnist_idx(dir.path.string(), "test");
    CHECK(test.images.dim(0) == 2);

    SUBCASE("bad magic") {
        TempDir bad("mnist-bad-magic");
        write_idx_pair(bad.path, "train", 2, 28, 28, /*image_magic=*/0x804);
        CHECK_THROWS_AS(load_mnist_idx(bad.path.string(), "train"), Error);
    }
    SUBCASE("label count must match image count") {
        TempDir bad("mnist-count");
        write_idx_pair(bad.path, "train", 3, 28, 28, 0x803, /*label_count_override=*/2);
        CHECK_THROWS_WITH_AS(load_mnist_idx(bad.path.string(), "train"),
                             doctest::Contains("DimensionMismatch"), Error);
    }
    SUBCASE("missing files") {
        TempDir empty("mnist-missing");
        CHECK_THROWS_AS(load_mnist_idx(empty.path.string(), "train"), Error);
    }
}

TEST_CASE("cifar10 loader") {
    TempDir dir("cifar");
    // two 3073-byte records in the test batch
    std::vector<uint8_t> rec;
    rec.push_back(7);  // label
    for (int p = 0; p < 3072; ++p) rec.push_back(uint8_t(p % 256));
    rec.push_back(2);
    for (int p = 0; p < 3072; ++p) rec.push_back(255);
    write_bytes(dir.path / "test_batch.bin", rec);

    Dataset ds = load_cifar10(dir.path.string(), "test");
    CHECK(ds.images.shape() == Shape{2, 3, 32, 32});
    CHECK(ds.labels == std::vector<int32_t>{7, 2});
    auto v = ds.images.data<float>();
    CHECK(v[0] == 0.0f);
    CHECK(v[255] == 1.0f);
    CHECK(v[3072] == 1.0f);  // second record is all-255

    SUBCASE("size not a multiple of the record length") {
        TempDir bad("cifar-corrupt");
        write_bytes(bad.path / "test_batch.bin", std::vector<uint8_t>(3072, 0));
        CHECK_THROWS_WITH_AS(load_cifar10(bad.path.string(), "test"),
                             doctest::Contains("CorruptRecord"), Error);
    }
    SUBCASE("missing batch file") {
        TempDir empty("cifar-missing");
        CHECK_THROWS_WITH_AS(load_cifar10(empty.path.string(), "train"),
                             doctest::Contains("FileMissing"), Error);
    }
}

TEST_CASE("image folder loader") {
    TempDir dir("folder");
    fs::create_directories(dir.path / "ant");
    fs::create_directories(dir.path / "bee");

    auto write_pgm = [&](const fs::path& p, uint8_t fill) {
        std::vector<uint8_t> bytes{'P', '5', '\n', '#', ' ', 'c', '\n', '2', ' ', '2', '\n',
                                   '2', '5', '5', '\n'};
        for (int i = 0; i < 4; ++i) bytes.push_back(fill);
        write_bytes(p, bytes);
    };
    write_pgm(dir.path / "ant" / "a.pgm", 0);
    write_pgm(dir.path / "ant" / "b.pgm", 128);
    write_pgm(dir.path / "bee" / "a.pgm", 255);

    Dataset ds = load_image_folder(dir.path.string());
    CHECK(ds.images.shape() == Shape{3, 1, 2, 2});
    CHECK(ds.classes == 2);
    CHECK(ds.labels == std::vector<int32_t>{0, 0, 1});  // ant sorts before bee
    auto v = ds.images.data<float>();
    CHECK(v[0] == 0.0f);
    CHECK(v[8] == 1.0f);

    SUBCASE("color ppm images load planar") {
        TempDir cdir("folder-color");
        fs::create_directories(cdir.path / "x");
        fs::create_directories(cdir.path / "y");
        // one 1x1 pixel, r=255 g=0 b=0
        std::vector<uint8_t> ppm{'P', '6', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 255, 0, 0};
        write_bytes(cdir.path / "x" / "p.ppm", ppm);
        write_bytes(cdir.path / "y" / "p.ppm", ppm);
        Dataset c = load_image_folder(cdir.path.string());
        CHECK(c.images.shape() == Shape{2, 3, 1, 1});
        auto cv = c.images.data<float>();
        CHECK(cv[0] == 1.0f);
        CHECK(cv[1] == 0.0f);
        CHECK(cv[2] == 0.0f);
    }
    SUBCASE("mixed extents are rejected") {
        std::vector<uint8_t> wide{'P', '5', '\n', '3', ' ', '1', '\n', '2', '5', '5', '\n', 1, 2, 3};
        write_bytes(dir.path / "bee" / "wide.pgm", wide);
        CHECK_THROWS_WITH_AS(load_image_folder(dir.path.string()),
                             doctest::Contains("DimensionMismatch"), Error);
    }
}

TEST_CASE("take_subset keeps the first n samples") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.per_class = 6;
    spec.hw = 4;
    Dataset ds = synthetic_blobs(spec);
    Dataset sub = take_subset(ds, 5);
    CHECK(sub.size() == 5);
    CHECK(sub.labels == std::vector<int32_t>(ds.labels.begin(), ds.labels.begin() + 5));
    auto a = ds.images.data<float>();
    auto b = sub.images.data<float>();
    for (int64_t i = 0; i < sub.images.size(); ++i) CHECK(a[i] == b[i]);
    CHECK(take_subset(ds, 0).size() == ds.size());
    CHECK(take_subset(ds, 999).size() == ds.size());
}

TEST_CASE("channel stats and normalization") {
    Dataset ds;
    ds.classes = 2;
    ds.split = "train";
    ds.images = Tensor::from({2, 2, 1, 2}, std::vector<double>{0, 1, 0.5, 0.5, 1, 0, 0.5, 0.5}, DType::F32);
    ds.labels = {0, 1};

    ChannelStats stats = compute_channel_stats(ds);
    REQUIRE(stats.mean.size() == 2);
    CHECK(stats.mean[0] == doctest::Approx(0.5));
    CHECK(stats.mean[1] == doctest::Approx(0.5));
    CHECK(stats.stddev[0] == doctest::Approx(0.5));               // values 0,1,1,0 around 0.5
    CHECK(stats.stddev[1] == doctest::Approx(0.0).epsilon(1e-3)); // floored, not zero
    CHECK(stats.stddev[1] > 0.0);

    Tensor norm = normalize_images(ds.images, stats.mean, {1.0, 1.0}, DType::F64);
    CHECK(norm.dtype() == DType::F64);
    auto nv = norm.data<double>();
    CHECK(nv[0] == doctest::Approx(-0.5));
    CHECK(nv[1] == doctest::Approx(0.5));
    CHECK(nv[2] == doctest::Approx(0.0));

    CHECK_THROWS_AS(normalize_images(ds.images, {0.0}, {1.0}, DType::F32), Error);
}
