#include "core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace lslu {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");

constexpr char kMagic[4] = {'L', 'S', 'L', 'U'};

void put_u16(std::string& out, uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); }
void put_u32(std::string& out, uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }

void put_entry(std::string& out, const std::string& name, uint8_t dtype_code,
               const std::vector<uint32_t>& extents, const void* values, size_t value_bytes) {
    check(name.size() <= 0xffff, ErrorCode::Internal, "tensor name too long");
    put_u16(out, static_cast<uint16_t>(name.size()));
    out.append(name);
    out.push_back(static_cast<char>(dtype_code));
    check(extents.size() <= 0xff, ErrorCode::Internal, "rank too large");
    out.push_back(static_cast<char>(extents.size()));
    for (uint32_t e : extents) put_u32(out, e);
    out.append(reinterpret_cast<const char*>(values), value_bytes);
}

struct Reader {
    const uint8_t* p;
    size_t left;
    const std::string& path;

    void need(size_t n) { check(left >= n, ErrorCode::Corrupt, path, ": truncated"); }
    uint16_t u16() {
        need(2);
        uint16_t v;
        std::memcpy(&v, p, 2);
        p += 2;
        left -= 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v;
        std::memcpy(&v, p, 4);
        p += 4;
        left -= 4;
        return v;
    }
    uint8_t u8() {
        need(1);
        uint8_t v = *p;
        ++p;
        --left;
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        left -= n;
        return s;
    }
    const uint8_t* raw(size_t n) {
        need(n);
        const uint8_t* r = p;
        p += n;
        left -= n;
        return r;
    }
};

struct Entry {
    std::string name;
    uint8_t dtype_code;
    std::vector<int64_t> extents;
    const uint8_t* values;
    size_t value_bytes;
};

std::vector<Entry> parse_entries(Reader& r) {
    check(r.left >= 4 && std::memcmp(r.p, kMagic, 4) == 0, ErrorCode::Corrupt,
          r.path, ": not a checkpoint file");
    r.raw(4);
    uint32_t version = r.u32();
    check(version == kCheckpointVersion, ErrorCode::VersionMismatch, r.path, ": version ", version,
          ", expected ", kCheckpointVersion);
    uint32_t count = r.u32();
    std::vector<Entry> entries;
    entries.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        Entry e;
        e.name = r.str(r.u16());
        e.dtype_code = r.u8();
        check(e.dtype_code <= 2, ErrorCode::Corrupt, r.path, ": bad dtype code for ", e.name);
        uint8_t rank = r.u8();
        int64_t numel = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            int64_t ext = r.u32();
            e.extents.push_back(ext);
            numel *= ext;
        }
        size_t elem = e.dtype_code == 0 ? 4 : e.dtype_code == 1 ? 8 : 1;
        e.value_bytes = static_cast<size_t>(numel) * elem;
        e.values = r.raw(e.value_bytes);
        entries.push_back(std::move(e));
    }
    check(r.left == 0, ErrorCode::Corrupt, r.path, ": trailing bytes");
    return entries;
}

std::vector<uint8_t> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), ErrorCode::FileMissing, "cannot open ", path);
    in.seekg(0, std::ios::end);
    std::vector<uint8_t> bytes(static_cast<size_t>(in.tellg()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    check(in.good() || bytes.empty(), ErrorCode::Io, "short read on ", path);
    return bytes;
}

CheckpointMeta meta_from_json(const nlohmann::json& j) {
    CheckpointMeta meta;
    meta.epoch = j.at("epoch");
    meta.config = j.at("config");
    meta.config_hash = j.at("config_hash");
    return meta;
}

}  // namespace

void save_checkpoint(const std::string& path, const Graph& g, const CheckpointMeta& meta) {
    std::vector<NamedParam> tensors = const_cast<Graph&>(g).state_tensors();
    std::string graph_json = g.structure().dump();
    nlohmann::json info{{"epoch", meta.epoch}, {"config", meta.config}, {"config_hash", meta.config_hash}};
    std::string info_json = info.dump();

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<uint32_t>(tensors.size() + 2));
    for (const NamedParam& t : tensors) {
        std::vector<uint32_t> extents;
        for (int64_t d : t.tensor.shape()) extents.push_back(static_cast<uint32_t>(d));
        uint8_t code = t.tensor.dtype() == DType::F32 ? 0 : 1;
        dispatch_dtype(t.tensor.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto vals = const_cast<Tensor&>(t.tensor).data<T>();
            put_entry(out, t.name, code, extents, vals.data(), vals.size_bytes());
        });
    }
    put_entry(out, "__meta.graph", 2, {static_cast<uint32_t>(graph_json.size())}, graph_json.data(),
              graph_json.size());
    put_entry(out, "__meta.info", 2, {static_cast<uint32_t>(info_json.size())}, info_json.data(),
              info_json.size());

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check(f.good(), ErrorCode::Io, "cannot write ", path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    check(f.good(), ErrorCode::Io, "write failed on ", path);
}

namespace {

void copy_entry_into(const Entry& e, Tensor& target, const std::string& path) {
    DType want = e.dtype_code == 0 ? DType::F32 : DType::F64;
    check(target.dtype() == want, ErrorCode::ShapeMismatch, path, ": dtype mismatch for ", e.name);
    check(Shape(e.extents.begin(), e.extents.end()) == target.shape(), ErrorCode::ShapeMismatch, path,
          ": shape mismatch for ", e.name, ", file ", shape_str(Shape(e.extents.begin(), e.extents.end())),
          " vs graph ", shape_str(target.shape()));
    dispatch_dtype(target.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto dst = target.data<T>();
        std::memcpy(dst.data(), e.values, e.value_bytes);
    });
}

CheckpointMeta fill_graph(const std::vector<Entry>& entries, Graph& g, const std::string& path) {
    std::vector<NamedParam> tensors = g.state_tensors();
    CheckpointMeta meta;
    bool saw_info = false;
    size_t copied = 0;
    for (const Entry& e : entries) {
        if (e.name == "__meta.graph") continue;
        if (e.name == "__meta.info") {
            meta = meta_from_json(nlohmann::json::parse(std::string(
                reinterpret_cast<const char*>(e.values), e.value_bytes)));
            saw_info = true;
            continue;
        }
        bool found = false;
        for (NamedParam& t : tensors)
            if (t.name == e.name) {
                copy_entry_into(e, t.tensor, path);
                found = true;
                ++copied;
                break;
            }
        check(found, ErrorCode::ShapeMismatch, path, ": tensor ", e.name, " has no home in this graph");
    }
    check(copied == tensors.size(), ErrorCode::ShapeMismatch, path, ": file holds ", copied,
          " of the graph's ", tensors.size(), " tensors");
    check(saw_info, ErrorCode::Corrupt, path, ": missing __meta.info");
    return meta;
}

}  // namespace

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::vector<uint8_t> bytes = read_all(path);
    Reader r{bytes.data(), bytes.size(), path};
    std::vector<Entry> entries = parse_entries(r);

    const Entry* graph_entry = nullptr;
    for (const Entry& e : entries)
        if (e.name == "__meta.graph") graph_entry = &e;
    check(graph_entry != nullptr, ErrorCode::Corrupt, path, ": missing __meta.graph");

    LoadedCheckpoint out;
    out.graph = Graph::from_structure(nlohmann::json::parse(
        std::string(reinterpret_cast<const char*>(graph_entry->values), graph_entry->value_bytes)));
    out.meta = fill_graph(entries, out.graph, path);
    return out;
}

CheckpointMeta load_checkpoint_into(const std::string& path, Graph& g) {
    std::vector<uint8_t> bytes = read_all(path);
    Reader r{bytes.data(), bytes.size(), path};
    std::vector<Entry> entries = parse_entries(r);
    return fill_graph(entries, g, path);
}

}  // namespace lslu
