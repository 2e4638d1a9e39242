#include "fewfont/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace fewfont {

namespace {

using nlohmann::json;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v), (unsigned char)(v >> 8), (unsigned char)(v >> 16),
                          (unsigned char)(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; i++) b[i] = (unsigned char)(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; i++) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

json net_to_json(const NetConfig& n) {
    return json{{"image_size", n.image_size}, {"width_mult", n.width_mult},
                {"heads", n.heads},           {"k", n.k},
                {"num_styles", n.num_styles}, {"num_chars", n.num_chars}};
}

NetConfig net_from_json(const json& j) {
    NetConfig n;
    n.image_size = j.at("image_size").get<int>();
    n.width_mult = j.at("width_mult").get<double>();
    n.heads = j.at("heads").get<int>();
    n.k = j.at("k").get<int>();
    n.num_styles = j.at("num_styles").get<int>();
    n.num_chars = j.at("num_chars").get<int>();
    return n;
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamSet<float>& gen, const ParamSet<float>& disc) {
    json tensors = json::array();
    uint64_t offset = 0;
    auto describe = [&](const char* prefix, const ParamSet<float>& ps) {
        for (const auto& p : ps.items) {
            tensors.push_back(json{{"name", std::string(prefix) + p.name},
                                   {"shape", p.value.shape},
                                   {"offset", offset},
                                   {"count", p.value.size()}});
            offset += p.value.size();
        }
    };
    describe("g.", gen);
    describe("d.", disc);

    json header{{"net", net_to_json(meta.net)},
                {"flags", json{{"use_sam", meta.use_sam},
                               {"use_sr", meta.use_sr},
                               {"use_rs", meta.use_rs}}},
                {"styles", meta.style_names},
                {"chars", meta.char_names},
                {"tensors", tensors}};
    std::string hs = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint: " + path);
    os.write("FFCK", 4);
    put_u32(os, uint32_t(meta.version));
    put_u64(os, hs.size());
    os.write(hs.data(), std::streamsize(hs.size()));
    auto dump = [&](const ParamSet<float>& ps) {
        for (const auto& p : ps.items)
            os.write(reinterpret_cast<const char*>(p.value.ptr()),
                     std::streamsize(p.value.size() * sizeof(float)));
    };
    dump(gen);
    dump(disc);
    if (!os) throw DataError("short write while saving checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FFCK", 4) != 0)
        throw ParseError("not a checkpoint file: " + path);
    Checkpoint ck;
    ck.meta.version = int(get_u32(is));
    if (ck.meta.version != 1)
        throw ParseError("unsupported checkpoint version " + std::to_string(ck.meta.version));
    uint64_t hlen = get_u64(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), std::streamsize(hlen));
    if (!is) throw ParseError("truncated checkpoint header: " + path);

    json header = json::parse(hs, nullptr, false);
    if (header.is_discarded()) throw ParseError("malformed checkpoint header: " + path);
    ck.meta.net = net_from_json(header.at("net"));
    if (header.contains("flags")) {
        ck.meta.use_sam = header["flags"].value("use_sam", true);
        ck.meta.use_sr = header["flags"].value("use_sr", true);
        ck.meta.use_rs = header["flags"].value("use_rs", true);
    }
    ck.meta.style_names = header.at("styles").get<std::vector<std::string>>();
    ck.meta.char_names = header.at("chars").get<std::vector<std::string>>();

    for (const auto& tj : header.at("tensors")) {
        std::string name = tj.at("name").get<std::string>();
        Shape shape = tj.at("shape").get<Shape>();
        std::size_t count = tj.at("count").get<std::size_t>();
        if (shape_numel(shape) != count)
            throw ParseError("checkpoint tensor " + name + " has inconsistent shape");
        Tensor<float> t(shape);
        is.read(reinterpret_cast<char*>(t.ptr()), std::streamsize(count * sizeof(float)));
        if (!is) throw ParseError("truncated checkpoint payload at tensor " + name);
        ck.tensors.emplace(std::move(name), std::move(t));
    }
    return ck;
}

void fill_params(ParamSet<float>& ps, const Checkpoint& ck, const std::string& prefix) {
    for (auto& p : ps.items) {
        auto it = ck.tensors.find(prefix + p.name);
        if (it == ck.tensors.end())
            throw DataError("checkpoint is missing tensor " + prefix + p.name);
        if (it->second.shape != p.value.shape)
            throw DataError("checkpoint tensor " + prefix + p.name + " has shape " +
                            shape_str(it->second.shape) + ", expected " +
                            shape_str(p.value.shape));
        p.value = it->second.clone();
    }
}

}  // namespace fewfont
