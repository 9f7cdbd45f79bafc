#include "sumix/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "sumix/errors.hpp"

namespace sumix {

namespace {

constexpr char kMagic[8] = {'S', 'M', 'X', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& buf, double d) { put_u64(buf, std::bit_cast<std::uint64_t>(d)); }

struct Reader {
    std::string data;
    std::size_t pos = 0;
    std::string path;

    void need(std::size_t n, const char* what) {
        if (pos + n > data.size())
            throw DataFormatError(path + ": truncated " + what + " at offset " + std::to_string(pos));
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + static_cast<std::size_t>(i)])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + static_cast<std::size_t>(i)])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = data.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));
    put_u32(buf, kVersion);
    put_u64(buf, ck.metadata_json.size());
    buf += ck.metadata_json;
    put_u32(buf, static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& [name, t] : ck.tensors) {
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
        put_u32(buf, static_cast<std::uint32_t>(t.rank()));
        for (long d : t.shape()) put_u64(buf, static_cast<std::uint64_t>(d));
        for (long i = 0; i < t.size(); ++i) put_f64(buf, t[i]);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataFormatError("cannot write checkpoint " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataFormatError("checkpoint write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataFormatError("cannot open checkpoint " + path);
    Reader r;
    r.path = path;
    r.data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());

    if (r.bytes(sizeof(kMagic), "magic") != std::string(kMagic, sizeof(kMagic)))
        throw DataFormatError(path + ": not a checkpoint (bad magic)");
    const std::uint32_t version = r.u32("version");
    if (version != kVersion)
        throw DataFormatError(path + ": unsupported checkpoint version " + std::to_string(version));

    Checkpoint ck;
    const std::uint64_t meta_len = r.u64("metadata length");
    ck.metadata_json = r.bytes(static_cast<std::size_t>(meta_len), "metadata");

    const std::uint32_t count = r.u32("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32("tensor name length");
        std::string name = r.bytes(name_len, "tensor name");
        const std::uint32_t rank = r.u32("tensor rank");
        if (rank > 4) throw DataFormatError(path + ": tensor rank " + std::to_string(rank) + " too large");
        std::vector<long> shape(rank);
        for (auto& d : shape) d = static_cast<long>(r.u64("tensor dim"));
        Tensor t(shape);
        for (long j = 0; j < t.size(); ++j) t[j] = r.f64("tensor data");
        ck.add(std::move(name), std::move(t));
    }
    return ck;
}

}  // namespace sumix
