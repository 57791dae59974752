#include "factost/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "factost/errors.hpp"

namespace factost {

namespace {

constexpr char kMagic[4] = {'F', 'S', 'V', '2'};
constexpr uint32_t kVersion = 1;

// CRC-64/XZ (ECMA-182 polynomial, reflected).
std::array<uint64_t, 256> make_crc_table() {
    std::array<uint64_t, 256> t{};
    constexpr uint64_t poly = 0xC96C5795D7870F42ull;
    for (uint64_t i = 0; i < 256; ++i) {
        uint64_t crc = i;
        for (int b = 0; b < 8; ++b) crc = (crc & 1) ? (crc >> 1) ^ poly : crc >> 1;
        t[i] = crc;
    }
    return t;
}

const std::array<uint64_t, 256>& crc_table() {
    static const std::array<uint64_t, 256> t = make_crc_table();
    return t;
}

template <typename T>
void put(std::string& out, T v) {
    // little-endian
    for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put<uint32_t>(out, bits);
}

class Reader {
public:
    Reader(const uint8_t* p, size_t n) : p_(p), n_(n) {}

    template <typename T>
    T get() {
        if (at_ + sizeof(T) > n_) throw CheckpointError("truncated checkpoint");
        T v = 0;
        for (size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(static_cast<uint64_t>(p_[at_ + i]) << (8 * i));
        at_ += sizeof(T);
        return v;
    }

    std::string get_bytes(size_t n) {
        if (at_ + n > n_) throw CheckpointError("truncated checkpoint");
        std::string s(reinterpret_cast<const char*>(p_ + at_), n);
        at_ += n;
        return s;
    }

    size_t at() const { return at_; }
    size_t remaining() const { return n_ - at_; }

private:
    const uint8_t* p_;
    size_t n_;
    size_t at_ = 0;
};

}  // namespace

uint64_t crc64(const uint8_t* data, size_t n, uint64_t seed) {
    uint64_t crc = ~seed;
    const auto& t = crc_table();
    for (size_t i = 0; i < n; ++i) crc = t[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
    return ~crc;
}

void save_checkpoint(const std::string& path, const ParameterStore& params, const KvDoc& config) {
    std::string head;
    head.append(kMagic, 4);
    put<uint32_t>(head, kVersion);

    std::string body;
    const std::string cfg = config.serialize();
    put<uint32_t>(body, static_cast<uint32_t>(cfg.size()));
    body += cfg;
    put<uint32_t>(body, static_cast<uint32_t>(params.count()));
    for (const auto& e : params.entries()) {
        if (e.name.size() > 0xffff) throw CheckpointError("parameter name too long: " + e.name);
        put<uint16_t>(body, static_cast<uint16_t>(e.name.size()));
        body += e.name;
        put<uint8_t>(body, 2);  // all entries are stored as rank-2 arrays
        put<uint64_t>(body, static_cast<uint64_t>(e.value.rows));
        put<uint64_t>(body, static_cast<uint64_t>(e.value.cols));
        for (double x : e.value.v) put_f32(body, static_cast<float>(x));
    }

    const uint64_t crc = crc64(reinterpret_cast<const uint8_t*>(body.data()), body.size());
    std::string tail;
    put<uint64_t>(tail, crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open for write: " + path);
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
    out.write(tail.data(), static_cast<std::streamsize>(tail.size()));
    if (!out) throw CheckpointError("write failed: " + path);
}

CheckpointContents load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open: " + path);
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() < 4 + 4 + 8) throw CheckpointError("file too small: " + path);
    if (std::memcmp(raw.data(), kMagic, 4) != 0)
        throw CheckpointError("bad magic bytes (not a FSV2 checkpoint): " + path);

    Reader r(reinterpret_cast<const uint8_t*>(raw.data()), raw.size());
    r.get_bytes(4);  // magic
    const uint32_t version = r.get<uint32_t>();
    if (version != kVersion)
        throw CheckpointError("format version mismatch: file has " + std::to_string(version) +
                              ", loader supports " + std::to_string(kVersion));

    const size_t payload_begin = r.at();
    const size_t payload_end = raw.size() - 8;
    if (payload_end < payload_begin) throw CheckpointError("truncated checkpoint");
    Reader crc_reader(reinterpret_cast<const uint8_t*>(raw.data()) + payload_end, 8);
    const uint64_t file_crc = crc_reader.get<uint64_t>();
    const uint64_t computed =
        crc64(reinterpret_cast<const uint8_t*>(raw.data()) + payload_begin,
              payload_end - payload_begin);
    if (file_crc != computed)
        throw CheckpointError("CRC mismatch (corrupted checkpoint): " + path);

    CheckpointContents out;
    const uint32_t cfg_len = r.get<uint32_t>();
    out.config = KvDoc::parse(r.get_bytes(cfg_len));
    const uint32_t count = r.get<uint32_t>();
    for (uint32_t i = 0; i < count; ++i) {
        const uint16_t name_len = r.get<uint16_t>();
        const std::string name = r.get_bytes(name_len);
        const uint8_t rank = r.get<uint8_t>();
        if (rank == 0 || rank > 2)
            throw CheckpointError("entry '" + name + "': unsupported rank " + std::to_string(rank));
        uint64_t rows = 1, cols = 1;
        if (rank == 1) {
            cols = r.get<uint64_t>();
        } else {
            rows = r.get<uint64_t>();
            cols = r.get<uint64_t>();
        }
        const uint64_t n = rows * cols;
        Mat m(static_cast<int>(rows), static_cast<int>(cols));
        for (uint64_t k = 0; k < n; ++k) {
            const uint32_t bits = r.get<uint32_t>();
            float f;
            std::memcpy(&f, &bits, 4);
            m.v[k] = static_cast<double>(f);
        }
        out.params.add(name, std::move(m));
        if (name.rfind("adapter/", 0) == 0)
            out.has_adapter = true;
        else
            out.has_backbone = true;
    }
    if (r.at() != payload_end) throw CheckpointError("trailing bytes in checkpoint payload");
    return out;
}

}  // namespace factost
