#include "splitner/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

namespace splitner {

namespace {

constexpr char kMagic[] = "SPNER1";
constexpr size_t kMagicLen = 6;
constexpr uint64_t kMaxNameLen = 1 << 16;
constexpr uint64_t kMaxRank = 8;

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

    size_t remaining() const { return buf_.size() - pos_; }

    uint64_t u64() {
        need(8, "integer");
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<uint64_t>(static_cast<uint8_t>(buf_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    std::string bytes(uint64_t n, const char* what) {
        need(n, what);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::vector<float> f32s(uint64_t n) {
        need(n * 4, "tensor payload");
        std::vector<float> out(n);
        for (uint64_t i = 0; i < n; ++i) {
            uint32_t bits = 0;
            for (int b = 0; b < 4; ++b)
                bits |= static_cast<uint32_t>(static_cast<uint8_t>(buf_[pos_ + i * 4 + b]))
                        << (8 * b);
            std::memcpy(&out[i], &bits, 4);
        }
        pos_ += n * 4;
        return out;
    }

    void need(uint64_t n, const char* what) const {
        if (remaining() < n)
            throw std::runtime_error(path_ + ": truncated checkpoint (while reading " + what +
                                     ")");
    }

private:
    const std::string& buf_;
    std::string path_;
    size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ParamStore<float>& params, const std::string& path) {
    std::string out;
    out.append(kMagic, kMagicLen);
    uint64_t count = 0;
    params.for_each([&](const std::string& name, const Tensor<float>& t) {
        put_u64(out, name.size());
        out.append(name);
        put_u64(out, t.shape.size());
        for (int d : t.shape) put_u64(out, static_cast<uint64_t>(d));
        for (float v : t.data) put_f32(out, v);
        ++count;
    });
    put_u64(out, count);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("write failed for " + path);
}

std::map<std::string, Tensor<float>> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < kMagicLen + 8 || buf.compare(0, kMagicLen, kMagic, kMagicLen) != 0)
        throw std::runtime_error(path + ": not a checkpoint file");

    const std::string body = buf.substr(kMagicLen);
    Reader r(body, path);
    std::map<std::string, Tensor<float>> out;
    uint64_t count = 0;
    // Records run until exactly the 8-byte footer remains.
    while (r.remaining() > 8) {
        const uint64_t name_len = r.u64();
        if (name_len == 0 || name_len > kMaxNameLen)
            throw std::runtime_error(path + ": corrupt record (name length " +
                                     std::to_string(name_len) + ")");
        const std::string name = r.bytes(name_len, "tensor name");
        const uint64_t rank = r.u64();
        if (rank == 0 || rank > kMaxRank)
            throw std::runtime_error(path + ": corrupt record for " + name + " (rank " +
                                     std::to_string(rank) + ")");
        std::vector<int> shape(rank);
        uint64_t numel = 1;
        for (uint64_t i = 0; i < rank; ++i) {
            const uint64_t d = r.u64();
            if (d == 0 || d > std::numeric_limits<int>::max())
                throw std::runtime_error(path + ": corrupt record for " + name + " (dim " +
                                         std::to_string(d) + ")");
            shape[i] = static_cast<int>(d);
            numel *= d;
        }
        Tensor<float> t(shape, r.f32s(numel));
        if (!out.emplace(name, std::move(t)).second)
            throw std::runtime_error(path + ": duplicate tensor " + name);
        ++count;
    }
    if (r.remaining() != 8)
        throw std::runtime_error(path + ": truncated checkpoint (no footer)");
    const uint64_t declared = r.u64();
    if (declared != count)
        throw std::runtime_error(path + ": footer declares " + std::to_string(declared) +
                                 " tensors but file holds " + std::to_string(count));
    return out;
}

void apply_checkpoint(ParamStore<float>& params,
                      const std::map<std::string, Tensor<float>>& loaded) {
    std::string missing, extra, mismatched;
    for (const std::string& name : params.names())
        if (!loaded.count(name)) missing += (missing.empty() ? "" : ", ") + name;
    for (const auto& [name, t] : loaded) {
        if (!params.has(name)) {
            extra += (extra.empty() ? "" : ", ") + name;
        } else if (params.at(name).shape != t.shape) {
            mismatched += (mismatched.empty() ? "" : ", ") + name;
        }
    }
    if (!missing.empty() || !extra.empty() || !mismatched.empty()) {
        std::string msg = "checkpoint does not match model:";
        if (!missing.empty()) msg += " missing [" + missing + "]";
        if (!extra.empty()) msg += " unexpected [" + extra + "]";
        if (!mismatched.empty()) msg += " shape mismatch [" + mismatched + "]";
        throw std::runtime_error(msg);
    }
    for (const auto& [name, t] : loaded) params.at(name).data = t.data;
}

}  // namespace splitner
