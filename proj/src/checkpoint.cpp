#include "gapnet/nn/checkpoint.hpp"

#include "gapnet/codec.hpp"

#include <bit>

namespace gapnet::nn {
namespace {

constexpr std::string_view kMagic = "GPAR";
constexpr std::uint16_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}

    std::uint64_t unsigned_le(int bytes, const char* field) {
        need(static_cast<std::size_t>(bytes), field);
        std::uint64_t v = 0;
        for (int i = 0; i < bytes; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[at_ + i])) << (8 * i);
        }
        at_ += static_cast<std::size_t>(bytes);
        return v;
    }
    std::string_view take(std::size_t n, const char* field) {
        need(n, field);
        auto s = in_.substr(at_, n);
        at_ += n;
        return s;
    }
    bool done() const { return at_ == in_.size(); }

private:
    void need(std::size_t n, const char* field) const {
        if (in_.size() - at_ < n) throw DecodeError(field, "unexpected end of data");
    }
    std::string_view in_;
    std::size_t at_ = 0;
};

}  // namespace

std::string encode_params(const std::vector<NamedArray>& arrays) {
    std::string out(kMagic);
    out.push_back(static_cast<char>(kVersion & 0xFF));
    out.push_back(static_cast<char>(kVersion >> 8));
    put_u32(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        std::size_t count = 1;
        for (auto d : a.shape) count *= d;
        if (count != a.data.size()) {
            throw GridError("encode_params: shape of " + a.name + " does not match its payload");
        }
        put_u32(out, static_cast<std::uint32_t>(a.name.size()));
        out.append(a.name);
        put_u32(out, static_cast<std::uint32_t>(a.shape.size()));
        for (auto d : a.shape) put_u32(out, d);
        for (double v : a.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

std::vector<NamedArray> decode_params(std::string_view bytes) {
    Reader r(bytes);
    if (r.take(4, "magic") != kMagic) throw DecodeError("magic", "expected \"GPAR\"");
    if (r.unsigned_le(2, "version") != kVersion) throw DecodeError("version", "unsupported");
    const auto count = r.unsigned_le(4, "count");
    std::vector<NamedArray> arrays;
    for (std::uint64_t k = 0; k < count; ++k) {
        NamedArray a;
        const auto len = r.unsigned_le(4, "name");
        a.name = std::string(r.take(len, "name"));
        const auto ndim = r.unsigned_le(4, "shape");
        std::size_t n = 1;
        for (std::uint64_t d = 0; d < ndim; ++d) {
            a.shape.push_back(static_cast<std::uint32_t>(r.unsigned_le(4, "shape")));
            n *= a.shape.back();
        }
        a.data.resize(n);
        for (auto& v : a.data) v = std::bit_cast<double>(r.unsigned_le(8, "payload length"));
        arrays.push_back(std::move(a));
    }
    if (!r.done()) throw DecodeError("payload length", "trailing bytes after last array");
    return arrays;
}

void write_params(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
    write_file(path, encode_params(arrays));
}

std::vector<NamedArray> read_params(const std::filesystem::path& path) {
    return decode_params(read_file(path));
}

}  // namespace gapnet::nn
