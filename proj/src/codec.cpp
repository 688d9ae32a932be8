#include "gapnet/codec.hpp"

#include <bit>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <vector>

namespace gapnet {
namespace {

constexpr std::string_view kMagic = "GCUB";
constexpr std::size_t kHeaderBytes = 4 + 2 + 3 * 4;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    }
    return v;
}

Index mask_bytes_per_day(Index plane) { return (plane + 7) / 8; }

}  // namespace

std::string encode_cube(const AnomalyCube& cube) {
    const Index days = cube.days();
    const Index plane = cube.plane_size();
    const auto limit = static_cast<Index>(std::numeric_limits<std::uint32_t>::max());
    if (days > limit || cube.width() > limit || cube.height() > limit) {
        throw GridError("encode_cube: dimension exceeds 32 bits");
    }
    std::string out;
    out.reserve(kHeaderBytes + static_cast<std::size_t>(days * plane * 4 +
                                                        days * mask_bytes_per_day(plane)));
    out.append(kMagic);
    put_u16(out, kGcubVersion);
    put_u32(out, static_cast<std::uint32_t>(days));
    put_u32(out, static_cast<std::uint32_t>(cube.width()));
    put_u32(out, static_cast<std::uint32_t>(cube.height()));
    for (Index i = 0; i < cube.values().size(); ++i) {
        put_u32(out, std::bit_cast<std::uint32_t>(cube.values()[i]));
    }
    const auto& bits = cube.mask().bits();
    for (Index t = 0; t < days; ++t) {
        std::vector<unsigned char> packed(static_cast<std::size_t>(mask_bytes_per_day(plane)), 0);
        for (Index k = 0; k < plane; ++k) {
            if (bits[t * plane + k]) packed[static_cast<std::size_t>(k / 8)] |= 1u << (k % 8);
        }
        out.append(packed.begin(), packed.end());
    }
    return out;
}

AnomalyCube decode_cube(std::string_view in) {
    if (in.size() < 4 || in.substr(0, 4) != kMagic) {
        throw DecodeError("magic", "expected \"GCUB\"");
    }
    if (in.size() < 6) throw DecodeError("version", "header truncated");
    const auto version = static_cast<std::uint16_t>(static_cast<unsigned char>(in[4]) |
                                                    (static_cast<unsigned char>(in[5]) << 8));
    if (version != kGcubVersion) {
        throw DecodeError("version", "unsupported version " + std::to_string(version));
    }
    if (in.size() < kHeaderBytes) throw DecodeError("dimension", "header truncated");
    const Index days = get_u32(in, 6);
    const Index width = get_u32(in, 10);
    const Index height = get_u32(in, 14);
    if ((width == 0 || height == 0) && days != 0) {
        throw DecodeError("dimension", "zero spatial extent with non-zero days");
    }
    const Index plane = width * height;
    const std::size_t need = kHeaderBytes + static_cast<std::size_t>(days * plane) * 4 +
                             static_cast<std::size_t>(days * mask_bytes_per_day(plane));
    if (in.size() != need) {
        std::ostringstream os;
        os << "expected " << need << " bytes, found " << in.size();
        throw DecodeError("payload length", os.str());
    }
    AnomalyCube cube(days, width, height);
    std::size_t at = kHeaderBytes;
    for (Index i = 0; i < days * plane; ++i, at += 4) {
        cube.values()[i] = std::bit_cast<float>(get_u32(in, at));
    }
    auto& bits = cube.mask().bits();
    const Index per_day = mask_bytes_per_day(plane);
    for (Index t = 0; t < days; ++t) {
        for (Index k = 0; k < plane; ++k) {
            const auto byte = static_cast<unsigned char>(in[at + static_cast<std::size_t>(k / 8)]);
            bits[t * plane + k] = (byte >> (k % 8)) & 1u;
        }
        at += static_cast<std::size_t>(per_day);
    }
    return cube;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw GridError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw GridError("cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw GridError("short write to " + path.string());
}

void write_cube(const std::filesystem::path& path, const AnomalyCube& cube) {
    write_file(path, encode_cube(cube));
}

AnomalyCube read_cube(const std::filesystem::path& path) { return decode_cube(read_file(path)); }

void write_mask(const std::filesystem::path& path, const MaskCube& mask) {
    write_cube(path, AnomalyCube(Eigen::ArrayXf::Zero(mask.bits().size()), mask));
}

MaskCube read_mask(const std::filesystem::path& path) { return read_cube(path).mask(); }

std::string encode_geometry(const GridGeometry& g) {
    std::ostringstream os;
    os << "row,col,lat,lon,master\n" << std::setprecision(17);
    for (Index r = 0; r < g.height; ++r) {
        for (Index c = 0; c < g.width; ++c) {
            os << r << ',' << c << ',' << g.lat(r, c) << ',' << g.lon(r, c) << ','
               << int{g.master(r, c)} << '\n';
        }
    }
    return os.str();
}

GridGeometry decode_geometry(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != "row,col,lat,lon,master") {
        throw DecodeError("header", "expected `row,col,lat,lon,master`");
    }
    struct Row {
        Index r, c;
        double lat, lon;
        int master;
    };
    std::vector<Row> rows;
    Index max_r = -1;
    Index max_c = -1;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> tok;
        std::size_t from = 0;
        for (std::size_t at; (at = line.find(',', from)) != std::string::npos; from = at + 1) {
            tok.push_back(line.substr(from, at - from));
        }
        tok.push_back(line.substr(from));
        Row row{};
        char* end = nullptr;
        bool ok = tok.size() == 5;
        if (ok) {
            row.r = std::strtoll(tok[0].c_str(), &end, 10);
            ok = ok && *end == '\0' && !tok[0].empty();
            row.c = std::strtoll(tok[1].c_str(), &end, 10);
            ok = ok && *end == '\0' && !tok[1].empty();
            row.lat = std::strtod(tok[2].c_str(), &end);
            ok = ok && *end == '\0' && !tok[2].empty();
            row.lon = std::strtod(tok[3].c_str(), &end);
            ok = ok && *end == '\0' && !tok[3].empty();
            row.master = static_cast<int>(std::strtol(tok[4].c_str(), &end, 10));
            ok = ok && *end == '\0' && !tok[4].empty();
        }
        if (!ok) throw DecodeError("row", "malformed line " + std::to_string(line_no));
        if (row.r < 0 || row.c < 0 || (row.master != 0 && row.master != 1)) {
            throw DecodeError("row", "invalid value on line " + std::to_string(line_no));
        }
        max_r = std::max(max_r, row.r);
        max_c = std::max(max_c, row.c);
        rows.push_back(row);
    }
    GridGeometry g;
    g.height = max_r + 1;
    g.width = max_c + 1;
    if (static_cast<Index>(rows.size()) != g.width * g.height) {
        throw DecodeError("dimension", "table does not cover a full rectangular grid");
    }
    g.lat = Plane<double>::Constant(g.height, g.width, std::numeric_limits<double>::quiet_NaN());
    g.lon = g.lat;
    g.master = MaskPlane::Zero(g.height, g.width);
    MaskPlane seen = MaskPlane::Zero(g.height, g.width);
    for (const Row& row : rows) {
        if (seen(row.r, row.c)) throw DecodeError("row", "duplicate cell");
        seen(row.r, row.c) = 1;
        g.lat(row.r, row.c) = row.lat;
        g.lon(row.r, row.c) = row.lon;
        g.master(row.r, row.c) = static_cast<std::uint8_t>(row.master);
    }
    return g;
}

void write_geometry(const std::filesystem::path& path, const GridGeometry& geometry) {
    write_file(path, encode_geometry(geometry));
}

GridGeometry read_geometry(const std::filesystem::path& path) {
    return decode_geometry(read_file(path));
}

}  // namespace gapnet
