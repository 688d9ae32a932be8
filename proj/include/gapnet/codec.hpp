#pragma once

#include "gapnet/grid.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace gapnet {

/// Raised by the GCUB and geometry readers. `field()` names the header field
/// or section that failed to decode.
class DecodeError : public std::runtime_error {
public:
    DecodeError(std::string field, const std::string& what)
        : std::runtime_error("decode error (" + field + "): " + what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

constexpr std::uint16_t kGcubVersion = 1;

// GCUB layout, all little-endian:
//   "GCUB" | u16 version | u32 days | u32 width | u32 height
//   | f32 values[days][height][width]
//   | per day: ceil(width*height/8) bytes of mask bits, LSB first
std::string encode_cube(const AnomalyCube& cube);
AnomalyCube decode_cube(std::string_view bytes);

void write_cube(const std::filesystem::path& path, const AnomalyCube& cube);
AnomalyCube read_cube(const std::filesystem::path& path);

void write_mask(const std::filesystem::path& path, const MaskCube& mask);
MaskCube read_mask(const std::filesystem::path& path);

/// CSV table with header `row,col,lat,lon,master`, one line per cell.
std::string encode_geometry(const GridGeometry& geometry);
GridGeometry decode_geometry(std::string_view text);

void write_geometry(const std::filesystem::path& path, const GridGeometry& geometry);
GridGeometry read_geometry(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace gapnet
