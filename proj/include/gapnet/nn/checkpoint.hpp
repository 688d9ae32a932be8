#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gapnet::nn {

struct NamedArray {
    std::string name;
    std::vector<std::uint32_t> shape;
    std::vector<double> data;
};

// GPAR layout, little-endian:
//   "GPAR" | u16 version | u32 count
//   | count x (u32 name_len | name | u32 ndim | u32 dims[ndim] | f64 payload[prod(dims)])
std::string encode_params(const std::vector<NamedArray>& arrays);
std::vector<NamedArray> decode_params(std::string_view bytes);

void write_params(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_params(const std::filesystem::path& path);

}  // namespace gapnet::nn
