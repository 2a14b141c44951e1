#pragma once

// EBLT binary tensor format: "EBLT", u8 ndim, ndim x u32 LE extents, row-major f32 LE payload.

#include <filesystem>
#include <iosfwd>

#include "ebseg/tensor.hpp"

namespace ebseg {

void write_eblt(std::ostream& os, const Tensor<float>& t);
Tensor<float> read_eblt(std::istream& is);

void save_eblt(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> load_eblt(const std::filesystem::path& path);

}  // namespace ebseg
