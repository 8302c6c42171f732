#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ediv/nn/network.hpp"

// EDIV checkpoint, version 1. All integers little-endian.
//
//   "EDIV"                      4-byte magic
//   u8   version                = 1
//   u32  C, H, W                network input shape
//   u32  layer_count
//   layer_count x { u8 kind, u32 in, u32 out, u32 kernel, u32 pad }
//   u32  param_count
//   param_count x {
//     u16 name_len, name bytes
//     u8  rank, u32 dims[rank]
//     f64 values[prod(dims)]    IEEE-754 binary64, little-endian
//     u8  has_mask
//     if has_mask: ceil(n/8) bytes, element i is bit (i % 8) of byte i / 8
//   }
//
// The parameter table must match what the layer table implies (names, order,
// shapes); load rejects anything else. save/load round-trips bit-exactly.
namespace ediv {

std::vector<std::uint8_t> encode_checkpoint(const Network& net);
Network decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace ediv
