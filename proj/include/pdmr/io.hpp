#pragma once

#include "pdmr/core.hpp"
#include "pdmr/nn.hpp"
#include "pdmr/quant.hpp"
#include "pdmr/sim.hpp"

#include <filesystem>
#include <optional>
#include <string>

// Little-endian binary containers. Every variable-size block carries its byte
// length so truncation and size mismatches are caught on load (DataError).
//
// Dataset  "PDMR0001": u32 n_pe, n_ro, n_c, rate, offset; f64 sigma; u64 seed;
//   then four sections, each a u64 byte length followed by the payload:
//   ground truth (complex64), coil maps (complex64, coil-major),
//   mask (u32 count, u32 rows), k-space (complex64, coil-major, M×n_ro each).
// Weights  "PDMW0001": u32 n_blocks, channels, kernel; f64 residual_scale;
//   u32 n_mu, f64 × n_mu; u8 shared_mu; u8 quantized; u32 record count; records of
//   u32 name length, name, u8 dtype (0 f32, 1 i8, 2 i32), u32 ndim, u32 dims,
//   raw data, and for i8/i32 an f64 scale and i32 zero point. Activation
//   parameters of a quantized network are zero-element i8 records "act.<point>".
// Image    "PDMI0001": u32 n_pe, n_ro; u64 byte length; complex64 data.

namespace pdmr {

std::string serialize_dataset(Dataset const &d);
Dataset deserialize_dataset(std::string const &bytes);
void write_dataset(std::filesystem::path const &path, Dataset const &d);
Dataset read_dataset(std::filesystem::path const &path);

std::string serialize_weights(WeightStore const &w);
std::string serialize_weights(QuantizedWeightStore const &w);

struct LoadedWeights
{
  std::optional<WeightStore> fp32;
  std::optional<QuantizedWeightStore> int8;
};

LoadedWeights deserialize_weights(std::string const &bytes);
void write_weights(std::filesystem::path const &path, WeightStore const &w);
void write_weights(std::filesystem::path const &path, QuantizedWeightStore const &w);
LoadedWeights read_weights(std::filesystem::path const &path);

std::string serialize_image(ComplexImage const &img);
ComplexImage deserialize_image(std::string const &bytes);
void write_image(std::filesystem::path const &path, ComplexImage const &img);
ComplexImage read_image(std::filesystem::path const &path);

std::string read_file(std::filesystem::path const &path);
void write_file(std::filesystem::path const &path, std::string const &bytes);

} // namespace pdmr
