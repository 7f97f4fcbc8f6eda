#pragma once

#include <map>
#include <string>

#include "splitner/nn.hpp"
#include "splitner/tensor.hpp"

namespace splitner {

// Weight files: the magic "SPNER1", then one record per tensor in sorted name
// order, then a u64 record count. Each record is
//   name_len:u64 | name bytes | rank:u64 | dims:u64 each | payload:f32 each
// with all integers little-endian and payloads IEEE-754 single precision.
// Saving the same store twice yields byte-identical files.

void save_checkpoint(const ParamStore<float>& params, const std::string& path);

// Reads every record; throws on bad magic, truncation, or a record count that
// disagrees with the footer.
std::map<std::string, Tensor<float>> load_checkpoint(const std::string& path);

// Overwrites store values from `loaded`. Names and shapes must match exactly;
// missing or extra tensors are reported by name.
void apply_checkpoint(ParamStore<float>& params,
                      const std::map<std::string, Tensor<float>>& loaded);

}  // namespace splitner
