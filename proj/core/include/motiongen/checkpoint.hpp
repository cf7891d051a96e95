#pragma once

#include <map>
#include <string>

#include "motiongen/tensor.hpp"

namespace motiongen {

// Named-tensor archive, the on-disk body of every checkpoint.
//
//   magic "MGTA0001" | u32 count | count x entry
//   entry: u32 name_len | name | u32 rows | u32 cols | rows*cols f64
//
// All integers and doubles are little-endian; entries are written in name
// order. Doubles round-trip bit-exactly, so save + load is an identity.
void save_tensor_archive(const std::string& path,
                         const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_tensor_archive(const std::string& path);

}  // namespace motiongen
