#pragma once

// TAVS1 tensor container.
//
//   TAVS1\n
//   name <id>\n dtype f64\n ndim <k>\n dims <d1> ... <dk>\n \n <payload>
//   (repeated per tensor)
//
// Payload is k-dim row-major little-endian IEEE-754 binary64.

#include "transavs/tensor.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace transavs {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

std::string encode_tavs(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_tavs(const std::string& bytes);

void write_tavs(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tavs(const std::filesystem::path& path);

/// Lookup by name; throws IoError naming the missing entry.
const Tensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);
const Tensor* try_find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace transavs
