#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "nightcast/tensor.hpp"

namespace nightcast {

// Single-file archive: a JSON metadata stanza plus named parameter arrays.
struct Checkpoint {
  nlohmann::json meta;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace nightcast
