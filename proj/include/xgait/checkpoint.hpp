#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xgait/nn/tensor.hpp"

namespace xgait {

// Single binary container: versioned header, named tensor table (params,
// buffers, optimizer state), rng states and the config fingerprint.
// Round-trips are bit-exact.
struct Checkpoint {
  uint64_t iteration = 0;
  std::string fingerprint;

  struct Entry {
    uint8_t kind = 0;  // 0 param, 1 buffer, 2 optimizer state
    std::vector<int> shape;
    std::vector<float> data;
  };
  std::map<std::string, Entry> tensors;
  std::map<std::string, std::string> rng_states;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot / restore of a model's parameters and buffers.
void pack_model(const nn::ParamRefs<float>& refs, Checkpoint& ckpt);
void unpack_model(const Checkpoint& ckpt, nn::ParamRefs<float>& refs);

}  // namespace xgait
