#pragma once

// Checkpoint file: a text manifest (format version, canonical config and its
// hash, step, random stream states, tensor table) terminated by an `end` line,
// followed by the raw little-endian f64 payload of every tensor in manifest
// order.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "soflow/network.hpp"
#include "soflow/tensor.hpp"

namespace soflow::harness {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  std::string config_text;  // canonical form
  std::uint64_t config_hash = 0;
  std::int64_t step = 0;
  // Engine states as written by operator<<, keyed by stream name.
  std::map<std::string, std::string> streams;
  nn::ModelParams live;
  nn::ModelParams ema;
  std::int64_t adam_steps = 0;
  std::vector<Tensor> adam_m;
  std::vector<Tensor> adam_v;
};

std::string serialize(const Checkpoint& ckpt);
// Rejects unknown versions, truncated payloads and a config whose hash does not
// match the recorded one.
Checkpoint deserialize(std::string_view bytes);

// Written to `path.tmp` and renamed into place.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Writes `contents` to `path` via a temporary file and rename.
void write_file_atomic(const std::string& path, std::string_view contents);
std::string read_file(const std::string& path);

}  // namespace soflow::harness
