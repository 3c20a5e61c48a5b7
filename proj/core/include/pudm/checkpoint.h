#pragma once

#include <string>

#include "pudm/network.h"
#include "pudm/params.h"

namespace pudm {

// Everything a checkpoint carries besides the tensors themselves.
struct CheckpointMeta {
  NetworkConfig cfg;
  std::string preset = "desk";
  int T = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
};

// Binary container: 8-byte magic "PUDMCKPT", u32 format version, u32
// config-text length, config text (key=value lines mirroring
// CheckpointMeta and NetworkConfig fields), u64 tensor count, then per
// tensor (sorted by name): u32 name length, name, u32 rows, u32 cols,
// rows*cols little-endian 32-bit floats. Atomic write.
void save_checkpoint(const ParameterStore& ps, const CheckpointMeta& meta,
                     const std::string& path);

// Rebuilds the parameter set from the stored config, then overwrites
// every tensor from the file. The file must contain exactly the tensors
// the config implies, with matching shapes; any mismatch is an error
// naming the offending tensor. `ps` must be empty.
CheckpointMeta load_checkpoint(const std::string& path, ParameterStore& ps);

std::string serialize_meta(const CheckpointMeta& meta);
CheckpointMeta parse_meta(const std::string& text);

}  // namespace pudm
