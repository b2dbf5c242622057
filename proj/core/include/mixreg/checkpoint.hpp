#pragma once

#include <string>
#include <vector>

#include "mixreg/dataset.hpp"
#include "mixreg/net.hpp"
#include "mixreg/param.hpp"

namespace mixreg {

/// Pretrained model snapshot plus the source validation split it was
/// selected on, so finetuning can measure source retention without the
/// original data.
struct Checkpoint {
  NetworkSpec spec;
  ParamVector params;
  double source_val_accuracy = 0.0;
  LabeledData source_validation;
};

// Binary layout, all integers and floats little-endian:
//   "MIXRGCKP" | u32 version | spec | f64 accuracy | u64 n, f64[n] params |
//   u64 rows, u64 cols, f64[rows*cols] inputs | u64 classes, u32[rows] labels |
//   u64 FNV-1a checksum of every preceding byte
inline constexpr char kCheckpointMagic[8] = {'M', 'I', 'X', 'R', 'G', 'C', 'K', 'P'};
inline constexpr unsigned kCheckpointVersion = 1;

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mixreg
