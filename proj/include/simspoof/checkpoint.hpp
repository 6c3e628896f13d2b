#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "simspoof/nn.hpp"

namespace simspoof {

// Binary layout, little endian:
//   "SIMSPOOF" u32 version, u32 n + config text,
//   u32 count, then per tensor: u32 n + name, u32 ndim, u32 dims..., f64 values.
struct CheckpointData {
  std::string config_text;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> values;
};

void save_checkpoint(std::ostream& out, const std::string& config_text, const ParameterSet& params);
void save_checkpoint(const std::string& path, const std::string& config_text, const ParameterSet& params);
CheckpointData read_checkpoint(std::istream& in);
CheckpointData read_checkpoint(const std::string& path);

// Copies values into `params`. Every tensor must exist on both sides with the
// same shape; mismatches throw naming the tensor.
void restore_parameters(const CheckpointData& data, ParameterSet& params);

}  // namespace simspoof
