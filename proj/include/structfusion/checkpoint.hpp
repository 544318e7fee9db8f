#pragma once

// Text checkpoint format (version 1):
//
//   structfusion-checkpoint 1
//   meta <key> <value...>            zero or more header lines
//   tensor <name> <rows> <cols>
//   <cols hex-float values>          one line per row, row-major
//   ...
//   end
//
// Values are written with printf("%a") so a save/load cycle is exact. Names
// are dotted paths such as "nlg.decoder.W".

#include "structfusion/autodiff.hpp"

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace structfusion {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Matrix>> tensors;

  const std::string* find_meta(std::string_view key) const;
  std::string meta_or(std::string_view key, std::string fallback) const;
};

Checkpoint capture(std::span<Parameter* const> params,
                   std::vector<std::pair<std::string, std::string>> meta = {});

/// Copies tensor values into parameters with matching names. Every parameter
/// must be present with the same shape.
void restore(const Checkpoint& ckpt, std::span<Parameter* const> params);

std::string serialize(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Serialised bytes of the given parameters only; used for bit-identity checks.
std::string parameter_bytes(std::span<Parameter* const> params);

}  // namespace structfusion
