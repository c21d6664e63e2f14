#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "causalrec/tensor.hpp"

namespace causalrec {

/// Named tensors plus a free-form config string.
///
/// On disk: "CRCKPT1", the config string, a manifest of (name, shape, offset)
/// entries, then one flat little-endian float64 payload. Round trips are
/// bit-exact.
struct Checkpoint {
  std::string config;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace causalrec
