#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mrt/optim.hpp"
#include "mrt/params.hpp"

namespace mrt {

/// Named tensors plus a JSON metadata header.
///
/// On disk: the 8-byte magic "MRTARCH1", a little-endian uint64 header
/// length, the UTF-8 JSON header, then every tensor's values as
/// little-endian float32 in header order. The header lists each tensor's
/// name and shape under "tensors" and carries caller metadata under "meta".
/// Values are stored at 32-bit; loading and re-saving is bit-exact.
struct Archive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
  void put(std::string name, const Tensor& value);
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

/// Adds every parameter value under `prefix + name`.
void store_params(Archive& archive, const ParamSet& params, const std::string& prefix = "");
/// Copies values back; throws ConfigError on a missing name or shape mismatch.
void restore_params(const Archive& archive, const ParamSet& params, const std::string& prefix = "");

/// Adam moments and counters. Hyperparameters are written to meta under
/// `prefix`; moments as "<prefix>.m.<param>" / "<prefix>.v.<param>".
void store_adam(Archive& archive, const AdamState& state, const std::string& prefix);
/// Leaves `state` untouched when the archive has no entry for `prefix`.
void restore_adam(const Archive& archive, AdamState& state, const std::string& prefix);

}  // namespace mrt
