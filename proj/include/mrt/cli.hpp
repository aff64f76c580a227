#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "mrt/model.hpp"
#include "mrt/training.hpp"

namespace mrt::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kNumericalAbort = 3,
};

/// Everything `train` needs. Serialized as
///   {"model": {...}, "train": {...}, "data_dir": "...", "out_dir": "...",
///    "seed": n, "batch_size_auto": bool}
/// Missing keys keep their defaults.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data_dir = "corpus";
  std::string out_dir = "run";
  /// Pick batch size from the corpus: 32 for up to 3 persons, 8 above.
  bool batch_size_auto = true;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies MRT_SEED, MRT_MAX_STEPS, MRT_BATCH_SIZE, MRT_DATA_DIR and
/// MRT_OUT_DIR when set.
void apply_env_overrides(RunConfig& config);

/// Entry point shared by the `mrt` binary and the tests.
int run(int argc, const char* const* argv);

}  // namespace mrt::cli
