#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrt/attention.hpp"
#include "mrt/data.hpp"
#include "mrt/model.hpp"

namespace mrt {

// Motion metrics. `pred` and `truth` are steps x 3J absolute poses; every
// metric averages over the first `horizon_steps` rows. Results are meters.

/// Mean per-joint Euclidean error, no alignment.
double mpjpe(const Tensor& pred, const Tensor& truth, std::size_t horizon_steps);
/// Mean Euclidean error of the root joint alone.
double root_error(const Tensor& pred, const Tensor& truth, std::size_t horizon_steps,
                  std::size_t root_joint = kDefaultRootJoint);
/// MPJPE after translating both skeletons so their roots coincide per frame.
double pose_error(const Tensor& pred, const Tensor& truth, std::size_t horizon_steps,
                  std::size_t root_joint = kDefaultRootJoint);
/// Mean over joints of |joint at last step - joint at first step|.
double movement_distance(const Tensor& seq);

struct HorizonMetrics {
  double seconds = 0.0;
  std::size_t steps = 0;
  bool available = false;  // false when the prediction is shorter than the horizon
  double mpjpe = 0.0;
  double root_error = 0.0;
  double pose_error = 0.0;
};

struct SceneMetrics {
  std::string scene_id;
  std::size_t persons = 0;
  std::vector<HorizonMetrics> horizons;
};

/// Per-horizon metrics (1 s, 2 s, 3 s by default) per scene and averaged
/// over every evaluated person of the corpus.
struct MetricReport {
  std::vector<SceneMetrics> scenes;
  std::vector<HorizonMetrics> corpus;
  std::size_t persons = 0;
};

struct EvalOptions {
  std::vector<double> horizons_seconds = {1.0, 2.0, 3.0};
  std::size_t root_joint = kDefaultRootJoint;
};

/// Compares predicted scenes with ground-truth future scenes pairwise.
/// Throws InvalidInput listing the lengths when shapes disagree.
MetricReport evaluate(std::span<const Scene> predictions, std::span<const Scene> truths,
                      const EvalOptions& options = {});

void write_report_csv(const std::filesystem::path& path, const MetricReport& report);
nlohmann::json report_json(const MetricReport& report);

/// Start-to-end movement distribution.
struct MovementHistogram {
  std::string label;
  std::vector<double> edges;  // bins + 1 edges, meters
  std::vector<std::size_t> counts;
};

/// Uniform bins over [0, max(values)]; a zero maximum gives a single
/// zero-width bin span of [0, 1e-9].
MovementHistogram movement_histogram(std::span<const double> values, std::string label,
                                     std::size_t bins = 50);
/// movement_distance for every person of every scene.
std::vector<double> movement_distances(std::span<const Scene> scenes);
void write_histogram_csv(const std::filesystem::path& path, const MovementHistogram& histogram);

/// Decoder attention of one queried person in one layer.
struct AttentionTable {
  std::size_t person = 0;
  std::size_t layer = 0;
  std::vector<TokenLabel> keys;
  Tensor raw;      // heads x keys, rows as captured (sum to 1 over all keys)
  Tensor display;  // local and global segments each renormalized per row
};

/// Throws UnsupportedOperation if `chunk` carries no attention records.
AttentionTable attention_table(const PredictionChunk& chunk, std::size_t person,
                               std::size_t layer);
/// One row per head with a label header: source:person:time per column.
void write_attention_csv(const std::filesystem::path& path, const AttentionTable& table,
                         bool display = true);

/// Cosine similarity between persons' flattened global-segment display rows.
Tensor attention_similarity(std::span<const AttentionTable> tables);

/// Attention records as JSON: {"passes": [[{"person", "layers": [{"heads",
/// "keys"}]}]]}. Used to carry records from prediction to export.
nlohmann::json attention_records_json(const std::vector<std::vector<PredictionChunk>>& passes);
/// Rebuilds chunks that carry only attention (offsets/poses are not stored).
std::vector<std::vector<PredictionChunk>> attention_records_from_json(const nlohmann::json& j);

}  // namespace mrt
