#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrt/tensor.hpp"

namespace mrt {

/// One person's absolute joint coordinates at one step, laid out
/// [x0, y0, z0, x1, y1, z1, ...] in meters. z is up.
struct Pose {
  std::vector<double> coords;

  std::size_t joints() const { return coords.size() / 3; }
};

/// Time-ordered poses of one person, stored as a steps x 3J tensor.
struct MotionSequence {
  Tensor poses;
  double frame_rate = 15.0;

  std::size_t steps() const { return poses.rows(); }
  std::size_t joints() const { return poses.cols() / 3; }
  Pose pose(std::size_t t) const;
};

/// N persons on a shared clock.
struct Scene {
  std::vector<MotionSequence> persons;
  std::string source = "unknown";
  std::string id;

  std::size_t person_count() const { return persons.size(); }
  std::size_t steps() const;
  std::size_t joints() const;
  double frame_rate() const;

  /// Throws InvalidInput unless N >= 1, every sequence has the same length,
  /// joint count and frame rate, and every coordinate is finite.
  void validate() const;
  /// Steps [start, start + count) of every person.
  Scene window(std::size_t start, std::size_t count) const;
  /// Same scene with persons reordered: result.persons[i] = persons[order[i]].
  Scene permuted(std::span<const std::size_t> order) const;
  /// History tensors for every person, in person order.
  std::vector<Tensor> histories() const;
};

/// Scene file, version 1. Little-endian throughout:
///   bytes 0-7    magic "MRTSCENE"
///   uint32       version (1)
///   uint32       J
///   float64      frame rate
///   uint32       N
///   uint32       T
///   uint32 + n   scene id (length-prefixed UTF-8)
///   uint32 + n   source name
///   float32[T*N*J*3] coordinates, time-major then person, joint, xyz
void save_scene(const std::filesystem::path& path, const Scene& scene);
/// Throws ParseError with the byte offset of the first problem.
Scene load_scene(const std::filesystem::path& path);

/// Joint selection, height normalization and random x-y placement.
struct PreprocessOptions {
  std::vector<std::size_t> joint_map;  // source joint index per output joint
  std::uint64_t seed = 0;
  double placement_area = 25.0;  // m^2; 0 disables placement
  double min_height = 1.5;
  double max_height = 2.0;
  /// Index into the *output* skeleton used as the scaling anchor.
  std::size_t root_joint = 0;
};

/// Selects joints, scales each person about its first-frame root so the
/// first-frame vertical extent falls in [min_height, max_height] (heights
/// already inside the range are untouched), then shifts the whole scene by
/// one uniform x-y offset inside a square of `placement_area`.
Scene preprocess(const Scene& scene, const PreprocessOptions& options);

struct SyntheticOptions {
  double frame_rate = 15.0;
  double min_speed = 0.6;  // m/s
  double max_speed = 1.4;
  double area = 25.0;      // m^2 of the square persons start in
  /// Persons 2i and 2i+1 walk toward each other and stop face to face
  /// for i < interacting_pairs.
  std::size_t interacting_pairs = 1;
  double stop_distance = 1.0;
};

/// Procedural walkers with smooth headings and a sinusoidal gait.
/// Deterministic per seed. J = 15 uses a humanoid layout with the pelvis
/// as joint 0; other J values use a generic column skeleton rooted at 0.
Scene generate_synthetic(std::size_t persons, std::size_t steps, std::size_t joints,
                         std::uint64_t seed, const SyntheticOptions& options = {});

/// A corpus is a directory of scene files plus "manifest.json":
///   {"version": 1, "train": [file, ...], "test": [file, ...], "info": {...}}
/// File names are relative to the directory.
struct CorpusManifest {
  std::vector<std::string> train;
  std::vector<std::string> test;
  nlohmann::json info = nlohmann::json::object();
};

void write_manifest(const std::filesystem::path& dir, const CorpusManifest& manifest);
CorpusManifest read_manifest(const std::filesystem::path& dir);
/// Loads every scene of `split` ("train" or "test").
std::vector<Scene> load_split(const std::filesystem::path& dir, const std::string& split);

/// Pelvis index of the 15-joint layout used by the generator.
inline constexpr std::size_t kDefaultRootJoint = 0;

}  // namespace mrt
