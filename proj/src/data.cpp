#include "mrt/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include "mrt/error.hpp"

namespace mrt {

Pose MotionSequence::pose(std::size_t t) const {
  auto r = poses.row(t);
  return Pose{{r.begin(), r.end()}};
}

std::size_t Scene::steps() const {
  if (persons.empty()) throw InvalidInput("scene has no persons");
  return persons.front().steps();
}

std::size_t Scene::joints() const {
  if (persons.empty()) throw InvalidInput("scene has no persons");
  return persons.front().joints();
}

double Scene::frame_rate() const {
  if (persons.empty()) throw InvalidInput("scene has no persons");
  return persons.front().frame_rate;
}

void Scene::validate() const {
  if (persons.empty()) throw InvalidInput("scene " + id + " has no persons");
  const auto& first = persons.front();
  if (first.poses.rank() != 2 || first.poses.cols() % 3 != 0)
    throw InvalidInput("scene " + id + ": pose width must be a multiple of 3");
  for (std::size_t n = 0; n < persons.size(); ++n) {
    const auto& p = persons[n];
    if (p.poses.shape() != first.poses.shape()) {
      throw InvalidInput("scene " + id + ": person " + std::to_string(n) + " has shape " +
                         shape_string(p.poses.shape()) + ", person 0 has " +
                         shape_string(first.poses.shape()));
    }
    if (p.frame_rate != first.frame_rate)
      throw InvalidInput("scene " + id + ": frame rates differ between persons");
    if (!p.poses.all_finite())
      throw InvalidInput("scene " + id + ": person " + std::to_string(n) + " has non-finite coordinates");
  }
}

Scene Scene::window(std::size_t start, std::size_t count) const {
  if (count == 0 || start + count > steps()) {
    throw InvalidInput("scene window [" + std::to_string(start) + ", " +
                       std::to_string(start + count) + ") exceeds " + std::to_string(steps()) +
                       " steps");
  }
  Scene out{{}, source, id};
  for (const auto& p : persons) {
    Tensor w(count, p.poses.cols());
    std::copy_n(p.poses.row(start).data(), w.size(), w.data().data());
    out.persons.push_back({std::move(w), p.frame_rate});
  }
  return out;
}

Scene Scene::permuted(std::span<const std::size_t> order) const {
  if (order.size() != persons.size()) throw InvalidInput("permutation size does not match person count");
  Scene out{{}, source, id};
  for (auto i : order) out.persons.push_back(persons.at(i));
  return out;
}

std::vector<Tensor> Scene::histories() const {
  std::vector<Tensor> out;
  out.reserve(persons.size());
  for (const auto& p : persons) out.push_back(p.poses);
  return out;
}

// ---------------------------------------------------------------------------
// Scene files

namespace {

constexpr char kSceneMagic[8] = {'M', 'R', 'T', 'S', 'C', 'E', 'N', 'E'};
constexpr std::uint32_t kSceneVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "scene I/O assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ofstream& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }

  std::string get_string(const char* what) {
    const auto len = get<std::uint32_t>(what);
    need(len, what);
    std::string s(bytes_.data() + pos_, len);
    pos_ += len;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw ParseError(path_ + ": truncated " + what + " at byte " + std::to_string(pos_) +
                       " (need " + std::to_string(n) + " bytes, " +
                       std::to_string(bytes_.size() - pos_) + " left)");
    }
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const char* cursor() const { return bytes_.data() + pos_; }
  const std::string& path() const { return path_; }

 private:
  std::vector<char> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_scene(const std::filesystem::path& path, const Scene& scene) {
  scene.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
  const std::size_t J = scene.joints();
  const std::size_t N = scene.person_count();
  const std::size_t T = scene.steps();
  out.write(kSceneMagic, sizeof kSceneMagic);
  put(out, kSceneVersion);
  put(out, static_cast<std::uint32_t>(J));
  put(out, scene.frame_rate());
  put(out, static_cast<std::uint32_t>(N));
  put(out, static_cast<std::uint32_t>(T));
  put_string(out, scene.id);
  put_string(out, scene.source);
  std::vector<float> frame(N * 3 * J);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      auto row = scene.persons[n].poses.row(t);
      std::copy(row.begin(), row.end(), frame.begin() + static_cast<std::ptrdiff_t>(n * 3 * J));
    }
    out.write(reinterpret_cast<const char*>(frame.data()),
              static_cast<std::streamsize>(frame.size() * sizeof(float)));
  }
  if (!out) throw InvalidInput("write failed for " + path.string());
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open scene file " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}), path.string());

  r.need(sizeof kSceneMagic, "magic");
  if (std::memcmp(r.cursor(), kSceneMagic, sizeof kSceneMagic) != 0)
    throw ParseError(path.string() + ": not a scene file (bad magic at byte 0)");
  r.get<std::array<char, 8>>("magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kSceneVersion) {
    throw ParseError(path.string() + ": unsupported scene version " + std::to_string(version) +
                     " at byte 8");
  }
  const auto J = r.get<std::uint32_t>("joint count");
  const auto frame_rate = r.get<double>("frame rate");
  const auto N = r.get<std::uint32_t>("person count");
  const auto T = r.get<std::uint32_t>("step count");
  if (J == 0 || N == 0 || T == 0) {
    throw ParseError(path.string() + ": header declares an empty scene (J=" + std::to_string(J) +
                     ", N=" + std::to_string(N) + ", T=" + std::to_string(T) + ")");
  }
  if (!(frame_rate > 0.0) || !std::isfinite(frame_rate))
    throw ParseError(path.string() + ": invalid frame rate at byte 16");
  Scene scene;
  scene.id = r.get_string("scene id");
  scene.source = r.get_string("source name");

  const std::size_t expected = static_cast<std::size_t>(T) * N * J * 3;
  const std::size_t actual = r.remaining() / sizeof(float);
  if (r.remaining() != expected * sizeof(float)) {
    throw ParseError(path.string() + ": body size mismatch at byte " + std::to_string(r.pos()) +
                     ": header declares " + std::to_string(expected) + " coordinates (T=" +
                     std::to_string(T) + " N=" + std::to_string(N) + " J=" + std::to_string(J) +
                     "), file holds " + std::to_string(actual) +
                     (r.remaining() % sizeof(float) ? " plus a partial value" : ""));
  }
  for (std::size_t n = 0; n < N; ++n) scene.persons.push_back({Tensor(T, 3 * J), frame_rate});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t c = 0; c < 3 * J; ++c) {
        const std::size_t at = r.pos();
        const auto v = r.get<float>("coordinate");
        if (!std::isfinite(v)) {
          throw ParseError(path.string() + ": non-finite coordinate at byte " + std::to_string(at) +
                           " (t=" + std::to_string(t) + ", person " + std::to_string(n) + ")");
        }
        scene.persons[n].poses(t, c) = v;
      }
    }
  }
  scene.validate();
  return scene;
}

// ---------------------------------------------------------------------------
// Preprocessing

Scene preprocess(const Scene& scene, const PreprocessOptions& options) {
  scene.validate();
  const std::size_t src_joints = scene.joints();
  std::vector<std::size_t> map = options.joint_map;
  if (map.empty()) {
    map.resize(src_joints);
    for (std::size_t j = 0; j < src_joints; ++j) map[j] = j;
  }
  for (auto j : map) {
    if (j >= src_joints) {
      throw ConfigError("joint map index " + std::to_string(j) + " out of range for a " +
                        std::to_string(src_joints) + "-joint skeleton");
    }
  }
  if (options.root_joint >= map.size())
    throw ConfigError("root joint " + std::to_string(options.root_joint) + " not in selected joints");
  if (!(options.min_height > 0.0) || options.max_height < options.min_height)
    throw ConfigError("invalid height range");
  if (options.placement_area < 0.0) throw ConfigError("placement area must be >= 0");

  const std::size_t J = map.size();
  Scene out{{}, scene.source, scene.id};
  for (const auto& person : scene.persons) {
    Tensor poses(person.steps(), 3 * J);
    for (std::size_t t = 0; t < person.steps(); ++t)
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t a = 0; a < 3; ++a) poses(t, 3 * j + a) = person.poses(t, 3 * map[j] + a);

    double zmin = poses(0, 2);
    double zmax = poses(0, 2);
    for (std::size_t j = 0; j < J; ++j) {
      zmin = std::min(zmin, poses(0, 3 * j + 2));
      zmax = std::max(zmax, poses(0, 3 * j + 2));
    }
    const double height = zmax - zmin;
    double s = 1.0;
    if (height < options.min_height || height > options.max_height) {
      if (height <= 0.0)
        throw InvalidInput("scene " + scene.id + ": person has zero first-frame height; cannot scale");
      s = std::clamp(height, options.min_height, options.max_height) / height;
    }
    if (s != 1.0) {
      const std::array<double, 3> anchor = {poses(0, 3 * options.root_joint),
                                            poses(0, 3 * options.root_joint + 1),
                                            poses(0, 3 * options.root_joint + 2)};
      for (std::size_t t = 0; t < poses.rows(); ++t)
        for (std::size_t c = 0; c < poses.cols(); ++c)
          poses(t, c) = anchor[c % 3] + s * (poses(t, c) - anchor[c % 3]);
    }
    out.persons.push_back({std::move(poses), person.frame_rate});
  }

  std::mt19937_64 rng(options.seed);
  const double half = std::sqrt(options.placement_area) / 2.0;
  double dx = 0.0;
  double dy = 0.0;
  if (half > 0.0) {
    std::uniform_real_distribution<double> dist(-half, half);
    dx = dist(rng);
    dy = dist(rng);
  }
  if (dx != 0.0 || dy != 0.0) {
    for (auto& person : out.persons) {
      for (std::size_t t = 0; t < person.steps(); ++t) {
        for (std::size_t j = 0; j < J; ++j) {
          person.poses(t, 3 * j) += dx;
          person.poses(t, 3 * j + 1) += dy;
        }
      }
    }
  }
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generator

namespace {

struct Vec3 {
  double x, y, z;
};

// Standing pose in a body frame: x forward, y left, z up, feet at z = 0.
// 0 pelvis, 1 spine, 2 head, 3-5 left shoulder/elbow/wrist,
// 6-8 right shoulder/elbow/wrist, 9-11 left hip/knee/ankle, 12-14 right.
constexpr std::array<Vec3, 15> kHumanoid = {{
    {0.0, 0.0, 1.0},
    {0.0, 0.0, 1.3},
    {0.0, 0.0, 1.7},
    {0.0, 0.2, 1.45},
    {0.0, 0.25, 1.15},
    {0.0, 0.27, 0.88},
    {0.0, -0.2, 1.45},
    {0.0, -0.25, 1.15},
    {0.0, -0.27, 0.88},
    {0.0, 0.1, 0.95},
    {0.0, 0.1, 0.5},
    {0.0, 0.1, 0.05},
    {0.0, -0.1, 0.95},
    {0.0, -0.1, 0.5},
    {0.0, -0.1, 0.05},
}};

struct Walker {
  double x, y;
  double heading;
  double speed;       // nominal m/s
  double scale;       // body size
  double phase;       // gait phase
  double sway_amp;    // heading oscillation
  double sway_freq;   // Hz
  double sway_phase;
  double heading0;
  long partner = -1;
};

std::vector<Vec3> body_pose(std::size_t joints, double phase, double gait) {
  std::vector<Vec3> out(joints);
  if (joints == 15) {
    const double leg = 0.45 * gait * std::sin(phase);
    const double arm = -0.3 * gait * std::sin(phase);
    for (std::size_t j = 0; j < 15; ++j) out[j] = kHumanoid[j];
    const double bob = 0.02 * gait * std::abs(std::sin(phase));
    for (std::size_t j = 1; j < 9; ++j) out[j].z += bob;
    auto swing = [&](std::size_t root, std::size_t mid, std::size_t end, double angle,
                     double upper, double lower) {
      const Vec3 r = out[root];
      out[mid] = {r.x + upper * std::sin(angle), r.y, r.z - upper * std::cos(angle)};
      out[end] = {r.x + (upper + lower) * std::sin(angle), r.y,
                  r.z - (upper + lower) * std::cos(angle)};
    };
    swing(9, 10, 11, leg, 0.45, 0.45);
    swing(12, 13, 14, -leg, 0.45, 0.45);
    swing(3, 4, 5, arm, 0.3, 0.27);
    swing(6, 7, 8, -arm, 0.3, 0.27);
    return out;
  }
  for (std::size_t j = 0; j < joints; ++j) {
    const double frac = joints > 1 ? static_cast<double>(j) / static_cast<double>(joints - 1) : 0.0;
    const double a = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(joints);
    out[j] = {0.1 * std::cos(a) + 0.1 * gait * std::sin(phase + static_cast<double>(j)),
              0.1 * std::sin(a), joints > 1 ? 1.7 * (1.0 - frac) : 1.0};
  }
  // Root first and at pelvis height.
  if (joints > 1) out[0].z = 1.0;
  return out;
}

}  // namespace

Scene generate_synthetic(std::size_t persons, std::size_t steps, std::size_t joints,
                         std::uint64_t seed, const SyntheticOptions& options) {
  if (persons == 0 || steps == 0 || joints == 0)
    throw InvalidInput("generate_synthetic: persons, steps and joints must be >= 1");
  if (!(options.frame_rate > 0.0) || options.min_speed < 0.0 || options.max_speed < options.min_speed)
    throw ConfigError("generate_synthetic: invalid speed or frame-rate options");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double side = std::sqrt(options.area);
  const double fr = options.frame_rate;

  std::vector<Walker> walkers(persons);
  for (std::size_t n = 0; n < persons; ++n) {
    Walker& w = walkers[n];
    w.x = (unit(rng) - 0.5) * side;
    w.y = (unit(rng) - 0.5) * side;
    w.heading0 = unit(rng) * 2.0 * std::numbers::pi;
    w.heading = w.heading0;
    w.speed = options.min_speed + unit(rng) * (options.max_speed - options.min_speed);
    w.scale = 0.95 + unit(rng) * 0.2;
    w.phase = unit(rng) * 2.0 * std::numbers::pi;
    w.sway_amp = unit(rng) * 0.6;
    w.sway_freq = 0.05 + unit(rng) * 0.15;
    w.sway_phase = unit(rng) * 2.0 * std::numbers::pi;
  }
  for (std::size_t i = 0; i < options.interacting_pairs && 2 * i + 1 < persons; ++i) {
    Walker& a = walkers[2 * i];
    Walker& b = walkers[2 * i + 1];
    a.partner = static_cast<long>(2 * i + 1);
    b.partner = static_cast<long>(2 * i);
    // Start 3-5 m apart so the approach is visible within a few seconds.
    const double dist = 3.0 + 2.0 * unit(rng);
    const double angle = unit(rng) * 2.0 * std::numbers::pi;
    b.x = a.x + dist * std::cos(angle);
    b.y = a.y + dist * std::sin(angle);
  }

  Scene scene;
  scene.source = "synthetic";
  scene.id = "synthetic-" + std::to_string(seed);
  for (std::size_t n = 0; n < persons; ++n) scene.persons.push_back({Tensor(steps, 3 * joints), fr});

  std::vector<double> step_speed(persons, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    // Write poses for step t, then advance every walker.
    for (std::size_t n = 0; n < persons; ++n) {
      const Walker& w = walkers[n];
      const double gait = options.max_speed > 0.0 ? step_speed[n] / options.max_speed : 0.0;
      const auto body = body_pose(joints, w.phase, t == 0 ? w.speed / std::max(options.max_speed, 1e-9) : gait);
      const double c = std::cos(w.heading);
      const double s = std::sin(w.heading);
      for (std::size_t j = 0; j < joints; ++j) {
        const Vec3 p{body[j].x * w.scale, body[j].y * w.scale, body[j].z * w.scale};
        scene.persons[n].poses(t, 3 * j) = w.x + c * p.x - s * p.y;
        scene.persons[n].poses(t, 3 * j + 1) = w.y + s * p.x + c * p.y;
        scene.persons[n].poses(t, 3 * j + 2) = p.z;
      }
    }
    const double time = static_cast<double>(t + 1) / fr;
    std::vector<Walker> next = walkers;
    for (std::size_t n = 0; n < persons; ++n) {
      const Walker& w = walkers[n];
      Walker& nw = next[n];
      double speed = w.speed;
      if (w.partner >= 0) {
        const Walker& p = walkers[static_cast<std::size_t>(w.partner)];
        const double dx = p.x - w.x;
        const double dy = p.y - w.y;
        const double d = std::hypot(dx, dy);
        nw.heading = std::atan2(dy, dx);
        // Each walker covers at most half the remaining gap beyond the stop distance.
        speed = std::min(w.speed, std::max(0.0, (d - options.stop_distance) / 2.0) * fr);
      } else {
        nw.heading = w.heading0 +
                     w.sway_amp * std::sin(2.0 * std::numbers::pi * w.sway_freq * time + w.sway_phase);
      }
      step_speed[n] = speed;
      nw.x = w.x + speed / fr * std::cos(nw.heading);
      nw.y = w.y + speed / fr * std::sin(nw.heading);
      nw.phase = w.phase + 2.0 * std::numbers::pi * (speed / 1.2) / fr;
    }
    walkers = std::move(next);
  }
  scene.validate();
  return scene;
}

// ---------------------------------------------------------------------------
// Corpus manifests

void write_manifest(const std::filesystem::path& dir, const CorpusManifest& manifest) {
  nlohmann::json j = {{"version", 1},
                      {"train", manifest.train},
                      {"test", manifest.test},
                      {"info", manifest.info}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw InvalidInput("cannot write manifest in " + dir.string());
  out << j.dump(2) << '\n';
}

CorpusManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("version", 0) != 1) throw ParseError(path.string() + ": unsupported manifest version");
    CorpusManifest m;
    m.train = j.at("train").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
    m.info = j.value("info", nlohmann::json::object());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<Scene> load_split(const std::filesystem::path& dir, const std::string& split) {
  const CorpusManifest m = read_manifest(dir);
  const std::vector<std::string>* files = nullptr;
  if (split == "train") files = &m.train;
  else if (split == "test") files = &m.test;
  else throw ConfigError("unknown split " + split + " (expected train or test)");
  std::vector<Scene> scenes;
  for (const auto& f : *files) scenes.push_back(load_scene(dir / f));
  return scenes;
}

}  // namespace mrt
