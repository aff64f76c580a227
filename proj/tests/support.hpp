#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "mrt/data.hpp"
#include "mrt/model.hpp"
#include "mrt/params.hpp"
#include "mrt/tensor.hpp"

namespace mrt::test {

/// Deterministic weights matching tests/oracles/golden.py::formula.
inline void fill_formula(ParamTensor& p) {
  int s = 0;
  for (unsigned char c : p.name) s += c;
  s %= 97;
  const auto ends_with = [&](const std::string& suffix) {
    return p.name.size() >= suffix.size() &&
           p.name.compare(p.name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  const double base = ends_with(".gamma") ? 1.0 : 0.0;
  Tensor& v = p.value;
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j)
      v(i, j) = base + 0.3 * std::sin(0.37 * static_cast<double>(i + 1) +
                                      0.91 * static_cast<double>(j + 1) + 0.13 * s);
}

inline void fill_formula(const ParamSet& params) {
  for (ParamTensor* p : params) fill_formula(*p);
}

inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(rows, cols);
  for (double& x : t.data()) x = u(rng);
  return t;
}

/// The sequence from golden.py::walk.
inline Tensor formula_walk(std::size_t steps, std::size_t joints) {
  Tensor t(steps, 3 * joints);
  for (std::size_t r = 0; r < steps; ++r)
    for (std::size_t c = 0; c < 3 * joints; ++c) {
      const double tr = static_cast<double>(r), cc = static_cast<double>(c);
      t(r, c) = 0.05 * tr * (c % 3 == 0 ? 2.0 : 1.0) + 0.2 * std::sin(0.4 * tr + 0.7 * cc) + 0.1 * cc;
    }
  return t;
}

/// Random scene with every coordinate drawn independently.
inline Scene random_scene(std::size_t persons, std::size_t steps, std::size_t joints,
                          std::mt19937_64& rng, double spread = 2.0) {
  Scene s;
  s.id = "random";
  for (std::size_t n = 0; n < persons; ++n) {
    MotionSequence m;
    m.poses = random_tensor(steps, 3 * joints, rng, -spread, spread);
    s.persons.push_back(std::move(m));
  }
  return s;
}

/// The gradient-check micro configuration.
inline ModelConfig micro_config() {
  ModelConfig c;
  c.joints = 3;
  c.history = 4;
  c.k_out = 4;
  c.layers = 1;
  c.heads = 2;
  c.d_model = 8;
  c.d_ff = 8;
  c.frame_rate = 15.0;
  return c;
}

// Brute-force metric oracles: straight loops over (time, joint, coordinate).

inline double oracle_mpjpe(const Tensor& p, const Tensor& g, std::size_t steps) {
  const std::size_t joints = p.cols() / 3;
  double total = 0.0;
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t j = 0; j < joints; ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = p(t, 3 * j + c) - g(t, 3 * j + c);
        sq += d * d;
      }
      total += std::sqrt(sq);
    }
  return total / static_cast<double>(steps * joints);
}

inline double oracle_root_error(const Tensor& p, const Tensor& g, std::size_t steps,
                                std::size_t root) {
  double total = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    double sq = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = p(t, 3 * root + c) - g(t, 3 * root + c);
      sq += d * d;
    }
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(steps);
}

inline double oracle_pose_error(const Tensor& p, const Tensor& g, std::size_t steps,
                                std::size_t root) {
  const std::size_t joints = p.cols() / 3;
  double total = 0.0;
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t j = 0; j < joints; ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double a = p(t, 3 * j + c) - p(t, 3 * root + c);
        const double b = g(t, 3 * j + c) - g(t, 3 * root + c);
        sq += (a - b) * (a - b);
      }
      total += std::sqrt(sq);
    }
  return total / static_cast<double>(steps * joints);
}

inline double oracle_movement(const Tensor& s) {
  const std::size_t joints = s.cols() / 3;
  const std::size_t last = s.rows() - 1;
  double total = 0.0;
  for (std::size_t j = 0; j < joints; ++j) {
    double sq = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = s(last, 3 * j + c) - s(0, 3 * j + c);
      sq += d * d;
    }
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(joints);
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mrt-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace mrt::test
