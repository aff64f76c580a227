#include "mrt/transforms.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "mrt/error.hpp"

namespace mrt {

DctPlan::DctPlan(std::size_t n) : length(n), basis(n, n) {
  if (n == 0) throw InvalidInput("DCT length must be >= 1");
  const double dn = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double alpha = k == 0 ? std::sqrt(1.0 / dn) : std::sqrt(2.0 / dn);
    for (std::size_t t = 0; t < n; ++t) {
      basis(k, t) = alpha * std::cos(std::numbers::pi * (2.0 * static_cast<double>(t) + 1.0) *
                                     static_cast<double>(k) / (2.0 * dn));
    }
  }
}

const DctPlan& dct_plan(std::size_t length) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<const DctPlan>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[length];
  if (!slot) slot = std::make_unique<const DctPlan>(length);
  return *slot;
}

Tensor dct_forward(const Tensor& seq) { return matmul(dct_plan(seq.rows()).basis, seq); }

Tensor dct_inverse(const Tensor& coeffs) {
  return matmul_tn(dct_plan(coeffs.rows()).basis, coeffs);
}

Var dct_forward(const Var& seq) {
  Tape& tape = seq.tape();
  return matmul(tape.constant(dct_plan(seq.rows()).basis), seq);
}

Var dct_inverse(const Var& coeffs) {
  Tape& tape = coeffs.tape();
  return matmul(tape.constant(dct_plan(coeffs.rows()).basis.transposed()), coeffs);
}

Tensor temporal_pe(std::size_t length, std::size_t dim) {
  if (dim % 2 != 0) throw ConfigError("temporal positional encoding needs an even width, got " +
                                      std::to_string(dim));
  Tensor pe(length, dim);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) / freq;
      pe(pos, i) = std::sin(angle);
      pe(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

double spe_value(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() % 3 != 0) {
    throw DimensionError("spatial_pe: pose widths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " are not matching multiples of 3");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-sq / static_cast<double>(a.size()));
}

SpeMatrix spatial_pe(std::span<const Tensor> poses, std::span<const double> query) {
  if (poses.empty()) throw InvalidInput("spatial_pe: no persons");
  const std::size_t steps = poses.front().rows();
  SpeMatrix out{Tensor(poses.size(), steps), std::vector<double>(query.begin(), query.end())};
  for (std::size_t n = 0; n < poses.size(); ++n) {
    if (poses[n].rows() != steps) {
      throw InvalidInput("spatial_pe: person " + std::to_string(n) + " has " +
                         std::to_string(poses[n].rows()) + " steps, expected " +
                         std::to_string(steps));
    }
    for (std::size_t t = 0; t < steps; ++t) out.values(n, t) = spe_value(poses[n].row(t), query);
  }
  return out;
}

}  // namespace mrt
