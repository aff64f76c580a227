#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mrt/autodiff.hpp"
#include "mrt/tensor.hpp"

namespace mrt {

/// Orthonormal DCT-II basis for sequences of a fixed length. Row k of
/// `basis` holds coefficient k's cosine, so coefficients = basis * seq and
/// seq = basis^T * coefficients.
struct DctPlan {
  explicit DctPlan(std::size_t length);

  std::size_t length;
  Tensor basis;
};

/// Cached plan for `length`. Plans are built once and never mutated, so the
/// returned reference stays valid and is safe to share between threads.
const DctPlan& dct_plan(std::size_t length);

/// DCT along the time axis (rows), independently per channel (column).
Tensor dct_forward(const Tensor& seq);
Tensor dct_inverse(const Tensor& coeffs);
Var dct_forward(const Var& seq);
Var dct_inverse(const Var& coeffs);

/// Sinusoidal table: even columns sin(pos / 10000^(2i/d)), odd columns cos.
/// Throws ConfigError for odd `dim`.
Tensor temporal_pe(std::size_t length, std::size_t dim);

/// exp(-|x - q|^2 / (3J)) for every pose of every person against `query`.
/// Values live in (0, 1] and are data, not activations.
struct SpeMatrix {
  Tensor values;              // persons x steps
  std::vector<double> query;  // the 3J query pose
};

/// `poses[n]` is person n's steps x 3J history.
SpeMatrix spatial_pe(std::span<const Tensor> poses, std::span<const double> query);

/// The scalar SPE between two 3J pose vectors.
double spe_value(std::span<const double> a, std::span<const double> b);

}  // namespace mrt
