#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mrt/autodiff.hpp"

namespace mrt {

/// Non-owning view over every ParamTensor of a model, in a fixed order.
/// Names must be unique; the constructor checks this.
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::vector<ParamTensor*> params);

  std::vector<ParamTensor*>::const_iterator begin() const { return params_.begin(); }
  std::vector<ParamTensor*>::const_iterator end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }
  ParamTensor* find(const std::string& name) const;
  std::size_t scalar_count() const;

  void zero_grad() const;

 private:
  std::vector<ParamTensor*> params_;
};

/// Fully connected layer y = x W + b with W: in x out.
struct Linear {
  ParamTensor weight;
  ParamTensor bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out);

  Var operator()(Tape& tape, const Var& x, bool trainable = true);
  void collect(std::vector<ParamTensor*>& out);
};

/// Layer-norm gain and shift, initialized to ones and zeros.
struct LayerNormParams {
  ParamTensor gamma;
  ParamTensor beta;

  LayerNormParams() = default;
  LayerNormParams(const std::string& name, std::size_t dim);

  Var operator()(Tape& tape, const Var& x, bool trainable = true);
  void collect(std::vector<ParamTensor*>& out);
};

/// Fills `t` with Xavier-uniform values for a fan_in x fan_out projection.
void xavier_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

/// Xavier-uniform on every matrix parameter (fan_in = rows, fan_out = cols).
/// Names ending in ".bias", ".gamma" or ".beta" keep their constructor
/// values. Parameters are visited in ParamSet order.
void initialize(const ParamSet& params, std::uint64_t seed);

}  // namespace mrt
