#include "mrt/params.hpp"

#include <cmath>
#include <set>

#include "mrt/error.hpp"

namespace mrt {

ParamSet::ParamSet(std::vector<ParamTensor*> params) : params_(std::move(params)) {
  std::set<std::string> seen;
  for (const auto* p : params_) {
    if (!seen.insert(p->name).second) throw ConfigError("duplicate parameter name: " + p->name);
  }
}

ParamTensor* ParamSet::find(const std::string& name) const {
  for (auto* p : params_)
    if (p->name == name) return p;
  return nullptr;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto* p : params_) n += p->value.size();
  return n;
}

void ParamSet::zero_grad() const {
  for (auto* p : params_) p->zero_grad();
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out)
    : weight(name + ".weight", Tensor(in, out)), bias(name + ".bias", Tensor(1, out)) {}

Var Linear::operator()(Tape& tape, const Var& x, bool trainable) {
  return add_row(matmul(x, tape.param(weight, trainable)), tape.param(bias, trainable));
}

void Linear::collect(std::vector<ParamTensor*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

LayerNormParams::LayerNormParams(const std::string& name, std::size_t dim)
    : gamma(name + ".gamma", Tensor(1, dim, 1.0)), beta(name + ".beta", Tensor(1, dim)) {}

Var LayerNormParams::operator()(Tape& tape, const Var& x, bool trainable) {
  return layer_norm(x, tape.param(gamma, trainable), tape.param(beta, trainable));
}

void LayerNormParams::collect(std::vector<ParamTensor*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

void xavier_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.data()) v = dist(rng);
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void initialize(const ParamSet& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto* p : params) {
    if (ends_with(p->name, ".bias") || ends_with(p->name, ".gamma") || ends_with(p->name, ".beta"))
      continue;
    xavier_uniform(p->value, p->value.rows(), p->value.cols(), rng);
    p->zero_grad();
  }
}

}  // namespace mrt
