#include "mrt/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "mrt/error.hpp"

namespace mrt {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(ParamTensor& p, bool trainable) {
  if (!trainable) return constant(p.value);
  if (auto it = param_leaves_.find(&p); it != param_leaves_.end()) return Var(this, it->second);
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  param_leaves_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = backward && std::any_of(inputs.begin(), inputs.end(), [this](const Var& v) {
                      return &v.tape() == this && nodes_[v.id()].requires_grad;
                    });
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(const Var& v, const Tensor& g) {
  if (!nodes_[v.id()].requires_grad) return;
  grad(v.id()) += g;
}

void Tape::backward(const Var& loss) {
  if (loss.value().size() != 1) {
    throw DimensionError("backward: loss must be a single value, got " +
                         shape_string(loss.value().shape()));
  }
  grad(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
  for (auto& n : nodes_) {
    if (n.param && n.has_grad) n.param->grad += n.grad;
  }
}

namespace {

void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw InvalidInput("operands live on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes differ: " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  Tensor out = matmul(a.value(), b.value());
  const Var inputs[] = {a, b};
  return a.tape().record(std::move(out), inputs, [a, b](Tape& t, const Tensor& g) {
    if (t.requires_grad(a.id())) t.grad(a.id()) += matmul_nt(g, b.value());
    if (t.requires_grad(b.id())) t.grad(b.id()) += matmul_tn(a.value(), g);
  });
}

Var transpose(const Var& a) {
  const Var inputs[] = {a};
  return a.tape().record(a.value().transposed(), inputs, [a](Tape& t, const Tensor& g) {
    t.grad(a.id()) += g.transposed();
  });
}

Var operator+(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  const Var inputs[] = {a, b};
  return a.tape().record(std::move(out), inputs, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var operator-(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const Var inputs[] = {a, b};
  return a.tape().record(std::move(out), inputs, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b.id())) {
      Tensor neg = g;
      neg *= -1.0;
      t.grad(b.id()) += neg;
    }
  });
}

Var operator*(double s, const Var& a) {
  Tensor out = a.value();
  out *= s;
  const Var inputs[] = {a};
  return a.tape().record(std::move(out), inputs, [a, s](Tape& t, const Tensor& g) {
    Tensor ga = g;
    ga *= s;
    t.grad(a.id()) += ga;
  });
}

Var add_row(const Var& x, const Var& row) {
  require_same_tape(x, row);
  const Tensor& xv = x.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw DimensionError("add_row: row " + shape_string(rv.shape()) + " does not broadcast over " +
                         shape_string(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv(0, c);
  const Var inputs[] = {x, row};
  return x.tape().record(std::move(out), inputs, [x, row](Tape& t, const Tensor& g) {
    t.accumulate(x, g);
    if (t.requires_grad(row.id())) {
      Tensor& gr = t.grad(row.id());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gr(0, c) += g(r, c);
    }
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = x.value();
    Tensor& gx = t.grad(x.id());
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
}

Var softmax_rows(const Var& x) {
  Tensor y = softmax_rows(x.value());
  Tensor value = y;
  const Var inputs[] = {x};
  return x.tape().record(std::move(value), inputs, [x, y = std::move(y)](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x.id());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  require_same_tape(x, gamma);
  require_same_tape(x, beta);
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols();
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw DimensionError("layer_norm: affine parameters " + shape_string(gamma.value().shape()) +
                         " do not match feature width " + std::to_string(d));
  }
  Tensor xhat(xv.rows(), d);
  Tensor inv_std(xv.rows(), 1);
  Tensor out(xv.rows(), d);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += xv(r, c);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std(r, 0) = is;
    for (std::size_t c = 0; c < d; ++c) {
      xhat(r, c) = (xv(r, c) - mean) * is;
      out(r, c) = xhat(r, c) * gamma.value()[c] + beta.value()[c];
    }
  }
  const Var inputs[] = {x, gamma, beta};
  return x.tape().record(
      std::move(out), inputs,
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t,
                                                                             const Tensor& g) {
        const std::size_t rows = g.rows();
        const std::size_t d = g.cols();
        const Tensor& gam = gamma.value();
        if (t.requires_grad(gamma.id())) {
          Tensor& gg = t.grad(gamma.id());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < d; ++c) gg[c] += g(r, c) * xhat(r, c);
        }
        if (t.requires_grad(beta.id())) {
          Tensor& gb = t.grad(beta.id());
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < d; ++c) gb[c] += g(r, c);
        }
        if (t.requires_grad(x.id())) {
          Tensor& gx = t.grad(x.id());
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double sum_dy = 0.0;
            double sum_dy_xhat = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              const double dy = g(r, c) * gam[c];
              sum_dy += dy;
              sum_dy_xhat += dy * xhat(r, c);
            }
            for (std::size_t c = 0; c < d; ++c) {
              const double dy = g(r, c) * gam[c];
              gx(r, c) += inv_std(r, 0) * (dy - inv_d * sum_dy - xhat(r, c) * inv_d * sum_dy_xhat);
            }
          }
        }
      });
}

Var slice_rows(const Var& x, std::size_t start, std::size_t count) {
  const Tensor& xv = x.value();
  if (count == 0 || start + count > xv.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " +
                         shape_string(xv.shape()));
  }
  Tensor out(count, xv.cols());
  std::copy_n(xv.row(start).data(), count * xv.cols(), out.data().data());
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [x, start, count](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x.id());
    const std::size_t cols = g.cols();
    for (std::size_t i = 0; i < count * cols; ++i) gx[start * cols + i] += g[i];
  });
}

Var slice_cols(const Var& x, std::size_t start, std::size_t count) {
  const Tensor& xv = x.value();
  if (count == 0 || start + count > xv.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " +
                         shape_string(xv.shape()));
  }
  Tensor out(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = xv(r, start + c);
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [x, start, count](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(x.id());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) gx(r, start + c) += g(r, c);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidInput("concat_rows: nothing to concatenate");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " + shape_string(p.value().shape()) +
                           " vs width " + std::to_string(cols));
    }
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy_n(p.value().data().data(), p.value().size(), out.data().data() + offset);
    offset += p.value().size();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return parts.front().tape().record(std::move(out), parts, [ins](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (const auto& p : ins) {
      const std::size_t n = p.value().size();
      if (t.requires_grad(p.id())) {
        Tensor& gp = t.grad(p.id());
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidInput("concat_cols: nothing to concatenate");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_same_tape(parts.front(), p);
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(p.value().shape()) +
                           " vs height " + std::to_string(rows));
    }
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t c0 = 0;
  for (const auto& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, c0 + c) = pv(r, c);
    c0 += pv.cols();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return parts.front().tape().record(std::move(out), parts, [ins](Tape& t, const Tensor& g) {
    std::size_t c0 = 0;
    for (const auto& p : ins) {
      const std::size_t pc = p.cols();
      if (t.requires_grad(p.id())) {
        Tensor& gp = t.grad(p.id());
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < pc; ++c) gp(r, c) += g(r, c0 + c);
      }
      c0 += pc;
    }
  });
}

Var reshape(const Var& x, std::size_t rows, std::size_t cols) {
  const Var inputs[] = {x};
  return x.tape().record(x.value().reshaped({rows, cols}), inputs,
                         [x](Tape& t, const Tensor& g) {
                           t.grad(x.id()) += g.reshaped(x.value().shape());
                         });
}

Var cumsum_rows(const Var& x) {
  Tensor out = x.value();
  for (std::size_t r = 1; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += out(r - 1, c);
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [x](Tape& t, const Tensor& g) {
    // d/dx[t] collects the gradient of every later running sum.
    Tensor& gx = t.grad(x.id());
    std::vector<double> acc(g.cols(), 0.0);
    for (std::size_t r = g.rows(); r-- > 0;) {
      for (std::size_t c = 0; c < g.cols(); ++c) {
        acc[c] += g(r, c);
        gx(r, c) += acc[c];
      }
    }
  });
}

Var sum_squares(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v * v;
  const Var inputs[] = {x};
  return x.tape().record(Tensor::scalar(s), inputs, [x](Tape& t, const Tensor& g) {
    const Tensor& xv = x.value();
    Tensor& gx = t.grad(x.id());
    const double g0 = g[0];
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += 2.0 * g0 * xv[i];
  });
}

}  // namespace mrt
