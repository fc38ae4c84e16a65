#include "helix/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "helix/errors.hpp"
#include "helix/kernels.hpp"

namespace helix::ag {

namespace k = kernels::omp;

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(value.shape(), 0.0) {}

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

// ---- tape -------------------------------------------------------------------

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Parameter& param) {
  nodes_.push_back(Node{param.value, {}, param.requires_grad, &param, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw ContractError("op mixes vars from different tapes");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(fn) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
  return node.grad;
}

Tensor Tape::grad(const Var& v) const {
  const auto& node = nodes_[v.id()];
  return node.grad.empty() ? Tensor(node.value.shape(), 0.0) : node.grad;
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  if (loss.value().numel() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id()).fill(1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (node.grad.empty() || !node.requires_grad) continue;
    if (node.backward) node.backward(*this, id);
    if (node.param) {
      auto& g = node.param->grad;
      if (g.shape() != node.value.shape()) g = Tensor(node.value.shape(), 0.0);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += node.grad[i];
    }
  }
}

// ---- helpers ----------------------------------------------------------------

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

void require_finite(const Tensor& t, const char* op) {
  for (double x : t.data())
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
}

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

void accumulate(Tape& tape, const Var& target, std::span<const double> g) {
  if (!target.requires_grad()) return;
  auto& buf = tape.grad_buffer(target.id());
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

}  // namespace

// ---- elementwise ------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i];
  const Var in[] = {a, b};
  return a.tape().record(std::move(out), in, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    accumulate(t, a, g.data());
    accumulate(t, b, g.data());
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= bv[i];
  const Var in[] = {a, b};
  return a.tape().record(std::move(out), in, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    accumulate(t, a, g.data());
    if (b.requires_grad()) {
      auto& gb = t.grad_buffer(b.id());
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
  const Var in[] = {a, b};
  return a.tape().record(std::move(out), in, [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    if (a.requires_grad()) {
      auto& ga = t.grad_buffer(a.id());
      const auto& bv = b.value();
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto& gb = t.grad_buffer(b.id());
      const auto& av = a.value();
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& x, double s) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= s;
  const Var in[] = {x};
  return x.tape().record(std::move(out), in, [x, s](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    auto& gx = t.grad_buffer(x.id());
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * s;
  });
}

Var add_n(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("add_n: no inputs");
  Tensor out = parts[0].value();
  for (std::size_t p = 1; p < parts.size(); ++p) {
    require_same_shape(parts[0], parts[p], "add_n");
    const auto& v = parts[p].value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += v[i];
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), parts, [ins](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    for (const auto& in : ins) accumulate(t, in, g.data());
  });
}

Var add_bias(const Var& x, const Var& bias) {
  const std::size_t n = last_dim(x.shape());
  if (bias.shape() != Shape{n})
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " for input " +
                         shape_str(x.shape()));
  Tensor out = x.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += bv[i % n];
  const Var in[] = {x, bias};
  return x.tape().record(std::move(out), in, [x, bias, n](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    accumulate(t, x, g.data());
    if (bias.requires_grad()) {
      auto& gb = t.grad_buffer(bias.id());
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i % n] += g[i];
    }
  });
}

// ---- matmul -----------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2)
    throw DimensionError("matmul: operands need rank >= 2, got " + shape_str(as) + " and " +
                         shape_str(bs));
  const std::size_t m = as[as.size() - 2], kk = as.back();
  const std::size_t n = bs.back();
  if (bs[bs.size() - 2] != kk)
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(as) + " and " +
                         shape_str(bs));
  const bool shared = bs.size() == 2;
  if (!shared && !std::equal(as.begin(), as.end() - 2, bs.begin(), bs.end() - 2))
    throw DimensionError("matmul: batch dimensions differ for " + shape_str(as) + " and " +
                         shape_str(bs));
  const std::size_t batch = shape_numel(Shape(as.begin(), as.end() - 2));

  Shape out_shape = as;
  out_shape.back() = n;
  Tensor out(out_shape);
  const double* ap = a.value().data().data();
  const double* bp = b.value().data().data();
  double* op = out.data().data();
  if (shared) {
    k::gemm(ap, bp, op, batch * m, kk, n);
  } else {
    for (std::size_t i = 0; i < batch; ++i)
      k::gemm(ap + i * m * kk, bp + i * kk * n, op + i * m * n, m, kk, n);
  }

  const Var in[] = {a, b};
  return a.tape().record(std::move(out), in, [a, b, shared, batch, m, kk, n](Tape& t, std::size_t self) {
    const double* g = t.grad_buffer(self).data().data();
    const double* ap = a.value().data().data();
    const double* bp = b.value().data().data();
    if (a.requires_grad()) {
      double* ga = t.grad_buffer(a.id()).data().data();
      if (shared) {
        k::gemm_grad_a(g, bp, ga, batch * m, kk, n);
      } else {
        for (std::size_t i = 0; i < batch; ++i)
          k::gemm_grad_a(g + i * m * n, bp + i * kk * n, ga + i * m * kk, m, kk, n);
      }
    }
    if (b.requires_grad()) {
      double* gb = t.grad_buffer(b.id()).data().data();
      if (shared) {
        k::gemm_grad_b(ap, g, gb, batch * m, kk, n);
      } else {
        for (std::size_t i = 0; i < batch; ++i)
          k::gemm_grad_b(ap + i * m * kk, g + i * m * n, gb + i * kk * n, m, kk, n);
      }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (w.shape().size() != 2 || w.shape()[0] != last_dim(x.shape()))
    throw DimensionError("linear: weight " + shape_str(w.shape()) + " for input " +
                         shape_str(x.shape()));
  Var y = matmul(x, w);
  return b.valid() ? add_bias(y, b) : y;
}

// ---- shape ops ----------------------------------------------------------------

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const Var in[] = {x};
  return x.tape().record(std::move(out), in, [x](Tape& t, std::size_t self) {
    accumulate(t, x, t.grad_buffer(self).data());
  });
}

Var permute(const Var& x, std::vector<std::size_t> axes) {
  Tensor out = x.value().permuted(axes);
  std::vector<std::size_t> inverse(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) inverse[axes[i]] = i;
  const Var in[] = {x};
  return x.tape().record(std::move(out), in, [x, inverse](Tape& t, std::size_t self) {
    if (!x.requires_grad()) return;
    const Tensor back = t.grad_buffer(self).permuted(inverse);
    accumulate(t, x, back.data());
  });
}

Var transpose_last2(const Var& x) {
  const std::size_t r = x.shape().size();
  if (r < 2) throw DimensionError("transpose_last2: rank < 2 for " + shape_str(x.shape()));
  std::vector<std::size_t> axes(r);
  for (std::size_t i = 0; i < r; ++i) axes[i] = i;
  std::swap(axes[r - 1], axes[r - 2]);
  return permute(x, std::move(axes));
}

Var broadcast_to(const Var& x, Shape shape) {
  const Shape& xs = x.shape();
  if (xs.size() > shape.size())
    throw DimensionError("broadcast_to: " + shape_str(xs) + " -> " + shape_str(shape));
  const std::size_t off = shape.size() - xs.size();
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (xs[i] != 1 && xs[i] != shape[off + i])
      throw DimensionError("broadcast_to: " + shape_str(xs) + " -> " + shape_str(shape));

  // Source offset for every output element, computed once.
  const auto out_strides = strides_of(shape);
  const auto in_strides = strides_of(xs);
  const std::size_t total = shape_numel(shape);
  auto src = std::make_shared<std::vector<std::size_t>>(total);
  for (std::size_t o = 0; o < total; ++o) {
    std::size_t rem = o, s = 0;
    for (std::size_t a = 0; a < shape.size(); ++a) {
      const std::size_t idx = rem / out_strides[a];
      rem %= out_strides[a];
      if (a >= off && xs[a - off] != 1) s += idx * in_strides[a - off];
    }
    (*src)[o] = s;
  }
  Tensor out(std::move(shape));
  const auto& xv = x.value();
  for (std::size_t o = 0; o < total; ++o) out[o] = xv[(*src)[o]];
  const Var in[] = {x};
  return x.tape().record(std::move(out), in, [x, src](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    auto& gx = t.grad_buffer(x.id());
    for (std::size_t o = 0; o < g.numel(); ++o) gx[(*src)[o]] += g[o];
  });
}

Var concat_last(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_last: no parts");
  const Shape& s0 = parts[0].shape();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size() || !std::equal(s.begin(), s.end() - 1, s0.begin()))
      throw DimensionError("concat_last: " + shape_str(s0) + " vs " + shape_str(s));
    widths.push_back(s.back());
    total += s.back();
  }
  const std::size_t rows = parts[0].value().numel() / s0.back();
  Shape out_shape = s0;
  out_shape.back() = total;
  Tensor out(out_shape);
  std::size_t col = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& v = parts[p].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data().data() + r * widths[p], widths[p], out.data().data() + r * total + col);
    col += widths[p];
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), parts,
                                [ins, widths, rows, total](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    std::size_t col = 0;
    for (std::size_t p = 0; p < ins.size(); ++p) {
      if (ins[p].requires_grad()) {
        auto& gp = t.grad_buffer(ins[p].id());
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[p]; ++c) gp[r * widths[p] + c] += g[r * total + col + c];
      }
      col += widths[p];
    }
  });
}

Var slice_last(const Var& x, std::size_t begin, std::size_t length) {
  const Shape& xs = x.shape();
  const std::size_t width = last_dim(xs);
  if (length == 0 || begin + length > width)
    throw RangeError("slice_last: [" + std::to_string(begin) + ", +" + std::to_string(length) +
                     ") outside " + shape_str(xs));
  const std::size_t rows = x.value().numel() / width;
  Shape out_shape = xs;
  out_shape.back() = length;
  Tensor out(out_shape);
  const auto& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.data().data() + r * width + begin, length, out.data().data() + r * length);
  const Var in[] = {x};
  return x.tape().record(std::move(out), in, [x, begin, length, width, rows](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    auto& gx = t.grad_buffer(x.id());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < length; ++c) gx[r * width + begin + c] += g[r * length + c];
  });
}

// ---- normalisation ------------------------------------------------------------

Var softmax_last(const Var& x) {
  require_finite(x.value(), "softmax_last");
  const std::size_t n = last_dim(x.shape());
  const std::size_t rows = x.value().numel() / n;
  Tensor out(x.shape());
  k::softmax_rows(x.value().data().data(), out.data().data(), rows, n);
  const Var in[] = {x};
  return x.tape().record(std::move(out), in, [x, n, rows](Tape& t, std::size_t self) {
    const auto& y = t.value(self);
    const auto& g = t.grad_buffer(self);
    auto& gx = t.grad_buffer(x.id());
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::size_t d = last_dim(x.shape());
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
    throw DimensionError("layer_norm: gamma " + shape_str(gamma.shape()) + ", beta " +
                         shape_str(beta.shape()) + " for input " + shape_str(x.shape()));
  const std::size_t rows = x.value().numel() / d;
  Tensor out(x.shape());
  auto stats = std::make_shared<std::vector<double>>(2 * rows);
  k::layer_norm_rows(x.value().data().data(), gamma.value().data().data(),
                     beta.value().data().data(), out.data().data(), stats->data(),
                     stats->data() + rows, rows, d, eps);
  const Var in[] = {x, gamma, beta};
  return x.tape().record(std::move(out), in, [x, gamma, beta, stats, rows, d](Tape& t, std::size_t self) {
    double* dx = x.requires_grad() ? t.grad_buffer(x.id()).data().data() : nullptr;
    double* dg = gamma.requires_grad() ? t.grad_buffer(gamma.id()).data().data() : nullptr;
    double* db = beta.requires_grad() ? t.grad_buffer(beta.id()).data().data() : nullptr;
    k::layer_norm_rows_backward(t.grad_buffer(self).data().data(), x.value().data().data(),
                                gamma.value().data().data(), stats->data(),
                                stats->data() + rows, dx, dg, db, rows, d);
  });
}

// ---- stochastic -----------------------------------------------------------------

Var dropout(const Var& x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(p));
  if (mode == Mode::eval || p == 0.0) return x;
  const double survive = 1.0 / (1.0 - p);
  auto keep = std::make_shared<std::vector<double>>(x.value().numel());
  for (auto& m : *keep) m = rng.bernoulli(p) ? 0.0 : survive;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= (*keep)[i];
  const Var in[] = {x};
  return x.tape().record(std::move(out), in, [x, keep](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    auto& gx = t.grad_buffer(x.id());
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * (*keep)[i];
  });
}

// ---- reductions ---------------------------------------------------------------

Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const Var in[] = {x};
  return x.tape().record(Tensor::scalar(acc), in, [x](Tape& t, std::size_t self) {
    const double g = t.grad_buffer(self)[0];
    for (auto& v : t.grad_buffer(x.id()).data()) v += g;
  });
}

Var mean(const Var& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.value().numel()));
}

Var masked_mean_abs(const Var& pred, const Tensor& target, const Tensor& mask) {
  if (pred.shape() != target.shape() || pred.shape() != mask.shape())
    throw DimensionError("masked_mean_abs: pred " + shape_str(pred.shape()) + ", target " +
                         shape_str(target.shape()) + ", mask " + shape_str(mask.shape()));
  const auto& pv = pred.value();
  double count = 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.numel(); ++i) {
    if (mask[i] == 0.0) continue;
    count += 1.0;
    acc += std::abs(pv[i] - target[i]);
  }
  if (count == 0.0) return pred.tape().constant(Tensor::scalar(0.0));
  const Var in[] = {pred};
  return pred.tape().record(Tensor::scalar(acc / count), in, [pred, target, mask, count](Tape& t, std::size_t self) {
    const double g = t.grad_buffer(self)[0] / count;
    const auto& pv = pred.value();
    auto& gp = t.grad_buffer(pred.id());
    for (std::size_t i = 0; i < pv.numel(); ++i) {
      if (mask[i] == 0.0) continue;
      const double diff = pv[i] - target[i];
      gp[i] += diff > 0.0 ? g : (diff < 0.0 ? -g : 0.0);
    }
  });
}

// ---- attention ------------------------------------------------------------------

Var attention(const Var& q, const Var& kv, const Var& v, std::size_t heads, double p, Mode mode,
              Rng& rng, Tensor* probs_out) {
  const Shape& s = q.shape();
  if (s.size() != 3 || kv.shape() != s || v.shape() != s)
    throw DimensionError("attention: q " + shape_str(s) + ", k " + shape_str(kv.shape()) +
                         ", v " + shape_str(v.shape()) + " must share a [N,S,D] shape");
  if (heads == 0 || s[2] % heads != 0)
    throw ConfigError("attention: width " + std::to_string(s[2]) + " not divisible by " +
                      std::to_string(heads) + " heads");
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("attention: dropout rate must lie in [0, 1)");
  require_finite(q.value(), "attention");
  require_finite(kv.value(), "attention");
  require_finite(v.value(), "attention");

  const kernels::AttentionShape shape{s[0], s[1], s[2], heads,
                                      1.0 / std::sqrt(static_cast<double>(s[2] / heads))};
  const std::size_t n_probs = s[0] * heads * s[1] * s[1];
  auto probs = std::make_shared<std::vector<double>>(n_probs);
  std::shared_ptr<std::vector<double>> keep;
  if (mode == Mode::train && p > 0.0) {
    keep = std::make_shared<std::vector<double>>(n_probs);
    const double survive = 1.0 / (1.0 - p);
    for (auto& m : *keep) m = rng.bernoulli(p) ? 0.0 : survive;
  }
  Tensor out(s);
  k::attention_forward(q.value().data().data(), kv.value().data().data(), v.value().data().data(),
                       keep ? keep->data() : nullptr, probs->data(), out.data().data(), shape);
  if (probs_out) *probs_out = Tensor(Shape{s[0], heads, s[1], s[1]}, *probs);

  const Var in[] = {q, kv, v};
  return q.tape().record(std::move(out), in, [q, kv, v, probs, keep, shape](Tape& t, std::size_t self) {
    double* dq = q.requires_grad() ? t.grad_buffer(q.id()).data().data() : nullptr;
    double* dk = kv.requires_grad() ? t.grad_buffer(kv.id()).data().data() : nullptr;
    double* dv = v.requires_grad() ? t.grad_buffer(v.id()).data().data() : nullptr;
    k::attention_backward(t.grad_buffer(self).data().data(), q.value().data().data(),
                          kv.value().data().data(), v.value().data().data(),
                          keep ? keep->data() : nullptr, probs->data(), dq, dk, dv, shape);
  });
}

Var weighted_mix(const Var& weights, std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("weighted_mix: no parts");
  const Shape& ps = parts[0].shape();
  const std::size_t kcount = parts.size();
  const std::size_t d = last_dim(ps);
  const std::size_t rows = parts[0].value().numel() / d;
  Shape ws(ps.begin(), ps.end() - 1);
  ws.push_back(kcount);
  if (weights.shape() != ws)
    throw DimensionError("weighted_mix: weights " + shape_str(weights.shape()) + " for " +
                         std::to_string(kcount) + " parts of " + shape_str(ps));
  for (const auto& part : parts)
    if (part.shape() != ps)
      throw DimensionError("weighted_mix: part " + shape_str(part.shape()) + " vs " + shape_str(ps));

  Tensor out(ps, 0.0);
  const auto& w = weights.value();
  for (std::size_t i = 0; i < kcount; ++i) {
    const auto& pv = parts[i].value();
    for (std::size_t r = 0; r < rows; ++r) {
      const double wi = w[r * kcount + i];
      for (std::size_t c = 0; c < d; ++c) out[r * d + c] += wi * pv[r * d + c];
    }
  }
  std::vector<Var> ins{weights};
  ins.insert(ins.end(), parts.begin(), parts.end());
  return weights.tape().record(std::move(out), ins, [ins, kcount, rows, d](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    const Var& weights = ins[0];
    const auto& w = weights.value();
    for (std::size_t i = 0; i < kcount; ++i) {
      const Var& part = ins[i + 1];
      const auto& pv = part.value();
      if (weights.requires_grad()) {
        auto& gw = t.grad_buffer(weights.id());
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < d; ++c) dot += g[r * d + c] * pv[r * d + c];
          gw[r * kcount + i] += dot;
        }
      }
      if (part.requires_grad()) {
        auto& gp = t.grad_buffer(part.id());
        for (std::size_t r = 0; r < rows; ++r) {
          const double wi = w[r * kcount + i];
          for (std::size_t c = 0; c < d; ++c) gp[r * d + c] += wi * g[r * d + c];
        }
      }
    }
  });
}

// ---- gradient checking ------------------------------------------------------------

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

}  // namespace

double grad_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ConfigError("grad_check: step must be positive");
  Tensor analytic;
  {
    Tape tape;
    const Var xv = tape.variable(x);
    const Var loss = f(tape, xv);
    tape.backward(loss);
    analytic = tape.grad(xv);
  }
  auto eval = [&](const Tensor& at) {
    Tape tape;
    return f(tape, tape.variable(at)).value().item();
  };
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double hi = probe[i];
    const double up = eval(probe);
    probe[i] = orig - h;
    const double lo = probe[i];
    const double down = eval(probe);
    probe[i] = orig;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (hi - lo)));
  }
  return worst;
}

double grad_check(const std::function<Var(Tape&)>& loss, Parameter& param,
                  std::span<Parameter* const> all_params, double h) {
  if (!(h > 0.0)) throw ConfigError("grad_check: step must be positive");
  for (auto* p : all_params) p->zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  const Tensor analytic = param.grad;
  auto eval = [&] {
    Tape tape;
    return loss(tape).value().item();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < param.value.numel(); ++i) {
    const double orig = param.value[i];
    param.value[i] = orig + h;
    const double hi = param.value[i];
    const double up = eval();
    param.value[i] = orig - h;
    const double lo = param.value[i];
    const double down = eval();
    param.value[i] = orig;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (hi - lo)));
  }
  return worst;
}

// ---- Adam ---------------------------------------------------------------------

AdamState make_adam(std::span<Parameter* const> params, AdamConfig config) {
  AdamState state;
  state.config = config;
  for (const auto* p : params) {
    state.first_moment.emplace_back(p->value.shape(), 0.0);
    state.second_moment.emplace_back(p->value.shape(), 0.0);
  }
  return state;
}

void adam_step(std::span<Parameter* const> params, AdamState& state) {
  if (params.size() != state.first_moment.size())
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters vs " +
                         std::to_string(state.first_moment.size()) + " moment buffers");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->value.shape() != state.first_moment[i].shape() ||
        params[i]->grad.shape() != params[i]->value.shape())
      throw DimensionError("adam_step: shape mismatch for parameter '" + params[i]->name + "'");

  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    if (!p.requires_grad) continue;
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < p.value.numel(); ++j) {
      const double g = p.grad[j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double mhat = m[j] / bias1;
      const double vhat = v[j] / bias2;
      p.value[j] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace helix::ag
