#pragma once

// Reverse-mode automatic differentiation over dense f64 tensors.
//
// A Tape records every op of one forward pass in creation order, which is a
// valid topological order. `Tape::backward` walks it in reverse, accumulating
// gradients additively, so a tensor consumed k times receives k contributions.
// Parameters enter the tape as leaves and receive their gradient in
// `Parameter::grad` when backward finishes.

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "helix/rng.hpp"
#include "helix/tensor.hpp"

namespace helix::ag {

enum class Mode { train, eval };

struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value
  bool requires_grad = true;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a tensor recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Differentiable leaf not bound to a Parameter; read its gradient via grad().
  Var variable(Tensor value);
  Var leaf(Parameter& param);

  // Records an op output. `fn` is dropped when no input requires grad.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  void backward(const Var& loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of node `id`, zero-allocated on first access.
  Tensor& grad_buffer(std::size_t id);
  // Gradient after backward(); zeros if nothing flowed into the node.
  Tensor grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
};

// ---- ops --------------------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var add_n(std::span<const Var> parts);
// x[..., n] + bias[n]
Var add_bias(const Var& x, const Var& bias);

// a[..., m, k] x b[..., k, n]. b may also be a plain [k, n] matrix shared by
// every leading index of a.
Var matmul(const Var& a, const Var& b);
// x[..., in] * w[in, out] + b[out]; `b` may be invalid for no bias.
Var linear(const Var& x, const Var& w, const Var& b);

Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, std::vector<std::size_t> axes);
Var transpose_last2(const Var& x);
// Right-aligned broadcast: every source dim equals the target dim or is 1.
Var broadcast_to(const Var& x, Shape shape);

Var softmax_last(const Var& x);
inline constexpr double kLayerNormEps = 1e-5;
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = kLayerNormEps);

Var concat_last(std::span<const Var> parts);
Var slice_last(const Var& x, std::size_t begin, std::size_t length);

// Inverted dropout; identity in eval mode or when p == 0.
Var dropout(const Var& x, double p, Mode mode, Rng& rng);

Var sum(const Var& x);
Var mean(const Var& x);
// mean over mask==1 of |pred - target|; 0 (constant) when the mask is empty.
Var masked_mean_abs(const Var& pred, const Tensor& target, const Tensor& mask);

/// Fused scaled dot-product multi-head attention on [N, S, D] inputs.
///
/// Heads are contiguous column blocks of width D/heads. Dropout with rate
/// `p` is applied to the attention probabilities in train mode. When
/// `probs_out` is non-null it receives the pre-dropout weights [N, H, S, S].
Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads, double p,
              Mode mode, Rng& rng, Tensor* probs_out = nullptr);

// out[..., d] = sum_i weights[..., i] * parts[i][..., d]
Var weighted_mix(const Var& weights, std::span<const Var> parts);

// ---- checking and optimisation ------------------------------------------------

/// Max over elements of |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
/// using central differences of step `h`.
double grad_check(const std::function<Var(Tape&, const Var&)>& f, const Tensor& x, double h);

/// Same measure over one parameter of a larger loss; `loss` rebuilds the graph
/// from the current parameter values on a fresh tape.
double grad_check(const std::function<Var(Tape&)>& loss, Parameter& param,
                  std::span<Parameter* const> all_params, double h);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

AdamState make_adam(std::span<Parameter* const> params, AdamConfig config = {});
void adam_step(std::span<Parameter* const> params, AdamState& state);

}  // namespace helix::ag
