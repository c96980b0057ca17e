#pragma once

// Reverse-mode differentiation over a tape. Each op runs its forward kernel
// eagerly and records a closure that maps the output adjoint onto its inputs.
// Nodes are appended in evaluation order, so the tape is a topological order
// and backward() is a single reverse sweep.

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "sswe/kernels.hpp"
#include "sswe/rng.hpp"
#include "sswe/tensor.hpp"

namespace sswe {

enum class Mode { train, infer };

/// Handle to a node on a Graph.
struct Var {
  std::size_t id = 0;
};

template <typename Scalar>
class Graph {
 public:
  using TensorT = Tensor<Scalar>;
  /// Receives the node's output adjoint; accumulates into input sinks.
  using BackwardFn = std::function<void(Graph&, const TensorT&)>;

  Var constant(TensorT value) { return push("constant", {}, std::move(value), false, nullptr); }
  Var parameter(TensorT value) { return push("parameter", {}, std::move(value), true, nullptr); }

  /// Adds an op node. The node requires a gradient iff any input does.
  Var record(std::string kind, std::vector<Var> inputs, TensorT value, BackwardFn backward) {
    bool needs = false;
    for (Var v : inputs) needs = needs || node(v).requires_grad;
    return push(std::move(kind), std::move(inputs), std::move(value), needs, std::move(backward));
  }

  const TensorT& value(Var v) const { return node(v).value; }
  const std::string& kind(Var v) const { return node(v).kind; }
  const std::vector<Var>& inputs(Var v) const { return node(v).inputs; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  const TensorT& grad(Var v) const {
    if (!backward_done_) throw std::logic_error("Graph::grad: backward has not been run");
    const Node& n = node(v);
    if (n.grad.empty() && !n.value.empty()) {
      n.grad = TensorT(n.value.shape());
    }
    return n.grad;
  }

  /// Adjoint accumulator of `v`, or nullptr when `v` does not need one.
  TensorT* sink(Var v) {
    Node& n = node(v);
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty() && !n.value.empty()) n.grad = TensorT(n.value.shape());
    return &n.grad;
  }

  void accumulate(Var v, const TensorT& g) {
    if (TensorT* s = sink(v)) s->array() += g.array();
  }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse.
  void backward(Var loss) {
    if (node(loss).value.size() != 1) {
      throw ShapeError("Graph::backward: loss must be a scalar, got " +
                       to_string(node(loss).value.shape()));
    }
    for (Node& n : nodes_) n.grad = TensorT();
    backward_done_ = true;
    if (TensorT* s = sink(loss)) (*s)[0] = Scalar(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
      n.backward(*this, n.grad);
    }
  }

 private:
  struct Node {
    std::string kind;
    std::vector<Var> inputs;
    TensorT value;
    mutable TensorT grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(std::string kind, std::vector<Var> inputs, TensorT value, bool needs, BackwardFn fn) {
    for (Var v : inputs) {
      if (v.id >= nodes_.size()) throw std::out_of_range("Graph: input from another graph");
    }
    nodes_.push_back(Node{std::move(kind), std::move(inputs), std::move(value), TensorT(), needs,
                          std::move(fn)});
    backward_done_ = false;
    return Var{nodes_.size() - 1};
  }

  Node& node(Var v) { return nodes_.at(v.id); }
  const Node& node(Var v) const { return nodes_.at(v.id); }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Layer ops

template <typename Scalar>
Var conv2d(Graph<Scalar>& g, Var input, Var weights, Var bias) {
  auto out = kernels::conv2d(g.value(input), g.value(weights), g.value(bias));
  return g.record("conv2d", {input, weights, bias}, std::move(out),
                  [input, weights, bias](Graph<Scalar>& g, const Tensor<Scalar>& gout) {
                    const bool want_input = g.requires_grad(input);
                    auto grads = kernels::conv2d_backward(g.value(input), g.value(weights), gout,
                                                          want_input);
                    if (want_input) g.accumulate(input, grads.input);
                    g.accumulate(weights, grads.weights);
                    g.accumulate(bias, grads.bias);
                  });
}

template <typename Scalar>
Var leaky_relu(Graph<Scalar>& g, Var x, Scalar alpha = Scalar(0.1)) {
  if (!(alpha >= Scalar(0) && alpha < Scalar(1))) {
    throw std::invalid_argument("leaky_relu: alpha must be in [0,1)");
  }
  return g.record("leaky_relu", {x}, kernels::leaky_relu(g.value(x), alpha),
                  [x, alpha](Graph<Scalar>& g, const Tensor<Scalar>& gout) {
                    g.accumulate(x, kernels::leaky_relu_backward(g.value(x), gout, alpha));
                  });
}

template <typename Scalar>
Var maxpool2(Graph<Scalar>& g, Var x) {
  auto pooled = kernels::maxpool2(g.value(x));
  auto argmax = std::make_shared<std::vector<Index>>(std::move(pooled.argmax));
  return g.record("maxpool2", {x}, std::move(pooled.output),
                  [x, argmax](Graph<Scalar>& g, const Tensor<Scalar>& gout) {
                    g.accumulate(x, kernels::maxpool2_backward(gout, *argmax, g.value(x).shape()));
                  });
}

template <typename Scalar>
Var upsample2_nearest(Graph<Scalar>& g, Var x) {
  return g.record("upsample2", {x}, kernels::upsample2_nearest(g.value(x)),
                  [x](Graph<Scalar>& g, const Tensor<Scalar>& gout) {
                    g.accumulate(x, kernels::upsample2_nearest_backward(gout));
                  });
}

template <typename Scalar>
Var concat_channels(Graph<Scalar>& g, Var a, Var b) {
  return g.record("concat", {a, b}, kernels::concat_channels(g.value(a), g.value(b)),
                  [a, b](Graph<Scalar>& g, const Tensor<Scalar>& gout) {
                    auto [ga, gb] = kernels::split_channels(gout, g.value(a).shape(), g.value(b).shape());
                    g.accumulate(a, ga);
                    g.accumulate(b, gb);
                  });
}

/// Inverted dropout: in train mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); infer mode is the identity.
template <typename Scalar>
Var dropout(Graph<Scalar>& g, Var x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must be in [0,1)");
  if (mode == Mode::infer || rate == 0.0) {
    return g.record("dropout", {x}, g.value(x),
                    [x](Graph<Scalar>& g, const Tensor<Scalar>& gout) { g.accumulate(x, gout); });
  }
  const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<Tensor<Scalar>>(g.value(x).shape());
  for (Scalar& m : mask->values()) m = rng.uniform01<double>() < rate ? Scalar(0) : keep_scale;
  Tensor<Scalar> out(g.value(x).shape(), g.value(x).array() * mask->array());
  return g.record("dropout", {x}, std::move(out), [x, mask](Graph<Scalar>& g, const Tensor<Scalar>& gout) {
    g.accumulate(x, Tensor<Scalar>(gout.shape(), gout.array() * mask->array()));
  });
}

template <typename Scalar>
Var sigmoid(Graph<Scalar>& g, Var x) {
  return g.record("sigmoid", {x}, kernels::sigmoid(g.value(x)),
                  [x](Graph<Scalar>& g, const Tensor<Scalar>& gout) {
                    const auto s = kernels::sigmoid(g.value(x));
                    g.accumulate(x, Tensor<Scalar>(s.shape(), gout.array() * s.array() *
                                                                  (Scalar(1) - s.array())));
                  });
}

// ---------------------------------------------------------------------------
// Elementwise helpers used to compose losses

template <typename Scalar>
Var add(Graph<Scalar>& g, Var a, Var b) {
  return g.record("add", {a, b}, add(g.value(a), g.value(b)),
                  [a, b](Graph<Scalar>& g, const Tensor<Scalar>& gout) {
                    g.accumulate(a, gout);
                    g.accumulate(b, gout);
                  });
}

template <typename Scalar>
Var mul(Graph<Scalar>& g, Var a, Var b) {
  return g.record("mul", {a, b}, mul(g.value(a), g.value(b)),
                  [a, b](Graph<Scalar>& g, const Tensor<Scalar>& gout) {
                    g.accumulate(a, mul(gout, g.value(b)));
                    g.accumulate(b, mul(gout, g.value(a)));
                  });
}

template <typename Scalar>
Var scale(Graph<Scalar>& g, Var a, Scalar factor) {
  return g.record("scale", {a}, mul(g.value(a), factor),
                  [a, factor](Graph<Scalar>& g, const Tensor<Scalar>& gout) {
                    g.accumulate(a, mul(gout, factor));
                  });
}

template <typename Scalar>
Var sum(Graph<Scalar>& g, Var a) {
  return g.record("sum", {a}, Tensor<Scalar>({1}, {sum(g.value(a))}),
                  [a](Graph<Scalar>& g, const Tensor<Scalar>& gout) {
                    g.accumulate(a, Tensor<Scalar>(g.value(a).shape(), gout[0]));
                  });
}

}  // namespace sswe
