#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "facemat/nn/tensor.hpp"

namespace facemat::nn {

/// One value in a reverse-mode tape. Backward closures receive the node
/// itself so they never capture it (no ownership cycles).
struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  /// Allocates a zero gradient of the value's shape on first use.
  Tensor& grad_buffer();
};

using Var = std::shared_ptr<Node>;

/// Leaf without gradient.
Var constant(Tensor t);
/// Leaf that accumulates gradient across backward() calls.
Var parameter(Tensor t);

/// Graph recording is on by default; off inside a NoGradGuard scope.
bool grad_enabled() noexcept;

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Propagates the given output gradients back to every reachable node that
/// requires grad. Leaf gradients accumulate; interior gradients are freed.
void backward(const std::vector<std::pair<Var, Tensor>>& seeds);

// --- Operations ---------------------------------------------------------

/// 2-D cross-correlation with zero padding. weight: (out, in*k*k, 1);
/// bias: (out, 1, 1).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int kernel, int stride, int pad);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var softplus(const Var& a);
/// Channel concatenation; all inputs share H and W.
Var concat(const std::vector<Var>& parts);
/// Channels [begin, end).
Var slice_channels(const Var& a, int begin, int end);
/// Bilinear 2x upsampling with half-pixel centres and edge clamping.
Var upsample2x(const Var& a);

}  // namespace facemat::nn
