#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "met2net/tensor.hpp"

namespace met2net {

struct Parameter;

namespace autodiff {

/// Global switch for tape recording. Forward passes through frozen modules
/// run under NoGradGuard and leave no tape.
class GradMode {
public:
    static bool enabled() { return enabled_; }
    static void set_enabled(bool on) { enabled_ = on; }

private:
    static thread_local bool enabled_;
};

struct NoGradGuard {
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Receives the gradient for one input slot of a node.
using GradSink = std::function<void(std::size_t, const Tensor&)>;

struct Node {
    const char* op = "";
    std::vector<NodePtr> inputs;  // null entries = untracked inputs
    /// Computes input gradients from the upstream gradient. Only slots with
    /// non-null input nodes need to be emitted.
    std::function<void(const Tensor& grad_out, const GradSink& sink)> backward;
    Parameter* param = nullptr;  // set on leaf nodes
    Shape shape;
    Dtype dtype = Dtype::F32;
};

/// Reverse-mode sweep from a scalar loss. Accumulates dLoss/dtheta into the
/// grad buffer of every trainable parameter on the tape. Repeated calls
/// keep accumulating until grads are explicitly zeroed.
void backward(const Tensor& loss);

/// True if any of the tensors carries a tape node.
bool any_tracked(std::initializer_list<std::reference_wrapper<const Tensor>> ts);

/// Attaches a new node to `out` recording `inputs` and `fn`. No-op when
/// grad mode is off or no input is tracked.
void record(Tensor& out, const char* op, const std::vector<Tensor>& inputs,
            std::function<void(const Tensor&, const GradSink&)> fn);

}  // namespace autodiff
}  // namespace met2net
