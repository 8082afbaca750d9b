#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "met2net/param.hpp"
#include "met2net/tensor.hpp"

namespace met2net {

/// Adam with bias correction. First and second moments are kept per parameter,
/// keyed by path, created lazily on the first step that sees the parameter.
/// Each element update is computed in double and stored back at the parameter
/// dtype. Only trainable parameters are touched; their gradients are zeroed
/// after the update.
class Adam {
public:
    struct Moments {
        Tensor m;
        Tensor v;
    };

    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(const ParameterCollection& params);

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }
    std::int64_t step_count() const { return t_; }
    void set_step_count(std::int64_t t) { t_ = t; }

    /// Moment storage, exposed for checkpointing (sorted by path).
    std::map<std::string, Moments>& state() { return state_; }
    const std::map<std::string, Moments>& state() const { return state_; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::map<std::string, Moments> state_;
};

}  // namespace met2net
