#pragma once

#include <string>
#include <vector>

#include "met2net/autodiff.hpp"
#include "met2net/tensor.hpp"

namespace met2net {

/// A named model weight with its gradient accumulator. Frozen parameters
/// (trainable=false) enter forward passes as plain constants, so backward
/// deposits exactly nothing into them.
struct Parameter {
    Tensor value;
    Tensor grad;
    bool trainable = true;
    std::string path;

    Parameter() = default;
    Parameter(Tensor v, std::string p, bool train = true)
        : value(std::move(v)), grad(Tensor::zeros(value.shape(), value.dtype())),
          trainable(train), path(std::move(p)) {}

    /// The tensor to feed into ops: carries a leaf tape node when recording
    /// is on and the parameter is trainable.
    Tensor use() {
        if (!trainable || !autodiff::GradMode::enabled()) return value;
        if (!leaf_) {
            leaf_ = std::make_shared<autodiff::Node>();
            leaf_->op = "leaf";
            leaf_->param = this;
            leaf_->shape = value.shape();
            leaf_->dtype = value.dtype();
        }
        Tensor t = value;
        t.set_node(leaf_);
        return t;
    }

    void zero_grad() {
        grad = Tensor::zeros(value.shape(), value.dtype());
    }

private:
    autodiff::NodePtr leaf_;
};

/// Flat, ordered view over a model's parameters. Paths must be unique.
class ParameterCollection {
public:
    void add(Parameter* p);
    void extend(const ParameterCollection& other);

    std::size_t size() const { return params_.size(); }
    Parameter* operator[](std::size_t i) const { return params_[i]; }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    Parameter* find(const std::string& path) const;
    std::int64_t total_elements() const;
    void zero_grads() const;

private:
    std::vector<Parameter*> params_;
};

}  // namespace met2net
