#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "met2net/common.hpp"

namespace met2net {

enum class Dtype : std::uint8_t { F32, F64 };

inline const char* dtype_name(Dtype d) { return d == Dtype::F32 ? "f32" : "f64"; }
inline std::size_t dtype_size(Dtype d) { return d == Dtype::F32 ? 4 : 8; }

namespace autodiff {
struct Node;
using NodePtr = std::shared_ptr<Node>;
}  // namespace autodiff

/// Dense row-major N-d array. Copies share storage; op outputs are never
/// mutated after creation, so shared storage is safe. An optional autodiff
/// node links the tensor into the current tape.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, Dtype dtype);  // zero-filled

    static Tensor zeros(Shape shape, Dtype dtype = Dtype::F32);
    static Tensor full(Shape shape, double value, Dtype dtype = Dtype::F32);
    static Tensor scalar(double value, Dtype dtype = Dtype::F32);
    static Tensor of(const std::vector<double>& values, Shape shape, Dtype dtype = Dtype::F32);

    bool defined() const { return buf_ != nullptr; }
    const Shape& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_.at(i); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::int64_t numel() const { return numel_; }
    Dtype dtype() const { return dtype_; }

    template <class T> std::span<T> data();
    template <class T> std::span<const T> data() const;

    /// Generic element access (slow path; tests and small glue only).
    double item() const;
    double at(std::int64_t flat) const;
    void set(std::int64_t flat, double v);

    Tensor clone() const;     // deep copy, no node
    Tensor detached() const;  // shares storage, drops node
    Tensor astype(Dtype dt) const;
    void copy_from(const Tensor& src);  // in-place value copy, same shape/dtype

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    const autodiff::NodePtr& node() const { return node_; }
    void set_node(autodiff::NodePtr n) { node_ = std::move(n); }
    bool tracked() const { return node_ != nullptr; }

private:
    struct Buffer {
        std::vector<float> f32;
        std::vector<double> f64;
    };

    Shape shape_;
    std::int64_t numel_ = 0;
    Dtype dtype_ = Dtype::F32;
    std::shared_ptr<Buffer> buf_;
    autodiff::NodePtr node_;
};

template <> inline std::span<float> Tensor::data<float>() {
    if (dtype_ != Dtype::F32) throw ShapeError("Tensor::data<float>: tensor is f64");
    return {buf_->f32.data(), buf_->f32.size()};
}
template <> inline std::span<double> Tensor::data<double>() {
    if (dtype_ != Dtype::F64) throw ShapeError("Tensor::data<double>: tensor is f32");
    return {buf_->f64.data(), buf_->f64.size()};
}
template <> inline std::span<const float> Tensor::data<float>() const {
    if (dtype_ != Dtype::F32) throw ShapeError("Tensor::data<float>: tensor is f64");
    return {buf_->f32.data(), buf_->f32.size()};
}
template <> inline std::span<const double> Tensor::data<double>() const {
    if (dtype_ != Dtype::F64) throw ShapeError("Tensor::data<double>: tensor is f32");
    return {buf_->f64.data(), buf_->f64.size()};
}

/// Invokes f with a value of the tensor's element type (float{} or double{}).
template <class F>
decltype(auto) dispatch(Dtype dt, F&& f) {
    if (dt == Dtype::F32) return f(float{});
    return f(double{});
}

}  // namespace met2net
