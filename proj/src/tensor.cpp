#include "met2net/tensor.hpp"

#include <algorithm>

namespace met2net {

Tensor::Tensor(Shape shape, Dtype dtype) : shape_(std::move(shape)), dtype_(dtype) {
    for (auto d : shape_) {
        if (d < 1) throw ShapeError("Tensor: extent < 1 in shape " + shape_str(shape_));
    }
    numel_ = shape_numel(shape_);
    buf_ = std::make_shared<Buffer>();
    if (dtype_ == Dtype::F32)
        buf_->f32.assign(static_cast<std::size_t>(numel_), 0.0f);
    else
        buf_->f64.assign(static_cast<std::size_t>(numel_), 0.0);
}

Tensor Tensor::zeros(Shape shape, Dtype dtype) { return Tensor(std::move(shape), dtype); }

Tensor Tensor::full(Shape shape, double value, Dtype dtype) {
    Tensor t(std::move(shape), dtype);
    if (dtype == Dtype::F32)
        std::fill(t.buf_->f32.begin(), t.buf_->f32.end(), static_cast<float>(value));
    else
        std::fill(t.buf_->f64.begin(), t.buf_->f64.end(), value);
    return t;
}

Tensor Tensor::scalar(double value, Dtype dtype) { return full({1}, value, dtype); }

Tensor Tensor::of(const std::vector<double>& values, Shape shape, Dtype dtype) {
    Tensor t(std::move(shape), dtype);
    if (static_cast<std::int64_t>(values.size()) != t.numel_) {
        throw ShapeError("Tensor::of: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(t.shape_));
    }
    for (std::size_t i = 0; i < values.size(); ++i) t.set(static_cast<std::int64_t>(i), values[i]);
    return t;
}

double Tensor::item() const {
    if (numel_ != 1) throw ShapeError("Tensor::item: tensor has " + std::to_string(numel_) + " elements");
    return at(0);
}

double Tensor::at(std::int64_t flat) const {
    return dtype_ == Dtype::F32 ? static_cast<double>(buf_->f32[static_cast<std::size_t>(flat)])
                                : buf_->f64[static_cast<std::size_t>(flat)];
}

void Tensor::set(std::int64_t flat, double v) {
    if (dtype_ == Dtype::F32)
        buf_->f32[static_cast<std::size_t>(flat)] = static_cast<float>(v);
    else
        buf_->f64[static_cast<std::size_t>(flat)] = v;
}

Tensor Tensor::clone() const {
    Tensor t(shape_, dtype_);
    if (dtype_ == Dtype::F32)
        t.buf_->f32 = buf_->f32;
    else
        t.buf_->f64 = buf_->f64;
    return t;
}

Tensor Tensor::detached() const {
    Tensor t = *this;
    t.node_ = nullptr;
    return t;
}

Tensor Tensor::astype(Dtype dt) const {
    if (dt == dtype_) return clone();
    Tensor t(shape_, dt);
    for (std::int64_t i = 0; i < numel_; ++i) t.set(i, at(i));
    return t;
}

void Tensor::copy_from(const Tensor& src) {
    if (!same_shape(src) || src.dtype_ != dtype_) {
        throw ShapeError("Tensor::copy_from: shape/dtype mismatch " + shape_str(shape_) +
                         " vs " + shape_str(src.shape_));
    }
    if (dtype_ == Dtype::F32)
        buf_->f32 = src.buf_->f32;
    else
        buf_->f64 = src.buf_->f64;
}

}  // namespace met2net
