#pragma once

#include <vector>

#include "met2net/autodiff.hpp"
#include "met2net/tensor.hpp"

namespace met2net::ops {

// ---- elementwise & reductions -------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);  // b may broadcast (dims of 1)
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // b may broadcast (dims of 1)
Tensor scale(const Tensor& a, double c);
Tensor silu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double negative_slope = 0.01);
Tensor sigmoid(const Tensor& x);
Tensor mean(const Tensor& x);              // full reduction -> scalar
Tensor mse(const Tensor& a, const Tensor& b);  // mean((a-b)^2) -> scalar

// ---- linear algebra ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor bmm(const Tensor& a, const Tensor& b);     // [B,m,k] x [B,k,n]
Tensor softmax(const Tensor& x, int axis);

// ---- shape ---------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length);
Tensor stack(const std::vector<Tensor>& xs, int axis);

// ---- spatial -------------------------------------------------------------

/// x [B,Cin,H,W], weight [Cout,Cin/groups,kh,kw], bias [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride = 1, int padding = 0, int dilation = 1, int groups = 1);

Tensor upsample_nearest(const Tensor& x, int factor);

/// gamma/beta [C]; per-(sample,group) standardization before the affine.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma,
                  const Tensor& beta, double eps = 1e-5);

Tensor global_avg_pool(const Tensor& x);  // [B,C,H,W] -> [B,C,1,1]

}  // namespace met2net::ops
