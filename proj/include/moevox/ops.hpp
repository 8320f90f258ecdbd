#pragma once

#include <vector>

#include "moevox/tensor.hpp"

namespace moevox {

// Trailing-dimension (NumPy-style) broadcast of two shapes; throws with both
// shapes in the message when incompatible.
Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, real c);
Tensor mul_scalar(const Tensor& a, real c);

Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, real slope);
Tensor gelu(const Tensor& a);  // exact Gaussian-CDF form
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp(const Tensor& a, real lo, real hi);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int len);

// p_i = exp(s_i / tau) / sum_j exp(s_j / tau), max-subtracted. 1-D input.
Tensor softmax_temperature(const Tensor& scores, real tau);

// [B, C, spatial...] -> [B, C], mean over the spatial dims.
Tensor spatial_mean(const Tensor& a);

}  // namespace moevox
