#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mgt/tensor.hpp"

namespace mgt {

// arccos is evaluated on [-1, 1]; its derivative on [-1 + kArccosClamp, 1 - kArccosClamp].
inline constexpr double kArccosClamp = 1e-7;
// Floor applied to denominators in division, log and sqrt backward rules.
inline constexpr double kGradGuard = 1e-12;
inline constexpr double kLayerNormEps = 1e-9;

// a: [..., m, k] with b: [k, n], or batched a: [B, m, k] with b: [B, k, n].
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise with numpy-style broadcasting of either operand.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor arccos(const Tensor& x);
Tensor relu(const Tensor& x);
// Exact (erf) form: x * Phi(x).
Tensor gelu(const Tensor& x);

// Max over `axis`; backward routes each gradient to the first maximal index.
Tensor max_reduce(const Tensor& x, int axis, bool keepdim = false);
Tensor mean_reduce(const Tensor& x, int axis, bool keepdim = false);
Tensor sum_reduce(const Tensor& x, int axis, bool keepdim = false);
// Sum of every element, shape [1].
Tensor sum_all(const Tensor& x);

// Softmax over the last axis.
Tensor softmax_rows(const Tensor& x);
// Normalizes over the last axis, then applies per-feature gain and offset of that width.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset);

Tensor concat(const std::vector<Tensor>& parts, int axis);
// Selects entries along axis 0.
Tensor gather(const Tensor& x, std::span<const std::size_t> indices);
Tensor reshape(const Tensor& x, Shape shape);
// Swaps two axes (default: the last two).
Tensor transpose(const Tensor& x, int axis0 = -2, int axis1 = -1);
Tensor broadcast_to(const Tensor& x, Shape shape);

namespace fault {
// Test hook: when enabled, the arccos backward rule returns the wrong sign.
void set_arccos_backward_fault(bool enabled);
bool arccos_backward_fault();
}  // namespace fault

}  // namespace mgt
