#pragma once

#include <cstdint>
#include <vector>

#include "sgma/autograd.hpp"

/// Differentiable tensor operations. Every loop runs in a fixed order that does
/// not depend on the batch size, so a batch of N images produces bitwise the
/// same rows as N single-image calls.
namespace sgma::ops {

Var add(const Var& a, const Var& b);
Var add_n(const std::vector<Var>& xs);
Var scale(const Var& x, double factor);

Var reshape(const Var& x, Shape shape);
Var concat(const std::vector<Var>& xs, int axis);
Var slice(const Var& x, int axis, int64_t start, int64_t length);
/// Stacks equally shaped tensors along a new axis.
Var stack(const std::vector<Var>& xs, int axis);
/// out[b] = xs[choice[b]][b] for tensors with a shared leading batch axis.
Var select_per_sample(const std::vector<Var>& xs, const std::vector<int>& choice);

/// x[..., Cin] * weight[Cin, Cout] + bias[Cout]; bias may be undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);

/// x: [N, H, W, Cin], weight: [k, k, Cin, Cout], bias: [Cout].
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int padding);

/// Same-padded stride-1 depthwise convolution; x: [N, H, W, C], weight: [k, k, C], bias: [C].
Var depthwise_conv2d(const Var& x, const Var& weight, const Var& bias);

/// Normalizes over the last axis, then applies gamma/beta of that width.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

Var gelu(const Var& x);

/// Mean over one axis; the axis is removed from the shape.
Var mean(const Var& x, int axis);

/// Softmax along an arbitrary axis.
Var softmax(const Var& x, int axis);

/// Half-pixel bilinear resampling (corners not aligned); x: [N, h, w, C].
Var resize_bilinear(const Var& x, int64_t out_h, int64_t out_w);

/// out[b] = a[b]^T * x[b] with a: [B, P, K], x: [B, P, C] -> [B, K, C].
Var batched_matmul_tn(const Var& a, const Var& x);

struct AttentionResult {
    Var output;
    /// Attention weights averaged over heads, [B, P, Q, M].
    Tensor weights;
};

/// Multi-head scaled dot-product attention evaluated independently at every pixel.
///   query: [B, Pq, Q, C] with Pq == 1 (same queries at every pixel) or Pq == P
///   key, value: [B, P, M, C]
/// Logits are scaled by 1/sqrt(C / heads). The output is [B, P, Q, C], or
/// [B, P, C] when mean_over_queries is set (the Q outputs averaged).
AttentionResult pixel_attention(const Var& query, const Var& key, const Var& value, int heads,
                                bool mean_over_queries);

/// Mean of -log softmax(logits)[label] over pixels whose label != ignore_index.
/// logits: [..., K]; labels hold one entry per logit row.
Var cross_entropy(const Var& logits, const std::vector<int32_t>& labels, int32_t ignore_index);

}  // namespace sgma::ops
