#pragma once

#include <vector>

#include "touchspot/autograd.hpp"

namespace touchspot::ag {

// x[..., k] * w[k, n] -> [..., n]
Var matmul(const Var& x, const Var& w);
// matmul plus a bias row b[n].
Var linear(const Var& x, const Var& w, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// a[..., trailing] + b[trailing], b broadcast over the leading dims of a.
Var add_broadcast(const Var& a, const Var& b);
// Multiplies every element of row-block i (first axis) by factors[i].
Var scale_rows(const Var& x, const std::vector<double>& factors);

Var silu(const Var& x);
// Softmax along the last axis.
Var softmax(const Var& x);

Var reshape(const Var& x, std::vector<int> shape);
Var concat(const Var& a, const Var& b, int axis);
// [N, T, C] -> [N, C], mean over the token axis.
Var mean_tokens(const Var& x);

struct ConvSpec {
  int kernel_h = 3, kernel_w = 3;
  int stride_h = 1, stride_w = 1;
  int pad_h = 1, pad_w = 1;
};
int conv_out_size(int in, int kernel, int stride, int pad);

// Channels-last convolution. x[N, H, W, Cin], w[kh*kw*Cin, Cout] ordered (ky, kx, ci), b[Cout].
Var conv2d(const Var& x, const Var& w, const Var& b, const ConvSpec& spec);

// Nearest-neighbour x2 upsampling along the time axis of x[B, T, C], cropped to out_len.
Var upsample_time(const Var& x, int out_len);

struct AttentionTrace {
  Tensor weights;  // [N, heads, Tq, Tk]
};

// Multi-head scaled dot-product attention. q[N, Tq, D], k/v[N, Tk, D]; heads split D evenly,
// logits are scaled by 1/sqrt(D / heads). Writes the attention weights into `trace` if given.
Var cross_attention(const Var& q, const Var& k, const Var& v, int heads, AttentionTrace* trace = nullptr);

// Scalar node with externally computed value and gradient d(value)/d(x).
Var scalar_function(const Var& x, double value, Tensor grad);

}  // namespace touchspot::ag
