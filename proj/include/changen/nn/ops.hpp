#pragma once

#include "changen/nn/tensor.hpp"

namespace changen::nn {

// Elementwise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, real c);
Var add_scalar(const Var& a, real c);
Var silu(const Var& a);
Var gelu(const Var& a);  // tanh approximation
Var abs_val(const Var& a);
Var exp_val(const Var& a);
Var clamp01(const Var& a);  // zero gradient outside [0,1]

// 2-D linear algebra ([rows, cols], row-major).
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add_rowvec(const Var& x, const Var& b);  // [n,d] + [d]
Var mul_rowvec(const Var& x, const Var& v);  // [n,d] * [d]
Var linear(const Var& x, const Var& w, const Var& b);
Var layer_norm(const Var& x, real eps = 1e-6);  // per-row, no affine
Var softmax_rows(const Var& x);
// x * (1 + scale) + shift, broadcast over rows (AdaLN modulation).
Var modulate(const Var& x, const Var& shift, const Var& scale);

// Shape plumbing.
Var reshape(const Var& x, std::vector<int> shape);
// out.row(r) = src_rows[r] < 0 ? 0 : x.row(src_rows[r]); backward scatters.
Var permute_rows(const Var& x, std::vector<int> src_rows);
// Generic element gather; src_idx[i] < 0 yields 0.
Var permute_elems(const Var& x, std::vector<int64_t> src_idx, std::vector<int> out_shape);
Var slice_rows(const Var& x, int start, int len);    // first-dim slice of N-D
Var concat_rows(const std::vector<Var>& parts);      // first-dim concat
Var slice_cols(const Var& x, int start, int len);    // [n,d] column slice
Var concat_cols(const std::vector<Var>& parts);

// Convolutions on [C,H,W] tensors.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);  // w: [Cout,Cin,kh,kw]
Var depthwise_conv3x3(const Var& x, const Var& w, const Var& b);            // w: [C,3,3], pad 1
Var upsample_nearest(const Var& x, int factor);

// Reductions / losses.
Var sum(const Var& x);
Var mean(const Var& x);
Var mse_loss(const Var& pred, const std::vector<real>& target);
Var bce_with_logits(const Var& logits, const std::vector<real>& targets);

// Value copy with no graph edge.
Var detach(const Var& x);

}  // namespace changen::nn
