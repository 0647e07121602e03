#pragma once

#include <optional>

#include "tensor.hpp"

namespace ipa {

// Elementwise with numpy-style broadcasting (size-1 extents expand).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);

// Batched contraction a[..,m,k] @ b[..,k,n] -> [..,m,n]; batch extents
// broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor upsample_nearest2(const Tensor& x);

// x[b,c,h,w] * w[oc,ic,kh,kw] (+ bias[oc]) with symmetric zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias, int stride,
              int pad);

// Row lookup out[i,:] = table[ids[i],:]; gradient scatter-adds into table.
Tensor embedding(const Tensor& table, const std::vector<int>& ids);

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);
Tensor silu(const Tensor& x);
Tensor l2_normalize_rows(const Tensor& x, float eps = 1e-12f);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Scaled dot-product attention over q[b,h,s,dh], k/v[b,h,m,dh]; mask_bias
// (0 or large negative, broadcastable to [b,h,s,m]) is added to the logits.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const std::optional<Tensor>& mask_bias = std::nullopt);

// x[..,d_in] @ w[d_in,d_out] + b
Tensor linear(const Tensor& x, const Tensor& w, const std::optional<Tensor>& b);

Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace ipa
